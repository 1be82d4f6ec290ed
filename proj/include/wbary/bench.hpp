#pragma once

#include <atomic>
#include <chrono>
#include <thread>

#include "wbary/generate.hpp"
#include "wbary/ibp.hpp"
#include "wbary/io.hpp"

namespace wbary {

struct BenchRunSpec {
  std::vector<std::string> solvers;
  int N = 10;
  int m = 20;
  int mt = 20;
  int d = 3;
};

struct BenchConfig {
  int trials = 5;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string reference = "dense";  // dense | none
  double tolerance = 5e-5;
  std::string out_dir;
  std::vector<BenchRunSpec> runs;
};

struct BenchRow {
  std::string solver;
  int N = 0, m = 0, mt = 0;
  int trials = 0;
  double median_time = 0.0;
  double mean_time = 0.0;
  double objective = 0.0;
  double normalized_obj = std::numeric_limits<double>::quiet_NaN();
  double feasibility_error = 0.0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

// Flat key=value configuration with repeated [run] blocks.
inline BenchConfig parse_bench_config(std::istream& in) {
  BenchConfig cfg;
  BenchRunSpec* run = nullptr;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line == "[run]") {
      cfg.runs.emplace_back();
      run = &cfg.runs.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("bench config line " + std::to_string(lineno) +
                                  ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (run == nullptr) {
      if (key == "trials") cfg.trials = std::stoi(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "threads") cfg.threads = std::stoi(val);
      else if (key == "reference") cfg.reference = val;
      else if (key == "tolerance") cfg.tolerance = std::stod(val);
      else if (key == "out_dir") cfg.out_dir = val;
      else throw std::invalid_argument("bench config: unknown key " + key);
    } else {
      if (key == "solver") run->solvers.push_back(val);
      else if (key == "solvers") for (auto& s : detail::split_list(val, ',')) run->solvers.push_back(s);
      else if (key == "N") run->N = std::stoi(val);
      else if (key == "m") run->m = std::stoi(val);
      else if (key == "mt" || key == "m_t") run->mt = std::stoi(val);
      else if (key == "d") run->d = std::stoi(val);
      else throw std::invalid_argument("bench config: unknown run key " + key);
    }
  }
  if (cfg.runs.empty()) throw std::invalid_argument("bench config: no [run] blocks");
  for (const auto& r : cfg.runs) {
    if (r.solvers.empty()) throw std::invalid_argument("bench config: run without solver");
  }
  return cfg;
}

// Solver ids: "maaipm" (kernel chosen by the size rule), "maaipm:slrm",
// "maaipm:dlrm", "maaipm:dense", or "ibp:<eps>".
inline BarycenterSolution run_solver(const std::string& id,
                                     const BarycenterProblem& p, const Matrix& X,
                                     double tolerance) {
  if (id == "maaipm" || id.rfind("maaipm:", 0) == 0) {
    SolveOptions opt;
    opt.gap_tol = tolerance;
    if (id == "maaipm:slrm") opt.kernel = Kernel::slrm;
    else if (id == "maaipm:dlrm") opt.kernel = Kernel::dlrm;
    else if (id == "maaipm:dense") opt.kernel = Kernel::dense;
    else if (id != "maaipm") throw std::invalid_argument("unknown solver id: " + id);
    return solve_fixed_support(p, X, opt);
  }
  if (id.rfind("ibp:", 0) == 0) {
    const double eps = std::stod(id.substr(4));
    return ibp_solve(p, X, eps);
  }
  throw std::invalid_argument("unknown solver id: " + id);
}

inline std::vector<BenchRow> run_bench(
    const BenchConfig& cfg,
    const std::function<void(const json&)>& per_run_sink = {}) {
  std::vector<BenchRow> rows;
  for (std::size_t ri = 0; ri < cfg.runs.size(); ++ri) {
    const BenchRunSpec& spec = cfg.runs[ri];
    struct TrialResult {
      std::vector<double> time, obj, feas, norm;
    };
    std::vector<TrialResult> by_solver(spec.solvers.size());
    for (auto& r : by_solver) {
      r.time.resize(static_cast<std::size_t>(cfg.trials));
      r.obj.resize(static_cast<std::size_t>(cfg.trials));
      r.feas.resize(static_cast<std::size_t>(cfg.trials));
      r.norm.resize(static_cast<std::size_t>(cfg.trials));
    }
    std::vector<json> trial_reports(
        static_cast<std::size_t>(cfg.trials) * spec.solvers.size());

    auto run_trial = [&](int trial) {
      const std::uint64_t seed =
          mix_seed(cfg.seed, ri * 7919ULL + static_cast<std::uint64_t>(trial));
      const BarycenterProblem p = gaussian_problem(spec.N, spec.mt, spec.d, seed);
      const Matrix X = kmeans_support(p.measures, spec.m, seed).points;
      double ref = std::numeric_limits<double>::quiet_NaN();
      if (cfg.reference == "dense") {
        const LpGeometry g = build_geometry(p, spec.m);
        if (g.n_row_bar <= NormalFactorization::kDenseCap) {
          SolveOptions opt;
          opt.gap_tol = 1e-9;
          opt.kernel = Kernel::dense;
          ref = solve_fixed_support(p, X, opt).objective;
        }
      }
      for (std::size_t si = 0; si < spec.solvers.size(); ++si) {
        const auto start = std::chrono::steady_clock::now();
        const BarycenterSolution sol =
            run_solver(spec.solvers[si], p, X, cfg.tolerance);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                .count();
        auto& acc = by_solver[si];
        acc.time[static_cast<std::size_t>(trial)] = secs;
        acc.obj[static_cast<std::size_t>(trial)] = sol.objective;
        acc.feas[static_cast<std::size_t>(trial)] = sol.feasibility_error;
        acc.norm[static_cast<std::size_t>(trial)] =
            std::isfinite(ref) && ref != 0.0
                ? std::abs(sol.objective - ref) / std::abs(ref)
                : std::numeric_limits<double>::quiet_NaN();
        json report = solution_to_json(sol, secs, spec.solvers[si]);
        report.erase("w");
        report.erase("X");
        report["run"] = ri;
        report["trial"] = trial;
        report["N"] = spec.N;
        report["m"] = spec.m;
        report["m_t"] = spec.mt;
        if (std::isfinite(ref)) report["reference_objective"] = ref;
        trial_reports[static_cast<std::size_t>(trial) * spec.solvers.size() + si] =
            std::move(report);
      }
    };

    const int workers = std::max(1, cfg.threads);
    if (workers == 1) {
      for (int trial = 0; trial < cfg.trials; ++trial) run_trial(trial);
    } else {
      std::atomic<int> next{0};
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(workers));
      for (int wkr = 0; wkr < workers; ++wkr) {
        pool.emplace_back([&] {
          for (int t = next.fetch_add(1); t < cfg.trials; t = next.fetch_add(1)) {
            run_trial(t);
          }
        });
      }
      for (auto& th : pool) th.join();
    }

    if (per_run_sink) {
      for (const auto& report : trial_reports) per_run_sink(report);
    }

    auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    for (std::size_t si = 0; si < spec.solvers.size(); ++si) {
      const auto& acc = by_solver[si];
      BenchRow row;
      row.solver = spec.solvers[si];
      row.N = spec.N;
      row.m = spec.m;
      row.mt = spec.mt;
      row.trials = cfg.trials;
      row.median_time = median(acc.time);
      row.mean_time = mean(acc.time);
      row.objective = mean(acc.obj);
      row.feasibility_error = mean(acc.feas);
      const bool have_ref =
          std::none_of(acc.norm.begin(), acc.norm.end(),
                       [](double v) { return std::isnan(v); });
      row.normalized_obj =
          have_ref ? mean(acc.norm) : std::numeric_limits<double>::quiet_NaN();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::string format_tsv(const std::vector<BenchRow>& rows) {
  std::string out =
      "solver\tN\tm\tm_t\ttrials\tmedian_time\tmean_time\tobjective\t"
      "normalized_obj\tfeasibility_error\n";
  for (const auto& r : rows) {
    out += r.solver + "\t" + std::to_string(r.N) + "\t" + std::to_string(r.m) +
           "\t" + std::to_string(r.mt) + "\t" + std::to_string(r.trials) + "\t" +
           format_number(r.median_time) + "\t" + format_number(r.mean_time) +
           "\t" + format_number(r.objective) + "\t" +
           format_number(r.normalized_obj) + "\t" +
           format_number(r.feasibility_error) + "\n";
  }
  return out;
}

}  // namespace wbary
