// Command-line frontend for the barycenter solvers: fixed- and free-support
// solves, a benchmark harness, raster rendering, and idx conversion.
//
// Exit codes: 0 success, 1 usage or input error, 2 solver hit its iteration
// cap without converging.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

#include "wbary/wbary.hpp"

namespace {

using namespace wbary;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNoConvergence = 2;

std::vector<DiscreteMeasure> load_measures(const std::vector<std::string>& paths) {
  std::vector<DiscreteMeasure> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(read_measure(p));
  return out;
}

Kernel parse_kernel(const std::string& name) {
  if (name == "auto") return Kernel::auto_select;
  if (name == "slrm") return Kernel::slrm;
  if (name == "dlrm") return Kernel::dlrm;
  if (name == "dense") return Kernel::dense;
  throw CLI::ValidationError("--kernel must be auto|slrm|dlrm|dense");
}

Matrix resolve_support(const BarycenterProblem& p, const std::string& support_file,
                       int kmeans_m, std::uint64_t seed) {
  if (!support_file.empty()) {
    const json j = json::parse(detail::read_file(support_file));
    if (j.contains("X")) return detail::matrix_from_json(j.at("X"));
    if (j.contains("points")) return detail::matrix_from_json(j.at("points"));
    return detail::matrix_from_json(j);
  }
  if (kmeans_m < 1) {
    throw CLI::ValidationError("need --support or --kmeans");
  }
  return kmeans_support(p.measures, kmeans_m, seed).points;
}

int cmd_solve_fixed(const std::vector<std::string>& inputs,
                    const std::string& support_file, int kmeans_m, double tol,
                    int max_iter, const std::string& kernel_name,
                    std::uint64_t seed, const std::string& out,
                    const std::string& plans_out) {
  BarycenterProblem p;
  p.measures = load_measures(inputs);
  const Matrix X = resolve_support(p, support_file, kmeans_m, seed);

  SolveOptions opt;
  opt.gap_tol = tol;
  opt.max_iter = max_iter;
  opt.kernel = parse_kernel(kernel_name);
  if (opt.kernel == Kernel::dense && X.rows() > 1) {
    const LpGeometry g = build_geometry(p, static_cast<int>(X.rows()));
    if (g.n_row_bar > NormalFactorization::kDenseCap) {
      throw std::invalid_argument("dense kernel size cap");
    }
  }

  const auto start = std::chrono::steady_clock::now();
  const BarycenterSolution sol = solve_fixed_support(p, X, opt);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!out.empty()) write_solution(out, sol, secs, "maaipm");
  if (!plans_out.empty()) write_plans(plans_out, sol.plans);
  std::cout << "objective " << format_number(sol.objective) << "  gap "
            << format_number(sol.gap) << "  feasibility "
            << format_number(sol.feasibility_error) << "  iterations "
            << sol.iterations << "  time " << format_number(secs) << "s\n";
  return sol.converged ? kExitOk : kExitNoConvergence;
}

int cmd_solve_free(const std::vector<std::string>& inputs, int m,
                   const std::string& init_support, std::uint64_t seed, int jumps,
                   int period, double tol, int max_iter, const std::string& out,
                   const std::string& plans_out) {
  BarycenterProblem p;
  p.measures = load_measures(inputs);

  Matrix X0;
  if (!init_support.empty()) {
    const json j = json::parse(detail::read_file(init_support));
    X0 = detail::matrix_from_json(j.contains("X") ? j.at("X") : j);
  } else {
    if (m < 1) throw CLI::ValidationError("need -m or --init-support");
    X0 = kmeans_support(p.measures, m, seed).points;
  }

  Schedule schedule;
  schedule.seed = seed;
  schedule.jumps = jumps;
  schedule.phase1_period = period;
  SolveOptions opt;
  opt.gap_tol = tol;
  opt.max_iter = max_iter;

  PhaseLog log;
  const auto start = std::chrono::steady_clock::now();
  const BarycenterSolution sol = solve_free_support(p, X0, schedule, opt, &log);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!out.empty()) {
    json j = solution_to_json(sol, secs, "maaipm-free");
    json stages = json::array();
    for (const auto& st : log.stages) {
      stages.push_back({{"stage", st.name},
                        {"iterations", st.iterations},
                        {"best_objective", st.best_objective}});
    }
    j["phase_log"] = {{"phase1_iterations", log.phase1_iterations},
                      {"switch_iteration", log.switch_iteration},
                      {"jumps_taken", log.jumps_taken},
                      {"stages", std::move(stages)}};
    detail::write_file(out, j.dump(2) + "\n");
  }
  if (!plans_out.empty()) write_plans(plans_out, sol.plans);
  std::cout << "objective " << format_number(sol.objective) << "  feasibility "
            << format_number(sol.feasibility_error) << "  jumps "
            << log.jumps_taken << "  time " << format_number(secs) << "s\n";
  return sol.converged ? kExitOk : kExitNoConvergence;
}

int cmd_bench(const std::string& config_path, const std::string& out) {
  std::ifstream in(config_path);
  if (!in) throw std::runtime_error("cannot open " + config_path);
  const BenchConfig cfg = parse_bench_config(in);

  std::function<void(const json&)> sink;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    sink = [&cfg](const json& report) {
      std::string solver = report.at("solver").get<std::string>();
      for (auto& ch : solver) {
        if (ch == ':' || ch == '.') ch = '_';
      }
      const std::string path = cfg.out_dir + "/run" +
                               std::to_string(report.at("run").get<int>()) + "_" +
                               solver + "_trial" +
                               std::to_string(report.at("trial").get<int>()) +
                               ".json";
      detail::write_file(path, report.dump(2) + "\n");
    };
  }

  const std::string tsv = format_tsv(run_bench(cfg, sink));
  if (out.empty()) {
    std::cout << tsv;
  } else {
    detail::write_file(out, tsv);
  }
  return kExitOk;
}

int cmd_render(const std::string& input, const std::string& grid,
               const std::string& out) {
  int W = 0, H = 0;
  if (std::sscanf(grid.c_str(), "%dx%d", &W, &H) != 2 || W < 1 || H < 1) {
    throw CLI::ValidationError("--grid expects WxH");
  }
  const BarycenterSolution sol = read_solution(input);
  const auto pixels = render_cells(sol.support, sol.w, W, H);
  write_pgm(out, W, H, pixels);
  std::cout << "wrote " << out << " (" << W << "x" << H << ")\n";
  return kExitOk;
}

int cmd_convert(const std::string& input, int index, bool drop_zeros,
                const std::string& out) {
  const auto images = read_idx_images(input);
  if (index < 0 || index >= static_cast<int>(images.size())) {
    throw std::runtime_error("image index out of range (file has " +
                             std::to_string(images.size()) + ")");
  }
  const DiscreteMeasure q =
      image_to_measure(images[static_cast<std::size_t>(index)], drop_zeros);
  write_measure(out, q);
  std::cout << "wrote " << out << " (" << q.size() << " atoms)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wasserstein barycenter solvers"};
  app.require_subcommand(1);

  std::vector<std::string> inputs;
  std::string support_file, init_support, out, plans_out;
  std::string kernel_name = "auto";
  std::string config_path, grid = "28x28";
  double tol = 5e-5;
  int max_iter = 200, kmeans_m = 0, m = 0, jumps = 3, period = 5, index = 0;
  std::uint64_t seed = 0;
  bool drop_zeros = false;

  auto* fixed = app.add_subcommand("solve-fixed", "solve with a fixed support");
  fixed->add_option("measures", inputs, "measure files (json or csv)")->required();
  fixed->add_option("--support", support_file, "support points file (json)");
  fixed->add_option("--kmeans", kmeans_m, "build support by k-means with this size");
  fixed->add_option("--tol", tol, "relative duality gap tolerance");
  fixed->add_option("--max-iter", max_iter, "iteration cap");
  fixed->add_option("--kernel", kernel_name, "auto|slrm|dlrm|dense");
  fixed->add_option("--seed", seed, "seed for k-means support");
  fixed->add_option("--out", out, "solution json output");
  fixed->add_option("--plans", plans_out, "transport plans json output");

  auto* free_cmd = app.add_subcommand("solve-free", "optimize the support too");
  free_cmd->add_option("measures", inputs, "measure files (json or csv)")->required();
  free_cmd->add_option("-m,--support-size", m, "number of barycenter atoms");
  free_cmd->add_option("--init-support", init_support, "initial support file (json)");
  free_cmd->add_option("--seed", seed, "seed for initialization and jumps");
  free_cmd->add_option("--jumps", jumps, "restart budget");
  free_cmd->add_option("--period", period, "phase-1 support update period");
  free_cmd->add_option("--tol", tol, "relative duality gap tolerance");
  free_cmd->add_option("--max-iter", max_iter, "phase-1 iteration cap");
  free_cmd->add_option("--out", out, "solution json output");
  free_cmd->add_option("--plans", plans_out, "transport plans json output");

  auto* bench = app.add_subcommand("bench", "run the benchmark harness");
  bench->add_option("config", config_path, "bench config file")->required();
  bench->add_option("--out", out, "tsv output (default stdout)");

  auto* render = app.add_subcommand("render", "rasterize a barycenter to pgm");
  render->add_option("solution", config_path, "solution json")->required();
  render->add_option("--grid", grid, "grid size WxH");
  render->add_option("--out", out, "pgm output")->required();

  auto* convert = app.add_subcommand("convert", "idx image to measure json");
  convert->add_option("idx", config_path, "idx image file")->required();
  convert->add_option("--index", index, "image index within the file");
  convert->add_flag("--drop-zeros", drop_zeros, "drop zero-intensity pixels");
  convert->add_option("--out", out, "measure json output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (fixed->parsed()) {
      return cmd_solve_fixed(inputs, support_file, kmeans_m, tol, max_iter,
                             kernel_name, seed, out, plans_out);
    }
    if (free_cmd->parsed()) {
      return cmd_solve_free(inputs, m, init_support, seed, jumps, period, tol,
                            max_iter, out, plans_out);
    }
    if (bench->parsed()) return cmd_bench(config_path, out);
    if (render->parsed()) return cmd_render(config_path, grid, out);
    if (convert->parsed()) return cmd_convert(config_path, index, drop_zeros, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
