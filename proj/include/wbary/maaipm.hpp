#pragma once

#include <string>

#include "wbary/ipm.hpp"

namespace wbary {

// Alternation schedule for the free-support solver: phase 1 runs the
// predictor-corrector engine and moves the support every `phase1_period`
// iterations; once a support update barely changes the objective the solver
// switches to the feasible primal engine, which moves the support every
// iteration and finishes with up to `jumps` perturbed restarts.
struct Schedule {
  int phase1_period = 5;
  double switch_threshold = 1e-2;
  int jumps = 3;
  double warm_blend = 0.3;  // share of the uniform point in warm starts
  std::uint64_t seed = 0;
};

struct PhaseStage {
  std::string name;
  int iterations = 0;
  double best_objective = 0.0;
};

struct PhaseLog {
  std::vector<PhaseStage> stages;
  int phase1_iterations = 0;
  int switch_iteration = 0;
  int jumps_taken = 0;
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Closed-form optimal support at fixed plans: each point moves to the
// plan-weighted mean of the sample atoms it serves. Rows with no mass keep
// their previous location.
inline Matrix update_support(const std::vector<Matrix>& plans,
                             const std::vector<DiscreteMeasure>& measures,
                             const Matrix& previous) {
  const Index m = previous.rows();
  const Index d = previous.cols();
  Matrix numer = Matrix::Zero(m, d);
  Vector mass = Vector::Zero(m);
  for (std::size_t t = 0; t < measures.size(); ++t) {
    numer += plans[t] * measures[t].points;
    mass += plans[t].rowwise().sum();
  }
  Matrix X = previous;
  for (Index i = 0; i < m; ++i) {
    if (mass(i) > 0.0) X.row(i) = numer.row(i) / mass(i);
  }
  return X;
}

struct JumpResult {
  Matrix support;
  Vector x_warm;
};

// Perturbed restart: the support is reseeded by a fresh k-means pass over
// the sample atoms, half of the points instead taking a random blend of the
// incumbent support with a sampled atom; the primal variables restart from a
// feasible blend of the incumbent and the uniform point.
inline JumpResult jump(const Matrix& X_best, const Vector& x_best,
                       const std::vector<DiscreteMeasure>& measures,
                       const LpGeometry& g, const std::vector<Vector>& a,
                       const Schedule& schedule, int attempt) {
  const int m = static_cast<int>(X_best.rows());
  const std::uint64_t salt = mix_seed(schedule.seed, 0xb0157 + static_cast<std::uint64_t>(attempt));
  std::mt19937_64 rng(salt);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Matrix reseed = kmeans_support(measures, m, mix_seed(salt, 1)).points;
  Matrix X(m, X_best.cols());
  for (int i = 0; i < m; ++i) {
    if (unit(rng) < 0.5) {
      X.row(i) = reseed.row(i);
    } else {
      const double theta = unit(rng);
      const auto t = static_cast<std::size_t>(
          std::min<double>(unit(rng) * static_cast<double>(measures.size()),
                           static_cast<double>(measures.size() - 1)));
      const Index j = detail::sample_cumulative(measures[t].weights, unit(rng));
      X.row(i) = theta * X_best.row(i) + (1.0 - theta) * measures[t].points.row(j);
    }
  }
  JumpResult out;
  out.support = std::move(X);
  const double gamma = schedule.warm_blend;
  out.x_warm = (1.0 - gamma) * x_best + gamma * feasible_uniform_point(g, a);
  return out;
}

inline BarycenterSolution solve_free_support(const BarycenterProblem& p,
                                             const Matrix& X0,
                                             const Schedule& schedule = {},
                                             const SolveOptions& opt = {},
                                             PhaseLog* log = nullptr) {
  validate_problem(p);
  if (schedule.phase1_period < 1) {
    throw std::invalid_argument("solve_free_support: period must be >= 1");
  }
  if (X0.rows() == 1) {
    // Single atom: the optimum is the plan-weighted mean of all atoms.
    std::vector<Matrix> plans;
    for (const auto& q : p.measures) plans.push_back(q.weights.transpose());
    const Matrix X = update_support(plans, p.measures, X0);
    return single_atom_solution(p, X);
  }

  const LpGeometry g = build_geometry(p, static_cast<int>(X0.rows()));
  const std::vector<Vector> a = measure_weights(p, /*interior=*/true);
  const Vector b_bar = rhs_vector(g, a);

  Matrix X = X0;
  Vector c = cost_vector(g, X, p.measures);

  BarycenterSolution best;
  double best_obj = std::numeric_limits<double>::infinity();
  bool have_best = false;
  auto consider = [&](const Vector& x, const Matrix& Xc, const std::string& stage,
                      int iters) {
    BarycenterSolution sol = solution_from_x(g, x, Xc, p.measures);
    // only feasible iterates are candidate solutions
    if (sol.feasibility_error < 1e-9 && (!have_best || sol.objective < best_obj)) {
      best_obj = sol.objective;
      best = sol;
      have_best = true;
    }
    if (log) log->stages.push_back({stage, iters, best_obj});
    return best_obj;
  };

  // Phase 1: predictor-corrector with periodic support moves.
  IpmState st = initial_point_pd(g, b_bar, c, a);
  const double mu_floor = 1e-16 * std::max(st.mu, 1.0);
  int since_update = 0;
  bool converged_any = false;
  while (st.iterations < opt.max_iter && !st.stalled && st.mu > mu_floor) {
    const bool settled = pd_converged(st, opt);
    if (!settled) {
      pd_step(st, g, b_bar, c, opt);
      ++since_update;
    }
    if (settled || since_update >= schedule.phase1_period) {
      since_update = 0;
      std::vector<Matrix> plans;
      Vector w;
      unpack_solution(g, st.x, w, plans);
      const double obj_before = objective_value(X, p.measures, plans);
      X = update_support(plans, p.measures, X);
      c = cost_vector(g, X, p.measures);
      const double obj_after = objective_value(X, p.measures, plans);
      detail::refresh_residuals(st, g, b_bar, c);
      consider(st.x, X, "phase1", st.iterations);
      const double rel = (obj_before - obj_after) / std::max(std::abs(obj_before), 1e-300);
      if (rel < schedule.switch_threshold) break;
    }
  }
  if (log) {
    log->phase1_iterations = st.iterations;
    log->switch_iteration = st.iterations;
  }

  // Phase 2: feasible primal engine, support moved every iteration.
  SupportCallback move_support = [&](const Vector& x, Vector& cost) {
    std::vector<Matrix> plans;
    Vector w;
    unpack_solution(g, x, w, plans);
    X = update_support(plans, p.measures, X);
    cost = cost_vector(g, X, p.measures);
  };
  IpmState ps = primal_barrier_solve(g, c, b_bar, st.x, 0.0, opt, move_support);
  converged_any = converged_any || ps.converged;
  consider(ps.x, X, "phase2", ps.iterations);
  if (!have_best) {
    // should not happen: the phase-2 iterate is restored onto the affine set
    best = solution_from_x(g, ps.x, X, p.measures);
    best_obj = best.objective;
    have_best = true;
  }

  // Jump restarts from the incumbent.
  int stale = 0;
  for (int attempt = 1; attempt <= schedule.jumps; ++attempt) {
    const Vector x_best = pack_solution(g, best.w, best.plans);
    JumpResult jr = jump(best.support, x_best, p.measures, g, a, schedule, attempt);
    X = jr.support;
    c = cost_vector(g, X, p.measures);
    const double mu0 = 0.1 * c.dot(jr.x_warm) / static_cast<double>(g.n_col);
    const double before = best_obj;
    IpmState js = primal_barrier_solve(g, c, b_bar, jr.x_warm, mu0, opt, move_support);
    converged_any = converged_any || js.converged;
    consider(js.x, X, "jump" + std::to_string(attempt), js.iterations);
    if (log) log->jumps_taken = attempt;
    if (best_obj < before - 1e-6 * std::max(std::abs(before), 1e-300)) {
      stale = 0;
    } else if (++stale >= 2) {
      break;
    }
  }

  best.converged = converged_any;
  return best;
}

}  // namespace wbary
