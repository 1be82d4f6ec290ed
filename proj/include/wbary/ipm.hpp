#pragma once

#include <functional>

#include "wbary/normal_kernel.hpp"

namespace wbary {

struct SolveOptions {
  double gap_tol = 5e-5;       // relative duality gap at termination
  double residual_tol = 1e-9;  // scaled primal/dual residual at termination
  int max_iter = 200;
  double step_fraction = 0.995;
  double centering_exponent = 3.0;
  Kernel kernel = Kernel::auto_select;
  // primal barrier engine
  double primal_step_fraction = 0.99;
  double mu_reduction = 0.3;
  double decrement_threshold = 0.5;
  double mu_min_scale = 1e-9;  // mu_min = scale * c'x0 / n_col
  int primal_max_iter = 600;
};

struct IpmState {
  Vector x;
  Vector lambda;
  Vector s;
  double mu = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  bool converged = false;
  bool stalled = false;
};

inline double relative_gap(double primal_obj, double dual_obj) {
  return std::abs(primal_obj - dual_obj) /
         (1.0 + std::abs(primal_obj) + std::abs(dual_obj));
}

namespace detail {

inline double step_to_boundary(const Vector& v, const Vector& dv) {
  double alpha = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
  }
  return alpha;
}

inline void refresh_residuals(IpmState& st, const LpGeometry& g,
                              const Vector& b_bar, const Vector& c) {
  const Vector rp = b_bar - apply_Abar(g, st.x);
  const Vector rd = c - apply_Abar_T(g, st.lambda) - st.s;
  st.primal_residual = rp.norm() / (1.0 + b_bar.norm());
  st.dual_residual = rd.norm() / (1.0 + c.norm());
  st.mu = st.x.dot(st.s) / static_cast<double>(g.n_col);
  st.gap = relative_gap(c.dot(st.x), b_bar.dot(st.lambda));
}

// Entries past these magnitudes carry no double-precision information and
// only risk overflow inside the factorization.
inline Vector clamp_scaling(const Vector& d) {
  return d.cwiseMax(1e-100).cwiseMin(1e100);
}

// Builds a factorization for the requested kernel, retrying dense when a
// structured factorization degenerates and the system is small enough.
inline NormalFactorization factor_with_fallback(const LpGeometry& g,
                                                const Vector& d, Kernel k) {
  const Vector dc = clamp_scaling(d);
  try {
    return NormalFactorization(g, dc, k);
  } catch (const KernelError&) {
    const Kernel chosen = k == Kernel::auto_select ? select_kernel(g.m, g.m_list) : k;
    if (chosen != Kernel::dense && g.n_row_bar <= NormalFactorization::kDenseCap) {
      return NormalFactorization(g, dc, Kernel::dense);
    }
    throw;
  }
}

}  // namespace detail

// Strictly interior start: x is the exactly feasible uniform blend
// (w = 1/m, P_t = w a_t'), lambda = 0, and s = max(c, 1) lifted so that no
// slack starts far below the average. Only s is shifted; shifting x would
// break Abar x = bbar.
inline IpmState initial_point_pd(const LpGeometry& g, const Vector& b_bar,
                                 const Vector& c,
                                 const std::vector<Vector>& a) {
  for (const auto& at : a) {
    if (!(at.minCoeff() > 0.0)) {
      throw std::invalid_argument("initial_point_pd: measure weights must be positive");
    }
  }
  IpmState st;
  st.x = feasible_uniform_point(g, a);
  st.lambda = Vector::Zero(g.n_row_bar);
  st.s = c.cwiseMax(1.0);
  const double smean = st.s.mean();
  const double smin = st.s.minCoeff();
  if (smin < 1e-2 * smean) st.s.array() += 1e-2 * smean - smin;
  detail::refresh_residuals(st, g, b_bar, c);
  return st;
}

// One Mehrotra predictor-corrector iteration; the predictor and corrector
// share a single factorization of Abar diag(x/s) Abar'.
inline void pd_step(IpmState& st, const LpGeometry& g, const Vector& b_bar,
                    const Vector& c, const SolveOptions& opt) {
  const Index n = g.n_col;
  const double mu = st.x.dot(st.s) / static_cast<double>(n);
  if (!(mu > 0.0) || !std::isfinite(mu)) {
    st.stalled = true;  // complementarity products below double precision
    return;
  }
  const Vector d = detail::clamp_scaling(st.x.cwiseQuotient(st.s));
  const NormalFactorization factor = detail::factor_with_fallback(g, d, opt.kernel);

  const Vector rp = b_bar - apply_Abar(g, st.x);
  const Vector rd = c - apply_Abar_T(g, st.lambda) - st.s;

  auto direction = [&](const Vector& r_xs, Vector& dx, Vector& dl, Vector& ds) {
    const Vector f = rp + apply_Abar(g, d.cwiseProduct(rd - r_xs.cwiseQuotient(st.x)));
    dl = factor.solve(f);
    dx = d.cwiseProduct(apply_Abar_T(g, dl) - rd + r_xs.cwiseQuotient(st.x));
    ds = (r_xs - st.s.cwiseProduct(dx)).cwiseQuotient(st.x);
  };

  Vector dx_aff, dl_aff, ds_aff;
  direction(-st.x.cwiseProduct(st.s), dx_aff, dl_aff, ds_aff);
  if (!dx_aff.allFinite() || !ds_aff.allFinite()) {
    st.stalled = true;
    return;
  }
  const double ap_aff = std::min(1.0, detail::step_to_boundary(st.x, dx_aff));
  const double ad_aff = std::min(1.0, detail::step_to_boundary(st.s, ds_aff));
  const double mu_aff = (st.x + ap_aff * dx_aff).dot(st.s + ad_aff * ds_aff) /
                        static_cast<double>(n);
  const double sigma = std::pow(std::max(mu_aff, 0.0) / mu, opt.centering_exponent);

  const Vector r_xs = Vector::Constant(n, sigma * mu) - st.x.cwiseProduct(st.s) -
                      dx_aff.cwiseProduct(ds_aff);
  Vector dx, dl, ds;
  direction(r_xs, dx, dl, ds);
  if (!dx.allFinite() || !dl.allFinite() || !ds.allFinite()) {
    st.stalled = true;
    return;
  }

  const double ap = std::min(1.0, opt.step_fraction * detail::step_to_boundary(st.x, dx));
  const double ad = std::min(1.0, opt.step_fraction * detail::step_to_boundary(st.s, ds));
  st.x += ap * dx;
  st.lambda += ad * dl;
  st.s += ad * ds;
  st.iterations += 1;
  detail::refresh_residuals(st, g, b_bar, c);
}

inline bool pd_converged(const IpmState& st, const SolveOptions& opt) {
  return st.gap < opt.gap_tol && st.primal_residual < opt.residual_tol &&
         st.dual_residual < opt.residual_tol;
}

// Runs the predictor-corrector engine to termination on a fixed cost vector.
// On an iteration cap, the best iterate seen (by worst residual/gap measure)
// is returned with the convergence flag cleared.
inline IpmState pd_solve(const LpGeometry& g, const Vector& b_bar, const Vector& c,
                         const std::vector<Vector>& a, const SolveOptions& opt) {
  IpmState st = initial_point_pd(g, b_bar, c, a);
  IpmState best = st;
  auto merit = [](const IpmState& s) {
    return std::max({s.gap, s.primal_residual, s.dual_residual});
  };
  int since_best = 0;
  for (int it = 0; it < opt.max_iter; ++it) {
    if (pd_converged(st, opt)) {
      st.converged = true;
      return st;
    }
    pd_step(st, g, b_bar, c, opt);
    if (merit(st) < merit(best)) {
      best = st;
      since_best = 0;
    } else if (++since_best >= 30) {
      break;  // rounding plateau: return the best iterate seen
    }
    if (st.stalled) break;
  }
  if (pd_converged(st, opt)) {
    st.converged = true;
    return st;
  }
  best.converged = pd_converged(best, opt);
  best.iterations = st.iterations;
  return best;
}

inline BarycenterSolution solution_from_x(const LpGeometry& g, const Vector& x,
                                          const Matrix& X,
                                          const std::vector<DiscreteMeasure>& measures) {
  BarycenterSolution sol;
  unpack_solution(g, x, sol.w, sol.plans);
  sol.support = X;
  sol.objective = objective_value(X, measures, sol.plans);
  sol.feasibility_error = feasibility_error(sol.w, sol.plans, measures);
  return sol;
}

// Single-atom barycenter: all mass at one point, plans equal the measure
// weights. Kept outside the LP, whose reduced form needs m >= 2.
inline BarycenterSolution single_atom_solution(const BarycenterProblem& p,
                                               const Matrix& X) {
  BarycenterSolution sol;
  sol.w = Vector::Ones(1);
  sol.support = X;
  for (const auto& q : p.measures) {
    sol.plans.push_back(q.weights.transpose());
  }
  sol.objective = objective_value(X, p.measures, sol.plans);
  sol.feasibility_error = feasibility_error(sol.w, sol.plans, p.measures);
  sol.gap = 0.0;
  sol.converged = true;
  return sol;
}

inline BarycenterSolution solve_fixed_support(const BarycenterProblem& p,
                                              const Matrix& X,
                                              const SolveOptions& opt = {}) {
  validate_problem(p);
  if (X.rows() == 1) return single_atom_solution(p, X);
  const LpGeometry g = build_geometry(p, static_cast<int>(X.rows()));
  const std::vector<Vector> a = measure_weights(p, /*interior=*/true);
  const Vector b_bar = rhs_vector(g, a);
  const Vector c = cost_vector(g, X, p.measures);
  const IpmState st = pd_solve(g, b_bar, c, a, opt);
  BarycenterSolution sol = solution_from_x(g, st.x, X, p.measures);
  sol.gap = st.gap;
  sol.iterations = st.iterations;
  sol.converged = st.converged;
  return sol;
}

// Newton direction for min c'x - mu sum(log x) on the affine set Abar x = b:
// the step solves the projected system through Abar diag(x^2) Abar' and
// therefore stays in the null space of Abar.
inline Vector primal_newton_direction(const Vector& x, const LpGeometry& g,
                                      const Vector& c, double mu,
                                      const NormalFactorization& factor) {
  const Vector x2 = x.cwiseProduct(x);
  const Vector rhs = apply_Abar(g, x2.cwiseProduct(c)) - mu * apply_Abar(g, x);
  const Vector z = factor.solve(rhs);
  Vector p = x + x2.cwiseProduct(apply_Abar_T(g, z) - c) / mu;
  // The inner solve residual enters Abar p divided by mu; project it out so
  // the direction stays in the null space even at small penalties.
  const Vector leak = apply_Abar(g, p);
  if (leak.norm() > 1e-14 * (1.0 + p.norm())) {
    p -= x2.cwiseProduct(apply_Abar_T(g, factor.solve(leak)));
  }
  return p;
}

inline Vector primal_newton_direction(const Vector& x, const LpGeometry& g,
                                      const Vector& c, double mu,
                                      Kernel kernel = Kernel::auto_select) {
  const NormalFactorization factor =
      detail::factor_with_fallback(g, x.cwiseProduct(x), kernel);
  return primal_newton_direction(x, g, c, mu, factor);
}

// Hook invoked once per barrier iteration; may rewrite the cost vector (the
// free-support loop moves the support here).
using SupportCallback = std::function<void(const Vector& x, Vector& c)>;

// Feasible-path barrier method: damped Newton steps at decreasing mu,
// starting from a strictly feasible x. Each step ends with an exact
// feasibility restoration through the same factorization (the projected
// direction carries the inner solve residual divided by mu, which would
// otherwise accumulate), so the engine tolerates per-iteration cost
// rewrites.
inline IpmState primal_barrier_solve(const LpGeometry& g, Vector c,
                                     const Vector& b_bar, const Vector& x_start,
                                     double mu0, const SolveOptions& opt,
                                     const SupportCallback& callback = {},
                                     std::vector<double>* mu_trace = nullptr) {
  IpmState st;
  st.x = x_start;
  if (!(st.x.minCoeff() > 0.0)) {
    throw std::invalid_argument("primal_barrier_solve: start must be strictly positive");
  }
  const double obj0 = std::abs(c.dot(st.x));
  double mu = mu0 > 0.0 ? mu0 : 0.1 * std::max(obj0, 1e-12) / static_cast<double>(g.n_col);
  const double mu_min =
      opt.mu_min_scale * std::max(obj0, 1e-12) / static_cast<double>(g.n_col);

  // Unit-weight factorization of Abar Abar', reused for orthogonal
  // null-space projection and feasibility restoration. Unlike the barrier
  // system it stays well conditioned at every mu.
  const NormalFactorization unit_factor =
      detail::factor_with_fallback(g, Vector::Ones(g.n_col), opt.kernel);
  auto restore = [&]() {
    const Vector rho = b_bar - apply_Abar(g, st.x);
    if (rho.norm() <= 1e-15 * (1.0 + b_bar.norm())) return;
    Vector delta = apply_Abar_T(g, unit_factor.solve(rho));
    for (int damp = 0; damp < 40 && (st.x + delta).minCoeff() <= 0.0; ++damp) {
      delta *= 0.5;
    }
    if ((st.x + delta).minCoeff() > 0.0) st.x += delta;
  };

  int since_reduction = 0;
  int stalled_steps = 0;
  for (int it = 0; it < opt.primal_max_iter; ++it) {
    const NormalFactorization factor =
        detail::factor_with_fallback(g, st.x.cwiseProduct(st.x), opt.kernel);
    Vector p = primal_newton_direction(st.x, g, c, mu, factor);
    const Vector leak = apply_Abar(g, p);
    if (leak.norm() > 1e-15 * (1.0 + p.norm())) {
      p -= apply_Abar_T(g, unit_factor.solve(leak));
    }
    const double alpha =
        std::min(1.0, opt.primal_step_fraction * detail::step_to_boundary(st.x, p));
    double decrement = std::numeric_limits<double>::infinity();
    if (alpha >= 1e-12) {
      stalled_steps = 0;
      decrement = p.cwiseQuotient(st.x).norm();
      st.x += alpha * p;
      restore();
    } else if (++stalled_steps >= 20) {
      // No movement across many penalty reductions: give up flagged.
      st.stalled = true;
      break;
    } else {
      decrement = 0.0;  // nothing to track here: drop the penalty and retry
    }

    st.iterations += 1;
    if (mu_trace) mu_trace->push_back(mu);
    if (callback) callback(st.x, c);
    // Reduce on a settled Newton decrement; the counter forces progress when
    // rounding noise keeps the decrement from ever settling at tiny mu.
    if (decrement < opt.decrement_threshold || ++since_reduction >= 6) {
      mu *= opt.mu_reduction;
      since_reduction = 0;
    }
    if (mu < mu_min) {
      st.converged = true;
      break;
    }
  }
  st.mu = mu;
  return st;
}

}  // namespace wbary
