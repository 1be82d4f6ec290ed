#pragma once

#include "wbary/maaipm.hpp"

namespace wbary {

struct IbpOptions {
  double tol = 1e-8;
  int max_iter = 100000;
  int log_domain = -1;  // -1 auto (enabled for small epsilon), 0 off, 1 on
};

namespace detail {

// Relative change of a stacked family of positive vectors,
// ||cur - prev||_F / (1 + ||cur||_F + ||prev||_F).
inline double stacked_change(const std::vector<Vector>& cur,
                             const std::vector<Vector>& prev) {
  double diff = 0.0, ncur = 0.0, nprev = 0.0;
  for (std::size_t t = 0; t < cur.size(); ++t) {
    diff += (cur[t] - prev[t]).squaredNorm();
    ncur += cur[t].squaredNorm();
    nprev += prev[t].squaredNorm();
  }
  return std::sqrt(diff) / (1.0 + std::sqrt(ncur) + std::sqrt(nprev));
}

// Same ratio evaluated on exp(f) with a shared shift, so that enormous
// exponents cancel instead of overflowing.
inline double stacked_change_log(const std::vector<Vector>& cur,
                                 const std::vector<Vector>& prev) {
  double shift = -std::numeric_limits<double>::infinity();
  for (const auto& f : cur) shift = std::max(shift, f.maxCoeff());
  for (const auto& f : prev) shift = std::max(shift, f.maxCoeff());
  if (!std::isfinite(shift)) return 0.0;
  double diff = 0.0, ncur = 0.0, nprev = 0.0;
  for (std::size_t t = 0; t < cur.size(); ++t) {
    const Vector a = (cur[t].array() - shift).exp();
    const Vector b = (prev[t].array() - shift).exp();
    diff += (a - b).squaredNorm();
    ncur += a.squaredNorm();
    nprev += b.squaredNorm();
  }
  return std::sqrt(diff) /
         (std::exp(-shift) + std::sqrt(ncur) + std::sqrt(nprev));
}

inline Vector lse_rows(const Matrix& E) {
  // log(sum_j exp(E(i, j))) per row
  Vector out(E.rows());
  for (Index i = 0; i < E.rows(); ++i) {
    const double shift = E.row(i).maxCoeff();
    out(i) = shift + std::log((E.row(i).array() - shift).exp().sum());
  }
  return out;
}

}  // namespace detail

// Fixed-support entropic barycenter via alternating Bregman projections at
// regularization eps (relative to the median transport cost). Returns the
// scaled plans and their unregularized transport objective.
inline BarycenterSolution ibp_solve(const BarycenterProblem& p, const Matrix& X,
                                    double eps, const IbpOptions& opt = {}) {
  validate_problem(p);
  if (!(eps > 0.0)) throw std::invalid_argument("ibp_solve: eps must be positive");
  const std::size_t N = p.measures.size();
  const Index m = X.rows();

  std::vector<Matrix> D(N);
  std::vector<double> pooled;
  for (std::size_t t = 0; t < N; ++t) {
    D[t] = distance_matrix(X, p.measures[t].points);
    pooled.insert(pooled.end(), D[t].data(), D[t].data() + D[t].size());
  }
  std::nth_element(pooled.begin(), pooled.begin() + pooled.size() / 2, pooled.end());
  double scale = pooled[pooled.size() / 2];
  if (!(scale > 0.0)) scale = 1.0;
  const double eps_eff = eps * scale;
  const bool log_domain = opt.log_domain == 1 || (opt.log_domain < 0 && eps <= 0.005);

  BarycenterSolution sol;
  sol.support = X;
  sol.plans.resize(N);
  int iters = 0;

  if (!log_domain) {
    std::vector<Matrix> K(N);
    for (std::size_t t = 0; t < N; ++t) {
      K[t] = (-D[t].array() / eps_eff).exp().matrix();
      // vectorized exp saturates at the smallest normal instead of flushing
      // to zero, so a dead row or column shows up as one with no entry above
      // that floor
      const double dead = 1e-300;
      if ((K[t].rowwise().maxCoeff().array() <= dead).any() ||
          (K[t].colwise().maxCoeff().array() <= dead).any()) {
        throw std::runtime_error(
            "ibp_solve: kernel underflow; increase eps or rescale the costs");
      }
    }
    std::vector<Vector> u(N, Vector::Ones(m)), v(N);
    for (std::size_t t = 0; t < N; ++t) v[t] = Vector::Ones(p.measures[t].size());
    Vector w = Vector::Constant(m, 1.0 / static_cast<double>(m));

    for (iters = 1; iters <= opt.max_iter; ++iters) {
      const std::vector<Vector> u_prev = u, v_prev = v;
      std::vector<Vector> Kv(N);
      Vector log_w = Vector::Zero(m);
      for (std::size_t t = 0; t < N; ++t) {
        v[t] = p.measures[t].weights.cwiseQuotient(K[t].transpose() * u[t]);
        Kv[t] = K[t] * v[t];
        log_w += (u[t].cwiseProduct(Kv[t])).array().log().matrix();
      }
      log_w /= static_cast<double>(N);
      w = (log_w.array() - log_w.maxCoeff()).exp().matrix();
      w /= w.sum();
      for (std::size_t t = 0; t < N; ++t) u[t] = w.cwiseQuotient(Kv[t]);
      if (!w.allFinite()) {
        throw std::runtime_error(
            "ibp_solve: scaling blow-up; increase eps or rescale the costs");
      }
      if (detail::stacked_change(u, u_prev) < opt.tol &&
          detail::stacked_change(v, v_prev) < opt.tol) {
        break;
      }
    }
    for (std::size_t t = 0; t < N; ++t) {
      sol.plans[t] = u[t].asDiagonal() * K[t] * v[t].asDiagonal();
    }
    sol.w = w;
  } else {
    // Potentials phi = log u, psi = log v, updated with log-sum-exp sweeps.
    std::vector<Vector> phi(N, Vector::Zero(m)), psi(N);
    for (std::size_t t = 0; t < N; ++t) psi[t] = Vector::Zero(p.measures[t].size());
    Vector log_w = Vector::Constant(m, -std::log(static_cast<double>(m)));

    for (iters = 1; iters <= opt.max_iter; ++iters) {
      const std::vector<Vector> phi_prev = phi, psi_prev = psi;
      std::vector<Vector> lKv(N);
      Vector log_w_acc = Vector::Zero(m);
      for (std::size_t t = 0; t < N; ++t) {
        const Matrix E = (-D[t] / eps_eff).colwise() + phi[t];
        psi[t] = p.measures[t].weights.array().log().matrix() -
                 detail::lse_rows(E.transpose());
        const Matrix F = ((-D[t] / eps_eff).rowwise() + psi[t].transpose());
        lKv[t] = detail::lse_rows(F);
        log_w_acc += phi[t] + lKv[t];
      }
      log_w = log_w_acc / static_cast<double>(N);
      const double peak = log_w.maxCoeff();
      log_w.array() -= std::log((log_w.array() - peak).exp().sum()) + peak;
      for (std::size_t t = 0; t < N; ++t) phi[t] = log_w - lKv[t];
      if (detail::stacked_change_log(phi, phi_prev) < opt.tol &&
          detail::stacked_change_log(psi, psi_prev) < opt.tol) {
        break;
      }
    }
    for (std::size_t t = 0; t < N; ++t) {
      Matrix logP = -D[t] / eps_eff;
      logP.colwise() += phi[t];
      logP.rowwise() += psi[t].transpose();
      sol.plans[t] = logP.array().exp().matrix();
    }
    sol.w = log_w.array().exp().matrix();
    sol.w /= sol.w.sum();
  }

  sol.iterations = std::min(iters, opt.max_iter);
  sol.converged = iters <= opt.max_iter;
  sol.objective = 0.0;
  for (std::size_t t = 0; t < N; ++t) {
    sol.objective += D[t].cwiseProduct(sol.plans[t]).sum();
  }
  sol.feasibility_error = feasibility_error(sol.w, sol.plans, p.measures);
  return sol;
}

// Free-support variant: alternates projection sweeps with the closed-form
// support move and keeps the best round.
inline BarycenterSolution ibp_free_support(const BarycenterProblem& p,
                                           const Matrix& X0, double eps,
                                           int outer_iters,
                                           const IbpOptions& opt = {}) {
  Matrix X = X0;
  BarycenterSolution best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int round = 0; round < outer_iters; ++round) {
    BarycenterSolution sol = ibp_solve(p, X, eps, opt);
    if (sol.objective < best_obj) {
      best_obj = sol.objective;
      best = sol;
    }
    X = update_support(sol.plans, p.measures, X);
  }
  return best;
}

}  // namespace wbary
