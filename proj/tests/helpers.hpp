#pragma once

#include "wbary/wbary.hpp"

#include <random>

namespace wbtest {

using namespace wbary;

// Line instance with a spurious alternation fixed point: three atoms at
// {0, 0.9, 1.1} with masses {0.01, 0.495, 0.495}, replicated N times.
// From support {0, 1} the alternating scheme cannot improve; the best
// two-point supports live in the {0.9, 1.1} cluster.
inline BarycenterProblem two_cluster_line(int N) {
  DiscreteMeasure q;
  q.points.resize(3, 1);
  q.points << 0.0, 0.9, 1.1;
  q.weights.resize(3);
  q.weights << 0.01, 0.495, 0.495;
  BarycenterProblem p;
  for (int t = 0; t < N; ++t) p.measures.push_back(q);
  return p;
}

// Uniform atoms at {0, 1/2, 3/2}; support {0, 1} with the matching plan is
// an alternation fixed point but not a local minimum.
inline BarycenterProblem uniform_thirds_line(int N) {
  DiscreteMeasure q;
  q.points.resize(3, 1);
  q.points << 0.0, 0.5, 1.5;
  q.weights = Vector::Constant(3, 1.0 / 3.0);
  BarycenterProblem p;
  for (int t = 0; t < N; ++t) p.measures.push_back(q);
  return p;
}

inline Matrix support_01() {
  Matrix X(2, 1);
  X << 0.0, 1.0;
  return X;
}

inline Vector random_positive(Index n, std::mt19937_64& rng, double lo = 0.1,
                              double hi = 10.0) {
  std::uniform_real_distribution<double> unit(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = unit(rng);
  return v;
}

inline Vector log_uniform(Index n, std::mt19937_64& rng, double lo_exp,
                          double hi_exp) {
  std::uniform_real_distribution<double> unit(lo_exp, hi_exp);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = std::pow(10.0, unit(rng));
  return v;
}

// Random strictly feasible interior point of the transport polytope: a
// product coupling w a_t' plus a rank-one perturbation u v' whose factors
// both sum to zero, which leaves every marginal untouched.
inline Vector random_feasible(const LpGeometry& g, const std::vector<Vector>& a,
                              std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.2, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector w(g.m);
  for (int i = 0; i < g.m; ++i) w(i) = unit(rng);
  w /= w.sum();
  Vector x(g.n_col);
  for (int t = 0; t < g.N; ++t) {
    const Vector& at = a[static_cast<std::size_t>(t)];
    Matrix P = w * at.transpose();
    Vector u(g.m), v(at.size());
    for (Index i = 0; i < u.size(); ++i) u(i) = gauss(rng);
    for (Index j = 0; j < v.size(); ++j) v(j) = gauss(rng);
    u.array() -= u.mean();
    v.array() -= v.mean();
    const Matrix E = u * v.transpose();
    const double room = 0.5 * P.minCoeff() /
                        std::max(E.cwiseAbs().maxCoeff(), 1e-300);
    P += room * E;
    g.plan(x, t) = P;
  }
  x.segment(g.w_offset(), g.m) = w;
  return x;
}

}  // namespace wbtest
