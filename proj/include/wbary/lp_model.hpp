#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "wbary/measures.hpp"

namespace wbary {

// Dimensions and index maps of the reduced standard-form LP
//
//   min c'x  s.t.  Abar x = bbar, x >= 0
//
// over x = (vec(P1); ...; vec(PN); w) with column-major plan vectorization.
// The rows of Abar are, in order: per-measure column-sum constraints
// (M rows), rows 2..m of each plan-row-sum/weight coupling block
// (N*(m-1) rows), and the weight simplex row (1 row). The first row of each
// coupling block is redundant and dropped, which leaves a full-row-rank
// operator.
struct LpGeometry {
  int N = 0;
  int m = 0;
  int d = 0;
  std::vector<int> m_list;
  Index M = 0;          // sum of m_t
  Index n_col = 0;      // m*M + m
  Index n_row_bar = 0;  // M + N*(m-1) + 1
  std::vector<Index> plan_off;  // start of vec(P t) within x
  std::vector<Index> col_off;   // start of measure t's column-sum rows

  Index plan_offset(int t) const { return plan_off[static_cast<std::size_t>(t)]; }
  Index col_offset(int t) const { return col_off[static_cast<std::size_t>(t)]; }
  Index coupling_offset(int t) const {
    return M + static_cast<Index>(t) * (m - 1);
  }
  Index w_offset() const { return static_cast<Index>(m) * M; }

  Eigen::Map<const Matrix> plan(const Vector& x, int t) const {
    return {x.data() + plan_offset(t), m, m_list[static_cast<std::size_t>(t)]};
  }
  Eigen::Map<Matrix> plan(Vector& x, int t) const {
    return {x.data() + plan_offset(t), m, m_list[static_cast<std::size_t>(t)]};
  }
};

inline LpGeometry build_geometry(int N, int m, const std::vector<int>& m_list,
                                 int d) {
  if (N < 1 || static_cast<int>(m_list.size()) != N) {
    throw std::invalid_argument("build_geometry: bad measure count");
  }
  if (m < 2) {
    throw std::invalid_argument(
        "build_geometry: m must be >= 2 (single-atom barycenters are closed form)");
  }
  LpGeometry g;
  g.N = N;
  g.m = m;
  g.d = d;
  g.m_list = m_list;
  g.plan_off.resize(m_list.size());
  g.col_off.resize(m_list.size());
  Index at = 0;
  Index col = 0;
  for (std::size_t t = 0; t < m_list.size(); ++t) {
    if (m_list[t] < 1) {
      throw std::invalid_argument("build_geometry: empty measure");
    }
    g.plan_off[t] = at;
    g.col_off[t] = col;
    at += static_cast<Index>(m) * m_list[t];
    col += m_list[t];
  }
  g.M = col;
  g.n_col = at + m;
  g.n_row_bar = g.M + static_cast<Index>(N) * (m - 1) + 1;
  return g;
}

inline LpGeometry build_geometry(const BarycenterProblem& p, int m) {
  validate_problem(p);
  std::vector<int> sizes;
  sizes.reserve(p.measures.size());
  for (const auto& q : p.measures) sizes.push_back(static_cast<int>(q.size()));
  return build_geometry(static_cast<int>(p.measures.size()), m, sizes,
                        static_cast<int>(p.measures.front().dim()));
}

// Right-hand side (a^(1); ...; a^(N); 0; 1) of the reduced system.
inline Vector rhs_vector(const LpGeometry& g, const std::vector<Vector>& a) {
  Vector b = Vector::Zero(g.n_row_bar);
  for (int t = 0; t < g.N; ++t) {
    b.segment(g.col_offset(t), g.m_list[static_cast<std::size_t>(t)]) =
        a[static_cast<std::size_t>(t)];
  }
  b(g.n_row_bar - 1) = 1.0;
  return b;
}

inline Vector apply_Abar(const LpGeometry& g, const Vector& x) {
  if (x.size() != g.n_col) {
    throw std::invalid_argument("apply_Abar: length mismatch");
  }
  Vector y(g.n_row_bar);
  const auto w = x.segment(g.w_offset(), g.m);
  for (int t = 0; t < g.N; ++t) {
    const auto P = g.plan(x, t);
    y.segment(g.col_offset(t), P.cols()) = P.colwise().sum();
    y.segment(g.coupling_offset(t), g.m - 1) =
        (P.rowwise().sum() - w).tail(g.m - 1);
  }
  y(g.n_row_bar - 1) = w.sum();
  return y;
}

inline Vector apply_Abar_T(const LpGeometry& g, const Vector& lambda) {
  if (lambda.size() != g.n_row_bar) {
    throw std::invalid_argument("apply_Abar_T: length mismatch");
  }
  Vector z(g.n_col);
  const double simplex_dual = lambda(g.n_row_bar - 1);
  auto zw = z.segment(g.w_offset(), g.m);
  zw.setConstant(simplex_dual);
  for (int t = 0; t < g.N; ++t) {
    const auto cols = lambda.segment(g.col_offset(t),
                                     g.m_list[static_cast<std::size_t>(t)]);
    const auto rows = lambda.segment(g.coupling_offset(t), g.m - 1);
    auto P = g.plan(z, t);
    P = Vector::Ones(g.m) * cols.transpose();
    P.bottomRows(g.m - 1).colwise() += rows;
    zw.tail(g.m - 1) -= rows;
  }
  return z;
}

// Plan-cost vector (vec(D^(1)); ...; vec(D^(N)); 0) for support X.
inline Vector cost_vector(const LpGeometry& g, const Matrix& X,
                          const std::vector<DiscreteMeasure>& measures) {
  if (X.rows() != g.m || X.cols() != g.d) {
    throw std::invalid_argument("cost_vector: support shape mismatch");
  }
  Vector c = Vector::Zero(g.n_col);
  for (int t = 0; t < g.N; ++t) {
    const Matrix D = distance_matrix(X, measures[static_cast<std::size_t>(t)].points);
    g.plan(c, t) = D;
  }
  return c;
}

inline Vector pack_solution(const LpGeometry& g, const Vector& w,
                            const std::vector<Matrix>& plans) {
  Vector x(g.n_col);
  for (int t = 0; t < g.N; ++t) {
    g.plan(x, t) = plans[static_cast<std::size_t>(t)];
  }
  x.segment(g.w_offset(), g.m) = w;
  return x;
}

inline void unpack_solution(const LpGeometry& g, const Vector& x, Vector& w,
                            std::vector<Matrix>& plans) {
  w = x.segment(g.w_offset(), g.m);
  plans.resize(static_cast<std::size_t>(g.N));
  for (int t = 0; t < g.N; ++t) {
    plans[static_cast<std::size_t>(t)] = g.plan(x, t);
  }
}

// Exactly feasible, strictly interior point: w uniform, P_t = w a_t'.
inline Vector feasible_uniform_point(const LpGeometry& g,
                                     const std::vector<Vector>& a) {
  Vector x(g.n_col);
  const Vector w = Vector::Constant(g.m, 1.0 / g.m);
  for (int t = 0; t < g.N; ++t) {
    g.plan(x, t) = w * a[static_cast<std::size_t>(t)].transpose();
  }
  x.segment(g.w_offset(), g.m) = w;
  return x;
}

struct BarycenterSolution {
  Vector w;
  std::vector<Matrix> plans;
  Matrix support;
  double objective = 0.0;
  double feasibility_error = 0.0;
  double gap = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
};

inline double objective_value(const Matrix& X,
                              const std::vector<DiscreteMeasure>& measures,
                              const std::vector<Matrix>& plans) {
  double obj = 0.0;
  for (std::size_t t = 0; t < measures.size(); ++t) {
    obj += distance_matrix(X, measures[t].points).cwiseProduct(plans[t]).sum();
  }
  return obj;
}

inline double objective(const BarycenterSolution& sol,
                        const std::vector<DiscreteMeasure>& measures) {
  return objective_value(sol.support, measures, sol.plans);
}

// max of the normalized marginal residuals and the simplex residual, with
// stacked Frobenius norms across measures.
inline double feasibility_error(const Vector& w, const std::vector<Matrix>& plans,
                                const std::vector<DiscreteMeasure>& measures) {
  double row_num = 0.0, col_num = 0.0, plan_norm = 0.0, a_norm = 0.0;
  for (std::size_t t = 0; t < measures.size(); ++t) {
    row_num += (plans[t].rowwise().sum() - w).squaredNorm();
    col_num += (plans[t].colwise().sum().transpose() - measures[t].weights).squaredNorm();
    plan_norm += plans[t].squaredNorm();
    a_norm += measures[t].weights.squaredNorm();
  }
  row_num = std::sqrt(row_num);
  col_num = std::sqrt(col_num);
  plan_norm = std::sqrt(plan_norm);
  a_norm = std::sqrt(a_norm);
  const double term_rows = row_num / (1.0 + w.norm() + plan_norm);
  const double term_cols = col_num / (1.0 + a_norm + plan_norm);
  const double term_simplex = std::abs(w.sum() - 1.0);
  return std::max({term_rows, term_cols, term_simplex});
}

inline double feasibility_error(const BarycenterSolution& sol,
                                const std::vector<DiscreteMeasure>& measures) {
  return feasibility_error(sol.w, sol.plans, measures);
}

// Dense materializations, for small-instance oracles and the dense kernel.
inline Matrix dense_Abar(const LpGeometry& g) {
  Matrix A = Matrix::Zero(g.n_row_bar, g.n_col);
  for (int t = 0; t < g.N; ++t) {
    const int mt = g.m_list[static_cast<std::size_t>(t)];
    for (int j = 0; j < mt; ++j) {
      for (int i = 0; i < g.m; ++i) {
        const Index col = g.plan_offset(t) + static_cast<Index>(j) * g.m + i;
        A(g.col_offset(t) + j, col) = 1.0;
        if (i >= 1) A(g.coupling_offset(t) + i - 1, col) = 1.0;
      }
    }
    for (int i = 1; i < g.m; ++i) {
      A(g.coupling_offset(t) + i - 1, g.w_offset() + i) = -1.0;
    }
  }
  for (int i = 0; i < g.m; ++i) A(g.n_row_bar - 1, g.w_offset() + i) = 1.0;
  return A;
}

// Full constraint matrix including the redundant first coupling rows.
inline Matrix dense_Afull(const LpGeometry& g) {
  const Index n_row = g.M + static_cast<Index>(g.N) * g.m + 1;
  Matrix A = Matrix::Zero(n_row, g.n_col);
  for (int t = 0; t < g.N; ++t) {
    const int mt = g.m_list[static_cast<std::size_t>(t)];
    const Index coup = g.M + static_cast<Index>(t) * g.m;
    for (int j = 0; j < mt; ++j) {
      for (int i = 0; i < g.m; ++i) {
        const Index col = g.plan_offset(t) + static_cast<Index>(j) * g.m + i;
        A(g.col_offset(t) + j, col) = 1.0;
        A(coup + i, col) = 1.0;
      }
    }
    for (int i = 0; i < g.m; ++i) A(coup + i, g.w_offset() + i) = -1.0;
  }
  for (int i = 0; i < g.m; ++i) A(n_row - 1, g.w_offset() + i) = 1.0;
  return A;
}

inline Vector rhs_full(const LpGeometry& g, const std::vector<Vector>& a) {
  const Index n_row = g.M + static_cast<Index>(g.N) * g.m + 1;
  Vector b = Vector::Zero(n_row);
  for (int t = 0; t < g.N; ++t) {
    b.segment(g.col_offset(t), g.m_list[static_cast<std::size_t>(t)]) =
        a[static_cast<std::size_t>(t)];
  }
  b(n_row - 1) = 1.0;
  return b;
}

inline std::vector<Vector> measure_weights(const BarycenterProblem& p,
                                           bool interior) {
  std::vector<Vector> a;
  a.reserve(p.measures.size());
  for (const auto& q : p.measures) {
    a.push_back(interior ? interior_weights(q.weights) : q.weights);
  }
  return a;
}

}  // namespace wbary
