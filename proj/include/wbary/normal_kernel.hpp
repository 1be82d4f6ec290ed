#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>
#include <string>

#include "wbary/lp_model.hpp"

namespace wbary {

enum class Kernel { auto_select, slrm, dlrm, dense };

inline const char* kernel_name(Kernel k) {
  switch (k) {
    case Kernel::slrm: return "slrm";
    case Kernel::dlrm: return "dlrm";
    case Kernel::dense: return "dense";
    default: return "auto";
  }
}

// slrm factors the (m-1)-sized coupling Schur complements directly; dlrm is
// cheaper when the barycenter support is much larger than the measures.
inline Kernel select_kernel(int m, const std::vector<int>& m_list) {
  double sum_sq = 0.0;
  for (int mt : m_list) sum_sq += static_cast<double>(mt) * mt;
  return static_cast<double>(m) * m <= 4.0 * sum_sq ? Kernel::slrm : Kernel::dlrm;
}

struct KernelError : std::runtime_error {
  explicit KernelError(const std::string& msg, int block_index = -1)
      : std::runtime_error(msg), block(block_index) {}
  int block;
};

// Block content of Abar * diag(d) * Abar'. The matrix is, in block form,
//   [ diag(b1)   B2        0  ]
//   [ B2'        B3+B4     al ]
//   [ 0          al'       c  ]
// with B2 block-diagonal (one m_t x (m-1) block per measure), B3 diagonal,
// B4 = ones(N,N) kron diag(y) and al = -ones(N) kron y.
struct NormalBlocks {
  Vector b1;               // length M
  std::vector<Matrix> b2;  // per measure, m_t x (m-1)
  Vector b3;               // length N*(m-1)
  Vector y;                // length m-1
  double c = 0.0;
};

inline NormalBlocks assemble_blocks(const LpGeometry& g, const Vector& d) {
  if (d.size() != g.n_col) {
    throw std::invalid_argument("assemble_blocks: scaling length mismatch");
  }
  if (!d.allFinite() || !(d.minCoeff() > 0.0)) {
    throw std::invalid_argument("assemble_blocks: scaling must be positive and finite");
  }
  NormalBlocks nb;
  nb.b1.resize(g.M);
  nb.b3.resize(static_cast<Index>(g.N) * (g.m - 1));
  nb.b2.reserve(static_cast<std::size_t>(g.N));
  for (int t = 0; t < g.N; ++t) {
    const int mt = g.m_list[static_cast<std::size_t>(t)];
    Eigen::Map<const Matrix> Dt(d.data() + g.plan_offset(t), g.m, mt);
    nb.b1.segment(g.col_offset(t), mt) = Dt.colwise().sum();
    nb.b2.push_back(Dt.bottomRows(g.m - 1).transpose());
    nb.b3.segment(static_cast<Index>(t) * (g.m - 1), g.m - 1) =
        Dt.bottomRows(g.m - 1).rowwise().sum();
  }
  nb.y = d.segment(g.w_offset() + 1, g.m - 1);
  nb.c = d.segment(g.w_offset(), g.m).sum();
  return nb;
}

// Dense reconstruction of the block decomposition (test oracle).
inline Matrix dense_from_blocks(const LpGeometry& g, const NormalBlocks& nb) {
  Matrix A = Matrix::Zero(g.n_row_bar, g.n_row_bar);
  A.diagonal().head(g.M) = nb.b1;
  const Index last = g.n_row_bar - 1;
  for (int t = 0; t < g.N; ++t) {
    const int mt = g.m_list[static_cast<std::size_t>(t)];
    A.block(g.col_offset(t), g.coupling_offset(t), mt, g.m - 1) =
        nb.b2[static_cast<std::size_t>(t)];
    A.block(g.coupling_offset(t), g.col_offset(t), g.m - 1, mt) =
        nb.b2[static_cast<std::size_t>(t)].transpose();
    A.block(g.coupling_offset(t), g.coupling_offset(t), g.m - 1, g.m - 1)
        .diagonal() += nb.b3.segment(static_cast<Index>(t) * (g.m - 1), g.m - 1);
    for (int s = 0; s < g.N; ++s) {
      A.block(g.coupling_offset(t), g.coupling_offset(s), g.m - 1, g.m - 1)
          .diagonal() += nb.y;
    }
    A.block(g.coupling_offset(t), last, g.m - 1, 1) = -nb.y;
    A.block(last, g.coupling_offset(t), 1, g.m - 1) = -nb.y.transpose();
  }
  A(last, last) = nb.c;
  return A;
}

// Factorization of Abar diag(d) Abar' with a structured solve path.
//
// The solve eliminates the diagonal column-sum block and the trailing scalar
// symmetrically, leaving one system in the coupling space whose matrix is a
// block-diagonal part plus a shared rank-structured term; that system is
// handled with a Woodbury-style correction that only ever needs one
// (m-1)-sized core solve.
class NormalFactorization {
 public:
  static constexpr Index kDenseCap = 2000;
  static constexpr int kDlrmDenseCoreMax = 64;

  NormalFactorization(const LpGeometry& g, const Vector& d,
                      Kernel kernel = Kernel::auto_select)
      : geom_(g), d_(d), blocks_(assemble_blocks(g, d)) {
    kernel_ = kernel == Kernel::auto_select ? select_kernel(g.m, g.m_list) : kernel;
    y0_ = d(g.w_offset());  // c - 1'y, taken from the scaling directly
    switch (kernel_) {
      case Kernel::dense:
        factor_dense();
        break;
      case Kernel::slrm:
        factor_slrm();
        break;
      case Kernel::dlrm:
        factor_dlrm();
        break;
      default:
        throw std::logic_error("unreachable kernel");
    }
  }

  Kernel kernel() const { return kernel_; }
  const NormalBlocks& blocks() const { return blocks_; }

  // Solves (Abar diag(d) Abar') z = f with a couple of refinement sweeps.
  Vector solve(const Vector& f) const {
    if (f.size() != geom_.n_row_bar) {
      throw std::invalid_argument("normal solve: rhs length mismatch");
    }
    const double fn = f.norm();
    if (fn == 0.0) return Vector::Zero(f.size());
    Vector z = solve_once(f);
    double best_res = std::numeric_limits<double>::infinity();
    Vector best = z;
    for (int sweep = 0; sweep < 5; ++sweep) {
      const Vector r = f - apply(z);
      const double rn = r.norm();
      if (!(rn < best_res)) break;
      best_res = rn;
      best = z;
      if (rn <= 1e-13 * fn || sweep == 4) break;
      z += solve_once(r);
    }
    return best;
  }

  // (Abar diag(d) Abar') v, matrix-free.
  Vector apply(const Vector& v) const {
    return apply_Abar(geom_, d_.cwiseProduct(apply_Abar_T(geom_, v)));
  }

  // Solves the coupling-space system (block-diagonal Schur part plus the
  // shared low-rank term) for a right-hand side of length N*(m-1).
  Vector solve_middle(const Vector& g) const {
    const Index mm = geom_.m - 1;
    Vector x1(g.size());
    Vector core_rhs = Vector::Zero(mm);
    for (int t = 0; t < geom_.N; ++t) {
      x1.segment(t * mm, mm) = apply_block_inv(t, g.segment(t * mm, mm));
      core_rhs += x1.segment(t * mm, mm);
    }
    const Vector core = solve_core(core_rhs);
    Vector x = x1;
    for (int t = 0; t < geom_.N; ++t) {
      x.segment(t * mm, mm) -= apply_block_inv(t, core);
    }
    return x;
  }

  // (A1 + A2) v, for verifying middle solves.
  Vector apply_middle(const Vector& v) const {
    const Index mm = geom_.m - 1;
    Vector out(v.size());
    Vector ysum = Vector::Zero(mm);
    for (int t = 0; t < geom_.N; ++t) ysum += v.segment(t * mm, mm);
    ysum = blocks_.y.cwiseProduct(ysum) -
           blocks_.y * (blocks_.y.dot(ysum) / blocks_.c);
    for (int t = 0; t < geom_.N; ++t) {
      out.segment(t * mm, mm) = apply_block(t, v.segment(t * mm, mm)) + ysum;
    }
    return out;
  }

  std::size_t storage_doubles() const {
    std::size_t n = static_cast<std::size_t>(d_.size()) +
                    static_cast<std::size_t>(blocks_.b1.size()) +
                    static_cast<std::size_t>(blocks_.b3.size()) +
                    static_cast<std::size_t>(blocks_.y.size());
    for (const auto& b : blocks_.b2) n += static_cast<std::size_t>(b.size());
    for (const auto& f : block_llt_) {
      n += static_cast<std::size_t>(f.matrixLLT().size());
    }
    if (core_dense_) {
      n += static_cast<std::size_t>(core_llt_.matrixLLT().size());
    }
    n += static_cast<std::size_t>(core_precond_.size());
    n += static_cast<std::size_t>(dense_llt_.matrixLLT().size());
    return n;
  }

 private:
  Vector solve_once(const Vector& f) const {
    if (kernel_ == Kernel::dense) return dense_llt_.solve(f);
    const Index M = geom_.M;
    const Index M2 = static_cast<Index>(geom_.N) * (geom_.m - 1);
    const Index mm = geom_.m - 1;
    const double f_last = f(M + M2);

    Vector mid = f.segment(M, M2) - apply_T(f.head(M));
    for (int t = 0; t < geom_.N; ++t) {
      mid.segment(t * mm, mm) += (f_last / blocks_.c) * blocks_.y;
    }
    const Vector mid_solved = solve_middle(mid);

    Vector z(f.size());
    double z_last = f_last / blocks_.c;
    for (int t = 0; t < geom_.N; ++t) {
      z_last += blocks_.y.dot(mid_solved.segment(t * mm, mm)) / blocks_.c;
    }
    z.head(M) = f.head(M).cwiseQuotient(blocks_.b1) - apply_Tt(mid_solved);
    z.segment(M, M2) = mid_solved;
    z(M + M2) = z_last;
    return z;
  }

  // T = B2' B1^-1 applied to the column-sum component.
  Vector apply_T(const Vector& top) const {
    const Index mm = geom_.m - 1;
    Vector out(static_cast<Index>(geom_.N) * mm);
    for (int t = 0; t < geom_.N; ++t) {
      const int mt = geom_.m_list[static_cast<std::size_t>(t)];
      out.segment(t * mm, mm) =
          blocks_.b2[static_cast<std::size_t>(t)].transpose() *
          top.segment(geom_.col_offset(t), mt)
              .cwiseQuotient(blocks_.b1.segment(geom_.col_offset(t), mt));
    }
    return out;
  }

  Vector apply_Tt(const Vector& mid) const {
    const Index mm = geom_.m - 1;
    Vector out(geom_.M);
    for (int t = 0; t < geom_.N; ++t) {
      const int mt = geom_.m_list[static_cast<std::size_t>(t)];
      out.segment(geom_.col_offset(t), mt) =
          (blocks_.b2[static_cast<std::size_t>(t)] * mid.segment(t * mm, mm))
              .cwiseQuotient(blocks_.b1.segment(geom_.col_offset(t), mt));
    }
    return out;
  }

  Vector block_b3(int t) const {
    return blocks_.b3.segment(static_cast<Index>(t) * (geom_.m - 1), geom_.m - 1);
  }
  Vector block_b1(int t) const {
    return blocks_.b1.segment(geom_.col_offset(t),
                              geom_.m_list[static_cast<std::size_t>(t)]);
  }

  // Schur block A_tt = B3_t - B2_t' B1_t^-1 B2_t applied to a vector.
  Vector apply_block(int t, const Vector& v) const {
    const auto& B2 = blocks_.b2[static_cast<std::size_t>(t)];
    const Vector u = (B2 * v).cwiseQuotient(block_b1(t));
    return block_b3(t).cwiseProduct(v) - B2.transpose() * u;
  }

  // A_tt^-1 v, either through the direct factor or through the inverted
  // complement K_t = B1_t - B2_t B3_t^-1 B2_t' when only K_t is factored.
  Vector apply_block_inv(int t, const Vector& v) const {
    const auto& f = block_llt_[static_cast<std::size_t>(t)];
    if (kernel_ == Kernel::slrm) return f.solve(v);
    const auto& B2 = blocks_.b2[static_cast<std::size_t>(t)];
    const Vector b3 = block_b3(t);
    const Vector u1 = v.cwiseQuotient(b3);
    const Vector u2 = f.solve(B2 * u1);
    return u1 + (B2.transpose() * u2).cwiseQuotient(b3);
  }

  // Y^-1 v with Y = diag(y) - y y' / c; the rank-one update inverts in
  // closed form because y' diag(y)^-1 y = 1' y and c - 1'y = y0 > 0.
  Vector apply_Yinv(const Vector& v) const {
    return v.cwiseQuotient(blocks_.y) + Vector::Constant(v.size(), v.sum() / y0_);
  }

  Vector solve_core(const Vector& rhs) const {
    if (core_dense_) return core_llt_.solve(rhs);
    return core_cg(rhs);
  }

  // Conjugate gradients on (Y^-1 + sum_t A_tt^-1), diagonal preconditioner.
  Vector core_cg(const Vector& rhs) const {
    const double gn = rhs.norm();
    if (gn == 0.0) return Vector::Zero(rhs.size());
    auto apply_core = [&](const Vector& v) {
      Vector out = apply_Yinv(v);
      for (int t = 0; t < geom_.N; ++t) out += apply_block_inv(t, v);
      return out;
    };
    Vector x = Vector::Zero(rhs.size());
    Vector r = rhs;
    Vector z = r.cwiseProduct(core_precond_);
    Vector p = z;
    double rz = r.dot(z);
    const int max_iter = 5 * (geom_.m - 1);
    for (int it = 0; it < max_iter; ++it) {
      const Vector Ap = apply_core(p);
      const double denom = p.dot(Ap);
      if (!(denom > 0.0)) break;
      const double alpha = rz / denom;
      x += alpha * p;
      r -= alpha * Ap;
      if (r.norm() <= 1e-12 * gn) return x;
      z = r.cwiseProduct(core_precond_);
      const double rz_next = r.dot(z);
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
    std::ostringstream msg;
    msg << "core solve stalled, relative residual " << r.norm() / gn;
    throw KernelError(msg.str());
  }

  Eigen::LLT<Matrix> factor_spd(Matrix A, int block) const {
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() == Eigen::Success) return llt;
    // One shot of diagonal lifting for scalings degraded near convergence.
    const double lift = 1e-12 * A.diagonal().cwiseAbs().mean() + 1e-300;
    A.diagonal().array() += lift;
    llt.compute(A);
    if (llt.info() != Eigen::Success) {
      throw KernelError("Cholesky failed on an SPD block", block);
    }
    return llt;
  }

  // Closed-form dense Y^-1 (diagonal plus constant), used to seed the core.
  Matrix dense_Yinv() const {
    Matrix S = Matrix::Constant(geom_.m - 1, geom_.m - 1, 1.0 / y0_);
    S.diagonal() += blocks_.y.cwiseInverse();
    return S;
  }

  void factor_slrm() {
    const Index mm = geom_.m - 1;
    Matrix S = dense_Yinv();
    block_llt_.reserve(static_cast<std::size_t>(geom_.N));
    for (int t = 0; t < geom_.N; ++t) {
      const auto& B2 = blocks_.b2[static_cast<std::size_t>(t)];
      Matrix W = B2.array().colwise() / block_b1(t).array();
      Matrix A = -B2.transpose() * W;
      A.diagonal() += block_b3(t);
      block_llt_.push_back(factor_spd(std::move(A), t));
      S += block_llt_.back().solve(Matrix::Identity(mm, mm));
    }
    core_llt_ = factor_spd(std::move(S), -1);
    core_dense_ = true;
  }

  void factor_dlrm() {
    const Index mm = geom_.m - 1;
    block_llt_.reserve(static_cast<std::size_t>(geom_.N));
    for (int t = 0; t < geom_.N; ++t) {
      const auto& B2 = blocks_.b2[static_cast<std::size_t>(t)];
      Matrix W = B2.array().rowwise() / block_b3(t).transpose().array();
      Matrix K = -W * B2.transpose();
      K.diagonal() += block_b1(t);
      block_llt_.push_back(factor_spd(std::move(K), t));
    }
    if (geom_.m <= kDlrmDenseCoreMax) {
      Matrix S = dense_Yinv();
      for (int t = 0; t < geom_.N; ++t) {
        for (Index r = 0; r < mm; ++r) {
          S.col(r) += apply_block_inv(t, Vector::Unit(mm, r));
        }
      }
      core_llt_ = factor_spd(std::move(S), -1);
      core_dense_ = true;
    } else {
      core_precond_ = blocks_.y.cwiseInverse();
      core_precond_.array() += 1.0 / y0_;
      for (int t = 0; t < geom_.N; ++t) {
        core_precond_ += block_b3(t).cwiseInverse();
      }
      core_precond_ = core_precond_.cwiseInverse();
      core_dense_ = false;
    }
  }

  void factor_dense() {
    if (geom_.n_row_bar > kDenseCap) {
      throw KernelError("dense kernel size cap");
    }
    const Matrix A = dense_Abar(geom_);
    Matrix ADAt = A * d_.asDiagonal() * A.transpose();
    dense_llt_ = factor_spd(std::move(ADAt), -1);
  }

  LpGeometry geom_;
  Vector d_;
  NormalBlocks blocks_;
  Kernel kernel_ = Kernel::slrm;
  double y0_ = 0.0;

  std::vector<Eigen::LLT<Matrix>> block_llt_;  // A_tt (slrm) or K_t (dlrm)
  Eigen::LLT<Matrix> core_llt_;
  bool core_dense_ = false;
  Vector core_precond_;
  Eigen::LLT<Matrix> dense_llt_;
};

inline Vector solve_normal(const LpGeometry& g, const Vector& d, const Vector& f,
                           Kernel kernel = Kernel::auto_select) {
  return NormalFactorization(g, d, kernel).solve(f);
}

}  // namespace wbary
