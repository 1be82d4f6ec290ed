#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace wbary {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// A discrete probability measure: one support point per row, simplex weights.
struct DiscreteMeasure {
  Matrix points;
  Vector weights;

  Index size() const { return weights.size(); }
  Index dim() const { return points.cols(); }
};

// Candidate barycenter support, one point per row.
struct SupportSet {
  Matrix points;

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }
};

// Grayscale raster, intensities in row-major order.
struct GridImage {
  int width = 0;
  int height = 0;
  Vector intensities;
};

struct BarycenterProblem {
  std::vector<DiscreteMeasure> measures;
  int support_size = 0;
  std::optional<SupportSet> fixed_support;
};

inline void validate_measure(const DiscreteMeasure& q) {
  if (q.points.rows() != q.weights.size()) {
    throw std::invalid_argument("measure: points/weights length mismatch");
  }
  if (q.points.cols() < 1 || q.points.rows() < 1) {
    throw std::invalid_argument("measure: empty support");
  }
  if ((q.weights.array() < 0).any()) {
    throw std::invalid_argument("measure: negative weight");
  }
  if (std::abs(q.weights.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("measure: weights must sum to 1");
  }
}

inline void validate_problem(const BarycenterProblem& p) {
  if (p.measures.empty()) {
    throw std::invalid_argument("problem: needs at least one measure");
  }
  const Index d = p.measures.front().dim();
  for (const auto& q : p.measures) {
    validate_measure(q);
    if (q.dim() != d) {
      throw std::invalid_argument("problem: mixed point dimensions");
    }
  }
}

// Squared Euclidean distances, one row per point of X, one column per point
// of Q.
inline Matrix distance_matrix(const Matrix& X, const Matrix& Q) {
  if (X.cols() != Q.cols()) {
    throw std::invalid_argument("distance_matrix: dimension mismatch");
  }
  Matrix D(X.rows(), Q.rows());
  for (Index i = 0; i < X.rows(); ++i) {
    for (Index j = 0; j < Q.rows(); ++j) {
      D(i, j) = (X.row(i) - Q.row(j)).squaredNorm();
    }
  }
  return D;
}

inline Matrix distance_matrix(const SupportSet& X, const DiscreteMeasure& q) {
  return distance_matrix(X.points, q.points);
}

inline Vector normalize_weights(const Vector& raw) {
  if ((raw.array() < 0).any()) {
    throw std::invalid_argument("normalize_weights: negative entry");
  }
  const double total = raw.sum();
  if (!(total > 0)) {
    throw std::invalid_argument("normalize_weights: all entries zero");
  }
  return raw / total;
}

// Strictly positive copy of a weight vector for interior-point use; tiny
// weights are floored at 1e-12 and the vector renormalized.
inline Vector interior_weights(const Vector& a) {
  Vector out = a.cwiseMax(1e-12);
  return out / out.sum();
}

namespace detail {

struct PooledPoints {
  Matrix points;   // distinct points, lexicographically sorted
  Vector weights;  // aggregated mass per distinct point
};

inline PooledPoints pool_distinct(const std::vector<DiscreteMeasure>& measures) {
  if (measures.empty()) {
    throw std::invalid_argument("kmeans_support: no measures");
  }
  const Index d = measures.front().dim();
  Index total = 0;
  for (const auto& q : measures) {
    if (q.dim() != d) {
      throw std::invalid_argument("kmeans_support: mixed dimensions");
    }
    total += q.size();
  }
  Matrix pts(total, d);
  Vector wts(total);
  Index at = 0;
  for (const auto& q : measures) {
    pts.middleRows(at, q.size()) = q.points;
    wts.segment(at, q.size()) = q.weights;
    at += q.size();
  }
  // Sort lexicographically so the result is independent of measure order.
  std::vector<Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    for (Index k = 0; k < d; ++k) {
      if (pts(a, k) != pts(b, k)) return pts(a, k) < pts(b, k);
    }
    return false;
  });
  PooledPoints out;
  out.points.resize(total, d);
  out.weights.resize(total);
  Index n = 0;
  for (Index r = 0; r < total; ++r) {
    const Index src = order[static_cast<std::size_t>(r)];
    if (n > 0 && (pts.row(src) - out.points.row(n - 1)).cwiseAbs().maxCoeff() == 0.0) {
      out.weights(n - 1) += wts(src);
    } else {
      out.points.row(n) = pts.row(src);
      out.weights(n) = wts(src);
      ++n;
    }
  }
  out.points.conservativeResize(n, d);
  out.weights.conservativeResize(n);
  return out;
}

inline Index sample_cumulative(const Vector& mass, double u01) {
  const double target = u01 * mass.sum();
  double acc = 0.0;
  for (Index i = 0; i < mass.size(); ++i) {
    acc += mass(i);
    if (target < acc) return i;
  }
  return mass.size() - 1;
}

}  // namespace detail

// Weighted k-means over the pooled support points of all measures, k-means++
// seeded, deterministic for a given seed. Lloyd iterations stop after 100
// rounds or when the relative SSE change drops below 1e-9.
inline SupportSet kmeans_support(const std::vector<DiscreteMeasure>& measures,
                                 int m, std::uint64_t seed) {
  if (m < 1) {
    throw std::invalid_argument("kmeans_support: m must be >= 1");
  }
  const detail::PooledPoints pool = detail::pool_distinct(measures);
  const Index n = pool.points.rows();
  const Index d = pool.points.cols();
  if (static_cast<Index>(m) > n) {
    throw std::invalid_argument("kmeans_support: m exceeds distinct pooled points");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix centers(m, d);
  centers.row(0) = pool.points.row(detail::sample_cumulative(pool.weights, unit(rng)));
  Vector min_d2(n);
  for (Index i = 0; i < n; ++i) {
    min_d2(i) = (pool.points.row(i) - centers.row(0)).squaredNorm();
  }
  for (int k = 1; k < m; ++k) {
    const Vector mass = pool.weights.cwiseProduct(min_d2);
    const Index pick = detail::sample_cumulative(mass, unit(rng));
    centers.row(k) = pool.points.row(pick);
    for (Index i = 0; i < n; ++i) {
      const double d2 = (pool.points.row(i) - centers.row(k)).squaredNorm();
      if (d2 < min_d2(i)) min_d2(i) = d2;
    }
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  double prev_sse = std::numeric_limits<double>::infinity();
  for (int round = 0; round < 100; ++round) {
    double sse = 0.0;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d2 = (pool.points.row(i) - centers.row(0)).squaredNorm();
      for (int k = 1; k < m; ++k) {
        const double d2 = (pool.points.row(i) - centers.row(k)).squaredNorm();
        if (d2 < best_d2) {  // ties keep the lowest index
          best_d2 = d2;
          best = k;
        }
      }
      assign[static_cast<std::size_t>(i)] = best;
      sse += pool.weights(i) * best_d2;
    }
    Matrix sums = Matrix::Zero(m, d);
    Vector mass = Vector::Zero(m);
    for (Index i = 0; i < n; ++i) {
      const int k = assign[static_cast<std::size_t>(i)];
      sums.row(k) += pool.weights(i) * pool.points.row(i);
      mass(k) += pool.weights(i);
    }
    for (int k = 0; k < m; ++k) {
      if (mass(k) > 0) centers.row(k) = sums.row(k) / mass(k);
    }
    if (prev_sse - sse <= 1e-9 * std::max(prev_sse, 1e-300)) break;
    prev_sse = sse;
  }
  return SupportSet{std::move(centers)};
}

// Interpret a raster as a measure on [0,1]^2: pixel (row, col) maps to
// (col/(width-1), row/(height-1)), degenerate axes map to 0.
inline DiscreteMeasure image_to_measure(const GridImage& img, bool drop_zeros) {
  if (img.width <= 0 || img.height <= 0 ||
      img.intensities.size() != static_cast<Index>(img.width) * img.height) {
    throw std::invalid_argument("image_to_measure: inconsistent raster");
  }
  if ((img.intensities.array() < 0).any()) {
    throw std::invalid_argument("image_to_measure: negative intensity");
  }
  const double total = img.intensities.sum();
  if (!(total > 0)) {
    throw std::invalid_argument("image_to_measure: all-zero image");
  }
  std::vector<Index> keep;
  keep.reserve(static_cast<std::size_t>(img.intensities.size()));
  for (Index p = 0; p < img.intensities.size(); ++p) {
    if (!drop_zeros || img.intensities(p) > 0) keep.push_back(p);
  }
  DiscreteMeasure out;
  out.points.resize(static_cast<Index>(keep.size()), 2);
  out.weights.resize(static_cast<Index>(keep.size()));
  for (Index r = 0; r < static_cast<Index>(keep.size()); ++r) {
    const Index p = keep[static_cast<std::size_t>(r)];
    const Index row = p / img.width;
    const Index col = p % img.width;
    out.points(r, 0) = img.width == 1 ? 0.0 : double(col) / (img.width - 1);
    out.points(r, 1) = img.height == 1 ? 0.0 : double(row) / (img.height - 1);
    out.weights(r) = img.intensities(p) / total;
  }
  return out;
}

}  // namespace wbary
