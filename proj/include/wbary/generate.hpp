#pragma once

#include "wbary/measures.hpp"

namespace wbary {

// Synthetic instance family used by the benchmark harness: atoms drawn
// i.i.d. standard normal, weights uniform on (0,1) and normalized.
inline DiscreteMeasure gaussian_measure(int m_t, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DiscreteMeasure q;
  q.points.resize(m_t, d);
  for (Index i = 0; i < q.points.rows(); ++i) {
    for (Index k = 0; k < d; ++k) q.points(i, k) = gauss(rng);
  }
  Vector raw(m_t);
  for (Index i = 0; i < raw.size(); ++i) raw(i) = unit(rng);
  q.weights = normalize_weights(raw);
  return q;
}

inline BarycenterProblem gaussian_problem(int N, const std::vector<int>& sizes,
                                          int d, std::uint64_t seed) {
  BarycenterProblem p;
  for (int t = 0; t < N; ++t) {
    p.measures.push_back(gaussian_measure(sizes[static_cast<std::size_t>(t)], d,
                                          seed * 1000003ULL + static_cast<std::uint64_t>(t)));
  }
  return p;
}

inline BarycenterProblem gaussian_problem(int N, int m_t, int d, std::uint64_t seed) {
  return gaussian_problem(N, std::vector<int>(static_cast<std::size_t>(N), m_t), d, seed);
}

}  // namespace wbary
