#pragma once

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "wbary/lp_model.hpp"

namespace wbary {

using json = nlohmann::json;

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << data;
}

inline json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty()) {
    throw std::runtime_error("expected a non-empty array of point rows");
  }
  const Index r = static_cast<Index>(rows.size());
  const Index c = static_cast<Index>(rows.front().size());
  Matrix M(r, c);
  for (Index i = 0; i < r; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (static_cast<Index>(row.size()) != c) {
      throw std::runtime_error("ragged point rows");
    }
    for (Index j = 0; j < c; ++j) M(i, j) = row[static_cast<std::size_t>(j)].get<double>();
  }
  return M;
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Vector vector_from_json(const json& arr) {
  Vector v(static_cast<Index>(arr.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = arr[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace detail

inline DiscreteMeasure measure_from_json(const json& j) {
  DiscreteMeasure q;
  q.points = detail::matrix_from_json(j.at("points"));
  q.weights = detail::vector_from_json(j.at("weights"));
  validate_measure(q);
  return q;
}

inline json measure_to_json(const DiscreteMeasure& q) {
  return json{{"points", detail::matrix_to_json(q.points)},
              {"weights", detail::vector_to_json(q.weights)}};
}

inline DiscreteMeasure read_measure_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error(path + ": ragged csv row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().size() < 2) {
    throw std::runtime_error(path + ": need coordinate columns plus a weight column");
  }
  const Index d = static_cast<Index>(rows.front().size()) - 1;
  DiscreteMeasure q;
  q.points.resize(static_cast<Index>(rows.size()), d);
  q.weights.resize(static_cast<Index>(rows.size()));
  for (Index i = 0; i < q.points.rows(); ++i) {
    for (Index k = 0; k < d; ++k) q.points(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    q.weights(i) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
  }
  validate_measure(q);
  return q;
}

inline DiscreteMeasure read_measure(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
    return read_measure_csv(path);
  }
  return measure_from_json(json::parse(detail::read_file(path)));
}

inline void write_measure(const std::string& path, const DiscreteMeasure& q) {
  detail::write_file(path, measure_to_json(q).dump(2) + "\n");
}

inline json solution_to_json(const BarycenterSolution& sol, double seconds,
                             const std::string& solver) {
  json j{{"solver", solver},
         {"w", detail::vector_to_json(sol.w)},
         {"X", detail::matrix_to_json(sol.support)},
         {"objective", sol.objective},
         {"feasibility_error", sol.feasibility_error},
         {"iterations", sol.iterations},
         {"time", seconds},
         {"converged", sol.converged}};
  if (std::isfinite(sol.gap)) j["gap"] = sol.gap;
  return j;
}

inline void write_solution(const std::string& path, const BarycenterSolution& sol,
                           double seconds, const std::string& solver) {
  detail::write_file(path, solution_to_json(sol, seconds, solver).dump(2) + "\n");
}

inline BarycenterSolution read_solution(const std::string& path) {
  const json j = json::parse(detail::read_file(path));
  BarycenterSolution sol;
  sol.w = detail::vector_from_json(j.at("w"));
  sol.support = detail::matrix_from_json(j.at("X"));
  sol.objective = j.at("objective").get<double>();
  sol.feasibility_error = j.at("feasibility_error").get<double>();
  sol.iterations = j.value("iterations", 0);
  sol.gap = j.value("gap", std::numeric_limits<double>::quiet_NaN());
  sol.converged = j.value("converged", false);
  return sol;
}

inline void write_plans(const std::string& path, const std::vector<Matrix>& plans) {
  json arr = json::array();
  for (const auto& P : plans) arr.push_back(detail::matrix_to_json(P));
  detail::write_file(path, json{{"plans", std::move(arr)}}.dump() + "\n");
}

inline std::vector<Matrix> read_plans(const std::string& path) {
  const json j = json::parse(detail::read_file(path));
  std::vector<Matrix> plans;
  for (const auto& P : j.at("plans")) plans.push_back(detail::matrix_from_json(P));
  return plans;
}

// IDX image container (big-endian magic 0x00000803, then count/rows/cols and
// raw unsigned bytes per image).
inline std::vector<GridImage> read_idx_images(const std::string& path) {
  const std::string raw = detail::read_file(path);
  auto be32 = [&](std::size_t at) -> std::uint32_t {
    if (at + 4 > raw.size()) throw std::runtime_error(path + ": truncated idx header");
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(raw[at])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(raw[at + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(raw[at + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(raw[at + 3]));
  };
  if (be32(0) != 0x00000803u) {
    throw std::runtime_error(path + ": not an idx image file");
  }
  const std::uint32_t count = be32(4);
  const std::uint32_t rows = be32(8);
  const std::uint32_t cols = be32(12);
  const std::size_t need = 16 + static_cast<std::size_t>(count) * rows * cols;
  if (raw.size() < need) throw std::runtime_error(path + ": truncated idx data");
  std::vector<GridImage> images;
  images.reserve(count);
  std::size_t at = 16;
  for (std::uint32_t k = 0; k < count; ++k) {
    GridImage img;
    img.width = static_cast<int>(cols);
    img.height = static_cast<int>(rows);
    img.intensities.resize(static_cast<Index>(rows) * cols);
    for (Index p = 0; p < img.intensities.size(); ++p, ++at) {
      img.intensities(p) = static_cast<double>(static_cast<unsigned char>(raw[at]));
    }
    images.push_back(std::move(img));
  }
  return images;
}

inline void write_idx_images(const std::string& path,
                             const std::vector<GridImage>& images) {
  if (images.empty()) throw std::invalid_argument("write_idx_images: no images");
  const int rows = images.front().height;
  const int cols = images.front().width;
  std::string raw;
  auto push32 = [&](std::uint32_t v) {
    raw.push_back(static_cast<char>((v >> 24) & 0xff));
    raw.push_back(static_cast<char>((v >> 16) & 0xff));
    raw.push_back(static_cast<char>((v >> 8) & 0xff));
    raw.push_back(static_cast<char>(v & 0xff));
  };
  push32(0x00000803u);
  push32(static_cast<std::uint32_t>(images.size()));
  push32(static_cast<std::uint32_t>(rows));
  push32(static_cast<std::uint32_t>(cols));
  for (const auto& img : images) {
    if (img.height != rows || img.width != cols) {
      throw std::invalid_argument("write_idx_images: mixed image sizes");
    }
    for (Index p = 0; p < img.intensities.size(); ++p) {
      const double v = std::clamp(img.intensities(p), 0.0, 255.0);
      raw.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v))));
    }
  }
  detail::write_file(path, raw);
}

// Accumulates atom weights into their nearest cell of a WxH grid over
// [0,1]^2 and scales so that the heaviest cell is 255.
inline std::vector<unsigned char> render_cells(const Matrix& points,
                                               const Vector& weights, int W,
                                               int H) {
  if (points.cols() != 2) {
    throw std::invalid_argument("render: support must be two-dimensional");
  }
  if (W < 1 || H < 1) throw std::invalid_argument("render: empty grid");
  std::vector<double> acc(static_cast<std::size_t>(W) * H, 0.0);
  for (Index i = 0; i < points.rows(); ++i) {
    const auto nearest = [](double v, int n) {
      if (n == 1) return 0L;
      return std::clamp(std::lround(v * (n - 1)), 0L, static_cast<long>(n - 1));
    };
    const long col = nearest(points(i, 0), W);
    const long row = nearest(points(i, 1), H);
    acc[static_cast<std::size_t>(row) * W + col] += weights(i);
  }
  const double peak = *std::max_element(acc.begin(), acc.end());
  std::vector<unsigned char> out(acc.size(), 0);
  if (peak > 0) {
    for (std::size_t p = 0; p < acc.size(); ++p) {
      out[p] = static_cast<unsigned char>(std::lround(255.0 * acc[p] / peak));
    }
  }
  return out;
}

inline void write_pgm(const std::string& path, int W, int H,
                      const std::vector<unsigned char>& pixels) {
  if (pixels.size() != static_cast<std::size_t>(W) * H) {
    throw std::invalid_argument("write_pgm: pixel count mismatch");
  }
  std::string data = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  data.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  detail::write_file(path, data);
}

struct PgmImage {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> pixels;
};

inline PgmImage read_pgm(const std::string& path) {
  const std::string raw = detail::read_file(path);
  std::istringstream head(raw);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  head >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || w < 1 || h < 1) {
    throw std::runtime_error(path + ": unsupported pgm");
  }
  head.get();  // single whitespace after maxval
  const std::size_t offset = static_cast<std::size_t>(head.tellg());
  const std::size_t need = static_cast<std::size_t>(w) * h;
  if (raw.size() < offset + need) throw std::runtime_error(path + ": truncated pgm");
  PgmImage img;
  img.width = w;
  img.height = h;
  img.pixels.assign(raw.begin() + static_cast<std::ptrdiff_t>(offset),
                    raw.begin() + static_cast<std::ptrdiff_t>(offset + need));
  return img;
}

}  // namespace wbary
