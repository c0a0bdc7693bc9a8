#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eatcl/errors.hpp"
#include "eatcl/matrix.hpp"
#include "eatcl/rng.hpp"

namespace eatcl {

/// Labelled sample set. `classes` is the sorted set of distinct labels.
struct Dataset {
  Matrix x;
  std::vector<int> y;
  std::vector<int> classes;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t dim() const noexcept { return x.cols(); }
  bool empty() const noexcept { return y.empty(); }

  void refresh_classes() {
    std::set<int> s(y.begin(), y.end());
    classes.assign(s.begin(), s.end());
  }

  void validate() const {
    if (x.rows() != y.size())
      throw DimensionError("dataset: " + std::to_string(x.rows()) + " rows but " +
                           std::to_string(y.size()) + " labels");
    for (int label : y)
      if (!std::binary_search(classes.begin(), classes.end(), label))
        throw ArgumentError("dataset: label " + std::to_string(label) + " not in class list");
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline Dataset make_dataset(Matrix x, std::vector<int> y) {
  Dataset d{std::move(x), std::move(y), {}};
  d.refresh_classes();
  d.validate();
  return d;
}

inline Dataset subset(const Dataset& d, std::span<const std::size_t> rows) {
  std::vector<int> y;
  y.reserve(rows.size());
  for (std::size_t r : rows) y.push_back(d.y.at(r));
  return make_dataset(gather_rows(d.x, rows), std::move(y));
}

inline Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  std::vector<int> y = a.y;
  y.insert(y.end(), b.y.begin(), b.y.end());
  return make_dataset(vstack(a.x, b.x), std::move(y));
}

/// One step of a class-incremental stream.
struct Task {
  std::size_t index = 0;  // 0-based time step
  Dataset data;
  std::vector<int> class_set;
};

/// Ordered tasks with pairwise-disjoint class sets.
struct TaskStream {
  std::vector<Task> tasks;

  std::size_t size() const noexcept { return tasks.size(); }

  std::vector<int> all_classes() const {
    std::set<int> s;
    for (const auto& t : tasks) s.insert(t.class_set.begin(), t.class_set.end());
    return {s.begin(), s.end()};
  }

  std::size_t num_classes() const {
    const auto c = all_classes();
    return c.empty() ? 0 : static_cast<std::size_t>(c.back()) + 1;
  }

  std::size_t dim() const { return tasks.empty() ? 0 : tasks.front().data.dim(); }

  Dataset joined() const {
    Dataset d;
    for (const auto& t : tasks) d = concat(d, t.data);
    return d;
  }

  void validate() const {
    std::set<int> seen;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const Task& t = tasks[i];
      t.data.validate();
      if (t.index != i) throw ArgumentError("task stream: task indices must be 0..N-1 in order");
      if (i > 0 && t.data.dim() != tasks[0].data.dim())
        throw DimensionError("task stream: tasks disagree on feature dimension");
      for (int c : t.data.classes)
        if (!std::binary_search(t.class_set.begin(), t.class_set.end(), c))
          throw ArgumentError("task stream: task " + std::to_string(i) + " holds class " +
                              std::to_string(c) + " outside its class set");
      for (int c : t.class_set)
        if (!seen.insert(c).second)
          throw ArgumentError("task stream: class " + std::to_string(c) +
                              " appears in more than one task");
    }
  }
};

// ---------------------------------------------------------------------------
// Generators

/// Two interleaving half-moons. Class 0 lies on the upper arc centred at the
/// origin, class 1 on the lower arc centred at (x_offset, y_offset). The whole
/// picture, jitter included, is then rotated about the origin.
struct CrescentGeometry {
  double radius = 1.0;
  double x_offset = 1.0;
  double y_offset = 0.5;
  double rotation_deg = 0.0;
  friend bool operator==(const CrescentGeometry&, const CrescentGeometry&) = default;
};

inline Dataset gen_crescent(std::size_t n_per_class, double noise, std::uint64_t seed,
                            const CrescentGeometry& geo = {}) {
  if (n_per_class == 0) throw ArgumentError("gen_crescent: n_per_class must be >= 1");
  if (!(noise >= 0.0)) throw ArgumentError("gen_crescent: noise must be >= 0");
  Rng rng(seed);
  Matrix x(2 * n_per_class, 2);
  std::vector<int> y(2 * n_per_class);
  for (std::size_t i = 0; i < n_per_class; ++i) {
    const double t = std::numbers::pi * rng.uniform01();
    x(i, 0) = geo.radius * std::cos(t);
    x(i, 1) = geo.radius * std::sin(t);
    y[i] = 0;
  }
  for (std::size_t i = 0; i < n_per_class; ++i) {
    const double t = std::numbers::pi * rng.uniform01();
    const std::size_t r = n_per_class + i;
    x(r, 0) = geo.x_offset - geo.radius * std::cos(t);
    x(r, 1) = geo.y_offset - geo.radius * std::sin(t);
    y[r] = 1;
  }
  if (noise > 0.0)
    for (double& v : x.values()) v += rng.normal(0.0, noise);
  if (geo.rotation_deg != 0.0) {
    const double th = geo.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double a = x(r, 0), b = x(r, 1);
      x(r, 0) = c * a - s * b;
      x(r, 1) = s * a + c * b;
    }
  }
  return make_dataset(std::move(x), std::move(y));
}

/// Keeps round(fraction·n_c) rows of each class c, chosen uniformly without
/// replacement. Classes missing from the map are kept whole. Row order of the
/// survivors is preserved.
inline Dataset imbalance_subsample(const Dataset& d, const std::map<int, double>& keep_fraction,
                                   std::uint64_t seed) {
  for (const auto& [c, f] : keep_fraction)
    if (!(f > 0.0 && f <= 1.0))
      throw ArgumentError("imbalance_subsample: fraction for class " + std::to_string(c) +
                          " must be in (0, 1]");
  Rng rng(seed);
  std::vector<std::size_t> keep;
  for (int c : d.classes) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d.y[i] == c) rows.push_back(i);
    const auto it = keep_fraction.find(c);
    const double f = it == keep_fraction.end() ? 1.0 : it->second;
    const auto n = static_cast<std::size_t>(std::llround(f * static_cast<double>(rows.size())));
    if (n == 0)
      throw ArgumentError("imbalance_subsample: class " + std::to_string(c) + " would be empty");
    rng.shuffle(rows);
    keep.insert(keep.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n));
  }
  std::sort(keep.begin(), keep.end());
  return subset(d, keep);
}

/// Tasks of `classes_per_task` consecutive class ids in ascending order.
inline TaskStream split_by_classes(const Dataset& d, std::size_t classes_per_task) {
  if (classes_per_task == 0 || d.classes.empty() || d.classes.size() % classes_per_task != 0)
    throw ArgumentError("split_by_classes: " + std::to_string(d.classes.size()) +
                        " classes not divisible into groups of " +
                        std::to_string(classes_per_task));
  TaskStream s;
  for (std::size_t t = 0; t * classes_per_task < d.classes.size(); ++t) {
    std::vector<int> cs(d.classes.begin() + static_cast<std::ptrdiff_t>(t * classes_per_task),
                        d.classes.begin() + static_cast<std::ptrdiff_t>((t + 1) * classes_per_task));
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (std::binary_search(cs.begin(), cs.end(), d.y[i])) rows.push_back(i);
    s.tasks.push_back(Task{t, subset(d, rows), cs});
  }
  s.validate();
  return s;
}

/// Isotropic Gaussian clusters, one per class, in the unit cube.
struct BlobSpec {
  std::size_t num_tasks = 5;
  std::size_t classes_per_task = 2;
  std::size_t dim = 16;
  std::size_t n_per_class = 500;
  double separation = 0.5;  // minimum pairwise centre distance
  double noise = 0.1;       // per-coordinate standard deviation
  double center_lo = 0.2;   // centres drawn from [center_lo, center_hi]^dim
  double center_hi = 0.8;
};

struct StreamPair {
  TaskStream train;
  TaskStream test;
};

inline Matrix blob_centers(const BlobSpec& spec, Rng& rng) {
  const std::size_t k = spec.num_tasks * spec.classes_per_task;
  constexpr int kMaxRetries = 10000;
  Matrix centers(k, spec.dim);
  for (std::size_t c = 0; c < k; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxRetries && !placed; ++attempt) {
      for (double& v : centers.row(c)) v = rng.uniform(spec.center_lo, spec.center_hi);
      placed = true;
      for (std::size_t o = 0; o < c && placed; ++o) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < spec.dim; ++j) {
          const double diff = centers(c, j) - centers(o, j);
          d2 += diff * diff;
        }
        placed = std::sqrt(d2) >= spec.separation;
      }
    }
    if (!placed)
      throw GenerationError("gen_blob_stream: could not place centre " + std::to_string(c) +
                            " at separation " + std::to_string(spec.separation));
  }
  return centers;
}

/// Training and test streams drawn from the same cluster centres. Features
/// are clamped into [0, 1].
inline StreamPair gen_blob_streams(const BlobSpec& spec, std::size_t n_test_per_class,
                                   std::uint64_t seed) {
  if (spec.num_tasks == 0 || spec.classes_per_task == 0 || spec.dim == 0 || spec.n_per_class == 0)
    throw ArgumentError("gen_blob_stream: all counts must be >= 1");
  if (!(spec.noise >= 0.0)) throw ArgumentError("gen_blob_stream: noise must be >= 0");
  Rng rng(seed);
  const Matrix centers = blob_centers(spec, rng);
  const std::size_t k = centers.rows();
  auto draw = [&](std::size_t per_class) {
    Matrix x(k * per_class, spec.dim);
    std::vector<int> y(k * per_class);
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t i = 0; i < per_class; ++i) {
        const std::size_t r = c * per_class + i;
        y[r] = static_cast<int>(c);
        for (std::size_t j = 0; j < spec.dim; ++j)
          x(r, j) = std::clamp(rng.normal(centers(c, j), spec.noise), 0.0, 1.0);
      }
    return make_dataset(std::move(x), std::move(y));
  };
  StreamPair out;
  out.train = split_by_classes(draw(spec.n_per_class), spec.classes_per_task);
  if (n_test_per_class > 0) out.test = split_by_classes(draw(n_test_per_class), spec.classes_per_task);
  return out;
}

inline TaskStream gen_blob_stream(const BlobSpec& spec, std::uint64_t seed) {
  return gen_blob_streams(spec, 0, seed).train;
}

// ---------------------------------------------------------------------------
// CSV: one sample per line, `f1,...,fd,label`. An optional header line is
// recognised by a non-numeric first field.

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_fields(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline Dataset parse_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  std::vector<double> values;
  std::vector<int> labels;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto fields = detail::split_fields(t);
    double probe = 0.0;
    if (first_content && !detail::parse_double(fields.front(), probe)) {
      first_content = false;  // header
      continue;
    }
    first_content = false;
    if (fields.size() < 2) throw ParseError("expected features followed by a label", lineno);
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw ParseError("ragged row: " + std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(width),
                       lineno);
    for (std::size_t j = 0; j + 1 < fields.size(); ++j) {
      double v = 0.0;
      if (!detail::parse_double(fields[j], v))
        throw ParseError("non-numeric feature '" + fields[j] + "'", lineno);
      values.push_back(v);
    }
    double lv = 0.0;
    if (!detail::parse_double(fields.back(), lv) || lv != std::floor(lv) || lv < 0 ||
        lv > std::numeric_limits<int>::max())
      throw ParseError("missing or invalid label '" + fields.back() + "'", lineno);
    labels.push_back(static_cast<int>(lv));
  }
  if (labels.empty()) throw ParseError("no data rows", lineno == 0 ? 1 : lineno);
  const std::size_t n = labels.size();
  return make_dataset(Matrix(n, width - 1, std::move(values)), std::move(labels));
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  return parse_csv(in);
}

inline void write_csv(std::ostream& out, const Dataset& d) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.dim(); ++j) out << detail::format_double(d.x(i, j)) << ',';
    out << d.y[i] << '\n';
  }
}

inline void save_csv(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_csv(out, d);
}

}  // namespace eatcl
