#pragma once

#include <algorithm>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <vector>

#include "eatcl/attacks.hpp"
#include "eatcl/data.hpp"
#include "eatcl/errors.hpp"
#include "eatcl/mlp.hpp"
#include "eatcl/rng.hpp"

namespace eatcl {

/// Snapshot taken after a task completes. Percentages in [0, 100].
struct MetricsRecord {
  std::size_t step = 0;  // 1-based: number of tasks seen
  std::vector<double> per_task_accuracy;
  std::vector<double> per_task_robustness;
  double mean_accuracy = 0.0;
  double mean_robustness = 0.0;
  std::optional<double> prev_task_rate;
};

inline double percent_correct(std::span<const int> pred, std::span<const int> truth) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(pred.size());
}

inline double clean_accuracy(const MLPModel& model, const Dataset& test) {
  if (test.empty()) throw ArgumentError("clean_accuracy: empty test set");
  return percent_correct(predict(model, test.x), test.y);
}

/// Accuracy on white-box adversarial versions of `test` generated against `model`.
inline double robustness(const MLPModel& model, const Dataset& test, const AttackConfig& cfg,
                         Rng& rng) {
  if (test.empty()) throw ArgumentError("robustness: empty test set");
  const Matrix adv = attack(model, test.x, test.y, cfg, rng);
  return percent_correct(predict(model, adv), test.y);
}

/// Percentage of adversarial examples the model assigns to a class of a
/// previous task. `seen_class_sets` lists the class sets of every task seen so
/// far, the current task included.
inline double prev_task_rate(const MLPModel& model, const Task& current_task, const Dataset& ae,
                             std::span<const std::vector<int>> seen_class_sets) {
  if (ae.empty()) throw ArgumentError("prev_task_rate: no adversarial examples");
  std::set<int> previous;
  for (const auto& cs : seen_class_sets)
    if (cs != current_task.class_set) previous.insert(cs.begin(), cs.end());
  if (previous.empty()) return 0.0;
  std::size_t hits = 0;
  for (int p : predict(model, ae.x)) hits += previous.contains(p);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ae.size());
}

struct GridPoint {
  double x = 0.0;
  double y = 0.0;
  int predicted = 0;
};

/// resolution x resolution lattice over inclusive bounds; row-major with y as
/// the outer index.
inline std::vector<GridPoint> boundary_grid(const MLPModel& model, std::pair<double, double> x_range,
                                            std::pair<double, double> y_range,
                                            std::size_t resolution) {
  if (model.input_dim() != 2)
    throw ArgumentError("boundary_grid: model input dimension is " +
                        std::to_string(model.input_dim()) + ", need 2");
  if (resolution < 2) throw ArgumentError("boundary_grid: resolution must be >= 2");
  const double dx = (x_range.second - x_range.first) / static_cast<double>(resolution - 1);
  const double dy = (y_range.second - y_range.first) / static_cast<double>(resolution - 1);
  Matrix pts(resolution * resolution, 2);
  for (std::size_t r = 0; r < resolution; ++r)
    for (std::size_t c = 0; c < resolution; ++c) {
      // Endpoints are assigned directly so the bounds are hit exactly.
      pts(r * resolution + c, 0) = c + 1 == resolution ? x_range.second : x_range.first + dx * c;
      pts(r * resolution + c, 1) = r + 1 == resolution ? y_range.second : y_range.first + dy * r;
    }
  const auto pred = predict(model, pts);
  std::vector<GridPoint> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = {pts(i, 0), pts(i, 1), pred[i]};
  return out;
}

inline void write_grid_csv(std::ostream& out, std::span<const GridPoint> grid) {
  out << "x,y,class\n";
  for (const auto& g : grid)
    out << detail::format_double(g.x) << ',' << detail::format_double(g.y) << ',' << g.predicted
        << '\n';
}

inline std::size_t count_class(std::span<const GridPoint> grid, int cls) {
  return static_cast<std::size_t>(
      std::count_if(grid.begin(), grid.end(), [&](const GridPoint& g) { return g.predicted == cls; }));
}

}  // namespace eatcl
