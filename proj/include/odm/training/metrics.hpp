#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace odm::training {

/// One line of a run's metrics stream. Unused fields stay NaN and are
/// written as empty cells.
struct MetricsRow {
  std::string phase;      // pretrain | finetune | eval
  std::string course;     // task of the course or finetune target
  std::size_t iteration = 0;
  double loss_total = NAN;
  double loss_imitation = NAN;
  double loss_prediction = NAN;
  double loss_actor = NAN;
  double loss_critic = NAN;
  double val_mse = NAN;
  double mean_return = NAN;
  double return_std = NAN;
  double mean_length = NAN;
  double length_std = NAN;
  double wall_seconds = NAN;
  std::uint64_t seed = 0;
};

using MetricsSink = std::function<void(const MetricsRow&)>;

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{
      "phase",       "course",     "iteration",   "loss_total",  "loss_imitation", "loss_prediction",
      "loss_actor",  "loss_critic", "val_mse",    "mean_return", "return_std",     "mean_length",
      "length_std",  "wall_seconds", "seed"};
  return cols;
}

inline std::string metrics_header() {
  std::string h;
  for (const auto& c : metrics_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

inline std::string format_cell(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string metrics_line(const MetricsRow& r) {
  std::string s = r.phase + "," + r.course + "," + std::to_string(r.iteration);
  for (double v : {r.loss_total, r.loss_imitation, r.loss_prediction, r.loss_actor, r.loss_critic, r.val_mse,
                   r.mean_return, r.return_std, r.mean_length, r.length_std, r.wall_seconds})
    s += "," + format_cell(v);
  s += "," + std::to_string(r.seed);
  return s;
}

/// "mean±std" with two decimals.
inline std::string format_mean_std(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", mean, sd);
  return buf;
}

}  // namespace odm::training
