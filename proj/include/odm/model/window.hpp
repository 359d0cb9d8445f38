#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "odm/model/morphology.hpp"
#include "odm/numerics/tensor.hpp"

namespace odm::model {

/// A slice of at most T_w consecutive steps of one episode. Short windows are
/// left-padded: padded slots come first and have valid == 0.
struct TrajectoryWindow {
  std::string task;
  std::size_t length = 0;
  nn::Tensor o_pro;    // length x (K*n), full joint layout
  nn::Tensor o_ext;    // length x x
  nn::Tensor actions;  // length x n_a, compact
  std::vector<double> rewards;
  std::vector<std::size_t> timesteps;
  std::vector<std::uint8_t> valid;
  bool episode_start = false;  // first valid slot is t = 0

  std::size_t first_valid() const {
    for (std::size_t k = 0; k < length; ++k)
      if (valid[k]) return k;
    return length;
  }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v;
    return n;
  }

  static TrajectoryWindow empty(const MorphologySpec& spec, std::size_t length) {
    TrajectoryWindow w;
    w.task = spec.name;
    w.length = length;
    w.o_pro = nn::Tensor::matrix(length, spec.joints * spec.obs_per_joint);
    w.o_ext = nn::Tensor::matrix(length, spec.ext_dim);
    w.actions = nn::Tensor::matrix(length, spec.action_dim());
    w.rewards.assign(length, 0.0);
    w.timesteps.assign(length, 0);
    w.valid.assign(length, 0);
    return w;
  }

  void check(const MorphologySpec& spec) const {
    auto bad = [&](const std::string& what) {
      throw std::invalid_argument("TrajectoryWindow for '" + task + "': " + what);
    };
    if (task != spec.name) bad("task does not match spec '" + spec.name + "'");
    if (o_pro.rows() != length || o_pro.cols() != spec.joints * spec.obs_per_joint) bad("o_pro shape");
    if (o_ext.rows() != length || o_ext.cols() != spec.ext_dim) bad("o_ext shape");
    if (actions.rows() != length || actions.cols() != spec.action_dim()) bad("action shape");
    if (timesteps.size() != length || valid.size() != length || rewards.size() != length) bad("slot metadata");
    if (first_valid() == length) bad("no valid step");
    for (std::size_t k = first_valid(); k < length; ++k)
      if (!valid[k]) bad("padding must precede every valid step");
  }
};

/// Several equal-length windows of one task stacked slot-major:
/// row r = window * length + slot.
struct WindowBatch {
  std::string task;
  std::size_t windows = 0;
  std::size_t length = 0;
  nn::Tensor o_pro;
  nn::Tensor o_ext;
  nn::Tensor actions;
  std::vector<double> rewards;
  std::vector<std::size_t> timesteps;
  std::vector<std::uint8_t> valid;
  std::vector<std::uint8_t> episode_start;

  std::size_t rows() const { return windows * length; }

  std::size_t first_valid(std::size_t w) const {
    for (std::size_t k = 0; k < length; ++k)
      if (valid[w * length + k]) return k;
    return length;
  }
};

inline WindowBatch collate(std::span<const TrajectoryWindow> windows) {
  if (windows.empty()) throw std::invalid_argument("collate: empty window list");
  WindowBatch b;
  b.task = windows[0].task;
  b.windows = windows.size();
  b.length = windows[0].length;
  const std::size_t rows = b.windows * b.length;
  b.o_pro = nn::Tensor::matrix(rows, windows[0].o_pro.cols());
  b.o_ext = nn::Tensor::matrix(rows, windows[0].o_ext.cols());
  b.actions = nn::Tensor::matrix(rows, windows[0].actions.cols());
  std::size_t r0 = 0;
  for (const auto& w : windows) {
    if (w.task != b.task || w.length != b.length || w.o_pro.cols() != b.o_pro.cols() ||
        w.o_ext.cols() != b.o_ext.cols() || w.actions.cols() != b.actions.cols())
      throw std::invalid_argument("collate: windows differ in task or shape");
    std::copy(w.o_pro.values().begin(), w.o_pro.values().end(), b.o_pro.data() + r0 * b.o_pro.cols());
    std::copy(w.o_ext.values().begin(), w.o_ext.values().end(), b.o_ext.data() + r0 * b.o_ext.cols());
    std::copy(w.actions.values().begin(), w.actions.values().end(), b.actions.data() + r0 * b.actions.cols());
    b.rewards.insert(b.rewards.end(), w.rewards.begin(), w.rewards.end());
    b.timesteps.insert(b.timesteps.end(), w.timesteps.begin(), w.timesteps.end());
    b.valid.insert(b.valid.end(), w.valid.begin(), w.valid.end());
    b.episode_start.push_back(w.episode_start);
    r0 += b.length;
  }
  return b;
}

inline WindowBatch collate(const TrajectoryWindow& window) {
  return collate(std::span<const TrajectoryWindow>(&window, 1));
}

}  // namespace odm::model
