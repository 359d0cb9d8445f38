#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace odm::model {

/// Body-shape description shared by every task: K joints carrying n
/// proprioceptive values and m actuated DoF each, plus x exteroceptive
/// values. Masks flag which per-joint slots exist (true = present).
struct MorphologySpec {
  std::string name;
  std::size_t joints = 0;         // K
  std::size_t obs_per_joint = 0;  // n
  std::size_t dof_per_joint = 0;  // m
  std::size_t ext_dim = 0;        // x
  std::vector<std::uint8_t> state_mask;   // K*n
  std::vector<std::uint8_t> action_mask;  // K*m

  static MorphologySpec dense(std::string name, std::size_t k, std::size_t n, std::size_t m,
                              std::size_t x) {
    MorphologySpec s{std::move(name), k, n, m, x,
                     std::vector<std::uint8_t>(k * n, 1), std::vector<std::uint8_t>(k * m, 1)};
    return s;
  }

  std::size_t masked_state_slots() const {
    return static_cast<std::size_t>(std::count(state_mask.begin(), state_mask.end(), 0));
  }
  std::size_t masked_action_slots() const {
    return static_cast<std::size_t>(std::count(action_mask.begin(), action_mask.end(), 0));
  }

  /// n_s = K*n - #masked + x
  std::size_t state_dim() const { return joints * obs_per_joint - masked_state_slots() + ext_dim; }
  /// n_a = K*m - #masked
  std::size_t action_dim() const { return joints * dof_per_joint - masked_action_slots(); }

  bool joint_has_state(std::size_t k) const {
    for (std::size_t j = 0; j < obs_per_joint; ++j)
      if (state_mask[k * obs_per_joint + j]) return true;
    return false;
  }
  bool joint_has_action(std::size_t k) const {
    for (std::size_t j = 0; j < dof_per_joint; ++j)
      if (action_mask[k * dof_per_joint + j]) return true;
    return false;
  }
  std::vector<bool> state_joint_mask() const {
    std::vector<bool> out(joints);
    for (std::size_t k = 0; k < joints; ++k) out[k] = joint_has_state(k);
    return out;
  }
  std::vector<bool> action_joint_mask() const {
    std::vector<bool> out(joints);
    for (std::size_t k = 0; k < joints; ++k) out[k] = joint_has_action(k);
    return out;
  }

  void validate() const {
    if (joints == 0) throw std::invalid_argument("MorphologySpec '" + name + "': K must be >= 1");
    if (obs_per_joint == 0 || dof_per_joint == 0)
      throw std::invalid_argument("MorphologySpec '" + name + "': n and m must be >= 1");
    if (state_mask.size() != joints * obs_per_joint || action_mask.size() != joints * dof_per_joint)
      throw std::invalid_argument("MorphologySpec '" + name + "': mask size mismatch");
    if (action_dim() == 0) throw std::invalid_argument("MorphologySpec '" + name + "': no actuated slots");
  }

  /// Compact state vector: present proprioceptive slots (row-major) then o_ext.
  std::vector<double> compact_state(std::span<const double> o_pro, std::span<const double> o_ext) const {
    std::vector<double> out;
    out.reserve(state_dim());
    for (std::size_t i = 0; i < state_mask.size(); ++i)
      if (state_mask[i]) out.push_back(o_pro[i]);
    out.insert(out.end(), o_ext.begin(), o_ext.end());
    return out;
  }

  /// Scatters a compact n_a action into the K*m layout, zeros in masked slots.
  std::vector<double> expand_action(std::span<const double> compact) const {
    if (compact.size() != action_dim())
      throw std::invalid_argument("expand_action: expected " + std::to_string(action_dim()) +
                                  " values, got " + std::to_string(compact.size()));
    std::vector<double> out(action_mask.size(), 0.0);
    std::size_t c = 0;
    for (std::size_t i = 0; i < action_mask.size(); ++i)
      if (action_mask[i]) out[i] = compact[c++];
    return out;
  }

  friend bool operator==(const MorphologySpec&, const MorphologySpec&) = default;
};

/// Masks `count` slots round-robin from the last joint backwards, taking
/// the trailing slot of each joint first.
inline std::vector<std::uint8_t> tail_mask(std::size_t k, std::size_t per_joint, std::size_t count) {
  if (count > k * per_joint) throw std::invalid_argument("tail_mask: too many masked slots");
  std::vector<std::uint8_t> mask(k * per_joint, 1);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t joint = k - 1 - (i % k);
    const std::size_t slot = per_joint - 1 - (i / k);
    mask[joint * per_joint + slot] = 0;
  }
  return mask;
}

/// A published morphology row: the spec we register plus the n_s / n_a
/// values printed alongside it.
struct PublishedMorphology {
  MorphologySpec spec;
  std::size_t printed_state_dim;
  std::size_t printed_action_dim;
};

/// Benchmark body shapes. Masked-slot placement is not published; tail_mask
/// is used so that only the counts matter.
inline std::vector<PublishedMorphology> published_morphologies() {
  auto masked = [](std::string name, std::size_t k, std::size_t n, std::size_t m, std::size_t x,
                   std::size_t ms, std::size_t ma) {
    return MorphologySpec{std::move(name), k, n, m, x, tail_mask(k, n, ms), tail_mask(k, m, ma)};
  };
  return {
      {MorphologySpec::dense("swimmer", 2, 2, 1, 4), 8, 2},
      {MorphologySpec::dense("reacher", 2, 3, 1, 5), 11, 2},
      {MorphologySpec::dense("hopper", 3, 2, 1, 5), 11, 3},
      {MorphologySpec::dense("halfCheetah", 6, 2, 1, 5), 17, 6},
      {MorphologySpec::dense("walker2D", 6, 2, 1, 5), 17, 3},
      {MorphologySpec::dense("ant", 8, 2, 1, 95), 111, 8},
      {masked("humanoid", 9, 6, 3, 342, 20, 10), 376, 17},
      {masked("walker", 16, 15, 4, 18, 45, 25), 243, 39},
  };
}

inline MorphologySpec published_morphology(const std::string& name) {
  for (auto& p : published_morphologies())
    if (p.spec.name == name) return p.spec;
  throw std::invalid_argument("unknown morphology '" + name + "'");
}

}  // namespace odm::model
