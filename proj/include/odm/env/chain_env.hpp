#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <regex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "odm/model/morphology.hpp"

namespace odm::env {

enum class Terrain { flat, variable, obstacle };

inline std::string terrain_name(Terrain t) {
  switch (t) {
    case Terrain::flat: return "flat";
    case Terrain::variable: return "vt";
    case Terrain::obstacle: return "obs";
  }
  return "flat";
}

inline Terrain parse_terrain(const std::string& s) {
  if (s == "flat" || s.empty()) return Terrain::flat;
  if (s == "vt" || s == "variable") return Terrain::variable;
  if (s == "obs" || s == "obstacle") return Terrain::obstacle;
  throw std::invalid_argument("unknown terrain '" + s + "' (expected flat, vt or obs)");
}

struct TerrainParams {
  double vt_period = 2.0;       // length of one drag cycle on variable terrain
  double wall_start = 1.0;      // obstacle band [wall_start, wall_start + wall_width]
  double wall_width = 0.5;
  double wall_drag = 10.0;
};

struct ChainEnvConfig {
  std::size_t joints = 3;
  double link_length = 1.0;
  double damping = 1.0;
  double joint_limit = 1.0;  // rad; inelastic stop, >= pi means free rotation
  double torque_limit = 1.0;
  double thrust_gain = 2.0;
  double head_drag = 1.0;
  double lateral_gain = 0.1;
  double control_cost = 0.001;
  double dt = 0.05;
  double init_noise = 0.05;
  double process_noise_std = 0.0;
  std::size_t max_steps = 1000;
  Terrain terrain = Terrain::flat;
  TerrainParams terrain_params;

  void validate() const {
    if (joints == 0) throw std::invalid_argument("ChainEnvConfig: joints must be >= 1");
    if (!(torque_limit > 0.0) || !(dt > 0.0) || damping < 0.0 || process_noise_std < 0.0 || !(joint_limit > 0.0))
      throw std::invalid_argument("ChainEnvConfig: invalid physical constants");
    if (max_steps == 0) throw std::invalid_argument("ChainEnvConfig: max_steps must be >= 1");
  }
};

/// Drag multiplier felt by the head at x.
inline double terrain_modifier(double x, Terrain terrain, const TerrainParams& p) {
  switch (terrain) {
    case Terrain::flat: return 1.0;
    case Terrain::variable: return 1.25 + 0.75 * std::cos(2.0 * std::numbers::pi * x / p.vt_period);
    case Terrain::obstacle:
      return (x >= p.wall_start && x <= p.wall_start + p.wall_width) ? p.wall_drag : 1.0;
  }
  return 1.0;
}

/// Maps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a, two_pi);
  if (w <= -std::numbers::pi) w += two_pi;
  if (w > std::numbers::pi) w -= two_pi;
  return w;
}

struct EnvState {
  std::vector<double> theta;
  std::vector<double> omega;
  double x = 0.0, y = 0.0, vx = 0.0, vy = 0.0;
  std::size_t step = 0;

  /// Per joint (angle, angular velocity).
  std::vector<double> proprio() const {
    std::vector<double> o(2 * theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      o[2 * i] = theta[i];
      o[2 * i + 1] = omega[i];
    }
    return o;
  }
  std::vector<double> extero() const { return {x, y, vx, vy}; }

  bool finite() const {
    for (double v : theta) if (!std::isfinite(v)) return false;
    for (double v : omega) if (!std::isfinite(v)) return false;
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(vx) && std::isfinite(vy);
  }
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool done = false;
  bool truncated = false;  // ended by the step limit rather than a fault
};

/// Planar chain of K hinged links whose head is pushed forward by
/// traveling-wave joint motion.
class ChainEnv {
 public:
  explicit ChainEnv(ChainEnvConfig cfg, std::string name = "") : cfg_(std::move(cfg)), name_(std::move(name)) {
    cfg_.validate();
    if (name_.empty()) name_ = "chain-" + std::to_string(cfg_.joints);
  }

  const ChainEnvConfig& config() const { return cfg_; }
  const std::string& name() const { return name_; }
  const EnvState& state() const { return state_; }

  /// Terrain changes the world, not the body, so every terrain variant of
  /// chain-K shares the task name "chain-K".
  model::MorphologySpec spec() const {
    return model::MorphologySpec::dense("chain-" + std::to_string(cfg_.joints), cfg_.joints, 2, 1, 4);
  }

  const EnvState& reset(std::uint64_t seed) {
    rng_.seed(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    state_ = EnvState{};
    state_.theta.resize(cfg_.joints);
    state_.omega.resize(cfg_.joints);
    for (std::size_t i = 0; i < cfg_.joints; ++i) {
      state_.theta[i] = wrap_angle(cfg_.init_noise * n(rng_));
      state_.omega[i] = cfg_.init_noise * n(rng_);
    }
    return state_;
  }

  /// Head thrust for the given joint configuration.
  double thrust(std::span<const double> theta, std::span<const double> omega) const {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < theta.size(); ++i) s += std::sin(theta[i] - theta[i + 1]) * omega[i];
    return cfg_.thrust_gain * cfg_.link_length * s;
  }

  StepResult step(std::span<const double> action) {
    if (action.size() != cfg_.joints)
      throw std::invalid_argument("ChainEnv::step: expected " + std::to_string(cfg_.joints) + " torques");
    for (double a : action)
      if (!std::isfinite(a)) throw std::invalid_argument("ChainEnv::step: non-finite action");
    const EnvState& s = state_;
    EnvState next;
    next.theta.resize(cfg_.joints);
    next.omega.resize(cfg_.joints);
    const double dt = cfg_.dt;
    double cost = 0.0, lateral = 0.0;
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < cfg_.joints; ++i) {
      const double tau = std::clamp(action[i], -cfg_.torque_limit, cfg_.torque_limit);
      cost += tau * tau;
      double w = s.omega[i] + dt * (tau - cfg_.damping * s.omega[i]);
      if (cfg_.process_noise_std > 0.0) w += cfg_.process_noise_std * std::sqrt(dt) * noise(rng_);
      double th = s.theta[i] + dt * s.omega[i];
      if (cfg_.joint_limit < std::numbers::pi && std::abs(th) > cfg_.joint_limit) {
        th = std::copysign(cfg_.joint_limit, th);
        if (w * th > 0.0) w = 0.0;  // the stop absorbs motion into it
      }
      next.omega[i] = w;
      next.theta[i] = wrap_angle(th);
      lateral += s.omega[i] * std::cos(s.theta[i]);
    }
    const double drag = cfg_.head_drag * terrain_modifier(s.x, cfg_.terrain, cfg_.terrain_params);
    next.vx = s.vx + dt * (thrust(s.theta, s.omega) - drag * s.vx);
    next.x = s.x + dt * s.vx;
    next.vy = cfg_.lateral_gain * cfg_.link_length * lateral;
    next.y = s.y + dt * s.vy;
    next.step = s.step + 1;

    StepResult r;
    r.reward = (next.x - s.x) - cfg_.control_cost * cost;
    const bool fault = !next.finite();
    r.truncated = !fault && next.step >= cfg_.max_steps;
    r.done = fault || r.truncated;
    state_ = std::move(next);
    r.state = state_;
    return r;
  }

 private:
  ChainEnvConfig cfg_;
  std::string name_;
  EnvState state_;
  std::mt19937_64 rng_;
};

struct EnvName {
  std::size_t joints = 0;
  Terrain terrain = Terrain::flat;
};

/// Parses "chain-{K}[-vt|-obs]".
inline EnvName parse_env_name(const std::string& name) {
  static const std::regex re(R"(chain-([0-9]+)(-(vt|obs))?)");
  std::smatch m;
  if (!std::regex_match(name, m, re)) throw std::invalid_argument("unknown environment '" + name + "'");
  EnvName out;
  out.joints = std::stoul(m[1].str());
  if (out.joints == 0) throw std::invalid_argument("environment '" + name + "' has no joints");
  if (m[3].matched) out.terrain = parse_terrain(m[3].str());
  return out;
}

inline std::string env_name(std::size_t joints, Terrain terrain) {
  std::string s = "chain-" + std::to_string(joints);
  if (terrain != Terrain::flat) s += "-" + terrain_name(terrain);
  return s;
}

/// Builds an env from its name on top of `base` (joints and terrain come
/// from the name; everything else from `base`).
inline ChainEnv make_env(const std::string& name, ChainEnvConfig base = {}) {
  const EnvName parsed = parse_env_name(name);
  base.joints = parsed.joints;
  base.terrain = parsed.terrain;
  return ChainEnv(base, name);
}

inline std::string body_name(const std::string& env) { return env_name(parse_env_name(env).joints, Terrain::flat); }

}  // namespace odm::env
