#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "odm/env/chain_env.hpp"
#include "odm/env/expert_gaits.hpp"

namespace odm::env {

enum class Tier { expert, medium_expert, medium, medium_replay, random };

inline const std::array<Tier, 5>& all_tiers() {
  static const std::array<Tier, 5> t{Tier::expert, Tier::medium_expert, Tier::medium, Tier::medium_replay,
                                     Tier::random};
  return t;
}

inline std::string tier_name(Tier t) {
  switch (t) {
    case Tier::expert: return "expert";
    case Tier::medium_expert: return "medium-expert";
    case Tier::medium: return "medium";
    case Tier::medium_replay: return "medium-replay";
    case Tier::random: return "random";
  }
  return "?";
}

inline Tier parse_tier(const std::string& s) {
  for (Tier t : all_tiers())
    if (tier_name(t) == s) return t;
  throw std::invalid_argument("unknown pioneer tier '" + s + "'");
}

/// tau_i(t) = amplitude * torque_limit * sin(frequency * t * dt - i * phase),
/// clamped to the torque limit. Pioneer noise is added on top of this.
inline std::vector<double> gait_action(const GaitParams& g, const ChainEnvConfig& cfg, std::size_t t) {
  std::vector<double> a(cfg.joints);
  const double time = static_cast<double>(t) * cfg.dt;
  for (std::size_t i = 0; i < cfg.joints; ++i)
    a[i] = std::clamp(g.amplitude * cfg.torque_limit * std::sin(g.frequency * time - static_cast<double>(i) * g.phase),
                      -cfg.torque_limit, cfg.torque_limit);
  return a;
}

struct GaitGrid {
  std::vector<double> amplitudes{0.5, 1.0, 2.0, 4.0, 8.0};  // multiples of the torque limit; large values saturate
  std::vector<double> frequencies{0.5, 1.0, 1.5, 2.0, 3.0};
  std::vector<double> phases{std::numbers::pi / 6, std::numbers::pi / 3, std::numbers::pi / 2,
                             2 * std::numbers::pi / 3};
  std::size_t horizon = 200;
  std::size_t reset_seed = 0;
};

inline double gait_return(const GaitParams& g, ChainEnvConfig cfg, std::size_t horizon, std::uint64_t seed) {
  cfg.max_steps = horizon;
  cfg.process_noise_std = 0.0;
  ChainEnv env(cfg);
  env.reset(seed);
  double total = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    const StepResult r = env.step(gait_action(g, cfg, t));
    total += r.reward;
    if (r.done) break;
  }
  return total;
}

/// Exhaustive search for the gait with the best return over `grid.horizon`
/// steps. Ties keep the first candidate in grid order.
inline GaitParams search_gait(const ChainEnvConfig& cfg, const GaitGrid& grid = {}) {
  GaitParams best{cfg.joints, 0.0, 0.0, 0.0, -std::numeric_limits<double>::infinity()};
  for (double a : grid.amplitudes)
    for (double f : grid.frequencies)
      for (double p : grid.phases) {
        GaitParams g{cfg.joints, a, f, p, 0.0};
        g.search_return = gait_return(g, cfg, grid.horizon, grid.reset_seed);
        if (g.search_return > best.search_return) best = g;
      }
  return best;
}

/// Committed gait for K joints under default physics; searched on demand
/// for anything else.
inline GaitParams expert_gait(const ChainEnvConfig& cfg) {
  const ChainEnvConfig defaults;
  const bool default_physics = cfg.link_length == defaults.link_length && cfg.damping == defaults.damping &&
                               cfg.joint_limit == defaults.joint_limit &&
                               cfg.torque_limit == defaults.torque_limit &&
                               cfg.thrust_gain == defaults.thrust_gain && cfg.head_drag == defaults.head_drag &&
                               cfg.control_cost == defaults.control_cost && cfg.dt == defaults.dt &&
                               cfg.init_noise == defaults.init_noise;
  if (default_physics && cfg.terrain == Terrain::flat)
    for (const GaitParams& g : kExpertGaits)
      if (g.joints == cfg.joints) return g;
  ChainEnvConfig flat = cfg;
  flat.terrain = Terrain::flat;
  return search_gait(flat);
}

/// Scripted demonstrator of a given skill tier. Noise is drawn from the rng
/// passed to each call so a dataset seed fixes every episode.
class Pioneer {
 public:
  static constexpr double kMediumNoise = 0.3;  // x torque_limit

  Pioneer(Tier tier, const ChainEnvConfig& cfg) : tier_(tier), cfg_(cfg) {
    if (tier_ != Tier::random) gait_ = expert_gait(cfg);
  }
  Pioneer(Tier tier, const ChainEnvConfig& cfg, GaitParams gait) : tier_(tier), cfg_(cfg), gait_(gait) {}

  Tier tier() const { return tier_; }
  const GaitParams& gait() const { return gait_; }
  void set_noise_scale(double s) { noise_scale_ = s; }

  /// Decides the medium-expert coin flip for the coming episode.
  void begin_episode(std::mt19937_64& rng) {
    episode_is_expert_ = true;
    if (tier_ == Tier::medium_expert) episode_is_expert_ = std::bernoulli_distribution(0.5)(rng);
  }

  std::vector<double> act(const EnvState& /*state*/, std::size_t t, std::mt19937_64& rng) const {
    const double lim = cfg_.torque_limit;
    if (tier_ == Tier::random) {
      std::uniform_real_distribution<double> u(-lim, lim);
      std::vector<double> a(cfg_.joints);
      for (double& v : a) v = u(rng);
      return a;
    }
    std::vector<double> a = gait_action(gait_, cfg_, t);
    double sigma = 0.0;
    switch (tier_) {
      case Tier::medium: sigma = kMediumNoise * lim * noise_scale_; break;
      case Tier::medium_expert: sigma = episode_is_expert_ ? 0.0 : kMediumNoise * lim * noise_scale_; break;
      case Tier::medium_replay: {
        const double horizon = static_cast<double>(std::max<std::size_t>(cfg_.max_steps, 2) - 1);
        sigma = lim * noise_scale_ * std::max(0.0, 1.0 - static_cast<double>(t) / horizon);
        break;
      }
      default: break;
    }
    if (sigma > 0.0) {
      std::normal_distribution<double> n(0.0, sigma);
      for (double& v : a) v += n(rng);
    }
    for (double& v : a) v = std::clamp(v, -lim, lim);
    return a;
  }

 private:
  Tier tier_;
  ChainEnvConfig cfg_;
  GaitParams gait_{};
  double noise_scale_ = 1.0;
  bool episode_is_expert_ = true;
};

}  // namespace odm::env
