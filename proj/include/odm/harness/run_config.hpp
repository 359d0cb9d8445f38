#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "odm/env/chain_env.hpp"
#include "odm/env/pioneer.hpp"
#include "odm/model/odm_model.hpp"
#include "odm/training/config.hpp"

namespace odm::harness {

/// Everything a command needs. Defaults are the desk-scale preset.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::string out = "runs";
  std::string data_dir = "data";
  std::string checkpoint;                                   // input checkpoint (finetune, eval)
  std::vector<std::string> envs{"chain-2", "chain-3", "chain-4"};  // gen-data targets
  std::vector<std::string> tiers{"expert", "medium-expert", "medium", "medium-replay", "random"};
  std::size_t episodes_per_tier = 200;
  std::vector<std::string> curriculum{"chain-2", "chain-3", "chain-4"};  // easiest first
  std::vector<std::string> course_tiers = training::default_tier_rotation();
  std::string target = "chain-4";                           // finetune / eval body
  std::vector<std::string> eval_envs;                       // empty = the target on every terrain
  std::string terrain = "flat";

  bool no_pretrain = false;
  bool no_finetune = false;
  bool no_curriculum = false;
  bool no_prompt = false;
  bool few_shot = false;
  std::size_t few_shot_steps = 500;
  bool from_scratch = false;
  bool fresh_task = false;
  bool dry_run = false;

  training::TrainConfig train = desk_train();
  model::ModelConfig model = desk_model();
  env::ChainEnvConfig env = desk_env();

  static training::TrainConfig desk_train() {
    training::TrainConfig t;
    t.actors = 8;
    t.horizon = 100;
    t.gamma = 0.99;
    t.lambda = 1.0;  // Monte Carlo advantages; the value head starts untrained
    t.lr_finetune = 1e-4;
    t.max_grad_norm = 0.5;
    return t;
  }
  static model::ModelConfig desk_model() {
    model::ModelConfig m;
    m.embed_dim = 32;
    m.attention_dim = 32;
    m.causal_layers = 1;
    m.log_std_init = -1.0;
    return m;
  }
  static env::ChainEnvConfig desk_env() {
    env::ChainEnvConfig e;
    e.max_steps = 100;
    return e;
  }

  /// Finetune target with the terrain flag applied.
  std::string target_env() const {
    return env::env_name(env::parse_env_name(target).joints, env::parse_terrain(terrain));
  }

  bool use_prompt() const { return !no_prompt; }

  void validate() const {
    if (no_pretrain && no_finetune && (command == "finetune" || command == "pipeline"))
      throw std::invalid_argument("--no-pretrain and --no-finetune cannot both be set for a training run");
    env::parse_env_name(target);
    env::parse_terrain(terrain);
    for (const auto& e : envs) env::parse_env_name(e);
    for (const auto& e : curriculum) env::parse_env_name(e);
    for (const auto& e : eval_envs) env::parse_env_name(e);
    for (const auto& t : tiers) env::parse_tier(t);
    for (const auto& t : course_tiers) env::parse_tier(t);
    if (few_shot && few_shot_steps == 0) throw std::invalid_argument("few_shot_steps must be >= 1");
    train.validate();
    env.validate();
    if (model.embed_dim == 0 || model.heads == 0 || model.attention_dim % model.heads != 0)
      throw std::invalid_argument("model: attention_dim must be a positive multiple of heads");
  }
};

// ---------------------------------------------------------------------------
// Field registry: one entry per addressable "section.key".
// ---------------------------------------------------------------------------

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

inline std::string join_list(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

template <class T>
T parse_value(const std::string& key, const std::string& text);

template <>
inline double parse_value<double>(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw std::invalid_argument(key + ": expected a number, got '" + text + "'");
  return v;
}

template <>
inline std::uint64_t parse_value<std::uint64_t>(const std::string& key, const std::string& text) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
    throw std::invalid_argument(key + ": expected a non-negative integer, got '" + text + "'");
  return std::stoull(text);
}

template <>
inline bool parse_value<bool>(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument(key + ": expected a boolean, got '" + text + "'");
}

inline Field field(const std::string& key, double& ref) {
  return {key, [&ref] { return fmt(ref); }, [&ref, key](const std::string& s) { ref = parse_value<double>(key, s); }};
}
inline Field field(const std::string& key, std::size_t& ref) {
  return {key, [&ref] { return std::to_string(ref); },
          [&ref, key](const std::string& s) { ref = static_cast<std::size_t>(parse_value<std::uint64_t>(key, s)); }};
}
inline Field field_u64(const std::string& key, std::uint64_t& ref) {
  return {key, [&ref] { return std::to_string(ref); },
          [&ref, key](const std::string& s) { ref = parse_value<std::uint64_t>(key, s); }};
}
inline Field field(const std::string& key, bool& ref) {
  return {key, [&ref] { return std::string(ref ? "true" : "false"); },
          [&ref, key](const std::string& s) { ref = parse_value<bool>(key, s); }};
}
inline Field field(const std::string& key, std::string& ref) {
  return {key, [&ref] { return ref; }, [&ref](const std::string& s) { ref = s; }};
}
inline Field field(const std::string& key, std::vector<std::string>& ref) {
  return {key, [&ref] { return join_list(ref); }, [&ref](const std::string& s) { ref = split_list(s); }};
}

}  // namespace detail

/// Every config key, in the order config.resolved lists them.
inline std::vector<Field> config_fields(RunConfig& c) {

  auto& t = c.train;
  auto& m = c.model;
  auto& e = c.env;
  return {
      detail::field_u64("run.seed", c.seed),
      detail::field("run.out", c.out),
      detail::field("run.data_dir", c.data_dir),
      detail::field("run.checkpoint", c.checkpoint),
      detail::field("run.envs", c.envs),
      detail::field("run.tiers", c.tiers),
      detail::field("run.episodes_per_tier", c.episodes_per_tier),
      detail::field("run.curriculum", c.curriculum),
      detail::field("run.course_tiers", c.course_tiers),
      detail::field("run.target", c.target),
      detail::field("run.eval_envs", c.eval_envs),
      detail::field("run.terrain", c.terrain),
      detail::field("run.no_pretrain", c.no_pretrain),
      detail::field("run.no_finetune", c.no_finetune),
      detail::field("run.no_curriculum", c.no_curriculum),
      detail::field("run.no_prompt", c.no_prompt),
      detail::field("run.few_shot", c.few_shot),
      detail::field("run.few_shot_steps", c.few_shot_steps),
      detail::field("run.from_scratch", c.from_scratch),
      detail::field("run.fresh_task", c.fresh_task),

      detail::field("train.gamma", t.gamma),
      detail::field("train.lambda", t.lambda),
      detail::field("train.clip_eps", t.clip_eps),
      detail::field("train.kl_beta", t.kl_beta),
      detail::field("train.eta_actor", t.eta_actor),
      detail::field("train.eta_critic", t.eta_critic),
      detail::field("train.eta_imitation", t.eta_imitation),
      detail::field("train.eta_prediction", t.eta_prediction),
      detail::field("train.eta_ppo", t.eta_ppo),
      detail::field("train.eta_pretrain", t.eta_pretrain),
      detail::field("train.actors", t.actors),
      detail::field("train.horizon", t.horizon),
      detail::field("train.window", t.window),
      detail::field("train.lr_pretrain", t.lr_pretrain),
      detail::field("train.lr_finetune", t.lr_finetune),
      detail::field("train.weight_decay", t.weight_decay),
      detail::field("train.max_grad_norm", t.max_grad_norm),
      detail::field("train.pretrain_epochs", t.pretrain_epochs),
      detail::field("train.pretrain_batch_windows", t.pretrain_batch_windows),
      detail::field("train.window_stride", t.window_stride),
      detail::field("train.validation_fraction", t.validation_fraction),
      detail::field("train.finetune_iterations", t.finetune_iterations),
      detail::field("train.ppo_epochs", t.ppo_epochs),
      detail::field("train.minibatch_steps", t.minibatch_steps),
      detail::field("train.few_shot_steps", t.few_shot_steps),
      detail::field("train.plateau_stop", t.plateau_stop),
      detail::field("train.plateau_window", t.plateau_window),
      detail::field("train.plateau_patience", t.plateau_patience),
      detail::field("train.plateau_tolerance", t.plateau_tolerance),
      detail::field("train.eval_episodes", t.eval_episodes),

      detail::field("model.embed_dim", m.embed_dim),
      detail::field("model.heads", m.heads),
      detail::field("model.attention_dim", m.attention_dim),
      detail::field("model.causal_layers", m.causal_layers),
      detail::field("model.ffn_mult", m.ffn_mult),
      detail::field("model.max_timestep", m.max_timestep),
      detail::field("model.max_joints", m.max_joints),
      detail::field("model.log_std_init", m.log_std_init),
      detail::field("model.log_std_min", m.log_std_min),
      detail::field("model.log_std_max", m.log_std_max),

      detail::field("env.link_length", e.link_length),
      detail::field("env.damping", e.damping),
      detail::field("env.joint_limit", e.joint_limit),
      detail::field("env.torque_limit", e.torque_limit),
      detail::field("env.thrust_gain", e.thrust_gain),
      detail::field("env.head_drag", e.head_drag),
      detail::field("env.lateral_gain", e.lateral_gain),
      detail::field("env.control_cost", e.control_cost),
      detail::field("env.dt", e.dt),
      detail::field("env.init_noise", e.init_noise),
      detail::field("env.process_noise_std", e.process_noise_std),
      detail::field("env.max_steps", e.max_steps),
      detail::field("env.vt_period", e.terrain_params.vt_period),
      detail::field("env.wall_start", e.terrain_params.wall_start),
      detail::field("env.wall_width", e.terrain_params.wall_width),
      detail::field("env.wall_drag", e.terrain_params.wall_drag),
  };
}

/// Sets one "section.key" from text. Unknown keys are an error so typos in
/// a config file do not silently fall back to defaults.
inline void set_field(RunConfig& c, const std::string& key, const std::string& value) {
  for (auto& f : config_fields(c))
    if (f.key == key) {
      f.set(detail::trim(value));
      // The model window always follows the training window.
      c.model.window = c.train.window;
      return;
    }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

/// Applies "section.key=value".
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("override '" + assignment + "' is not key=value");
  set_field(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline void apply_ini_text(RunConfig& c, const std::string& text) {
  namespace pt = boost::property_tree;
  std::istringstream is(text);
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument("config: " + std::string(e.what()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw std::invalid_argument("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set_field(c, section + "." + key, value.data());
  }
}

inline void apply_ini_file(RunConfig& c, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  apply_ini_text(c, ss.str());
}

/// The full resolved config as INI text; reading it back reproduces the
/// config exactly.
inline std::string resolved_text(RunConfig c) {
  std::string out = "# command: " + c.command + "\n";
  std::string section;
  for (const auto& f : config_fields(c)) {
    const auto dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get() + "\n";
  }
  return out;
}

/// Finetune settings actually used: the few-shot flag turns on the step cap.
inline training::TrainConfig effective_train(const RunConfig& c) {
  training::TrainConfig t = c.train;
  if (c.few_shot) t.few_shot_steps = c.few_shot_steps;
  return t;
}

inline model::ModelConfig effective_model(const RunConfig& c) {
  model::ModelConfig m = c.model;
  m.window = c.train.window;
  return m;
}

}  // namespace odm::harness
