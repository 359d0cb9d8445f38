#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "odm/model/morphology.hpp"
#include "odm/model/window.hpp"
#include "odm/numerics/attention.hpp"
#include "odm/numerics/layers.hpp"
#include "odm/numerics/parameters.hpp"
#include "odm/numerics/tape.hpp"

namespace odm::model {

using nn::Tape;
using nn::Tensor;
using nn::Var;

struct ModelConfig {
  std::size_t embed_dim = 128;      // e
  std::size_t heads = 2;
  std::size_t attention_dim = 128;  // inner width of every attention block
  std::size_t causal_layers = 3;
  std::size_t ffn_mult = 4;
  std::size_t window = 10;          // T_w
  std::size_t max_timestep = 1000;
  std::size_t max_joints = 32;
  double log_std_init = 0.0;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
};

/// Prompt inputs are divided by these so they stay O(1): the largest K, n,
/// m and x among the published benchmark bodies.
inline constexpr double kPromptScaleJoints = 16.0;
inline constexpr double kPromptScaleObs = 52.0;
inline constexpr double kPromptScaleDof = 4.0;
inline constexpr double kPromptScaleExt = 1410.0;

enum class TokenType : std::size_t { bos = 0, state = 1, action = 2 };

/// Parameter groups that translate one body shape to and from the latent
/// space. Everything lives under `prefix`.
struct TaskModules {
  MorphologySpec spec;
  std::string prefix;
  nn::Mlp embed_o, embed_x, embed_a, embed_s, proj_s, proj_a, proj_v;
  std::string log_std;
};

struct CausalOutputs {
  Var sequence;     // (windows * seq_len) x e
  Var action_hat;   // rows x e, read at the state tokens
  Var state_hat;    // rows x e, read at BOS / the previous action token
  Var prev_action;  // rows x e, a_{t-1}^p (BOS at the first valid slot)
  std::size_t seq_len = 0;
};

struct HeadOutputs {
  Var action_mean;      // rows x n_a
  Var log_std;          // 1 x n_a, clamped
  Var predicted_state;  // rows x n_s
  Var value;            // rows x 1
};

struct ForwardOutputs {
  CausalOutputs causal;
  Var state_tokens;   // rows x e
  Var action_tokens;  // rows x e
  Var action_latent;  // refined, rows x e
  Var state_latent;   // refined, rows x e
  HeadOutputs heads;
};

struct PolicyOutput {
  std::vector<double> action_mean;
  std::vector<double> action_log_std;
  std::vector<double> predicted_state;
  double value = 0.0;
};

class OdmModel {
 public:
  OdmModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    if (cfg_.embed_dim == 0 || cfg_.attention_dim % cfg_.heads != 0)
      throw std::invalid_argument("ModelConfig: attention_dim must be divisible by heads");
    std::mt19937_64 rng(seed);
    const std::size_t e = cfg_.embed_dim;
    params_.add_uniform("shared/joint_pos", nn::Shape{cfg_.max_joints, e}, e, rng);
    enc_m().init(params_, rng);
    params_.add_uniform("shared/bos", nn::Shape{1, e}, e, rng);
    prompt_mlp().init(params_, rng);
    params_.add_uniform("shared/time_emb", nn::Shape{cfg_.max_timestep, e}, e, rng);
    params_.add_uniform("shared/type_emb", nn::Shape{3, e}, e, rng);
    nn::add_affine_params(params_, "shared/time_proj", 2 * e, e, rng);
    for (std::size_t l = 0; l < cfg_.causal_layers; ++l) {
      const std::string p = layer_prefix(l);
      nn::add_layer_norm_params(params_, p + "/ln1", e);
      causal_attention(l).init(params_, rng);
      nn::add_layer_norm_params(params_, p + "/ln2", e);
      nn::add_affine_params(params_, p + "/ffn0", e, cfg_.ffn_mult * e, rng);
      nn::add_affine_params(params_, p + "/ffn1", cfg_.ffn_mult * e, e, rng);
    }
    nn::add_layer_norm_params(params_, "shared/causal/ln_f", e);
    cross_action().init(params_, rng);
    cross_state().init(params_, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  // ---------------------------------------------------------------------
  // Task registry
  // ---------------------------------------------------------------------

  /// Creates the task-specific modules for `spec`. Initialisation is seeded
  /// from the model seed and the task name, so it is independent of
  /// registration order.
  const TaskModules& register_task(const MorphologySpec& spec) {
    spec.validate();
    if (tasks_.count(spec.name)) throw std::invalid_argument("task '" + spec.name + "' already registered");
    if (spec.joints > cfg_.max_joints)
      throw std::invalid_argument("task '" + spec.name + "': more joints than max_joints");
    const std::size_t e = cfg_.embed_dim;
    TaskModules t;
    t.spec = spec;
    t.prefix = "task/" + spec.name + "/";
    t.embed_o = {t.prefix + "embed_o", {spec.obs_per_joint, e}};
    t.embed_x = {t.prefix + "embed_x", {spec.ext_dim, e}};
    t.embed_a = {t.prefix + "embed_a", {spec.dof_per_joint, e}};
    t.embed_s = {t.prefix + "embed_s", {(spec.joints + 1) * e, e}};
    t.proj_s = {t.prefix + "proj_s", {e, spec.state_dim()}};
    t.proj_a = {t.prefix + "proj_a", {e, spec.action_dim()}};
    t.proj_v = {t.prefix + "proj_v", {e, 1}};
    t.log_std = t.prefix + "log_std";

    std::vector<std::uint32_t> seed_words{static_cast<std::uint32_t>(seed_),
                                          static_cast<std::uint32_t>(seed_ >> 32)};
    for (unsigned char c : spec.name) seed_words.push_back(c);
    std::seed_seq seq(seed_words.begin(), seed_words.end());
    std::mt19937_64 rng(seq);
    for (const nn::Mlp* m : {&t.embed_o, &t.embed_x, &t.embed_a, &t.embed_s, &t.proj_s, &t.proj_a, &t.proj_v})
      m->init(params_, rng);
    params_.add(t.log_std, Tensor(nn::Shape{1, spec.action_dim()}, cfg_.log_std_init));
    if (!active_.empty()) params_.set_frozen_prefix(t.prefix, true);
    auto [it, ok] = tasks_.emplace(spec.name, std::move(t));
    if (active_.empty()) active_ = spec.name;
    return it->second;
  }

  bool has_task(const std::string& name) const { return tasks_.count(name) > 0; }

  const TaskModules& task(const std::string& name) const {
    auto it = tasks_.find(name);
    if (it == tasks_.end()) throw std::invalid_argument("unknown task '" + name + "'");
    return it->second;
  }

  std::vector<std::string> task_names() const {
    std::vector<std::string> out;
    for (const auto& [name, t] : tasks_) out.push_back(name);
    return out;
  }

  /// Unfreezes `name`'s modules and freezes every other task's. Shared
  /// parameters are left as they are.
  void activate(const std::string& name) {
    const TaskModules& t = task(name);
    for (const auto& [other, mods] : tasks_) params_.set_frozen_prefix(mods.prefix, true);
    params_.set_frozen_prefix(t.prefix, false);
    active_ = name;
  }

  const std::string& active_task() const { return active_; }

  // ---------------------------------------------------------------------
  // Pipeline stages. `rows` below is the number of step slots in a batch.
  // ---------------------------------------------------------------------

  /// o_pro: rows x (K*n) in full joint layout; o_ext: rows x x.
  /// Returns per-joint latents (rows*K x e) and exteroceptive latents (rows x e).
  std::pair<Var, Var> tokenize_state(Tape& tape, const TaskModules& t, const Tensor& o_pro,
                                     const Tensor& o_ext) const {
    const auto& s = t.spec;
    if (o_pro.cols() != s.joints * s.obs_per_joint || o_ext.cols() != s.ext_dim || o_pro.rows() != o_ext.rows())
      throw std::invalid_argument("tokenize_state: observation shape does not match spec '" + s.name + "'");
    const std::size_t rows = o_pro.rows();
    Tensor joint_obs(nn::Shape{rows * s.joints, s.obs_per_joint});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < s.state_mask.size(); ++i)
        joint_obs[r * s.state_mask.size() + i] = s.state_mask[i] ? o_pro.at(r, i) : 0.0;
    Var joints = t.embed_o.forward(tape, params_, tape.constant(std::move(joint_obs)));
    Var ext = t.embed_x.forward(tape, params_, tape.constant(o_ext));
    return {joints, ext};
  }

  /// actions: rows x n_a compact. Returns rows*K x e per-joint latents.
  Var tokenize_action(Tape& tape, const TaskModules& t, const Tensor& actions) const {
    const auto& s = t.spec;
    if (actions.cols() != s.action_dim())
      throw std::invalid_argument("tokenize_action: action width does not match spec '" + s.name + "'");
    const std::size_t rows = actions.rows();
    Tensor joint_act(nn::Shape{rows * s.joints, s.dof_per_joint});
    for (std::size_t r = 0; r < rows; ++r) {
      auto full = s.expand_action(actions.row_span(r));
      std::copy(full.begin(), full.end(), joint_act.data() + r * full.size());
    }
    return t.embed_a.forward(tape, params_, tape.constant(std::move(joint_act)));
  }

  /// Adds joint position embeddings, then one residual self-attention pass
  /// over the joint axis. Masked joints are never attended to.
  Var morph_encode(Tape& tape, Var joint_latents, const std::vector<bool>& joint_mask) const {
    const std::size_t k = joint_mask.size();
    if (k == 0 || joint_latents.rows() % k != 0)
      throw std::invalid_argument("morph_encode: latent rows not a multiple of joint count");
    if (k > cfg_.max_joints) throw std::invalid_argument("morph_encode: too many joints");
    if (std::none_of(joint_mask.begin(), joint_mask.end(), [](bool b) { return b; }))
      throw std::invalid_argument("morph_encode: all joints masked");
    const std::size_t groups = joint_latents.rows() / k;
    std::vector<std::size_t> idx(joint_latents.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i % k;
    Var pos = nn::gather_rows(tape.param(params_, "shared/joint_pos"), std::move(idx));
    Var h = nn::add(joint_latents, pos);
    const auto mask = nn::AttentionMask::keys(k, joint_mask);
    return nn::add(h, enc_m().forward(tape, params_, h, h, groups, &mask));
  }

  /// Flattens the K joint latents of each row, appends the exteroceptive
  /// latent and maps (K+1)e -> e.
  Var pool_state(Tape& tape, const TaskModules& t, Var joint_latents, Var ext_latent) const {
    const std::size_t rows = ext_latent.rows(), e = cfg_.embed_dim;
    Var flat = nn::reshape(joint_latents, nn::Shape{rows, t.spec.joints * e});
    return t.embed_s.forward(tape, params_, nn::concat_cols({flat, ext_latent}));
  }

  /// Mean over the unmasked joints of each row.
  Var pool_action(Tape& /*tape*/, Var joint_latents, const std::vector<bool>& joint_mask) const {
    const std::size_t k = joint_mask.size();
    const std::size_t live = static_cast<std::size_t>(std::count(joint_mask.begin(), joint_mask.end(), true));
    if (live == 0) throw std::invalid_argument("pool_action: all joints masked");
    std::vector<double> w(joint_latents.rows());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = joint_mask[i % k] ? 1.0 / static_cast<double>(live) : 0.0;
    return nn::pool_rows(joint_latents, k, w);
  }

  /// Per-step state tokens (rows x e).
  Var encode_state_tokens(Tape& tape, const TaskModules& t, const Tensor& o_pro, const Tensor& o_ext) const {
    auto [joints, ext] = tokenize_state(tape, t, o_pro, o_ext);
    return pool_state(tape, t, morph_encode(tape, joints, t.spec.state_joint_mask()), ext);
  }

  /// Per-step action tokens (rows x e).
  Var encode_action_tokens(Tape& tape, const TaskModules& t, const Tensor& actions) const {
    const auto mask = t.spec.action_joint_mask();
    return pool_action(tape, morph_encode(tape, tokenize_action(tape, t, actions), mask), mask);
  }

  std::pair<Var, Var> encode_steps(Tape& tape, const TaskModules& t, const Tensor& o_pro, const Tensor& o_ext,
                                   const Tensor& actions) const {
    return {encode_state_tokens(tape, t, o_pro, o_ext), encode_action_tokens(tape, t, actions)};
  }

  /// Continuous embedding of the normalised (K, n, m, x) through a shared MLP.
  Var build_prompt(Tape& tape, const MorphologySpec& spec) const {
    Tensor in = Tensor::row({static_cast<double>(spec.joints) / kPromptScaleJoints,
                             static_cast<double>(spec.obs_per_joint) / kPromptScaleObs,
                             static_cast<double>(spec.dof_per_joint) / kPromptScaleDof,
                             static_cast<double>(spec.ext_dim) / kPromptScaleExt});
    return prompt_mlp().forward(tape, params_, tape.constant(std::move(in)));
  }

  /// Decoder-only pass over [prompt?] BOS s_0 a_0 ... s_{L-1} a_{L-1} for
  /// each of `windows` windows of `length` slots. Timestep embeddings are
  /// concatenated to every non-prompt token and projected back to e.
  ///
  /// Output alignment: BOS -> s_hat_0, s_k -> a_hat_k, a_k -> s_hat_{k+1}.
  /// For a left-padded window, s_hat at the first valid slot is read at BOS.
  CausalOutputs causal_forward(Tape& tape, std::optional<Var> prompt, Var state_tokens, Var action_tokens,
                               const std::vector<std::size_t>& timesteps, const std::vector<std::uint8_t>& valid,
                               std::size_t windows, std::size_t length) const {
    const std::size_t rows = windows * length, e = cfg_.embed_dim;
    if (length == 0 || length > cfg_.window)
      throw std::invalid_argument("causal_forward: window of " + std::to_string(length) +
                                  " steps exceeds T_w = " + std::to_string(cfg_.window));
    if (state_tokens.rows() != rows || action_tokens.rows() != rows || timesteps.size() != rows ||
        valid.size() != rows)
      throw std::invalid_argument("causal_forward: token count mismatch");
    const std::size_t p = prompt ? 1 : 0;
    const std::size_t body = 1 + 2 * length;
    const std::size_t seq = p + body;

    std::vector<std::size_t> first(windows, length);
    for (std::size_t w = 0; w < windows; ++w)
      for (std::size_t k = 0; k < length && first[w] == length; ++k)
        if (valid[w * length + k]) first[w] = k;

    // Non-prompt tokens, window-major: source rows are [bos | states | actions].
    Var bos = tape.param(params_, "shared/bos");
    Var source = nn::concat_rows({bos, state_tokens, action_tokens});
    std::vector<std::size_t> src_idx, t_idx, type_idx;
    src_idx.reserve(windows * body);
    for (std::size_t w = 0; w < windows; ++w) {
      const std::size_t t0 = first[w] < length ? timesteps[w * length + first[w]] : 0;
      src_idx.push_back(0);
      t_idx.push_back(t0);
      type_idx.push_back(static_cast<std::size_t>(TokenType::bos));
      for (std::size_t k = 0; k < length; ++k) {
        const std::size_t r = w * length + k;
        const std::size_t ts = valid[r] ? timesteps[r] : 0;
        if (ts >= cfg_.max_timestep)
          throw std::invalid_argument("causal_forward: timestep " + std::to_string(ts) + " beyond capacity");
        src_idx.push_back(1 + r);
        t_idx.push_back(ts);
        type_idx.push_back(static_cast<std::size_t>(TokenType::state));
        src_idx.push_back(1 + rows + r);
        t_idx.push_back(ts);
        type_idx.push_back(static_cast<std::size_t>(TokenType::action));
      }
    }
    Var tokens = nn::gather_rows(source, std::move(src_idx));
    Var times = nn::gather_rows(tape.param(params_, "shared/time_emb"), std::move(t_idx));
    Var types = nn::gather_rows(tape.param(params_, "shared/type_emb"), std::move(type_idx));
    Var x = nn::add(nn::affine_layer(tape, params_, "shared/time_proj", nn::concat_cols({tokens, times})), types);

    if (prompt) {
      if (prompt->rows() != 1 || prompt->cols() != e) throw std::invalid_argument("causal_forward: prompt must be 1 x e");
      Var with_prompt = nn::concat_rows({x, *prompt});
      std::vector<std::size_t> order;
      order.reserve(windows * seq);
      for (std::size_t w = 0; w < windows; ++w) {
        order.push_back(windows * body);
        for (std::size_t i = 0; i < body; ++i) order.push_back(w * body + i);
      }
      x = nn::gather_rows(with_prompt, std::move(order));
    }

    bool padded = false;
    for (auto v : valid) padded = padded || !v;
    nn::AttentionMask mask = nn::AttentionMask::causal(seq);
    if (padded) {
      mask.allow.assign(windows * seq * seq, 0);
      for (std::size_t w = 0; w < windows; ++w)
        for (std::size_t i = 0; i < seq; ++i)
          for (std::size_t j = 0; j <= i; ++j) {
            bool key_ok = true;
            if (j >= p + 1) key_ok = valid[w * length + (j - p - 1) / 2] != 0;
            mask.allow[(w * seq + i) * seq + j] = key_ok;
          }
    }

    for (std::size_t l = 0; l < cfg_.causal_layers; ++l) {
      const std::string lp = layer_prefix(l);
      Var h = nn::layer_norm_layer(tape, params_, lp + "/ln1", x);
      x = nn::add(x, causal_attention(l).forward(tape, params_, h, h, windows, &mask));
      h = nn::layer_norm_layer(tape, params_, lp + "/ln2", x);
      h = nn::relu(nn::affine_layer(tape, params_, lp + "/ffn0", h));
      x = nn::add(x, nn::affine_layer(tape, params_, lp + "/ffn1", h));
    }
    x = nn::layer_norm_layer(tape, params_, "shared/causal/ln_f", x);

    std::vector<std::size_t> a_idx(rows), s_idx(rows), prev_idx(rows);
    for (std::size_t w = 0; w < windows; ++w)
      for (std::size_t k = 0; k < length; ++k) {
        const std::size_t r = w * length + k;
        const std::size_t base = w * seq + p;
        a_idx[r] = base + 1 + 2 * k;
        const bool at_start = k <= first[w];
        s_idx[r] = at_start ? base : base + 2 * k;
        prev_idx[r] = at_start ? 0 : 1 + (r - 1);
      }
    CausalOutputs out;
    out.sequence = x;
    out.seq_len = seq;
    out.action_hat = nn::gather_rows(x, std::move(a_idx));
    out.state_hat = nn::gather_rows(x, std::move(s_idx));
    out.prev_action = nn::gather_rows(nn::concat_rows({bos, action_tokens}), std::move(prev_idx));
    return out;
  }

  /// a_hat += Attn(Q=a_hat, K=V=s_tok); s_hat += Attn(Q=s_hat, K=V=a_prev),
  /// one key per row.
  std::pair<Var, Var> cross_refine(Tape& tape, Var action_hat, Var state_token, Var state_hat, Var prev_action) const {
    const std::size_t rows = action_hat.rows();
    Var a = nn::add(action_hat, cross_action().forward(tape, params_, action_hat, state_token, rows, nullptr));
    Var s = nn::add(state_hat, cross_state().forward(tape, params_, state_hat, prev_action, rows, nullptr));
    return {a, s};
  }

  HeadOutputs project_heads(Tape& tape, const TaskModules& t, Var action_latent, Var state_latent) const {
    HeadOutputs h;
    h.action_mean = t.proj_a.forward(tape, params_, action_latent);
    h.predicted_state = t.proj_s.forward(tape, params_, state_latent);
    h.value = t.proj_v.forward(tape, params_, state_latent);
    h.log_std = nn::clamp(tape.param(params_, t.log_std), cfg_.log_std_min, cfg_.log_std_max);
    return h;
  }

  /// Sequence stage from precomputed step tokens.
  ForwardOutputs forward_tokens(Tape& tape, const TaskModules& t, Var state_tokens, Var action_tokens,
                                const std::vector<std::size_t>& timesteps, const std::vector<std::uint8_t>& valid,
                                std::size_t windows, std::size_t length, bool use_prompt) const {
    ForwardOutputs out;
    out.state_tokens = state_tokens;
    out.action_tokens = action_tokens;
    std::optional<Var> prompt;
    if (use_prompt) prompt = build_prompt(tape, t.spec);
    out.causal = causal_forward(tape, prompt, state_tokens, action_tokens, timesteps, valid, windows, length);
    auto [a, s] = cross_refine(tape, out.causal.action_hat, state_tokens, out.causal.state_hat,
                               out.causal.prev_action);
    out.action_latent = a;
    out.state_latent = s;
    out.heads = project_heads(tape, t, a, s);
    return out;
  }

  /// Full pipeline over a collated batch; one output row per slot (padded
  /// slots produce values that callers ignore).
  ForwardOutputs forward_batch(Tape& tape, const WindowBatch& batch, bool use_prompt) const {
    const TaskModules& t = task(batch.task);
    auto [s_tok, a_tok] = encode_steps(tape, t, batch.o_pro, batch.o_ext, batch.actions);
    return forward_tokens(tape, t, s_tok, a_tok, batch.timesteps, batch.valid, batch.windows, batch.length,
                          use_prompt);
  }

  /// Inference on one window; one PolicyOutput per valid slot.
  std::vector<PolicyOutput> forward_window(const TrajectoryWindow& window, bool use_prompt) const {
    window.check(task(window.task).spec);
    Tape tape(Tape::Mode::inference);
    ForwardOutputs f = forward_batch(tape, collate(window), use_prompt);
    std::vector<PolicyOutput> out;
    const auto& h = f.heads;
    for (std::size_t k = 0; k < window.length; ++k) {
      if (!window.valid[k]) continue;
      PolicyOutput po;
      auto am = h.action_mean.value().row_span(k);
      auto ps = h.predicted_state.value().row_span(k);
      po.action_mean.assign(am.begin(), am.end());
      po.action_log_std.assign(h.log_std.value().values().begin(), h.log_std.value().values().end());
      po.predicted_state.assign(ps.begin(), ps.end());
      po.value = h.value.value().at(k, 0);
      out.push_back(std::move(po));
    }
    return out;
  }

 private:
  static std::string layer_prefix(std::size_t l) { return "shared/causal/" + std::to_string(l); }

  nn::AttentionBlock enc_m() const {
    return {"shared/enc_m", cfg_.embed_dim, cfg_.attention_dim, cfg_.heads};
  }
  nn::AttentionBlock causal_attention(std::size_t l) const {
    return {layer_prefix(l) + "/attn", cfg_.embed_dim, cfg_.attention_dim, cfg_.heads};
  }
  nn::AttentionBlock cross_action() const {
    return {"shared/cross_a", cfg_.embed_dim, cfg_.attention_dim, cfg_.heads};
  }
  nn::AttentionBlock cross_state() const {
    return {"shared/cross_s", cfg_.embed_dim, cfg_.attention_dim, cfg_.heads};
  }
  nn::Mlp prompt_mlp() const { return {"shared/prompt", {4, cfg_.embed_dim, cfg_.embed_dim}}; }

  ModelConfig cfg_;
  std::uint64_t seed_;
  nn::ParameterStore params_;
  std::map<std::string, TaskModules> tasks_;
  std::string active_;
};

}  // namespace odm::model
