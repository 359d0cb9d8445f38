#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "odm/data/dataset.hpp"
#include "odm/env/chain_env.hpp"
#include "odm/model/odm_model.hpp"
#include "odm/numerics/optim.hpp"
#include "odm/training/config.hpp"
#include "odm/training/losses.hpp"
#include "odm/training/metrics.hpp"
#include "odm/training/pretrain.hpp"

namespace odm::training {

struct StepOutput {
  std::vector<double> mean;
  std::vector<double> log_std;
  double value = 0.0;
};

/// Runs the model as a policy for a set of actors stepping in lockstep.
///
/// Context is chunk-aligned: at step t an actor sees steps
/// floor(t / T_w) * T_w .. t, the same window the training pass cuts from
/// the finished episode, so rollout and update see identical inputs.
/// Encoded step tokens are cached per actor for the current chunk.
class PolicyRunner {
 public:
  PolicyRunner(const model::OdmModel& m, std::string task, bool use_prompt, std::size_t actors)
      : model_(m), task_(std::move(task)), use_prompt_(use_prompt), state_tok_(actors), action_tok_(actors) {
    (void)model_.task(task_);
  }

  /// Outputs for actors `ids` at step t given their current observations.
  std::vector<StepOutput> act(std::size_t t, const std::vector<std::size_t>& ids,
                              const std::vector<const env::EnvState*>& states) {
    const auto& mods = model_.task(task_);
    const std::size_t e = model_.config().embed_dim, tw = model_.config().window;
    const std::size_t start = (t / tw) * tw, len = t - start + 1;
    const std::size_t n = ids.size();
    Tensor o_pro = Tensor::matrix(n, mods.spec.joints * mods.spec.obs_per_joint);
    Tensor o_ext = Tensor::matrix(n, mods.spec.ext_dim);
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = states[i]->proprio();
      const auto x = states[i]->extero();
      std::copy(p.begin(), p.end(), o_pro.row_span(i).begin());
      std::copy(x.begin(), x.end(), o_ext.row_span(i).begin());
    }
    nn::Tape tape(nn::Tape::Mode::inference);
    const Tensor new_tokens = model_.encode_state_tokens(tape, mods, o_pro, o_ext).value();
    Tensor s_tok = Tensor::matrix(n * len, e), a_tok = Tensor::matrix(n * len, e);
    for (std::size_t i = 0; i < n; ++i) {
      auto& cache_s = state_tok_[ids[i]];
      auto& cache_a = action_tok_[ids[i]];
      if (len == 1) {
        cache_s.clear();
        cache_a.clear();
      }
      if (cache_s.size() != len - 1 || cache_a.size() != len - 1)
        throw std::logic_error("PolicyRunner: actor history out of step");
      const auto row = new_tokens.row_span(i);
      cache_s.emplace_back(row.begin(), row.end());
      for (std::size_t k = 0; k < len; ++k) {
        std::copy(cache_s[k].begin(), cache_s[k].end(), s_tok.row_span(i * len + k).begin());
        if (k + 1 < len) std::copy(cache_a[k].begin(), cache_a[k].end(), a_tok.row_span(i * len + k).begin());
      }
    }
    std::vector<std::size_t> timesteps(n * len);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < len; ++k) timesteps[i * len + k] = start + k;
    const std::vector<std::uint8_t> valid(n * len, 1);
    const auto f = model_.forward_tokens(tape, mods, tape.constant(std::move(s_tok)), tape.constant(std::move(a_tok)),
                                         timesteps, valid, n, len, use_prompt_);
    const Tensor& mean = f.heads.action_mean.value();
    const Tensor& log_std = f.heads.log_std.value();
    const Tensor& value = f.heads.value.value();
    std::vector<StepOutput> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = i * len + len - 1;
      auto mr = mean.row_span(r);
      out[i].mean.assign(mr.begin(), mr.end());
      out[i].log_std.assign(log_std.values().begin(), log_std.values().end());
      out[i].value = value.at(r, 0);
    }
    return out;
  }

  /// Appends the executed actions of actors `ids` to their histories.
  void record_actions(const std::vector<std::size_t>& ids, const std::vector<std::vector<double>>& actions) {
    const auto& mods = model_.task(task_);
    Tensor a = Tensor::matrix(ids.size(), mods.spec.action_dim());
    for (std::size_t i = 0; i < ids.size(); ++i) std::copy(actions[i].begin(), actions[i].end(), a.row_span(i).begin());
    nn::Tape tape(nn::Tape::Mode::inference);
    const Tensor tok = model_.encode_action_tokens(tape, mods, a).value();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto row = tok.row_span(i);
      action_tok_[ids[i]].emplace_back(row.begin(), row.end());
    }
  }

 private:
  const model::OdmModel& model_;
  std::string task_;
  bool use_prompt_;
  std::vector<std::vector<std::vector<double>>> state_tok_;
  std::vector<std::vector<std::vector<double>>> action_tok_;
};

/// One on-policy episode with the data PPO needs.
struct Rollout {
  data::EpisodeRecord episode;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<std::vector<double>> means;
  std::vector<double> log_std;  // constant over the rollout (state-independent)
  bool done = false;             // fault or step limit; either way bootstrapped with 0
  double distance = 0.0;         // final head x - initial head x
};

/// Runs N actors for up to `horizon` steps each, sampling from the Gaussian
/// policy (or taking its mean when `deterministic`). Env i is reset with a
/// seed drawn from `seed`.
inline std::vector<Rollout> collect_rollouts(const model::OdmModel& m, const std::string& env_name,
                                             const env::ChainEnvConfig& env_cfg, bool use_prompt, std::size_t actors,
                                             std::size_t horizon, std::uint64_t seed, bool deterministic = false) {
  if (actors == 0 || horizon == 0) throw std::invalid_argument("collect_rollouts: need actors and horizon >= 1");
  std::vector<env::ChainEnv> envs;
  std::vector<Rollout> out(actors);
  std::vector<std::mt19937_64> rngs;
  std::mt19937_64 seeder(seed);
  const std::string task = env::body_name(env_name);
  for (std::size_t i = 0; i < actors; ++i) {
    envs.push_back(env::make_env(env_name, env_cfg));
    const std::uint64_t s = seeder();
    envs.back().reset(s);
    rngs.emplace_back(s ^ 0xA5A5A5A5DEADBEEFULL);
    out[i].episode.env = env_name;
    out[i].episode.tier = "policy";
    out[i].episode.seed = s;
  }
  PolicyRunner runner(m, task, use_prompt, actors);
  std::vector<std::size_t> live(actors);
  std::iota(live.begin(), live.end(), 0);
  const std::size_t limit = std::min(horizon, envs.front().config().max_steps);
  for (std::size_t t = 0; t < limit && !live.empty(); ++t) {
    std::vector<const env::EnvState*> states;
    for (std::size_t i : live) states.push_back(&envs[i].state());
    const auto outs = runner.act(t, live, states);
    std::vector<std::vector<double>> actions(live.size());
    for (std::size_t j = 0; j < live.size(); ++j) {
      const std::size_t i = live[j];
      const auto& o = outs[j];
      std::vector<double> a = o.mean;
      if (!deterministic) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t d = 0; d < a.size(); ++d) a[d] += std::exp(o.log_std[d]) * normal(rngs[i]);
      }
      Rollout& ro = out[i];
      data::StepRecord rec;
      rec.o_pro = envs[i].state().proprio();
      rec.o_ext = envs[i].state().extero();
      rec.action = a;
      const env::StepResult r = envs[i].step(a);
      rec.reward = r.reward;
      ro.episode.steps.push_back(std::move(rec));
      ro.log_probs.push_back(gaussian_log_prob(o.mean, o.log_std, a));
      ro.values.push_back(o.value);
      ro.means.push_back(o.mean);
      ro.log_std = o.log_std;
      ro.distance = envs[i].state().x;
      if (r.done) {
        ro.done = true;
        ro.episode.terminal = !r.truncated;
      }
      actions[j] = std::move(a);
    }
    runner.record_actions(live, actions);
    std::vector<std::size_t> still;
    for (std::size_t i : live)
      if (!out[i].done) still.push_back(i);
    live = std::move(still);
  }
  for (auto& ro : out) ro.done = true;  // horizon truncation is treated as terminal
  return out;
}

// ---------------------------------------------------------------------------
// PPO update
// ---------------------------------------------------------------------------

struct FinetuneMetrics {
  double mean_return = 0.0, return_std = 0.0;
  double mean_length = 0.0, length_std = 0.0;
  double loss_total = 0.0, loss_actor = 0.0, loss_critic = 0.0;
  double loss_imitation = 0.0, loss_prediction = 0.0;
  std::size_t env_steps = 0;
};

namespace detail {

/// A rollout window with its per-slot PPO data.
struct PpoWindow {
  model::TrajectoryWindow window;
  std::vector<double> advantages, targets, old_log_probs;
  Tensor old_mean;
  std::vector<double> log_std;
};

inline std::vector<PpoWindow> ppo_windows(const std::vector<Rollout>& rollouts, const model::MorphologySpec& spec,
                                          const TrainConfig& cfg) {
  std::vector<PpoWindow> out;
  for (const auto& ro : rollouts) {
    const std::size_t n = ro.episode.steps.size();
    if (n == 0) continue;
    std::vector<double> rewards(n), values(ro.values);
    for (std::size_t t = 0; t < n; ++t) rewards[t] = ro.episode.steps[t].reward;
    values.push_back(0.0);
    const AdvantageBatch adv = gae_advantages(rewards, values, ro.done, cfg.gamma, cfg.lambda);
    auto wins = data::episode_windows(ro.episode, spec, cfg.window, cfg.window);
    for (auto& w : wins) {
      PpoWindow p;
      p.advantages.assign(w.length, 0.0);
      p.targets.assign(w.length, 0.0);
      p.old_log_probs.assign(w.length, 0.0);
      p.old_mean = Tensor::matrix(w.length, spec.action_dim());
      p.log_std = ro.log_std;
      for (std::size_t k = 0; k < w.length; ++k) {
        if (!w.valid[k]) continue;
        const std::size_t t = w.timesteps[k];
        p.advantages[k] = adv.advantages[t];
        p.targets[k] = adv.value_targets[t];
        p.old_log_probs[k] = ro.log_probs[t];
        std::copy(ro.means[t].begin(), ro.means[t].end(), p.old_mean.row_span(k).begin());
      }
      p.window = std::move(w);
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace detail

inline std::pair<double, double> return_stats(const std::vector<Rollout>& rollouts) {
  std::vector<double> r;
  for (const auto& ro : rollouts) r.push_back(ro.episode.total_return());
  return data::mean_std(r);
}

/// One PPO minibatch: collated windows plus the fixed rollout-time data.
struct FinetuneBatch {
  model::WindowBatch batch;
  SurrogateInputs in;
  std::vector<double> value_targets;
};

inline FinetuneBatch make_finetune_batch(const std::vector<detail::PpoWindow>& windows,
                                         const std::vector<std::size_t>& idx, const model::MorphologySpec& spec) {
  FinetuneBatch fb;
  std::vector<model::TrajectoryWindow> ws;
  std::vector<double> adv;
  std::size_t rows = 0;
  for (std::size_t i : idx) rows += windows[i].window.length;
  fb.in.old_mean = Tensor::matrix(rows, spec.action_dim());
  fb.in.old_log_std = Tensor::row(windows[idx.front()].log_std);
  std::size_t r0 = 0;
  for (std::size_t i : idx) {
    const auto& p = windows[i];
    ws.push_back(p.window);
    adv.insert(adv.end(), p.advantages.begin(), p.advantages.end());
    fb.value_targets.insert(fb.value_targets.end(), p.targets.begin(), p.targets.end());
    fb.in.old_log_probs.insert(fb.in.old_log_probs.end(), p.old_log_probs.begin(), p.old_log_probs.end());
    std::copy(p.old_mean.values().begin(), p.old_mean.values().end(), fb.in.old_mean.data() + r0 * spec.action_dim());
    r0 += p.window.length;
  }
  fb.batch = model::collate(ws);
  fb.in.actions = fb.batch.actions;
  fb.in.row_weight = imitation_weights(fb.batch);
  fb.in.advantages = normalize_advantages(adv, fb.in.row_weight);
  return fb;
}

struct FinetuneTerms {
  SurrogateTerms actor;
  Var critic;
  Var ppo;
  PretrainTerms pre;
  Var total;  // eta_ppo * L_PPO + eta_pretrain * L_pretrain
};

inline FinetuneTerms finetune_terms(const model::OdmModel& m, const model::ForwardOutputs& f, const FinetuneBatch& fb,
                                    const TrainConfig& cfg) {
  FinetuneTerms t;
  t.actor = actor_surrogate(f.heads.action_mean, f.heads.log_std, fb.in, cfg.clip_eps, cfg.kl_beta);
  t.critic = critic_loss(f.heads.value, fb.value_targets, fb.in.row_weight);
  t.ppo = ppo_loss(t.actor.surrogate, t.critic, cfg);
  t.pre = pretrain_terms(m, f, fb.batch, cfg);
  t.total = nn::add(nn::scale(t.ppo, cfg.eta_ppo), nn::scale(t.pre.total, cfg.eta_pretrain));
  return t;
}

/// PPO epochs over the rollout buffer minimising
/// eta_1 * L_PPO + eta_2 * L_pretrain, where the pretrain term uses the
/// rollouts themselves as targets.
inline FinetuneMetrics finetune_iteration(model::OdmModel& m, const std::vector<Rollout>& rollouts,
                                          const TrainConfig& cfg, bool use_prompt, std::uint64_t seed) {
  if (rollouts.empty()) throw std::invalid_argument("finetune_iteration: empty rollout buffer");
  const std::string task = env::body_name(rollouts.front().episode.env);
  if (m.active_task() != task)
    throw std::invalid_argument("finetune_iteration: task '" + task + "' is not active");
  const auto& spec = m.task(task).spec;
  FinetuneMetrics fm;
  {
    std::vector<double> lengths;
    for (const auto& ro : rollouts) {
      lengths.push_back(static_cast<double>(ro.episode.steps.size()));
      fm.env_steps += ro.episode.steps.size();
    }
    std::tie(fm.mean_return, fm.return_std) = return_stats(rollouts);
    std::tie(fm.mean_length, fm.length_std) = data::mean_std(lengths);
  }
  if (fm.env_steps == 0) throw std::invalid_argument("finetune_iteration: empty rollout buffer");

  const auto windows = detail::ppo_windows(rollouts, spec, cfg);
  const std::size_t per_batch = std::max<std::size_t>(1, cfg.minibatch_steps / cfg.window);
  const auto adam = adam_config(cfg.lr_finetune, cfg);
  double batches = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    for (const auto& idx : data::window_batches(windows.size(), per_batch, detail::mix_seed(seed, epoch))) {
      const FinetuneBatch fb = make_finetune_batch(windows, idx, spec);
      nn::Tape tape;
      const auto f = m.forward_batch(tape, fb.batch, use_prompt);
      const FinetuneTerms terms = finetune_terms(m, f, fb, cfg);
      fm.loss_total += terms.total.item();
      fm.loss_actor += terms.actor.surrogate.item();
      fm.loss_critic += terms.critic.item();
      fm.loss_imitation += terms.pre.imitation.item();
      fm.loss_prediction += terms.pre.prediction.item();
      batches += 1.0;
      tape.backward(terms.total);
      nn::adam_step(m.params(), tape.gradients(m.params()), adam);
    }
  }
  fm.loss_total /= batches;
  fm.loss_actor /= batches;
  fm.loss_critic /= batches;
  fm.loss_imitation /= batches;
  fm.loss_prediction /= batches;
  return fm;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
  double mean_return = 0.0, return_std = 0.0;
  double mean_length = 0.0, length_std = 0.0;
  double mean_distance = 0.0, distance_std = 0.0;
  std::size_t episodes = 0;

  std::string return_str() const { return format_mean_std(mean_return, return_std); }
  std::string length_str() const { return format_mean_std(mean_length, length_std); }
  std::string distance_str() const { return format_mean_std(mean_distance, distance_std); }
};

inline EvalReport summarize(const std::vector<double>& returns, const std::vector<double>& lengths,
                            const std::vector<double>& distances) {
  EvalReport r;
  r.episodes = returns.size();
  std::tie(r.mean_return, r.return_std) = data::mean_std(returns);
  std::tie(r.mean_length, r.length_std) = data::mean_std(lengths);
  std::tie(r.mean_distance, r.distance_std) = data::mean_std(distances);
  return r;
}

/// Deterministic-mean evaluation over `episodes` independent episodes.
inline EvalReport evaluate_policy(const model::OdmModel& m, const std::string& env_name,
                                  const env::ChainEnvConfig& env_cfg, bool use_prompt, std::size_t episodes,
                                  std::uint64_t seed) {
  const auto ro = collect_rollouts(m, env_name, env_cfg, use_prompt, episodes, env_cfg.max_steps, seed, true);
  std::vector<double> ret, len, dist;
  for (const auto& r : ro) {
    ret.push_back(r.episode.total_return());
    len.push_back(static_cast<double>(r.episode.steps.size()));
    dist.push_back(r.distance);
  }
  return summarize(ret, len, dist);
}

/// Uniform random torques within the limits.
inline EvalReport evaluate_random(const std::string& env_name, const env::ChainEnvConfig& env_cfg,
                                  std::size_t episodes, std::uint64_t seed) {
  std::vector<double> ret, len, dist;
  std::mt19937_64 seeder(seed);
  for (std::size_t i = 0; i < episodes; ++i) {
    auto e = env::make_env(env_name, env_cfg);
    const std::uint64_t s = seeder();
    env::Pioneer p(env::Tier::random, e.config(), env::GaitParams{});
    std::mt19937_64 rng(s ^ 0xA5A5A5A5DEADBEEFULL);
    e.reset(s);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t t = 0; t < e.config().max_steps; ++t) {
      const auto r = e.step(p.act(e.state(), t, rng));
      total += r.reward;
      ++steps;
      if (r.done) break;
    }
    ret.push_back(total);
    len.push_back(static_cast<double>(steps));
    dist.push_back(e.state().x);
  }
  return summarize(ret, len, dist);
}

// ---------------------------------------------------------------------------
// Finetuning loop
// ---------------------------------------------------------------------------

struct FinetuneReport {
  std::vector<FinetuneMetrics> iterations;
  std::size_t env_steps = 0;
  bool stopped_on_plateau = false;
};

/// Collect, update, repeat. With cfg.few_shot_steps set, the total number of
/// environment steps is capped: each iteration's horizon shrinks to fit the
/// remaining budget and the loop ends once fewer than N steps remain.
inline FinetuneReport run_finetune(model::OdmModel& m, const std::string& env_name, const env::ChainEnvConfig& env_cfg,
                                   const TrainConfig& cfg, bool use_prompt, std::uint64_t seed,
                                   const MetricsSink& sink = {}) {
  cfg.validate();
  m.activate(env::body_name(env_name));
  const auto t0 = std::chrono::steady_clock::now();
  FinetuneReport rep;
  std::vector<double> history;
  double best_window_mean = -std::numeric_limits<double>::infinity();
  std::size_t best_at = 0;
  for (std::size_t it = 0; it < cfg.finetune_iterations; ++it) {
    std::size_t horizon = std::min(cfg.horizon, env_cfg.max_steps);
    if (cfg.few_shot_steps > 0) {
      const std::size_t remaining = cfg.few_shot_steps - std::min(cfg.few_shot_steps, rep.env_steps);
      if (remaining < cfg.actors) break;
      horizon = std::min(horizon, remaining / cfg.actors);
    }
    const auto ro = collect_rollouts(m, env_name, env_cfg, use_prompt, cfg.actors, horizon,
                                     detail::mix_seed(seed, 0x5EED, it));
    const auto fm = finetune_iteration(m, ro, cfg, use_prompt, detail::mix_seed(seed, 0xF1, it));
    rep.env_steps += fm.env_steps;
    rep.iterations.push_back(fm);
    if (sink) {
      MetricsRow r;
      r.phase = "finetune";
      r.course = env_name;
      r.iteration = it;
      r.loss_total = fm.loss_total;
      r.loss_imitation = fm.loss_imitation;
      r.loss_prediction = fm.loss_prediction;
      r.loss_actor = fm.loss_actor;
      r.loss_critic = fm.loss_critic;
      r.mean_return = fm.mean_return;
      r.return_std = fm.return_std;
      r.mean_length = fm.mean_length;
      r.length_std = fm.length_std;
      r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      r.seed = seed;
      sink(r);
    }
    if (cfg.plateau_stop) {
      history.push_back(fm.mean_return);
      if (history.size() >= cfg.plateau_window) {
        double s = 0.0;
        for (std::size_t k = history.size() - cfg.plateau_window; k < history.size(); ++k) s += history[k];
        const double mean = s / static_cast<double>(cfg.plateau_window);
        if (mean > best_window_mean + cfg.plateau_tolerance * std::abs(best_window_mean) ||
            !std::isfinite(best_window_mean)) {
          best_window_mean = mean;
          best_at = it;
        } else if (it - best_at >= cfg.plateau_patience) {
          rep.stopped_on_plateau = true;
          break;
        }
      }
    }
  }
  return rep;
}

}  // namespace odm::training
