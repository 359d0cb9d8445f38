#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "odm/model/morphology.hpp"
#include "odm/numerics/tape.hpp"
#include "odm/training/config.hpp"

namespace odm::training {

using nn::Tensor;
using nn::Var;

inline double discounted_return(const std::vector<double>& rewards, double gamma) {
  double r = 0.0, g = 1.0;
  for (double x : rewards) {
    if (!std::isfinite(x)) throw std::domain_error("discounted_return: non-finite reward");
    r += g * x;
    g *= gamma;
  }
  return r;
}

struct AdvantageBatch {
  std::vector<double> advantages;
  std::vector<double> value_targets;  // r_t + gamma * V(s_{t+1}), 0 bootstrap at a terminal
  std::vector<double> old_log_probs;
  std::vector<double> old_values;
};

/// values holds V(s_0..s_T), one more entry than rewards. When `done` the
/// final entry is treated as 0.
inline AdvantageBatch gae_advantages(const std::vector<double>& rewards, const std::vector<double>& values, bool done,
                                     double gamma, double lambda) {
  if (values.size() != rewards.size() + 1)
    throw std::invalid_argument("gae_advantages: expected " + std::to_string(rewards.size() + 1) + " values, got " +
                                std::to_string(values.size()));
  const std::size_t n = rewards.size();
  AdvantageBatch b;
  b.advantages.assign(n, 0.0);
  b.value_targets.assign(n, 0.0);
  b.old_values.assign(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n));
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double v_next = (t + 1 == n && done) ? 0.0 : values[t + 1];
    b.value_targets[t] = rewards[t] + gamma * v_next;
    const double delta = b.value_targets[t] - values[t];
    next_adv = delta + gamma * lambda * next_adv;
    b.advantages[t] = next_adv;
  }
  return b;
}

/// Mean 0, std 1 over entries with nonzero weight; entries with zero weight
/// are set to 0.
inline std::vector<double> normalize_advantages(const std::vector<double>& adv, const std::vector<double>& weight) {
  double n = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < adv.size(); ++i)
    if (weight[i] > 0.0) {
      mean += adv[i];
      n += 1.0;
    }
  if (n == 0.0) throw std::invalid_argument("normalize_advantages: no weighted entries");
  mean /= n;
  double var = 0.0;
  for (std::size_t i = 0; i < adv.size(); ++i)
    if (weight[i] > 0.0) var += (adv[i] - mean) * (adv[i] - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(adv.size(), 0.0);
  for (std::size_t i = 0; i < adv.size(); ++i)
    if (weight[i] > 0.0) out[i] = sd > 1e-8 ? (adv[i] - mean) / sd : adv[i] - mean;
  return out;
}

namespace detail {

/// Row weights rescaled to sum to one over `cols` entries per row.
inline Tensor mean_weights(const std::vector<double>& row_weight, std::size_t cols) {
  double total = 0.0;
  for (double w : row_weight) total += w;
  Tensor w = Tensor::matrix(row_weight.size(), cols);
  if (total <= 0.0) return w;
  for (std::size_t r = 0; r < row_weight.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) w.at(r, c) = row_weight[r] / (total * static_cast<double>(cols));
  return w;
}

inline Tensor compact_rows(const Tensor& full, const std::vector<std::uint8_t>& mask) {
  if (full.cols() != mask.size()) throw std::invalid_argument("masked loss: target width does not match mask");
  std::size_t kept = 0;
  for (auto m : mask) kept += m;
  Tensor out = Tensor::matrix(full.rows(), kept);
  for (std::size_t r = 0; r < full.rows(); ++r) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < mask.size(); ++j)
      if (mask[j]) out.at(r, c++) = full.at(r, j);
  }
  return out;
}

}  // namespace detail

/// Weighted mean of squared errors: rows weighted by `row_weight`, every
/// column counted equally. Returns a constant 0 when all weights are 0.
inline Var masked_mse(Var pred, const Tensor& target, const std::vector<double>& row_weight) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || row_weight.size() != pred.rows())
    throw std::invalid_argument("masked_mse: shape mismatch " + nn::shape_str(pred.shape()) + " vs " +
                                nn::shape_str(target.shape()));
  nn::Tape& tape = *pred.tape();
  const Tensor w = detail::mean_weights(row_weight, pred.cols());
  return nn::weighted_sum(nn::square(nn::sub(pred, tape.constant(target))), w);
}

/// Imitation MSE against compact targets (masked slots already removed).
inline Var imitation_loss(Var pred_actions, const Tensor& target_actions, const std::vector<double>& row_weight) {
  double total = 0.0;
  for (double w : row_weight) total += w;
  if (pred_actions.cols() == 0 || total <= 0.0) throw std::invalid_argument("imitation_loss: empty mask");
  return masked_mse(pred_actions, target_actions, row_weight);
}

/// Imitation MSE against targets in the full K*m layout; masked slots are
/// dropped before comparison.
inline Var imitation_loss(Var pred_actions, const Tensor& target_full, const model::MorphologySpec& spec,
                          const std::vector<double>& row_weight) {
  return imitation_loss(pred_actions, detail::compact_rows(target_full, spec.action_mask), row_weight);
}

/// Next-state reconstruction MSE. o_pro is in the full K*n layout; masked
/// slots are dropped. Rows with zero weight (padding, episode start) are
/// excluded; if nothing is left the loss is a constant 0.
inline Var prediction_loss(Var pred_states, const Tensor& o_pro, const Tensor& o_ext, const model::MorphologySpec& spec,
                           const std::vector<double>& row_weight) {
  Tensor target = Tensor::matrix(o_pro.rows(), spec.state_dim());
  for (std::size_t r = 0; r < o_pro.rows(); ++r) {
    auto s = spec.compact_state(o_pro.row_span(r), o_ext.row_span(r));
    std::copy(s.begin(), s.end(), target.row_span(r).begin());
  }
  return masked_mse(pred_states, target, row_weight);
}

/// Critic MSE between current values (R x 1) and fixed targets.
inline Var critic_loss(Var values, const std::vector<double>& targets, const std::vector<double>& row_weight) {
  Tensor t = Tensor::matrix(targets.size(), 1);
  for (std::size_t i = 0; i < targets.size(); ++i) t[i] = targets[i];
  return masked_mse(values, t, row_weight);
}

/// Per-row diagonal Gaussian log density (R x 1).
inline Var gaussian_log_prob(Var mean, Var log_std, const Tensor& actions) {
  nn::Tape& tape = *mean.tape();
  const std::size_t a = mean.cols();
  Var z = nn::mul_row(nn::sub(tape.constant(actions), mean), nn::exp(nn::scale(log_std, -1.0)));
  Var quad = nn::scale(nn::sum_cols(nn::square(z)), -0.5);
  Var norm = nn::add_scalar(nn::scale(nn::sum(log_std), -1.0),
                            -0.5 * static_cast<double>(a) * std::log(2.0 * std::numbers::pi));
  return nn::add_row(quad, nn::reshape(norm, nn::Shape{1, 1}));
}

inline double gaussian_log_prob(const std::vector<double>& mean, const std::vector<double>& log_std,
                                const std::vector<double>& action) {
  double lp = 0.0;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    const double z = (action[j] - mean[j]) / std::exp(log_std[j]);
    lp += -0.5 * z * z - log_std[j] - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

/// KL(old || new) per row for diagonal Gaussians (R x 1). old_mean is R x A,
/// old_log_std 1 x A.
inline Var gaussian_kl(const Tensor& old_mean, const Tensor& old_log_std, Var new_mean, Var new_log_std) {
  nn::Tape& tape = *new_mean.tape();
  const std::size_t a = new_mean.cols();
  Tensor old_var(old_log_std.shape());
  double old_log_sum = 0.0;
  for (std::size_t j = 0; j < a; ++j) {
    old_var[j] = std::exp(2.0 * old_log_std[j]);
    old_log_sum += old_log_std[j];
  }
  Var num = nn::add_row(nn::square(nn::sub(tape.constant(old_mean), new_mean)), tape.constant(old_var));
  Var quad = nn::scale(nn::sum_cols(nn::mul_row(num, nn::exp(nn::scale(new_log_std, -2.0)))), 0.5);
  Var offset = nn::add_scalar(nn::sum(new_log_std), -old_log_sum - 0.5 * static_cast<double>(a));
  return nn::add_row(quad, nn::reshape(offset, nn::Shape{1, 1}));
}

struct SurrogateInputs {
  Tensor actions;                    // R x A, the executed (sampled) actions
  std::vector<double> old_log_probs;  // R
  std::vector<double> advantages;     // R, already normalised
  Tensor old_mean;                    // R x A
  Tensor old_log_std;                 // 1 x A
  std::vector<double> row_weight;     // R, 0 for padding
};

struct SurrogateTerms {
  Var surrogate;  // weighted mean of the clipped objective minus beta * KL
  Var clipped;    // weighted mean of min(ratio * A, clip(ratio) * A)
  Var kl;         // weighted mean KL(old || new)
};

/// Clipped surrogate minus beta * KL(old || new); to be maximised.
inline SurrogateTerms actor_surrogate(Var new_mean, Var new_log_std, const SurrogateInputs& in, double eps,
                                      double beta) {
  nn::Tape& tape = *new_mean.tape();
  const std::size_t rows = new_mean.rows();
  if (in.old_log_probs.size() != rows || in.advantages.size() != rows || in.row_weight.size() != rows)
    throw std::invalid_argument("actor_surrogate: row count mismatch");
  Tensor old_lp = Tensor::matrix(rows, 1), adv = Tensor::matrix(rows, 1);
  for (std::size_t r = 0; r < rows; ++r) {
    old_lp[r] = in.old_log_probs[r];
    adv[r] = in.advantages[r];
  }
  Var logp = gaussian_log_prob(new_mean, new_log_std, in.actions);
  Var ratio = nn::exp(nn::sub(logp, tape.constant(old_lp)));
  Var surr1 = nn::mul_const(ratio, adv);
  Var surr2 = nn::mul_const(nn::clamp(ratio, 1.0 - eps, 1.0 + eps), adv);
  const Tensor w = detail::mean_weights(in.row_weight, 1);
  SurrogateTerms out;
  out.clipped = nn::weighted_sum(nn::minimum(surr1, surr2), w);
  out.kl = nn::weighted_sum(gaussian_kl(in.old_mean, in.old_log_std, new_mean, new_log_std), w);
  out.surrogate = nn::sub(out.clipped, nn::scale(out.kl, beta));
  return out;
}

/// -|eta_A| * actor + eta_C * critic, to be minimised.
inline double ppo_loss(double actor, double critic, const TrainConfig& cfg) {
  return -std::abs(cfg.eta_actor) * actor + cfg.eta_critic * critic;
}

inline Var ppo_loss(Var actor, Var critic, const TrainConfig& cfg) {
  return nn::add(nn::scale(actor, -std::abs(cfg.eta_actor)), nn::scale(critic, cfg.eta_critic));
}

}  // namespace odm::training
