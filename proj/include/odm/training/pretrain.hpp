#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "odm/data/dataset.hpp"
#include "odm/model/odm_model.hpp"
#include "odm/numerics/optim.hpp"
#include "odm/training/config.hpp"
#include "odm/training/losses.hpp"
#include "odm/training/metrics.hpp"

namespace odm::training {

struct PretrainLosses {
  double total = 0.0;
  double imitation = 0.0;
  double prediction = 0.0;
};

struct PretrainTerms {
  Var total, imitation, prediction;
};

inline std::vector<double> imitation_weights(const model::WindowBatch& b) {
  std::vector<double> w(b.rows());
  for (std::size_t r = 0; r < w.size(); ++r) w[r] = b.valid[r] ? 1.0 : 0.0;
  return w;
}

/// The very first state of an episode has nothing to be predicted from.
inline std::vector<double> prediction_weights(const model::WindowBatch& b) {
  std::vector<double> w(b.rows());
  for (std::size_t r = 0; r < w.size(); ++r) w[r] = (b.valid[r] && b.timesteps[r] > 0) ? 1.0 : 0.0;
  return w;
}

/// eta_i * L_imitation + eta_p * L_prediction on an already-run forward pass.
inline PretrainTerms pretrain_terms(const model::OdmModel& m, const model::ForwardOutputs& f,
                                    const model::WindowBatch& b, const TrainConfig& cfg) {
  const auto& spec = m.task(b.task).spec;
  PretrainTerms t;
  t.imitation = imitation_loss(f.heads.action_mean, b.actions, imitation_weights(b));
  t.prediction = prediction_loss(f.heads.predicted_state, b.o_pro, b.o_ext, spec, prediction_weights(b));
  t.total = nn::add(nn::scale(t.imitation, cfg.eta_imitation), nn::scale(t.prediction, cfg.eta_prediction));
  return t;
}

inline nn::AdamConfig adam_config(double lr, const TrainConfig& cfg) {
  nn::AdamConfig a;
  a.lr = lr;
  a.weight_decay = cfg.weight_decay;
  a.max_grad_norm = cfg.max_grad_norm;
  return a;
}

/// One Adam step on L_pretrain. The batch's task must be the active one.
inline PretrainLosses pretrain_step(model::OdmModel& m, const model::WindowBatch& b, const TrainConfig& cfg,
                                    bool use_prompt) {
  if (m.active_task() != b.task)
    throw std::invalid_argument("pretrain_step: batch task '" + b.task + "' is not the active task '" +
                                m.active_task() + "'");
  nn::Tape tape;
  const auto f = m.forward_batch(tape, b, use_prompt);
  const auto t = pretrain_terms(m, f, b, cfg);
  PretrainLosses out{t.total.item(), t.imitation.item(), t.prediction.item()};
  tape.backward(t.total);
  nn::adam_step(m.params(), tape.gradients(m.params()), adam_config(cfg.lr_pretrain, cfg));
  return out;
}

inline PretrainLosses pretrain_eval(const model::OdmModel& m, const model::WindowBatch& b, const TrainConfig& cfg,
                                    bool use_prompt) {
  nn::Tape tape(nn::Tape::Mode::inference);
  const auto f = m.forward_batch(tape, b, use_prompt);
  const auto t = pretrain_terms(m, f, b, cfg);
  return {t.total.item(), t.imitation.item(), t.prediction.item()};
}

/// Imitation MSE over every valid step of `windows` (inference only).
inline double imitation_mse(const model::OdmModel& m, const std::vector<model::TrajectoryWindow>& windows,
                            bool use_prompt, std::size_t batch_windows = 64) {
  if (windows.empty()) throw std::invalid_argument("imitation_mse: no windows");
  double sse = 0.0, count = 0.0;
  for (std::size_t i = 0; i < windows.size(); i += batch_windows) {
    const std::size_t end = std::min(windows.size(), i + batch_windows);
    const auto b = model::collate(std::span<const model::TrajectoryWindow>(windows.data() + i, end - i));
    nn::Tape tape(nn::Tape::Mode::inference);
    const auto f = m.forward_batch(tape, b, use_prompt);
    const Tensor& pred = f.heads.action_mean.value();
    for (std::size_t r = 0; r < b.rows(); ++r) {
      if (!b.valid[r]) continue;
      for (std::size_t j = 0; j < pred.cols(); ++j) {
        const double d = pred.at(r, j) - b.actions.at(r, j);
        sse += d * d;
        count += 1.0;
      }
    }
  }
  return sse / count;
}

// ---------------------------------------------------------------------------
// Curriculum
// ---------------------------------------------------------------------------

/// Pretraining data of one task: training episodes per tier and held-out
/// validation episodes.
struct TaskData {
  std::map<std::string, std::vector<data::EpisodeRecord>> train;
  std::vector<data::EpisodeRecord> validation;
};

using CurriculumData = std::map<std::string, TaskData>;

struct CourseReport {
  std::string task;
  double val_start = 0.0;
  double val_end = 0.0;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_val;
  std::map<std::string, std::size_t> hashes_before;  // per registered task prefix
  std::map<std::string, std::size_t> hashes_after;
};

struct CurriculumReport {
  std::vector<CourseReport> courses;
  std::vector<std::string> warnings;
};

inline std::map<std::string, std::size_t> task_hashes(const model::OdmModel& m) {
  std::map<std::string, std::size_t> h;
  for (const auto& name : m.task_names()) h[name] = m.params().hash_prefix(m.task(name).prefix);
  return h;
}

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::mt19937_64 rng(seq);
  return rng();
}

struct PreparedTask {
  std::map<std::string, std::vector<model::TrajectoryWindow>> train;
  std::vector<model::TrajectoryWindow> validation;
};

inline PreparedTask prepare_task(const model::OdmModel& m, const std::string& task, const TaskData& d,
                                 const TrainConfig& cfg) {
  const auto& spec = m.task(task).spec;
  PreparedTask p;
  for (const auto& [tier, eps] : d.train)
    if (!eps.empty()) p.train[tier] = data::dataset_windows(eps, spec, cfg.window, cfg.window_stride);
  if (!d.validation.empty()) p.validation = data::dataset_windows(d.validation, spec, cfg.window, cfg.window_stride);
  return p;
}

/// Shuffled minibatches over one tier's windows.
inline std::vector<model::WindowBatch> epoch_batches(const std::vector<model::TrajectoryWindow>& windows,
                                                     std::size_t batch_windows, std::uint64_t seed) {
  std::vector<model::WindowBatch> out;
  for (const auto& idx : data::window_batches(windows.size(), batch_windows, seed)) {
    std::vector<model::TrajectoryWindow> w;
    w.reserve(idx.size());
    for (std::size_t i : idx) w.push_back(windows[i]);
    out.push_back(model::collate(w));
  }
  return out;
}

}  // namespace detail

/// Courses in order; within a course, epoch e trains on tier
/// tiers[e % tiers.size()]. Only the course's task modules (and the shared
/// backbone) are updated. With plan.interleave every epoch instead visits
/// all courses' batches in one shuffled order.
inline CurriculumReport run_curriculum(model::OdmModel& m, const CurriculumPlan& plan, const CurriculumData& data,
                                       const TrainConfig& cfg, bool use_prompt, std::uint64_t seed,
                                       const MetricsSink& sink = {}) {
  plan.validate();
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  CurriculumReport report;

  std::map<std::string, detail::PreparedTask> prepared;
  for (const auto& c : plan.courses) {
    if (!m.has_task(c.task)) throw std::invalid_argument("run_curriculum: task '" + c.task + "' is not registered");
    auto it = data.find(c.task);
    if (it == data.end()) throw std::invalid_argument("run_curriculum: no data for task '" + c.task + "'");
    prepared[c.task] = detail::prepare_task(m, c.task, it->second, cfg);
    for (const auto& tier : c.tiers)
      if (!prepared[c.task].train.count(tier))
        report.warnings.push_back("course '" + c.task + "': tier '" + tier + "' missing, skipped");
  }

  auto validation = [&](const std::string& task) {
    const auto& v = prepared[task].validation;
    return v.empty() ? NAN : imitation_mse(m, v, use_prompt);
  };
  auto emit = [&](const std::string& course, std::size_t iteration, const PretrainLosses& l, double val) {
    if (!sink) return;
    MetricsRow r;
    r.phase = "pretrain";
    r.course = course;
    r.iteration = iteration;
    r.loss_total = l.total;
    r.loss_imitation = l.imitation;
    r.loss_prediction = l.prediction;
    r.val_mse = val;
    r.wall_seconds = elapsed();
    r.seed = seed;
    sink(r);
  };

  struct Accum {
    PretrainLosses sum;
    double n = 0.0;
    void add(const PretrainLosses& l) {
      sum.total += l.total;
      sum.imitation += l.imitation;
      sum.prediction += l.prediction;
      n += 1.0;
    }
    PretrainLosses mean() const {
      if (n == 0.0) return {NAN, NAN, NAN};
      return {sum.total / n, sum.imitation / n, sum.prediction / n};
    }
  };

  if (!plan.interleave) {
    for (std::size_t ci = 0; ci < plan.courses.size(); ++ci) {
      const Course& c = plan.courses[ci];
      m.activate(c.task);
      CourseReport cr;
      cr.task = c.task;
      cr.hashes_before = task_hashes(m);
      cr.val_start = validation(c.task);
      emit(c.task, 0, {NAN, NAN, NAN}, cr.val_start);
      for (std::size_t e = 0; e < c.epochs; ++e) {
        const std::string& tier = c.tiers[e % c.tiers.size()];
        Accum acc;
        auto it = prepared[c.task].train.find(tier);
        if (it != prepared[c.task].train.end())
          for (const auto& b : detail::epoch_batches(it->second, cfg.pretrain_batch_windows,
                                                     detail::mix_seed(seed, ci, e)))
            acc.add(pretrain_step(m, b, cfg, use_prompt));
        const double val = validation(c.task);
        cr.epoch_loss.push_back(acc.mean().total);
        cr.epoch_val.push_back(val);
        emit(c.task, e + 1, acc.mean(), val);
      }
      cr.val_end = cr.epoch_val.empty() ? cr.val_start : cr.epoch_val.back();
      cr.hashes_after = task_hashes(m);
      report.courses.push_back(std::move(cr));
    }
    return report;
  }

  // Interleaved ablation: same number of task-epochs, shuffled across tasks.
  std::size_t epochs = 0;
  for (const auto& c : plan.courses) epochs = std::max(epochs, c.epochs);
  CourseReport cr;
  cr.task = "all";
  cr.hashes_before = task_hashes(m);
  double val_sum = 0.0;
  for (const auto& c : plan.courses) val_sum += validation(c.task);
  cr.val_start = val_sum / static_cast<double>(plan.courses.size());
  emit("all", 0, {NAN, NAN, NAN}, cr.val_start);
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<model::WindowBatch> pool;
    for (std::size_t ci = 0; ci < plan.courses.size(); ++ci) {
      const Course& c = plan.courses[ci];
      if (e >= c.epochs) continue;
      auto it = prepared[c.task].train.find(c.tiers[e % c.tiers.size()]);
      if (it == prepared[c.task].train.end()) continue;
      auto b = detail::epoch_batches(it->second, cfg.pretrain_batch_windows, detail::mix_seed(seed, ci, e));
      std::move(b.begin(), b.end(), std::back_inserter(pool));
    }
    std::mt19937_64 rng(detail::mix_seed(seed, 0xC0FFEE, e));
    std::shuffle(pool.begin(), pool.end(), rng);
    Accum acc;
    for (const auto& b : pool) {
      m.activate(b.task);
      acc.add(pretrain_step(m, b, cfg, use_prompt));
    }
    val_sum = 0.0;
    for (const auto& c : plan.courses) val_sum += validation(c.task);
    const double val = val_sum / static_cast<double>(plan.courses.size());
    cr.epoch_loss.push_back(acc.mean().total);
    cr.epoch_val.push_back(val);
    emit("all", e + 1, acc.mean(), val);
  }
  cr.val_end = cr.epoch_val.empty() ? cr.val_start : cr.epoch_val.back();
  cr.hashes_after = task_hashes(m);
  report.courses.push_back(std::move(cr));
  return report;
}

}  // namespace odm::training
