#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace odm::training {

/// Training hyper-parameters. Defaults are the reference values; the desk
/// preset in configs/ overrides the sizes.
struct TrainConfig {
  double gamma = 0.90;
  double lambda = 0.1;
  double clip_eps = 0.1;
  double kl_beta = 0.1;
  double eta_actor = -1.0;  // only the magnitude is used; the surrogate is always ascended
  double eta_critic = 0.1;
  double eta_imitation = 1.0;
  double eta_prediction = 0.1;
  double eta_ppo = 1.0;
  double eta_pretrain = 1e-5;
  std::size_t actors = 32;    // N
  std::size_t horizon = 1000; // T
  std::size_t window = 10;    // T_w
  double lr_pretrain = 1e-5;
  double lr_finetune = 5e-4;
  double weight_decay = 0.01;
  double max_grad_norm = 0.0;  // 0 disables clipping

  // Pretraining
  std::size_t pretrain_epochs = 20;      // per curriculum course
  std::size_t pretrain_batch_windows = 16;
  std::size_t window_stride = 0;         // 0 = non-overlapping
  double validation_fraction = 0.05;

  // Finetuning
  std::size_t finetune_iterations = 300;
  std::size_t ppo_epochs = 4;
  std::size_t minibatch_steps = 256;
  std::size_t few_shot_steps = 0;        // 0 = no cap on environment steps
  bool plateau_stop = false;
  std::size_t plateau_window = 100;
  std::size_t plateau_patience = 300;
  double plateau_tolerance = 0.01;

  std::size_t eval_episodes = 100;

  void validate() const {
    auto bad = [](const std::string& what) { throw std::invalid_argument("TrainConfig: " + what); };
    if (!(gamma >= 0.0 && gamma < 1.0)) bad("gamma must be in [0, 1)");
    if (!(lambda >= 0.0 && lambda <= 1.0)) bad("lambda must be in [0, 1]");
    if (!(clip_eps > 0.0)) bad("clip_eps must be > 0");
    if (kl_beta < 0.0) bad("kl_beta must be >= 0");
    if (actors == 0 || horizon == 0 || window == 0) bad("actors, horizon and window must be >= 1");
    if (lr_pretrain < 0.0 || lr_finetune < 0.0 || weight_decay < 0.0) bad("rates must be >= 0");
    if (pretrain_batch_windows == 0 || ppo_epochs == 0 || minibatch_steps == 0) bad("batch sizes must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) bad("validation_fraction must be in (0, 1)");
  }
};

/// One contiguous pretraining segment on a single body shape. Epoch e
/// trains on tiers[e % tiers.size()].
struct Course {
  std::string task;
  std::vector<std::string> tiers;
  std::size_t epochs = 20;
};

/// Courses ordered easiest to hardest.
struct CurriculumPlan {
  std::vector<Course> courses;
  bool interleave = false;  // ablation: one shuffled pool over every course

  void validate() const {
    if (courses.empty()) throw std::invalid_argument("CurriculumPlan: no courses");
    for (const auto& c : courses)
      if (c.tiers.empty() || c.epochs == 0)
        throw std::invalid_argument("CurriculumPlan: course '" + c.task + "' has no tiers or epochs");
  }
};

/// Tier rotation ending on the expert tier so each course finishes on the
/// cleanest demonstrations.
inline std::vector<std::string> default_tier_rotation() {
  return {"random", "medium-replay", "medium", "medium-expert", "expert"};
}

}  // namespace odm::training
