#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "odm/harness/commands.hpp"

using odm::harness::RunConfig;

int main(int argc, char** argv) {
  CLI::App app{"Morphology-aware decision transformer: data, pretraining, finetuning, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string out, data_dir, checkpoint, terrain, target;
  std::size_t few_shot_steps = 0;
  bool no_pretrain = false, no_finetune = false, no_curriculum = false, no_prompt = false;
  bool from_scratch = false, fresh_task = false, dry_run = false;

  auto* o_config = app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Override one key, e.g. --set train.actors=16");
  auto* o_seed = app.add_option("--seed", seed, "Run seed");
  auto* o_out = app.add_option("--out", out, "Parent directory for run directories");
  auto* o_data = app.add_option("--data", data_dir, "Dataset directory");
  auto* o_ckpt = app.add_option("--checkpoint", checkpoint, "Input checkpoint");
  auto* o_target = app.add_option("--target", target, "Finetune/eval body, e.g. chain-4");
  auto* o_terrain = app.add_option("--terrain", terrain, "Terrain of the target")->check(CLI::IsMember({"flat", "vt", "obs"}));
  app.add_flag("--no-pretrain", no_pretrain, "Ablation: skip pretraining");
  app.add_flag("--no-finetune", no_finetune, "Ablation: evaluate the pretrained model without finetuning");
  app.add_flag("--no-curriculum", no_curriculum, "Ablation: one shuffled pool instead of ordered courses");
  app.add_flag("--no-prompt", no_prompt, "Ablation: drop the morphology prompt");
  auto* o_few = app.add_option("--few-shot", few_shot_steps, "Cap finetuning at this many env steps")
                    ->expected(0, 1)
                    ->default_str("500");
  app.add_flag("--from-scratch", from_scratch, "Finetune a freshly initialised model");
  app.add_flag("--fresh-task", fresh_task, "Register a new task for a body the checkpoint lacks");
  app.add_flag("--dry-run", dry_run, "Print the plan without writing");

  auto* gen = app.add_subcommand("gen-data", "Generate pioneer datasets for every (env, tier) pair");
  auto* pre = app.add_subcommand("pretrain", "Curriculum pretraining on offline data");
  auto* fin = app.add_subcommand("finetune", "PPO finetuning on the target env");
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint against a random policy");
  auto* pipe = app.add_subcommand("pipeline", "gen-data, pretrain, finetune and eval in one run");
  auto* gait = app.add_subcommand("gait-search", "Regenerate the committed expert gait table");
  std::string header_path;
  std::size_t max_joints = 8;
  gait->add_option("--header", header_path, "Write the generated header here");
  gait->add_option("--max-joints", max_joints, "Largest joint count to tabulate");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gait->parsed()) {
      const std::string text = odm::harness::gait_table_header(max_joints, &std::cerr);
      if (header_path.empty()) {
        std::cout << text;
      } else {
        std::ofstream(header_path, std::ios::binary) << text;
      }
      return 0;
    }

    RunConfig c;
    if (*o_config) odm::harness::apply_ini_file(c, config_path);
    for (const auto& s : overrides) odm::harness::apply_override(c, s);
    if (*o_seed) c.seed = seed;
    if (*o_out) c.out = out;
    if (*o_data) c.data_dir = data_dir;
    if (*o_ckpt) c.checkpoint = checkpoint;
    if (*o_target) c.target = target;
    if (*o_terrain) c.terrain = terrain;
    if (*o_few) {
      c.few_shot = true;
      if (few_shot_steps > 0) c.few_shot_steps = few_shot_steps;
    }
    c.no_pretrain = c.no_pretrain || no_pretrain;
    c.no_finetune = c.no_finetune || no_finetune;
    c.no_curriculum = c.no_curriculum || no_curriculum;
    c.no_prompt = c.no_prompt || no_prompt;
    c.from_scratch = c.from_scratch || from_scratch;
    c.fresh_task = c.fresh_task || fresh_task;
    c.dry_run = dry_run;

    if (gen->parsed()) return odm::harness::cmd_gen_data(c, std::cout);
    if (pre->parsed()) return odm::harness::cmd_pretrain(c, std::cout);
    if (fin->parsed()) return odm::harness::cmd_finetune(c, std::cout);
    if (ev->parsed()) return odm::harness::cmd_eval(c, std::cout);
    if (pipe->parsed()) return odm::harness::cmd_pipeline(c, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
