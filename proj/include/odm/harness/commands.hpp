#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "odm/data/dataset.hpp"
#include "odm/env/pioneer.hpp"
#include "odm/harness/plots.hpp"
#include "odm/harness/run_config.hpp"
#include "odm/model/model_io.hpp"
#include "odm/training/finetune.hpp"
#include "odm/training/pretrain.hpp"

namespace odm::harness {

namespace fs = std::filesystem;

/// runs/<timestamp>-<command>-<seed>/ with fixed child names.
struct RunDir {
  fs::path root;

  fs::path checkpoint() const { return root / "checkpoint.odm"; }
  fs::path metrics() const { return root / "metrics.csv"; }
  fs::path resolved() const { return root / "config.resolved"; }
  fs::path plots() const { return root / "plots"; }
  fs::path manifests() const { return root / "manifests"; }
  fs::path report() const { return root / "report.md"; }
  fs::path report_csv() const { return root / "report.csv"; }
};

inline RunDir make_run_dir(const RunConfig& c) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = std::string(stamp) + "-" + c.command + "-" + std::to_string(c.seed);
  fs::path root = fs::path(c.out) / base;
  for (int k = 1; fs::exists(root); ++k) root = fs::path(c.out) / (base + "." + std::to_string(k));
  fs::create_directories(root);
  RunDir d{root};
  std::ofstream(d.resolved(), std::ios::binary) << resolved_text(c);
  return d;
}

/// Appends rows to metrics.csv, flushing each so a crashed run keeps its curve.
class MetricsFile {
 public:
  explicit MetricsFile(const fs::path& path) : out_(path, std::ios::binary | std::ios::app) {
    if (!out_) throw std::runtime_error("cannot write metrics '" + path.string() + "'");
    if (fs::file_size(path) == 0) out_ << training::metrics_header() << "\n";
  }
  void write(const training::MetricsRow& r) { out_ << training::metrics_line(r) << "\n" << std::flush; }
  training::MetricsSink sink() {
    return [this](const training::MetricsRow& r) { write(r); };
  }

 private:
  std::ofstream out_;
};

namespace detail {

/// Stable 64-bit string hash for deriving per-item seeds.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t item_seed(std::uint64_t seed, const std::string& item) {
  return training::detail::mix_seed(seed, fnv1a(item));
}

inline std::string dataset_path(const RunConfig& c, const std::string& env, const std::string& tier) {
  return (fs::path(c.data_dir) / data::dataset_file_name(env, tier)).string();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct DataPlanItem {
  std::string env;
  std::string tier;
  std::string path;
  std::uint64_t seed = 0;
};

/// One dataset per (env, tier) pair. Each pair's seed depends only on the
/// run seed and its own names, so adding envs leaves other files unchanged.
inline std::vector<DataPlanItem> data_plan(const RunConfig& c) {
  std::vector<DataPlanItem> plan;
  for (const auto& e : c.envs)
    for (const auto& t : c.tiers) plan.push_back({e, t, detail::dataset_path(c, e, t), detail::item_seed(c.seed, e + "/" + t)});
  return plan;
}

inline std::vector<data::DatasetManifest> run_gen_data(const RunConfig& c, const RunDir* dir, std::ostream& log) {
  std::vector<data::DatasetManifest> out;
  const auto plan = data_plan(c);
  if (c.dry_run) {
    log << "plan: " << plan.size() << " datasets, " << c.episodes_per_tier << " episodes each\n";
    for (const auto& p : plan) log << "  " << p.env << " " << p.tier << " seed=" << p.seed << " -> " << p.path << "\n";
    return out;
  }
  fs::create_directories(c.data_dir);
  for (const auto& p : plan) {
    const auto ds = data::generate_dataset(p.env, env::parse_tier(p.tier), c.episodes_per_tier, p.seed, c.env);
    const auto m = data::save_dataset(ds, p.path);
    if (dir) {
      fs::create_directories(dir->manifests());
      fs::copy_file(data::manifest_path(p.path), dir->manifests() / fs::path(data::manifest_path(p.path)).filename(),
                    fs::copy_options::overwrite_existing);
    }
    log << p.env << " " << p.tier << ": " << m.episodes << " episodes, return "
        << training::format_mean_std(m.return_mean, m.return_std) << "\n";
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

inline std::unique_ptr<model::OdmModel> fresh_model(const RunConfig& c, const std::vector<std::string>& envs) {
  auto m = std::make_unique<model::OdmModel>(effective_model(c), c.seed);
  for (const auto& e : envs) {
    const auto body = env::body_name(e);
    if (!m->has_task(body)) m->register_task(env::make_env(body, c.env).spec());
  }
  return m;
}

/// Reads the configured tiers of every curriculum env. Validation episodes
/// are held out of the expert tier (or the first configured tier if expert
/// is not used).
inline training::CurriculumData load_curriculum_data(const RunConfig& c) {
  training::CurriculumData out;
  const std::string val_tier =
      std::find(c.course_tiers.begin(), c.course_tiers.end(), "expert") != c.course_tiers.end() ? "expert"
                                                                                                : c.course_tiers.front();
  for (const auto& e : c.curriculum) {
    const std::string body = env::body_name(e);
    training::TaskData& td = out[body];
    for (const auto& tier : c.course_tiers) {
      const auto path = detail::dataset_path(c, e, tier);
      if (!fs::exists(path)) throw std::runtime_error("missing dataset '" + path + "' (run gen-data first)");
      const auto ds = data::read_dataset(path);
      if (tier == val_tier) {
        auto split = data::validation_split(ds, c.train.validation_fraction, detail::item_seed(c.seed, "split/" + e));
        td.train[tier] = std::move(split.train);
        td.validation = std::move(split.validation);
      } else {
        td.train[tier] = ds.episodes;
      }
    }
  }
  return out;
}

inline training::CurriculumPlan curriculum_plan(const RunConfig& c) {
  training::CurriculumPlan plan;
  for (const auto& e : c.curriculum) plan.courses.push_back({env::body_name(e), c.course_tiers, c.train.pretrain_epochs});
  plan.interleave = c.no_curriculum;
  return plan;
}

struct PretrainResult {
  std::unique_ptr<model::OdmModel> model;
  training::CurriculumReport report;
};

inline PretrainResult run_pretrain(const RunConfig& c, const RunDir& dir, MetricsFile& metrics, std::ostream& log) {
  const auto data = load_curriculum_data(c);
  PretrainResult r;
  r.model = fresh_model(c, c.curriculum);
  r.report = training::run_curriculum(*r.model, curriculum_plan(c), data, c.train, c.use_prompt(), c.seed,
                                      metrics.sink());
  for (const auto& w : r.report.warnings) log << "warning: " << w << "\n";
  for (const auto& cr : r.report.courses)
    log << "course " << cr.task << ": val mse " << cr.val_start << " -> " << cr.val_end << "\n";
  model::save_model(*r.model, dir.checkpoint().string());
  return r;
}

// ---------------------------------------------------------------------------
// finetune
// ---------------------------------------------------------------------------

/// Model for a finetune run: the given checkpoint, or a fresh one for the
/// from-scratch arm. The target body must match the checkpoint's task spec;
/// an unknown body needs fresh_task.
inline std::unique_ptr<model::OdmModel> finetune_model(const RunConfig& c, std::unique_ptr<model::OdmModel> pretrained) {
  const std::string target = c.target_env();
  const std::string body = env::body_name(target);
  const auto spec = env::make_env(body, c.env).spec();
  if (c.from_scratch || c.no_pretrain || (!pretrained && c.checkpoint.empty())) return fresh_model(c, {body});
  auto m = pretrained ? std::move(pretrained) : model::load_model(c.checkpoint);
  if (!m->has_task(body)) {
    if (!c.fresh_task)
      throw std::invalid_argument("checkpoint has no task '" + body + "'; pass --fresh-task to add one");
    m->register_task(spec);
  } else if (!(m->task(body).spec == spec)) {
    throw std::invalid_argument("checkpoint task '" + body + "' does not match the spec of '" + target + "'");
  }
  return m;
}

struct FinetuneResult {
  std::unique_ptr<model::OdmModel> model;
  training::FinetuneReport report;
  training::EvalReport eval;
  training::EvalReport random;
};

inline void write_eval_rows(MetricsFile& metrics, const std::string& env, const training::EvalReport& odm,
                            const training::EvalReport& rnd, std::uint64_t seed) {
  for (const auto& [method, r] : {std::pair{"odm", &odm}, std::pair{"random", &rnd}}) {
    training::MetricsRow row;
    row.phase = "eval";
    row.course = env + ":" + method;
    row.mean_return = r->mean_return;
    row.return_std = r->return_std;
    row.mean_length = r->mean_length;
    row.length_std = r->length_std;
    row.seed = seed;
    metrics.write(row);
  }
}

inline FinetuneResult run_finetune_cmd(const RunConfig& c, const RunDir& dir, MetricsFile& metrics, std::ostream& log,
                                       std::unique_ptr<model::OdmModel> pretrained = nullptr) {
  FinetuneResult r;
  const std::string target = c.target_env();
  r.model = finetune_model(c, std::move(pretrained));
  r.model->activate(env::body_name(target));
  if (!c.no_finetune) {
    r.report = training::run_finetune(*r.model, target, c.env, effective_train(c), c.use_prompt(), c.seed,
                                      metrics.sink());
    log << "finetune " << target << ": " << r.report.iterations.size() << " iterations, " << r.report.env_steps
        << " env steps" << (r.report.stopped_on_plateau ? " (plateau)" : "") << "\n";
  }
  const auto seed = detail::item_seed(c.seed, "eval/" + target);
  r.eval = training::evaluate_policy(*r.model, target, c.env, c.use_prompt(), c.train.eval_episodes, seed);
  r.random = training::evaluate_random(target, c.env, c.train.eval_episodes, seed);
  write_eval_rows(metrics, target, r.eval, r.random, c.seed);
  log << "eval " << target << ": return " << r.eval.return_str() << " (random " << r.random.return_str() << ")\n";
  model::save_model(*r.model, dir.checkpoint().string());
  return r;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalRow {
  std::string env;
  training::EvalReport odm;
  training::EvalReport random;
};

inline std::vector<std::string> eval_targets(const RunConfig& c) {
  if (!c.eval_envs.empty()) return c.eval_envs;
  const std::size_t k = env::parse_env_name(c.target).joints;
  return {env::env_name(k, env::Terrain::flat), env::env_name(k, env::Terrain::variable),
          env::env_name(k, env::Terrain::obstacle)};
}

/// Metric x env x method table with a random-policy column.
inline std::string eval_table(const std::vector<EvalRow>& rows) {
  std::string s = "| metric | env | ODM | Random |\n|---|---|---|---|\n";
  const std::pair<const char*, std::string (training::EvalReport::*)() const> metrics[] = {
      {"return", &training::EvalReport::return_str},
      {"distance", &training::EvalReport::distance_str},
      {"length", &training::EvalReport::length_str}};
  for (const auto& [name, fn] : metrics)
    for (const auto& r : rows) s += std::string("| ") + name + " | " + r.env + " | " + (r.odm.*fn)() + " | " + (r.random.*fn)() + " |\n";
  return s;
}

inline std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::string s = "env,method,return_mean,return_std,length_mean,length_std,distance_mean,distance_std\n";
  for (const auto& r : rows)
    for (const auto& [method, e] : {std::pair{"odm", &r.odm}, std::pair{"random", &r.random}}) {
      s += r.env + "," + method;
      for (double v : {e->mean_return, e->return_std, e->mean_length, e->length_std, e->mean_distance, e->distance_std})
        s += "," + training::format_cell(v);
      s += "\n";
    }
  return s;
}

inline std::vector<EvalRow> run_eval(const RunConfig& c, const model::OdmModel& m, const RunDir& dir,
                                     MetricsFile& metrics, std::ostream& log) {
  std::vector<EvalRow> rows;
  for (const auto& e : eval_targets(c)) {
    const std::string body = env::body_name(e);
    if (!m.has_task(body)) throw std::invalid_argument("checkpoint has no task for '" + e + "'");
    const auto seed = detail::item_seed(c.seed, "eval/" + e);
    EvalRow r{e, training::evaluate_policy(m, e, c.env, c.use_prompt(), c.train.eval_episodes, seed),
              training::evaluate_random(e, c.env, c.train.eval_episodes, seed)};
    write_eval_rows(metrics, e, r.odm, r.random, c.seed);
    rows.push_back(std::move(r));
  }
  const std::string table = eval_table(rows);
  std::ofstream(dir.report(), std::ios::binary) << table;
  std::ofstream(dir.report_csv(), std::ios::binary) << eval_csv(rows);
  log << table;
  return rows;
}

// ---------------------------------------------------------------------------
// gait-search
// ---------------------------------------------------------------------------

/// Header with the best grid gait per joint count under default physics.
inline std::string gait_table_header(std::size_t max_joints, std::ostream* log = nullptr) {
  std::string rows;
  for (std::size_t k = 1; k <= max_joints; ++k) {
    env::ChainEnvConfig cfg;
    cfg.joints = k;
    const auto g = env::search_gait(cfg);
    char buf[160];
    std::snprintf(buf, sizeof buf, "    GaitParams{%zu, %.17g, %.17g, %.17g, %.17g},\n", g.joints, g.amplitude,
                  g.frequency, g.phase, g.search_return);
    rows += buf;
    if (log) *log << "K=" << k << " amplitude " << g.amplitude << " frequency " << g.frequency << " phase " << g.phase
                  << " return " << g.search_return << "\n";
  }
  return "#pragma once\n\n#include <array>\n#include <cstddef>\n\nnamespace odm::env {\n\n"
         "struct GaitParams {\n"
         "  std::size_t joints;\n"
         "  double amplitude;  // multiple of torque_limit; above 1 the clamp turns the sine into a square wave\n"
         "  double frequency;  // rad per time unit\n"
         "  double phase;      // lag between neighbouring joints, rad\n"
         "  double search_return;\n"
         "};\n\n"
         "// Generated by `odm gait-search`; best grid gait per joint count under\n"
         "// default physics on flat terrain.\n"
         "inline constexpr std::array<GaitParams, " +
         std::to_string(max_joints) + "> kExpertGaits{{\n" + rows + "}};\n\n}  // namespace odm::env\n";
}

// ---------------------------------------------------------------------------
// Entry points: one run directory per command.
// ---------------------------------------------------------------------------

inline int cmd_gen_data(RunConfig c, std::ostream& log) {
  c.command = "gen-data";
  c.validate();
  if (c.dry_run) {
    run_gen_data(c, nullptr, log);
    return 0;
  }
  const RunDir dir = make_run_dir(c);
  run_gen_data(c, &dir, log);
  log << "run: " << dir.root.string() << "\n";
  return 0;
}

inline int cmd_pretrain(RunConfig c, std::ostream& log) {
  c.command = "pretrain";
  c.validate();
  const RunDir dir = make_run_dir(c);
  MetricsFile metrics(dir.metrics());
  run_pretrain(c, dir, metrics, log);
  write_plots(dir.metrics().string(), dir.plots().string());
  log << "run: " << dir.root.string() << "\n";
  return 0;
}

inline int cmd_finetune(RunConfig c, std::ostream& log) {
  c.command = "finetune";
  c.validate();
  if (c.no_finetune && c.checkpoint.empty()) throw std::invalid_argument("--no-finetune needs a checkpoint to evaluate");
  if (!c.checkpoint.empty() && !c.from_scratch && !c.no_pretrain && !fs::exists(c.checkpoint))
    throw std::runtime_error("missing checkpoint '" + c.checkpoint + "'");
  const RunDir dir = make_run_dir(c);
  MetricsFile metrics(dir.metrics());
  run_finetune_cmd(c, dir, metrics, log);
  write_plots(dir.metrics().string(), dir.plots().string());
  log << "run: " << dir.root.string() << "\n";
  return 0;
}

inline int cmd_eval(RunConfig c, std::ostream& log) {
  c.command = "eval";
  c.validate();
  if (c.checkpoint.empty() || !fs::exists(c.checkpoint))
    throw std::runtime_error("missing checkpoint '" + c.checkpoint + "'");
  const auto m = model::load_model(c.checkpoint);
  const RunDir dir = make_run_dir(c);
  MetricsFile metrics(dir.metrics());
  run_eval(c, *m, dir, metrics, log);
  log << "run: " << dir.root.string() << "\n";
  return 0;
}

/// gen-data, pretrain, finetune and eval in one run directory. The ablation
/// flags select the arm.
inline int cmd_pipeline(RunConfig c, std::ostream& log) {
  c.command = "pipeline";
  c.validate();
  const RunDir dir = make_run_dir(c);
  MetricsFile metrics(dir.metrics());
  std::unique_ptr<model::OdmModel> pretrained;
  if (!c.no_pretrain) {
    std::vector<std::string> envs = c.curriculum;
    RunConfig g = c;
    g.envs = envs;
    g.tiers = c.course_tiers;
    bool have_all = true;
    for (const auto& p : data_plan(g)) have_all = have_all && fs::exists(p.path);
    if (!have_all) run_gen_data(g, &dir, log);
    pretrained = run_pretrain(c, dir, metrics, log).model;
  }
  auto ft = run_finetune_cmd(c, dir, metrics, log, std::move(pretrained));
  run_eval(c, *ft.model, dir, metrics, log);
  write_plots(dir.metrics().string(), dir.plots().string());
  log << "run: " << dir.root.string() << "\n";
  return 0;
}

}  // namespace odm::harness
