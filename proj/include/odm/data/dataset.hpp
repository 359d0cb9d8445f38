#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "odm/env/pioneer.hpp"
#include "odm/model/window.hpp"

namespace odm::data {

struct StepRecord {
  std::vector<double> o_pro;  // K*n, full joint layout
  std::vector<double> o_ext;
  std::vector<double> action;  // compact n_a
  double reward = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EpisodeRecord {
  std::string env;
  std::string tier;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  bool terminal = false;  // ended by a fault rather than the step limit

  double total_return() const {
    double r = 0.0;
    for (const auto& s : steps) r += s.reward;
    return r;
  }

  void check(const model::MorphologySpec& spec) const {
    for (const auto& s : steps)
      if (s.o_pro.size() != spec.joints * spec.obs_per_joint || s.o_ext.size() != spec.ext_dim ||
          s.action.size() != spec.action_dim())
        throw std::runtime_error("episode of '" + env + "' does not match spec '" + spec.name + "'");
  }

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct Dataset {
  std::string env;
  std::string tier;
  std::vector<EpisodeRecord> episodes;

  std::size_t sample_count() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.steps.size();
    return n;
  }
};

// ---------------------------------------------------------------------------
// Serialisation: one JSON object per line, numbers with 17 significant digits.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_number(std::string& out, double v) {
  if (!std::isfinite(v)) throw std::runtime_error("dataset: non-finite value");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

inline void put_array(std::string& out, const std::vector<double>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    put_number(out, v[i]);
  }
  out += ']';
}

}  // namespace detail

inline std::string episode_to_line(const EpisodeRecord& ep) {
  std::string out = "{\"env\":" + nlohmann::json(ep.env).dump() + ",\"tier\":" + nlohmann::json(ep.tier).dump() +
                    ",\"seed\":" + std::to_string(ep.seed) + ",\"terminal\":" + (ep.terminal ? "true" : "false") +
                    ",\"steps\":[";
  for (std::size_t i = 0; i < ep.steps.size(); ++i) {
    const auto& s = ep.steps[i];
    if (i) out += ',';
    out += "{\"o_pro\":";
    detail::put_array(out, s.o_pro);
    out += ",\"o_ext\":";
    detail::put_array(out, s.o_ext);
    out += ",\"action\":";
    detail::put_array(out, s.action);
    out += ",\"reward\":";
    detail::put_number(out, s.reward);
    out += '}';
  }
  out += "]}";
  return out;
}

inline EpisodeRecord episode_from_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  EpisodeRecord ep;
  ep.env = j.at("env").get<std::string>();
  ep.tier = j.at("tier").get<std::string>();
  ep.seed = j.at("seed").get<std::uint64_t>();
  ep.terminal = j.at("terminal").get<bool>();
  for (const auto& s : j.at("steps")) {
    StepRecord r;
    r.o_pro = s.at("o_pro").get<std::vector<double>>();
    r.o_ext = s.at("o_ext").get<std::vector<double>>();
    r.action = s.at("action").get<std::vector<double>>();
    r.reward = s.at("reward").get<double>();
    ep.steps.push_back(std::move(r));
  }
  return ep;
}

inline std::string encode_dataset(const Dataset& ds) {
  std::string out;
  for (const auto& ep : ds.episodes) {
    out += episode_to_line(ep);
    out += '\n';
  }
  return out;
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("dataset: cannot open '" + path + "' for writing");
  const std::string bytes = encode_dataset(ds);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("dataset: write failed for '" + path + "'");
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset: cannot open '" + path + "'");
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ds.episodes.push_back(episode_from_line(line));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("dataset '" + path + "' line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!ds.episodes.empty()) {
    ds.env = ds.episodes.front().env;
    ds.tier = ds.episodes.front().tier;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct DatasetManifest {
  std::string env;
  std::string source;
  std::string tier;
  std::size_t samples = 0;
  std::size_t episodes = 0;
  double return_mean = 0.0;
  double return_std = 0.0;
  double length_mean = 0.0;
  double length_std = 0.0;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Population mean and std.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

inline DatasetManifest compute_manifest(const Dataset& ds, const std::string& source = "chain-sim") {
  if (ds.episodes.empty()) throw std::invalid_argument("compute_manifest: empty dataset");
  DatasetManifest m;
  m.env = ds.env;
  m.source = source;
  m.tier = ds.tier;
  m.episodes = ds.episodes.size();
  m.samples = ds.sample_count();
  std::vector<double> returns, lengths;
  for (const auto& ep : ds.episodes) {
    returns.push_back(ep.total_return());
    lengths.push_back(static_cast<double>(ep.steps.size()));
  }
  std::tie(m.return_mean, m.return_std) = mean_std(returns);
  std::tie(m.length_mean, m.length_std) = mean_std(lengths);
  return m;
}

inline std::string manifest_text(const DatasetManifest& m) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "[dataset]\n"
     << "env = " << m.env << "\n"
     << "source = " << m.source << "\n"
     << "tier = " << m.tier << "\n"
     << "samples = " << m.samples << "\n"
     << "episodes = " << m.episodes << "\n"
     << "return_mean = " << num(m.return_mean) << "\n"
     << "return_std = " << num(m.return_std) << "\n"
     << "length_mean = " << num(m.length_mean) << "\n"
     << "length_std = " << num(m.length_std) << "\n";
  return os.str();
}

inline DatasetManifest parse_manifest(const std::string& text) {
  namespace pt = boost::property_tree;
  std::istringstream is(text);
  pt::ptree tree;
  pt::read_ini(is, tree);
  DatasetManifest m;
  m.env = tree.get<std::string>("dataset.env");
  m.source = tree.get<std::string>("dataset.source");
  m.tier = tree.get<std::string>("dataset.tier");
  m.samples = tree.get<std::size_t>("dataset.samples");
  m.episodes = tree.get<std::size_t>("dataset.episodes");
  auto num = [&](const char* key) { return std::strtod(tree.get<std::string>(key).c_str(), nullptr); };
  m.return_mean = num("dataset.return_mean");
  m.return_std = num("dataset.return_std");
  m.length_mean = num("dataset.length_mean");
  m.length_std = num("dataset.length_std");
  return m;
}

inline std::string manifest_path(const std::string& dataset_path) { return dataset_path + ".manifest"; }

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Rolls out one pioneer episode. Environment reset and policy noise are
/// both seeded from `seed`.
inline EpisodeRecord rollout_pioneer(env::ChainEnv& e, env::Pioneer& pioneer, std::uint64_t seed) {
  EpisodeRecord ep;
  ep.env = e.name();
  ep.tier = env::tier_name(pioneer.tier());
  ep.seed = seed;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  pioneer.begin_episode(rng);
  e.reset(seed);
  for (std::size_t t = 0; t < e.config().max_steps; ++t) {
    StepRecord s;
    s.o_pro = e.state().proprio();
    s.o_ext = e.state().extero();
    s.action = pioneer.act(e.state(), t, rng);
    const env::StepResult r = e.step(s.action);
    s.reward = r.reward;
    ep.steps.push_back(std::move(s));
    if (r.done) {
      ep.terminal = !r.truncated;
      break;
    }
  }
  return ep;
}

inline Dataset generate_dataset(const std::string& env_name, env::Tier tier, std::size_t episodes,
                                std::uint64_t seed, const env::ChainEnvConfig& base = {}) {
  env::ChainEnv e = env::make_env(env_name, base);
  env::Pioneer pioneer(tier, e.config());
  Dataset ds;
  ds.env = env_name;
  ds.tier = env::tier_name(tier);
  std::mt19937_64 seeds(seed);
  for (std::size_t i = 0; i < episodes; ++i) ds.episodes.push_back(rollout_pioneer(e, pioneer, seeds()));
  return ds;
}

/// Writes `<path>` and `<path>.manifest`. Empty datasets get a manifest with
/// zero counts.
inline DatasetManifest save_dataset(const Dataset& ds, const std::string& path) {
  write_dataset(ds, path);
  DatasetManifest m;
  if (ds.episodes.empty()) {
    m.env = ds.env;
    m.source = "chain-sim";
    m.tier = ds.tier;
  } else {
    m = compute_manifest(ds);
  }
  std::ofstream f(manifest_path(path), std::ios::trunc);
  f << manifest_text(m);
  if (!f) throw std::runtime_error("dataset: cannot write manifest for '" + path + "'");
  return m;
}

inline std::string dataset_file_name(const std::string& env, const std::string& tier) {
  return env + "_" + tier + ".jsonl";
}

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

/// Cuts an episode into windows of `length` slots starting every `stride`
/// steps; a window running past the episode end is shortened and left-padded.
inline std::vector<model::TrajectoryWindow> episode_windows(const EpisodeRecord& ep, const model::MorphologySpec& spec,
                                                            std::size_t length, std::size_t stride = 0) {
  if (length == 0) throw std::invalid_argument("episode_windows: window length must be >= 1");
  if (stride == 0) stride = length;
  ep.check(spec);
  std::vector<model::TrajectoryWindow> out;
  const std::size_t n = ep.steps.size();
  for (std::size_t start = 0; start < n; start += stride) {
    const std::size_t count = std::min(length, n - start);
    const std::size_t pad = length - count;
    auto w = model::TrajectoryWindow::empty(spec, length);
    w.episode_start = start == 0;
    for (std::size_t k = 0; k < count; ++k) {
      const auto& s = ep.steps[start + k];
      const std::size_t slot = pad + k;
      std::copy(s.o_pro.begin(), s.o_pro.end(), w.o_pro.row_span(slot).begin());
      std::copy(s.o_ext.begin(), s.o_ext.end(), w.o_ext.row_span(slot).begin());
      std::copy(s.action.begin(), s.action.end(), w.actions.row_span(slot).begin());
      w.rewards[slot] = s.reward;
      w.timesteps[slot] = start + k;
      w.valid[slot] = 1;
    }
    out.push_back(std::move(w));
    if (start + length >= n) break;
  }
  return out;
}

inline std::vector<model::TrajectoryWindow> dataset_windows(const std::vector<EpisodeRecord>& episodes,
                                                            const model::MorphologySpec& spec, std::size_t length,
                                                            std::size_t stride = 0) {
  std::vector<model::TrajectoryWindow> out;
  for (const auto& ep : episodes) {
    auto w = episode_windows(ep, spec, length, stride);
    std::move(w.begin(), w.end(), std::back_inserter(out));
  }
  return out;
}

/// Shuffled minibatches of window indices; the last batch may be smaller.
inline std::vector<std::vector<std::size_t>> window_batches(std::size_t count, std::size_t batch_size,
                                                            std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw std::invalid_argument("window_batches: batch size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
  return out;
}

/// Batches of windows ready for collate().
inline std::vector<std::vector<model::TrajectoryWindow>> window_iter(const std::vector<EpisodeRecord>& episodes,
                                                                     const model::MorphologySpec& spec,
                                                                     std::size_t length, std::size_t batch_size,
                                                                     std::uint64_t shuffle_seed,
                                                                     std::size_t stride = 0) {
  auto windows = dataset_windows(episodes, spec, length, stride);
  std::vector<std::vector<model::TrajectoryWindow>> out;
  for (const auto& idx : window_batches(windows.size(), batch_size, shuffle_seed)) {
    std::vector<model::TrajectoryWindow> b;
    for (std::size_t i : idx) b.push_back(windows[i]);
    out.push_back(std::move(b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation split
// ---------------------------------------------------------------------------

struct Split {
  std::vector<EpisodeRecord> train;
  std::vector<EpisodeRecord> validation;
  std::vector<std::size_t> validation_index;  // positions in the source dataset
};

/// Episode-level split; round(fraction * n) episodes (at least one) go to
/// validation.
inline Split validation_split(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("validation_split: fraction must be in (0,1)");
  const std::size_t n = ds.episodes.size();
  const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  if (n < 2 || k >= n) throw std::invalid_argument("validation_split: too few episodes for a split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(val.begin(), val.end());
  Split s;
  s.validation_index = val;
  std::size_t vi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (vi < val.size() && val[vi] == i) {
      s.validation.push_back(ds.episodes[i]);
      ++vi;
    } else {
      s.train.push_back(ds.episodes[i]);
    }
  }
  return s;
}

}  // namespace odm::data
