#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "odm/data/dataset.hpp"

using namespace odm;
namespace fs = std::filesystem;

namespace {

env::ChainEnvConfig short_env(std::size_t steps) {
  env::ChainEnvConfig c;
  c.max_steps = steps;
  return c;
}

/// Synthetic episode whose step t carries t in every field.
data::EpisodeRecord counting_episode(std::size_t joints, std::size_t n) {
  data::EpisodeRecord ep;
  ep.env = "chain-" + std::to_string(joints);
  ep.tier = "expert";
  for (std::size_t t = 0; t < n; ++t) {
    data::StepRecord s;
    s.o_pro.assign(2 * joints, static_cast<double>(t));
    s.o_ext.assign(4, static_cast<double>(t));
    s.action.assign(joints, static_cast<double>(t));
    s.reward = static_cast<double>(t);
    ep.steps.push_back(s);
  }
  return ep;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("odm_data_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Windows, TwentyFiveStepsGiveTenTenFive) {
  const auto spec = env::make_env("chain-2").spec();
  const auto w = data::episode_windows(counting_episode(2, 25), spec, 10);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].valid_count(), 10u);
  EXPECT_EQ(w[1].valid_count(), 10u);
  EXPECT_EQ(w[2].valid_count(), 5u);
  EXPECT_EQ(w[2].first_valid(), 5u);  // left padded
  EXPECT_TRUE(w[0].episode_start);
  EXPECT_FALSE(w[1].episode_start);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(w[2].o_pro.at(k, 0), 0.0);
    EXPECT_EQ(w[2].actions.at(k, 0), 0.0);
  }
  EXPECT_EQ(w[2].timesteps[5], 20u);
  EXPECT_EQ(w[2].actions.at(9, 1), 24.0);
}

TEST(Windows, NonOverlappingCoverEveryStepOnce) {
  const auto spec = env::make_env("chain-3").spec();
  for (std::size_t n : {1u, 9u, 10u, 11u, 37u}) {
    std::multiset<std::size_t> seen;
    for (const auto& w : data::episode_windows(counting_episode(3, n), spec, 10))
      for (std::size_t k = 0; k < w.length; ++k)
        if (w.valid[k]) {
          EXPECT_EQ(w.rewards[k], static_cast<double>(w.timesteps[k]));
          seen.insert(w.timesteps[k]);
        }
    ASSERT_EQ(seen.size(), n);
    for (std::size_t t = 0; t < n; ++t) EXPECT_EQ(seen.count(t), 1u);
  }
}

TEST(Windows, StrideOneSlides) {
  const auto spec = env::make_env("chain-2").spec();
  const auto w = data::episode_windows(counting_episode(2, 12), spec, 10, 1);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[2].timesteps[0], 2u);
  EXPECT_EQ(w[2].valid_count(), 10u);
  EXPECT_THROW(data::episode_windows(counting_episode(2, 12), spec, 0), std::invalid_argument);
  EXPECT_THROW(data::episode_windows(counting_episode(3, 12), spec, 10), std::runtime_error);
}

TEST(Windows, BatchesPartitionIndices) {
  const auto b = data::window_batches(23, 5, 1);
  ASSERT_EQ(b.size(), 5u);
  EXPECT_EQ(b.back().size(), 3u);
  std::set<std::size_t> all;
  for (const auto& x : b) all.insert(x.begin(), x.end());
  EXPECT_EQ(all.size(), 23u);
  EXPECT_EQ(data::window_batches(23, 5, 1), b);
  EXPECT_NE(data::window_batches(23, 5, 2), b);
  EXPECT_THROW(data::window_batches(3, 0, 1), std::invalid_argument);
}

TEST(Windows, IterYieldsCollatableBatches) {
  const auto spec = env::make_env("chain-2").spec();
  std::vector<data::EpisodeRecord> eps{counting_episode(2, 25), counting_episode(2, 10)};
  const auto it = data::window_iter(eps, spec, 10, 2, 3);
  std::size_t windows = 0;
  for (const auto& b : it) {
    windows += b.size();
    EXPECT_NO_THROW(model::collate(b));
  }
  EXPECT_EQ(windows, 4u);
}

TEST(Split, FivePercentOfHundredIsDisjoint) {
  const auto ds = data::generate_dataset("chain-2", env::Tier::random, 100, 1, short_env(3));
  const auto s = data::validation_split(ds, 0.05, 9);
  EXPECT_EQ(s.validation.size(), 5u);
  EXPECT_EQ(s.train.size(), 95u);
  std::set<std::uint64_t> train_seeds;
  for (const auto& e : s.train) train_seeds.insert(e.seed);
  for (const auto& e : s.validation) EXPECT_EQ(train_seeds.count(e.seed), 0u);
  EXPECT_EQ(data::validation_split(ds, 0.05, 9).validation_index, s.validation_index);
  EXPECT_EQ(data::validation_split(ds, 0.001, 9).validation.size(), 1u);
  EXPECT_THROW(data::validation_split(ds, 0.0, 9), std::invalid_argument);
}

TEST(Stats, MeanStd) {
  EXPECT_EQ(data::mean_std({0.0, 2.0}), std::make_pair(1.0, 1.0));
  EXPECT_EQ(data::mean_std({}), std::make_pair(0.0, 0.0));
  EXPECT_EQ(data::mean_std({5.0}), std::make_pair(5.0, 0.0));
}

TEST(Serialization, EpisodeRoundTripIsExact) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1e3);
  auto ep = counting_episode(3, 4);
  for (auto& s : ep.steps) {
    for (double& v : s.o_pro) v = n(rng);
    s.reward = n(rng) * 1e-9;
  }
  ep.seed = 18446744073709551557ULL;
  ep.terminal = true;
  EXPECT_EQ(data::episode_from_line(data::episode_to_line(ep)), ep);
  ep.steps[0].reward = INFINITY;
  EXPECT_THROW(data::episode_to_line(ep), std::runtime_error);
}

TEST(Serialization, DatasetFileAndManifestRoundTrip) {
  TempDir tmp;
  const auto ds = data::generate_dataset("chain-3", env::Tier::medium, 6, 4, short_env(15));
  const std::string path = (tmp.path / data::dataset_file_name("chain-3", "medium")).string();
  EXPECT_EQ(fs::path(path).filename(), "chain-3_medium.jsonl");
  const auto m = data::save_dataset(ds, path);
  const auto back = data::read_dataset(path);
  EXPECT_EQ(back.env, "chain-3");
  EXPECT_EQ(back.tier, "medium");
  EXPECT_EQ(back.episodes, ds.episodes);
  EXPECT_EQ(data::parse_manifest(slurp(data::manifest_path(path))), m);
  EXPECT_EQ(m.samples, 90u);
  EXPECT_EQ(m.episodes, 6u);
  EXPECT_EQ(m.source, "chain-sim");
  EXPECT_EQ(m.length_mean, 15.0);
}

TEST(Serialization, CorruptLineNamesTheLine) {
  TempDir tmp;
  const auto p = tmp.path / "bad.jsonl";
  std::ofstream(p) << data::episode_to_line(counting_episode(2, 2)) << "\n{\"env\":\n";
  try {
    data::read_dataset(p.string());
    FAIL() << "expected a parse error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(data::read_dataset((tmp.path / "missing.jsonl").string()), std::runtime_error);
}

TEST(Generation, RegenerationIsByteIdentical) {
  TempDir tmp;
  for (auto tier : env::all_tiers()) {
    const auto a = data::generate_dataset("chain-2", tier, 3, 21, short_env(20));
    const auto b = data::generate_dataset("chain-2", tier, 3, 21, short_env(20));
    data::save_dataset(a, (tmp.path / "a.jsonl").string());
    data::save_dataset(b, (tmp.path / "b.jsonl").string());
    EXPECT_EQ(slurp(tmp.path / "a.jsonl"), slurp(tmp.path / "b.jsonl")) << env::tier_name(tier);
    EXPECT_EQ(slurp(tmp.path / "a.jsonl.manifest"), slurp(tmp.path / "b.jsonl.manifest"));
  }
  const auto c = data::generate_dataset("chain-2", env::Tier::medium, 3, 22, short_env(20));
  EXPECT_NE(data::encode_dataset(c), data::encode_dataset(data::generate_dataset("chain-2", env::Tier::medium, 3, 21,
                                                                                 short_env(20))));
}

TEST(Generation, EpisodesMatchTheEnvironment) {
  const auto ds = data::generate_dataset("chain-4-vt", env::Tier::expert, 2, 5, short_env(30));
  const auto spec = env::make_env("chain-4").spec();
  for (const auto& ep : ds.episodes) {
    EXPECT_EQ(ep.env, "chain-4-vt");
    EXPECT_EQ(ep.steps.size(), 30u);
    EXPECT_NO_THROW(ep.check(spec));
    EXPECT_FALSE(ep.terminal);
    // Replaying the recorded actions reproduces the rewards.
    auto e = env::make_env(ep.env, short_env(30));
    e.reset(ep.seed);
    for (const auto& s : ep.steps) {
      EXPECT_EQ(e.state().proprio(), s.o_pro);
      EXPECT_EQ(e.step(s.action).reward, s.reward);
    }
  }
}

TEST(Generation, MediumExpertMixesCleanAndNoisyEpisodes) {
  const auto c = short_env(40);
  const auto ds = data::generate_dataset("chain-3", env::Tier::medium_expert, 16, 8, c);
  const auto cfg = env::make_env("chain-3", c).config();
  const env::Pioneer expert(env::Tier::expert, cfg);
  std::size_t clean = 0;
  for (const auto& ep : ds.episodes) {
    bool same = true;
    for (std::size_t t = 0; t < ep.steps.size(); ++t)
      same = same && ep.steps[t].action == env::gait_action(expert.gait(), cfg, t);
    clean += same;
  }
  EXPECT_GT(clean, 0u);
  EXPECT_LT(clean, 16u);
}
