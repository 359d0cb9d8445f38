#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "odm/env/chain_env.hpp"
#include "odm/model/model_io.hpp"
#include "odm/model/odm_model.hpp"
#include "odm/training/pretrain.hpp"
#include "support/gradcheck.hpp"
#include "support/model_fixtures.hpp"

using namespace odm;
using model::MorphologySpec;
using model::OdmModel;
using nn::Tape;
using nn::Tensor;
using nn::Var;
using odm::testing::max_abs_diff;

namespace {

model::ForwardOutputs run(const OdmModel& m, Tape& t, const model::TrajectoryWindow& w, bool prompt = true) {
  return m.forward_batch(t, model::collate(w), prompt);
}

}  // namespace

// ---------------------------------------------------------------------------
// Morphology specs
// ---------------------------------------------------------------------------

TEST(Morphology, DimensionIdentityForEveryPublishedRow) {
  for (const auto& p : model::published_morphologies()) {
    const auto& s = p.spec;
    SCOPED_TRACE(s.name);
    EXPECT_EQ(s.state_dim(), s.joints * s.obs_per_joint - s.masked_state_slots() + s.ext_dim);
    EXPECT_EQ(s.action_dim(), s.joints * s.dof_per_joint - s.masked_action_slots());
    EXPECT_NO_THROW(s.validate());
  }
}

TEST(Morphology, PrintedDimsAgreeExceptKnownTableRows) {
  for (const auto& p : model::published_morphologies()) {
    SCOPED_TRACE(p.spec.name);
    if (p.spec.name == "walker") {
      EXPECT_EQ(p.spec.state_dim(), 213u);  // the printed 243 disagrees with the identity
      EXPECT_EQ(p.spec.action_dim(), p.printed_action_dim);
    } else if (p.spec.name == "walker2D") {
      EXPECT_EQ(p.spec.state_dim(), p.printed_state_dim);
      EXPECT_EQ(p.spec.action_dim(), 6u);  // printed 3 is below K*m
    } else {
      EXPECT_EQ(p.spec.state_dim(), p.printed_state_dim);
      EXPECT_EQ(p.spec.action_dim(), p.printed_action_dim);
    }
  }
}

TEST(Morphology, ChainEnvSpecsSatisfyIdentity) {
  for (std::size_t k = 1; k <= 8; ++k) {
    const auto s = env::make_env("chain-" + std::to_string(k)).spec();
    EXPECT_EQ(s.joints, k);
    EXPECT_EQ(s.state_dim(), s.joints * s.obs_per_joint - s.masked_state_slots() + s.ext_dim);
    EXPECT_EQ(s.action_dim(), k);
  }
}

TEST(Morphology, ExpandActionZerosMaskedSlots) {
  MorphologySpec s{"m", 2, 1, 2, 1, {1, 1}, {1, 0, 1, 1}};
  auto full = s.expand_action(std::vector<double>{1.0, 2.0, 3.0});
  EXPECT_EQ(full, (std::vector<double>{1.0, 0.0, 2.0, 3.0}));
  EXPECT_THROW(s.expand_action(std::vector<double>{1.0}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Shapes
// ---------------------------------------------------------------------------

TEST(Shapes, HumanoidTokenizerAndHeads) {
  model::ModelConfig c;
  c.causal_layers = 1;
  OdmModel m(c, 1);
  const auto spec = model::published_morphology("humanoid");
  ASSERT_EQ(spec.joints, 9u);
  ASSERT_EQ(spec.obs_per_joint, 6u);
  ASSERT_EQ(spec.ext_dim, 342u);
  const auto& t = m.register_task(spec);
  std::mt19937_64 rng(2);
  auto w = odm::testing::random_window(spec, 2, 0, rng);
  Tape tape(Tape::Mode::inference);
  auto [joints, ext] = m.tokenize_state(tape, t, w.o_pro, w.o_ext);
  EXPECT_EQ(joints.rows(), 2u * 9u);
  EXPECT_EQ(joints.cols(), 128u);
  EXPECT_EQ(ext.rows(), 2u);
  EXPECT_EQ(ext.cols(), 128u);
  auto f = run(m, tape, w);
  EXPECT_EQ(f.heads.action_mean.cols(), 17u);
  EXPECT_EQ(f.heads.predicted_state.cols(), 376u);
  EXPECT_EQ(f.heads.value.cols(), 1u);
}

TEST(Shapes, AntHeads) {
  OdmModel m(odm::testing::tiny_config(), 1);
  const auto spec = model::published_morphology("ant");
  m.register_task(spec);
  std::mt19937_64 rng(3);
  Tape tape(Tape::Mode::inference);
  auto f = run(m, tape, odm::testing::random_window(spec, 3, 0, rng));
  EXPECT_EQ(f.heads.action_mean.cols(), 8u);
  EXPECT_EQ(f.heads.predicted_state.cols(), 111u);
}

TEST(Shapes, EveryPublishedSpecProjectsToItsIdentity) {
  OdmModel m(odm::testing::tiny_config(), 4);
  std::mt19937_64 rng(4);
  for (const auto& p : model::published_morphologies()) {
    m.register_task(p.spec);
    Tape tape(Tape::Mode::inference);
    auto f = run(m, tape, odm::testing::random_window(p.spec, 2, 0, rng));
    EXPECT_EQ(f.heads.action_mean.cols(), p.spec.action_dim()) << p.spec.name;
    EXPECT_EQ(f.heads.predicted_state.cols(), p.spec.state_dim()) << p.spec.name;
  }
}

TEST(Shapes, PromptIsEmbedWide) {
  OdmModel m(model::ModelConfig{}, 5);
  Tape tape(Tape::Mode::inference);
  Var p = m.build_prompt(tape, model::published_morphology("hopper"));
  EXPECT_EQ(p.rows(), 1u);
  EXPECT_EQ(p.cols(), 128u);
}

TEST(Shapes, SequenceLengthAtMostTwoWindowPlusOne) {
  OdmModel m(odm::testing::tiny_config(), 6);
  const auto spec = model::published_morphology("hopper");
  m.register_task(spec);
  std::mt19937_64 rng(6);
  Tape tape(Tape::Mode::inference);
  auto f = run(m, tape, odm::testing::random_window(spec, 10, 0, rng), false);
  EXPECT_EQ(f.causal.seq_len, 21u);
  EXPECT_THROW(run(m, tape, odm::testing::random_window(spec, 11, 0, rng)), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Stage behaviour
// ---------------------------------------------------------------------------

TEST(Stages, MorphEncodeSingleJointIsSelfAttention) {
  OdmModel m(odm::testing::tiny_config(), 7);
  std::mt19937_64 rng(7);
  Tape tape(Tape::Mode::inference);
  Tensor x = odm::testing::random_tensor(3, m.config().embed_dim, rng);
  Var out = m.morph_encode(tape, tape.constant(x), {true});
  // h = x + pos_0; with one key the block returns o(v(h)).
  const auto& p = m.params();
  const std::size_t e = m.config().embed_dim, d = m.config().attention_dim;
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> h(e), v(d, 0.0);
    for (std::size_t j = 0; j < e; ++j) h[j] = x.at(r, j) + p.value("shared/joint_pos").at(0, j);
    for (std::size_t j = 0; j < d; ++j) {
      v[j] = p.value("shared/enc_m/v/b")[j];
      for (std::size_t i = 0; i < e; ++i) v[j] += h[i] * p.value("shared/enc_m/v/w").at(i, j);
    }
    for (std::size_t j = 0; j < e; ++j) {
      double o = p.value("shared/enc_m/o/b")[j];
      for (std::size_t i = 0; i < d; ++i) o += v[i] * p.value("shared/enc_m/o/w").at(i, j);
      EXPECT_NEAR(out.value().at(r, j), h[j] + o, 1e-12);
    }
  }
}

TEST(Stages, MorphEncodeIsPermutationEquivariant) {
  OdmModel m(odm::testing::tiny_config(), 8);
  std::mt19937_64 rng(8);
  const std::size_t e = m.config().embed_dim;
  Tensor x = odm::testing::random_tensor(3, e, rng);
  Tensor pos = m.params().value("shared/joint_pos");
  Tensor a;
  {
    Tape t(Tape::Mode::inference);
    a = m.morph_encode(t, t.constant(x), {true, true, true}).value();
  }
  // Swap joints 0 and 2 in both the latents and the position table.
  Tensor xs = x;
  Tensor& tab = m.params().value("shared/joint_pos");
  for (std::size_t j = 0; j < e; ++j) {
    std::swap(xs.at(0, j), xs.at(2, j));
    std::swap(tab.at(0, j), tab.at(2, j));
  }
  Tape t(Tape::Mode::inference);
  Tensor b = m.morph_encode(t, t.constant(xs), {true, true, true}).value();
  for (std::size_t j = 0; j < e; ++j) {
    EXPECT_NEAR(a.at(0, j), b.at(2, j), 1e-12);
    EXPECT_NEAR(a.at(1, j), b.at(1, j), 1e-12);
    EXPECT_NEAR(a.at(2, j), b.at(0, j), 1e-12);
  }
  m.params().value("shared/joint_pos") = pos;
}

TEST(Stages, MaskedJointIsNeverAttended) {
  OdmModel m(odm::testing::tiny_config(), 9);
  std::mt19937_64 rng(9);
  const std::size_t e = m.config().embed_dim;
  Tensor x = odm::testing::random_tensor(3, e, rng);
  Tensor y = x;
  for (std::size_t j = 0; j < e; ++j) y.at(1, j) += 5.0;
  Tape t(Tape::Mode::inference);
  Tensor a = m.morph_encode(t, t.constant(x), {true, false, true}).value();
  Tensor b = m.morph_encode(t, t.constant(y), {true, false, true}).value();
  for (std::size_t r : {0u, 2u})
    for (std::size_t j = 0; j < e; ++j) EXPECT_EQ(a.at(r, j), b.at(r, j));
}

TEST(Stages, PoolStateWidthAndExtDependence) {
  OdmModel m(odm::testing::tiny_config(4), 10);
  const auto& task = m.register_task(MorphologySpec::dense("k2", 2, 2, 1, 3));
  EXPECT_EQ(task.embed_s.in_dim(), 12u);  // (K+1)e
  std::mt19937_64 rng(10);
  Tape t(Tape::Mode::inference);
  Var joints = t.constant(odm::testing::random_tensor(2, 4, rng));
  Var ext1 = t.constant(odm::testing::random_tensor(1, 4, rng));
  Var ext2 = t.constant(odm::testing::random_tensor(1, 4, rng));
  EXPECT_GT(max_abs_diff(m.pool_state(t, task, joints, ext1).value(), m.pool_state(t, task, joints, ext2).value()),
            1e-6);
  // Zero latents leave only the biases of the MLP.
  Var z = m.pool_state(t, task, t.constant(Tensor::matrix(2, 4)), t.constant(Tensor::matrix(1, 4)));
  Tape t2(Tape::Mode::inference);
  Var bias_only = task.embed_s.forward(t2, m.params(), t2.constant(Tensor::matrix(1, 12)));
  EXPECT_EQ(max_abs_diff(z.value(), bias_only.value()), 0.0);
}

TEST(Stages, PoolActionIsMaskedMean) {
  OdmModel m(odm::testing::tiny_config(4), 11);
  std::mt19937_64 rng(11);
  Tape t(Tape::Mode::inference);
  Tensor one = odm::testing::random_tensor(1, 4, rng);
  EXPECT_EQ(max_abs_diff(m.pool_action(t, t.constant(one), {true}).value(), one), 0.0);

  Tensor three = odm::testing::random_tensor(3, 4, rng);
  Tensor same = Tensor::matrix(3, 4);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 4; ++j) same.at(r, j) = one[j];
  EXPECT_LT(max_abs_diff(m.pool_action(t, t.constant(same), {true, true, true}).value(), one), 1e-15);

  Tensor perturbed = three;
  for (std::size_t j = 0; j < 4; ++j) perturbed.at(1, j) = 99.0;
  EXPECT_EQ(max_abs_diff(m.pool_action(t, t.constant(three), {true, false, true}).value(),
                         m.pool_action(t, t.constant(perturbed), {true, false, true}).value()),
            0.0);
}

TEST(Stages, PromptDeterministicAndSpecSensitive) {
  OdmModel m(odm::testing::tiny_config(), 12);
  Tape t(Tape::Mode::inference);
  const auto hopper = model::published_morphology("hopper"), ant = model::published_morphology("ant");
  EXPECT_EQ(max_abs_diff(m.build_prompt(t, hopper).value(), m.build_prompt(t, hopper).value()), 0.0);
  EXPECT_GT(max_abs_diff(m.build_prompt(t, hopper).value(), m.build_prompt(t, ant).value()), 1e-6);
}

TEST(Stages, CrossRefineSingleKeyAndZeroValue) {
  OdmModel m(odm::testing::tiny_config(), 13);
  std::mt19937_64 rng(13);
  const std::size_t e = m.config().embed_dim;
  Tensor a_hat = odm::testing::random_tensor(2, e, rng), s_tok = odm::testing::random_tensor(2, e, rng);
  Tensor s_hat = odm::testing::random_tensor(2, e, rng), prev = odm::testing::random_tensor(2, e, rng);
  Tensor other_q = odm::testing::random_tensor(2, e, rng);
  Tape t(Tape::Mode::inference);
  // One key per row: the output does not depend on the query.
  auto r1 = m.cross_refine(t, t.constant(a_hat), t.constant(s_tok), t.constant(s_hat), t.constant(prev));
  auto r2 = m.cross_refine(t, t.constant(other_q), t.constant(s_tok), t.constant(s_hat), t.constant(prev));
  Tensor d1 = r1.first.value(), d2 = r2.first.value();
  for (std::size_t i = 0; i < d1.size(); ++i) {
    d1[i] -= a_hat[i];
    d2[i] -= other_q[i];
  }
  EXPECT_LT(max_abs_diff(d1, d2), 1e-12);
  // The refinement follows the state token.
  Tensor s_tok2 = s_tok;
  s_tok2[0] += 1.0;
  auto r3 = m.cross_refine(t, t.constant(a_hat), t.constant(s_tok2), t.constant(s_hat), t.constant(prev));
  EXPECT_GT(max_abs_diff(r1.first.value(), r3.first.value()), 1e-9);
  // Zero value projection makes the refinement the identity.
  m.params().value("shared/cross_a/v/w").fill(0.0);
  m.params().value("shared/cross_a/v/b").fill(0.0);
  m.params().value("shared/cross_a/o/b").fill(0.0);
  auto r4 = m.cross_refine(t, t.constant(a_hat), t.constant(s_tok), t.constant(s_hat), t.constant(prev));
  EXPECT_EQ(max_abs_diff(r4.first.value(), a_hat), 0.0);
}

TEST(Stages, ZeroValueHeadReturnsBias) {
  OdmModel m(odm::testing::tiny_config(), 14);
  const auto spec = model::published_morphology("hopper");
  m.register_task(spec);
  m.params().value("task/hopper/proj_v/l0/w").fill(0.0);
  std::mt19937_64 rng(14);
  Tape t(Tape::Mode::inference);
  auto f = run(m, t, odm::testing::random_window(spec, 4, 0, rng));
  for (std::size_t r = 0; r < 4; ++r)
    EXPECT_EQ(f.heads.value.value().at(r, 0), m.params().value("task/hopper/proj_v/l0/b")[0]);
}

// ---------------------------------------------------------------------------
// Causality
// ---------------------------------------------------------------------------

TEST(Causality, FutureTokensNeverReachPastOutputs) {
  OdmModel m(odm::testing::tiny_config(), 15);
  const auto spec = MorphologySpec::dense("c3", 3, 2, 1, 2);
  m.register_task(spec);
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t len = 1 + rng() % 6, pad = rng() % len;
    const auto w = odm::testing::random_window(spec, len, pad, rng);
    const bool prompt = trial % 2 == 0;
    const auto probe = odm::testing::causality_probe(m, w, prompt, rng);
    EXPECT_LE(probe.max_violation, 1e-12) << "trial " << trial;
    EXPECT_GT(probe.max_future_change, 1e-9) << "perturbations must reach later outputs";
  }
}

TEST(Causality, SingleStepDependsOnlyOnPromptBosAndState) {
  OdmModel m(odm::testing::tiny_config(), 16);
  const auto spec = MorphologySpec::dense("c2", 2, 2, 1, 2);
  m.register_task(spec);
  std::mt19937_64 rng(16);
  auto w = odm::testing::random_window(spec, 1, 0, rng);
  Tape t(Tape::Mode::inference);
  auto a = run(m, t, w).heads.action_mean.value();
  w.actions[0] += 3.0;
  auto b = run(m, t, w).heads.action_mean.value();
  EXPECT_EQ(max_abs_diff(a, b), 0.0);
}

// ---------------------------------------------------------------------------
// Masks and prompt
// ---------------------------------------------------------------------------

TEST(Masks, MaskedObservationSlotsNeverMatter) {
  OdmModel m(odm::testing::tiny_config(), 17);
  MorphologySpec spec{"masked", 3, 2, 2, 2, model::tail_mask(3, 2, 2), model::tail_mask(3, 2, 2)};
  m.register_task(spec);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    auto w = odm::testing::random_window(spec, 5, trial % 3, rng);
    auto w2 = w;
    odm::testing::scramble_masked_slots(w2, spec, rng);
    ASSERT_GT(max_abs_diff(w.o_pro, w2.o_pro), 0.0);
    Tape t1(Tape::Mode::inference), t2(Tape::Mode::inference);
    auto f1 = run(m, t1, w), f2 = run(m, t2, w2);
    EXPECT_EQ(max_abs_diff(f1.heads.action_mean.value(), f2.heads.action_mean.value()), 0.0);
    EXPECT_EQ(max_abs_diff(f1.heads.predicted_state.value(), f2.heads.predicted_state.value()), 0.0);
    EXPECT_EQ(max_abs_diff(f1.heads.value.value(), f2.heads.value.value()), 0.0);
    training::TrainConfig tc;
    const auto b1 = model::collate(w), b2 = model::collate(w2);
    EXPECT_EQ(training::pretrain_terms(m, f1, b1, tc).total.item(), training::pretrain_terms(m, f2, b2, tc).total.item());
  }
}

TEST(Masks, PromptOffIgnoresSpecScalars) {
  // Same shapes, different (hypothetical) spec scalars are impossible for a
  // single task, so compare a task against itself with and without prompt and
  // check the prompt parameters receive no gradient when it is off.
  OdmModel m(odm::testing::tiny_config(), 18);
  const auto spec = MorphologySpec::dense("c2", 2, 2, 1, 2);
  m.register_task(spec);
  std::mt19937_64 rng(18);
  auto w = odm::testing::random_window(spec, 4, 1, rng);
  Tape t;
  auto f = run(m, t, w, false);
  training::TrainConfig tc;
  auto terms = training::pretrain_terms(m, f, model::collate(w), tc);
  t.backward(terms.total);
  const auto g = t.gradients(m.params());
  for (const auto& [name, grad] : g) {
    if (!name.starts_with("shared/prompt")) continue;
    for (double v : grad.values()) EXPECT_EQ(v, 0.0) << name;
  }
  // Perturbing the prompt MLP changes nothing when the prompt is off.
  Tape a(Tape::Mode::inference);
  auto before = run(m, a, w, false).heads.action_mean.value();
  m.params().value("shared/prompt/l0/b").fill(3.0);
  Tape b(Tape::Mode::inference);
  EXPECT_EQ(max_abs_diff(before, run(m, b, w, false).heads.action_mean.value()), 0.0);
  Tape c(Tape::Mode::inference);
  EXPECT_GT(max_abs_diff(before, run(m, c, w, true).heads.action_mean.value()), 1e-9);
}

TEST(Masks, ForwardIsDeterministic) {
  OdmModel m(odm::testing::tiny_config(), 19);
  const auto spec = MorphologySpec::dense("c3", 3, 2, 1, 2);
  m.register_task(spec);
  std::mt19937_64 rng(19);
  auto w = odm::testing::random_window(spec, 6, 2, rng);
  auto a = m.forward_window(w, true), b = m.forward_window(w, true);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].action_mean, b[i].action_mean);
    EXPECT_EQ(a[i].predicted_state, b[i].predicted_state);
    EXPECT_EQ(a[i].value, b[i].value);
  }
}

// ---------------------------------------------------------------------------
// Gradient flow and freezing
// ---------------------------------------------------------------------------

TEST(Freezing, InactiveTasksGetNoGradientAndStayBitIdentical) {
  OdmModel m(odm::testing::tiny_config(), 20);
  const auto s2 = MorphologySpec::dense("c2", 2, 2, 1, 2), s3 = MorphologySpec::dense("c3", 3, 2, 1, 2);
  m.register_task(s2);
  m.register_task(s3);
  m.activate("c3");
  const auto h2 = m.params().hash_prefix("task/c2/");
  std::mt19937_64 rng(20);
  training::TrainConfig tc;
  tc.lr_pretrain = 1e-3;
  for (int i = 0; i < 3; ++i) {
    auto b = model::collate(odm::testing::random_window(s3, 5, 0, rng));
    Tape t;
    auto f = m.forward_batch(t, b, true);
    auto terms = training::pretrain_terms(m, f, b, tc);
    t.backward(terms.total);
    const auto g = t.gradients(m.params());
    for (const auto& [name, grad] : g) EXPECT_FALSE(name.starts_with("task/c2/")) << name;
    nn::adam_step(m.params(), g, training::adam_config(tc.lr_pretrain, tc));
  }
  EXPECT_EQ(m.params().hash_prefix("task/c2/"), h2);
  EXPECT_THROW(training::pretrain_step(m, model::collate(odm::testing::random_window(s2, 3, 0, rng)), tc, true),
               std::invalid_argument);
}

TEST(Freezing, ActiveModulesAndBackboneReceiveGradient) {
  OdmModel m(odm::testing::tiny_config(), 21);
  const auto spec = MorphologySpec::dense("c3", 3, 2, 1, 2);
  m.register_task(spec);
  std::mt19937_64 rng(21);
  std::map<std::string, double> reach;
  for (int draw = 0; draw < 4; ++draw) {
    std::vector<model::TrajectoryWindow> ws;
    for (int i = 0; i < 3; ++i) ws.push_back(odm::testing::random_window(spec, 5, i == 2 ? 2 : 0, rng));
    auto b = model::collate(ws);
    Tape t;
    auto f = m.forward_batch(t, b, true);
    training::TrainConfig tc;
    auto terms = training::pretrain_terms(m, f, b, tc);
    // Critic and log-std only enter through the finetune objective.
    Var total = nn::add(terms.total, nn::add(nn::mean(nn::square(f.heads.value)), nn::sum(f.heads.log_std)));
    t.backward(total);
    for (const auto& [name, g] : t.gradients(m.params())) {
      double s = 0.0;
      for (double v : g.values()) s += std::abs(v);
      reach[name] += s;
    }
  }
  for (const auto& [name, s] : reach) {
    if (name == "shared/time_emb" || name == "shared/joint_pos") continue;  // only touched rows
    // Instant-impact attention has one key per row, so its softmax is
    // constant and the query/key projections are structurally gradient-free.
    if (name.starts_with("shared/cross_") && (name.find("/q/") != std::string::npos ||
                                              name.find("/k/") != std::string::npos))
      continue;
    EXPECT_GT(s, 0.0) << name;
  }
}

// ---------------------------------------------------------------------------
// Gradient check through the full model
// ---------------------------------------------------------------------------

TEST(GradCheck, FullModelPretrainLoss) {
  model::ModelConfig c = odm::testing::tiny_config(4);
  c.heads = 2;
  OdmModel m(c, 22);
  const auto spec = MorphologySpec{"c2", 2, 2, 1, 1, {1, 1, 1, 0}, {1, 1}};
  m.register_task(spec);
  std::mt19937_64 rng(22);
  std::vector<model::TrajectoryWindow> ws{odm::testing::random_window(spec, 3, 0, rng),
                                          odm::testing::random_window(spec, 3, 1, rng)};
  const auto b = model::collate(ws);
  training::TrainConfig tc;
  auto r = odm::testing::gradient_check(
      m.params(),
      [&](Tape& t) {
        auto f = m.forward_batch(t, b, true);
        return training::pretrain_terms(m, f, b, tc).total;
      },
      1e-5, [](const std::string& n) { return n != "shared/time_emb" && n != "shared/joint_pos"; });
  EXPECT_LT(r.max_rel_err, 1e-4) << r.worst;
}

// ---------------------------------------------------------------------------
// Task registry and model I/O
// ---------------------------------------------------------------------------

TEST(Registry, InitIndependentOfRegistrationOrder) {
  const auto s2 = MorphologySpec::dense("c2", 2, 2, 1, 2), s3 = MorphologySpec::dense("c3", 3, 2, 1, 2);
  OdmModel a(odm::testing::tiny_config(), 23), b(odm::testing::tiny_config(), 23);
  a.register_task(s2);
  a.register_task(s3);
  b.register_task(s3);
  b.register_task(s2);
  EXPECT_EQ(a.params().hash_prefix("task/c2/"), b.params().hash_prefix("task/c2/"));
  EXPECT_EQ(a.params().hash_prefix("task/c3/"), b.params().hash_prefix("task/c3/"));
  EXPECT_THROW(a.register_task(s2), std::invalid_argument);
  EXPECT_THROW(a.activate("nope"), std::invalid_argument);
}

TEST(Registry, SaveLoadRoundTrip) {
  OdmModel m(odm::testing::tiny_config(), 24);
  MorphologySpec masked{"masked", 3, 2, 2, 2, model::tail_mask(3, 2, 1), model::tail_mask(3, 2, 1)};
  m.register_task(MorphologySpec::dense("c2", 2, 2, 1, 2));
  m.register_task(masked);
  m.activate("masked");
  const auto path = (std::filesystem::temp_directory_path() / "odm_model_roundtrip.odm").string();
  model::save_model(m, path);
  auto back = model::load_model(path);
  EXPECT_EQ(back->active_task(), "masked");
  EXPECT_EQ(back->task_names(), m.task_names());
  EXPECT_EQ(back->task("masked").spec, masked);
  EXPECT_EQ(nn::encode_checkpoint(back->params()), nn::encode_checkpoint(m.params()));
  std::mt19937_64 rng(24);
  auto w = odm::testing::random_window(masked, 4, 1, rng);
  EXPECT_EQ(back->forward_window(w, true)[0].action_mean, m.forward_window(w, true)[0].action_mean);
  std::filesystem::remove(path);
  std::filesystem::remove(model::sidecar_path(path));
  EXPECT_THROW(model::load_model(path), std::runtime_error);
}
