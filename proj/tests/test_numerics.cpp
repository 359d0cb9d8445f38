#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "odm/numerics/checkpoint.hpp"
#include "odm/numerics/layers.hpp"
#include "odm/numerics/optim.hpp"
#include "support/gradcheck.hpp"

using namespace odm::nn;
using odm::testing::gradient_check;
using odm::testing::max_abs_diff;
using odm::testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;

// Squared-sum readout with fixed random weights so every output element
// carries a distinct upstream gradient.
Var readout(Tape&, Var y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Tensor w = random_tensor(y.rows(), y.cols(), rng);
  return sum(mul_const(square(y), w));
}

ParameterStore two_inputs(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  ParameterStore s;
  s.add("a", random_tensor(r, c, rng, lo, hi));
  s.add("b", random_tensor(r, c, rng, lo, hi));
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Attention forward
// ---------------------------------------------------------------------------

TEST(Attention, SingleKeyReturnsItsValue) {
  std::mt19937_64 rng(1);
  Tensor q = random_tensor(1, 4, rng), k = random_tensor(1, 4, rng), v = random_tensor(1, 4, rng);
  auto r = attention_forward(q, k, v, 1, 2);
  EXPECT_LT(max_abs_diff(r.output, v), 1e-15);
}

TEST(Attention, IdenticalKeysAverageValues) {
  std::mt19937_64 rng(2);
  Tensor q = random_tensor(3, 4, rng);
  Tensor k = Tensor::matrix(5, 4);
  Tensor krow = random_tensor(1, 4, rng);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) k.at(i, j) = krow[j];
  Tensor v = random_tensor(5, 4, rng);
  auto r = attention_forward(q, k, v, 1, 1);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double mean = 0.0;
      for (std::size_t t = 0; t < 5; ++t) mean += v.at(t, j) / 5.0;
      EXPECT_NEAR(r.output.at(i, j), mean, 1e-14);
    }
}

TEST(Attention, TwoKeyHandOracle) {
  // q = [1, 0], k0 = [1, 0], k1 = [0, 1], d = 2: scores 1/sqrt2 and 0.
  Tensor q = Tensor::matrix(1, 2, {1.0, 0.0});
  Tensor k = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  Tensor v = Tensor::matrix(2, 2, {2.0, -1.0, 0.5, 3.0});
  const double e0 = std::exp(1.0 / std::sqrt(2.0)), e1 = 1.0;
  const double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);
  auto r = attention_forward(q, k, v, 1, 1);
  EXPECT_NEAR(r.output.at(0, 0), w0 * 2.0 + w1 * 0.5, 1e-15);
  EXPECT_NEAR(r.output.at(0, 1), w0 * -1.0 + w1 * 3.0, 1e-15);
}

TEST(Attention, WeightsSumToOneAndMaskedAreZero) {
  std::mt19937_64 rng(3);
  const std::size_t groups = 2, heads = 2, lq = 4, lk = 6;
  Tensor q = random_tensor(groups * lq, 4, rng), k = random_tensor(groups * lk, 4, rng),
         v = random_tensor(groups * lk, 4, rng);
  AttentionMask mask = AttentionMask::keys(lq, {true, false, true, true, false, true});
  auto r = attention_forward(q, k, v, groups, heads, &mask);
  for (std::size_t row = 0; row < groups * heads * lq; ++row) {
    double s = 0.0;
    for (std::size_t j = 0; j < lk; ++j) {
      const double w = r.weights[row * lk + j];
      if (!mask.allowed(0, 0, j)) {
        EXPECT_EQ(w, 0.0);
      }
      s += w;
    }
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
}

TEST(Attention, FullyMaskedRowThrows) {
  Tensor q = Tensor::matrix(1, 2, 1.0), k = Tensor::matrix(2, 2, 1.0), v = Tensor::matrix(2, 2, 1.0);
  AttentionMask mask = AttentionMask::keys(1, {false, false});
  EXPECT_THROW(attention_forward(q, k, v, 1, 1, &mask), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// MLP forward
// ---------------------------------------------------------------------------

TEST(Mlp, IdentityAffineIsIdentity) {
  ParameterStore s;
  Tensor w = Tensor::matrix(3, 3);
  for (std::size_t i = 0; i < 3; ++i) w.at(i, i) = 1.0;
  s.add("m/l0/w", w);
  s.add("m/l0/b", Tensor::matrix(1, 3));
  Mlp mlp{"m", {3, 3}};
  Tape t;
  Tensor x = Tensor::matrix(2, 3, {1, -2, 3, 0.5, 0.25, -7});
  EXPECT_EQ(max_abs_diff(mlp.forward(t, s, t.constant(x)).value(), x), 0.0);
}

TEST(Mlp, ZeroFinalWeightsGiveBias) {
  std::mt19937_64 rng(4);
  ParameterStore s;
  Mlp mlp{"m", {3, 5, 2}};
  mlp.init(s, rng);
  s.value("m/l1/w").fill(0.0);
  Tape t;
  Var y = mlp.forward(t, s, t.constant(random_tensor(4, 3, rng)));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(y.value().at(r, j), s.value("m/l1/b")[j]);
}

TEST(Mlp, MatchesFlatLoopReevaluation) {
  std::mt19937_64 rng(5);
  ParameterStore s;
  Mlp mlp{"m", {3, 4, 2}};
  mlp.init(s, rng);
  Tensor x = random_tensor(2, 3, rng);
  Tape t;
  Tensor y = mlp.forward(t, s, t.constant(x)).value();

  const Tensor &w0 = s.value("m/l0/w"), &b0 = s.value("m/l0/b"), &g = s.value("m/ln0/g"),
               &bb = s.value("m/ln0/b"), &w1 = s.value("m/l1/w"), &b1 = s.value("m/l1/b");
  for (std::size_t r = 0; r < 2; ++r) {
    double h[4];
    for (std::size_t j = 0; j < 4; ++j) {
      h[j] = b0[j];
      for (std::size_t i = 0; i < 3; ++i) h[j] += x.at(r, i) * w0.at(i, j);
    }
    double mu = (h[0] + h[1] + h[2] + h[3]) / 4.0, var = 0.0;
    for (double v : h) var += (v - mu) * (v - mu) / 4.0;
    for (std::size_t j = 0; j < 4; ++j) h[j] = std::max(0.0, (h[j] - mu) / std::sqrt(var + 1e-8) * g[j] + bb[j]);
    for (std::size_t j = 0; j < 2; ++j) {
      double o = b1[j];
      for (std::size_t i = 0; i < 4; ++i) o += h[i] * w1.at(i, j);
      EXPECT_NEAR(y.at(r, j), o, 1e-14);
    }
  }
}

// ---------------------------------------------------------------------------
// Backward basics
// ---------------------------------------------------------------------------

TEST(Backward, SquareAtThree) {
  ParameterStore s;
  s.add("x", Tensor::scalar(3.0));
  Tape t;
  Var l = square(t.param(s, "x"));
  t.backward(l);
  EXPECT_DOUBLE_EQ(t.gradients(s).at("x").item(), 6.0);
}

TEST(Backward, UnusedParameterHasZeroGradient) {
  ParameterStore s;
  s.add("x", Tensor::scalar(3.0));
  s.add("p", Tensor::matrix(2, 2, 1.0));
  Tape t;
  t.backward(square(t.param(s, "x")));
  const auto grads = t.gradients(s);
  for (double g : grads.at("p").values()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, TapeIsSingleUse) {
  ParameterStore s;
  s.add("x", Tensor::scalar(1.0));
  Tape t;
  Var l = square(t.param(s, "x"));
  t.backward(l);
  EXPECT_THROW(t.backward(l), std::logic_error);
}

TEST(Backward, NonFiniteValuesAreRejected) {
  Tape t;
  EXPECT_THROW(t.constant(Tensor::scalar(std::nan(""))), std::domain_error);
}

// ---------------------------------------------------------------------------
// Gradient checks per op and layer type
// ---------------------------------------------------------------------------

TEST(GradCheck, ElementwiseOps) {
  auto s = two_inputs(3, 4, 10);
  auto r = gradient_check(s, [&](Tape& t) {
    Var a = t.param(s, "a"), b = t.param(s, "b");
    Var y = add(mul(a, b), sub(exp(a), scale(square(b), 0.5)));
    y = add_scalar(minimum(y, relu(add(a, b))), 0.3);
    return readout(t, y);
  });
  EXPECT_LT(r.max_rel_err, kGradTol) << r.worst;
}

TEST(GradCheck, ClampAwayFromKinks) {
  std::mt19937_64 rng(11);
  ParameterStore s;
  Tensor a = random_tensor(4, 5, rng, -2.0, 2.0);
  for (double& v : a.values())
    if (std::abs(std::abs(v) - 1.0) < 1e-3) v += 0.01;
  s.add("a", a);
  auto r = gradient_check(s, [&](Tape& t) { return readout(t, clamp(t.param(s, "a"), -1.0, 1.0)); });
  EXPECT_LT(r.max_rel_err, kGradTol) << r.worst;
}

TEST(GradCheck, RowAndReductionOps) {
  std::mt19937_64 rng(12);
  ParameterStore s;
  s.add("a", random_tensor(4, 3, rng));
  s.add("row", random_tensor(1, 3, rng));
  s.add("w", random_tensor(3, 2, rng));
  Tensor weights = random_tensor(4, 3, rng);
  auto r = gradient_check(s, [&](Tape& t) {
    Var a = t.param(s, "a"), row = t.param(s, "row"), w = t.param(s, "w");
    Var y = mul_row(add_row(a, row), row);
    Var z = add(matmul(y, w), broadcast_rows(matmul(row, w), 4));
    Var g = gather_rows(concat_rows({y, a}), {0, 5, 2, 2, 7});
    Var c = concat_cols({g, reshape(g, Shape{5, 3})});
    return add(add(readout(t, sum_cols(z)), readout(t, c, 3)), add(weighted_sum(a, weights), mean(square(a))));
  });
  EXPECT_LT(r.max_rel_err, kGradTol) << r.worst;
}

TEST(GradCheck, PoolRows) {
  std::mt19937_64 rng(13);
  ParameterStore s;
  s.add("a", random_tensor(6, 3, rng));
  auto r = gradient_check(s, [&](Tape& t) {
    return readout(t, pool_rows(t.param(s, "a"), 3, {0.5, 0.0, 0.5, 0.2, 0.3, 0.5}));
  });
  EXPECT_LT(r.max_rel_err, kGradTol) << r.worst;
}

TEST(GradCheck, AffineLayer) {
  std::mt19937_64 rng(14);
  ParameterStore s;
  add_affine_params(s, "f", 4, 3, rng);
  s.add("x", random_tensor(5, 4, rng));
  auto r = gradient_check(s, [&](Tape& t) { return readout(t, affine_layer(t, s, "f", t.param(s, "x"))); });
  EXPECT_LT(r.max_rel_err, kGradTol) << r.worst;
}

TEST(GradCheck, LayerNorm) {
  std::mt19937_64 rng(15);
  ParameterStore s;
  s.add("x", random_tensor(4, 6, rng));
  s.add("ln/g", random_tensor(1, 6, rng, 0.5, 1.5));
  s.add("ln/b", random_tensor(1, 6, rng));
  auto r = gradient_check(s, [&](Tape& t) { return readout(t, layer_norm_layer(t, s, "ln", t.param(s, "x"))); });
  EXPECT_LT(r.max_rel_err, kGradTol) << r.worst;
}

TEST(GradCheck, MlpWithMseLoss) {
  std::mt19937_64 rng(16);
  ParameterStore s;
  Mlp mlp{"m", {4, 8, 8, 3}};
  mlp.init(s, rng);
  Tensor x = random_tensor(6, 4, rng), target = random_tensor(6, 3, rng);
  auto r = gradient_check(s, [&](Tape& t) {
    Var y = mlp.forward(t, s, t.constant(x));
    return mean(square(sub(y, t.constant(target))));
  });
  EXPECT_LT(r.max_rel_err, kGradTol) << r.worst;
  EXPECT_GT(r.checked, 100u);
}

TEST(GradCheck, RawAttentionMaskedMultiHead) {
  std::mt19937_64 rng(17);
  ParameterStore s;
  s.add("q", random_tensor(2 * 3, 4, rng));
  s.add("k", random_tensor(2 * 5, 4, rng));
  s.add("v", random_tensor(2 * 5, 4, rng));
  AttentionMask mask{3, 5, std::vector<std::uint8_t>(2 * 3 * 5, 1)};
  mask.allow[1] = 0;
  mask.allow[15 + 4] = 0;
  mask.allow[15 + 5 + 2] = 0;
  auto r = gradient_check(s, [&](Tape& t) {
    return readout(t, attention(t.param(s, "q"), t.param(s, "k"), t.param(s, "v"), 2, 2, &mask));
  });
  EXPECT_LT(r.max_rel_err, kGradTol) << r.worst;
}

TEST(GradCheck, AttentionBlockCausal) {
  std::mt19937_64 rng(18);
  ParameterStore s;
  AttentionBlock blk{"att", 4, 6, 2};
  blk.init(s, rng);
  s.add("x", random_tensor(2 * 4, 4, rng));
  const auto mask = AttentionMask::causal(4);
  auto r = gradient_check(s, [&](Tape& t) {
    Var x = t.param(s, "x");
    return readout(t, blk.forward(t, s, x, x, 2, &mask));
  });
  EXPECT_LT(r.max_rel_err, kGradTol) << r.worst;
}

// ---------------------------------------------------------------------------
// Layer norm forward
// ---------------------------------------------------------------------------

TEST(LayerNorm, ConstantRowGivesZeros) {
  Tape t;
  Var y = layer_norm(t.constant(Tensor::matrix(1, 4, 2.5)), t.constant(Tensor::matrix(1, 4, 1.0)),
                     t.constant(Tensor::matrix(1, 4, 0.0)));
  for (double v : y.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, NormalisedRowIsKept) {
  Tape t;
  Var y = layer_norm(t.constant(Tensor::matrix(1, 2, {-1.0, 1.0})), t.constant(Tensor::matrix(1, 2, 1.0)),
                     t.constant(Tensor::matrix(1, 2, 0.0)));
  const double scale = 1.0 / std::sqrt(1.0 + kLayerNormEps);
  EXPECT_NEAR(y.value()[0], -scale, 1e-15);
  EXPECT_NEAR(y.value()[1], scale, 1e-15);
}

TEST(LayerNorm, RandomRowHasUnitMoments) {
  std::mt19937_64 rng(19);
  Tape t;
  Var y = layer_norm(t.constant(random_tensor(3, 16, rng, -5.0, 5.0)), t.constant(Tensor::matrix(1, 16, 1.0)),
                     t.constant(Tensor::matrix(1, 16, 0.0)));
  for (std::size_t r = 0; r < 3; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 16; ++j) mu += y.value().at(r, j) / 16.0;
    for (std::size_t j = 0; j < 16; ++j) var += (y.value().at(r, j) - mu) * (y.value().at(r, j) - mu) / 16.0;
    EXPECT_NEAR(mu, 0.0, 1e-10);
    EXPECT_NEAR(var, 1.0, 1e-8);  // var/(var+eps) with var ~ 8
  }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

TEST(Adam, ZeroGradientNoDecayIsNoop) {
  ParameterStore s;
  s.add("p", Tensor::matrix(2, 2, {1, -2, 3, -4}));
  const Tensor before = s.value("p");
  GradientMap g{{"p", Tensor::matrix(2, 2)}};
  adam_step(s, g, AdamConfig{.lr = 0.1, .weight_decay = 0.0});
  EXPECT_EQ(max_abs_diff(s.value("p"), before), 0.0);
}

TEST(Adam, FirstStepMovesBySignTimesLr) {
  ParameterStore s;
  s.add("p", Tensor::matrix(1, 4, {1, -2, 3, -4}));
  GradientMap g{{"p", Tensor::matrix(1, 4, {0.3, -5.0, 1e-3, -0.02})}};
  const double lr = 0.01;
  adam_step(s, g, AdamConfig{.lr = lr, .weight_decay = 0.0});
  const double before[] = {1, -2, 3, -4};
  for (std::size_t i = 0; i < 4; ++i) {
    const double gi = g.at("p")[i];
    // m_hat = g, v_hat = g^2, step = g / (|g| + eps)
    const double expect = before[i] - lr * gi / (std::abs(gi) + 1e-8);
    EXPECT_NEAR(s.value("p")[i], expect, 1e-15);
    EXPECT_NEAR(s.value("p")[i] - before[i], -lr * (gi > 0 ? 1.0 : -1.0), lr * 1e-4);
  }
}

TEST(Adam, DecoupledDecayScalesParameter) {
  ParameterStore s;
  s.add("p", Tensor::matrix(1, 3, {1.0, -2.0, 0.5}));
  GradientMap g{{"p", Tensor::matrix(1, 3)}};
  const double lr = 0.1;
  adam_step(s, g, AdamConfig{.lr = lr, .weight_decay = 0.01});
  const double before[] = {1.0, -2.0, 0.5};
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(s.value("p")[i], before[i] * (1.0 - lr * 0.01));
}

TEST(Adam, FrozenParametersAreBitIdentical) {
  std::mt19937_64 rng(20);
  ParameterStore s;
  s.add("a", random_tensor(3, 3, rng));
  s.add("b", random_tensor(3, 3, rng));
  s.set_frozen_prefix("b", true);
  const Tensor b0 = s.value("b");
  for (int i = 0; i < 5; ++i) {
    GradientMap g{{"a", random_tensor(3, 3, rng)}};
    adam_step(s, g, AdamConfig{});
  }
  EXPECT_EQ(std::memcmp(b0.data(), s.value("b").data(), b0.size() * sizeof(double)), 0);
}

TEST(Adam, GradientClipCapsGlobalNorm) {
  ParameterStore s1, s2;
  s1.add("p", Tensor::matrix(1, 2, 0.0));
  s2.add("p", Tensor::matrix(1, 2, 0.0));
  GradientMap big{{"p", Tensor::matrix(1, 2, {30.0, 40.0})}};
  GradientMap unit{{"p", Tensor::matrix(1, 2, {0.6, 0.8})}};
  AdamConfig c{.lr = 0.1, .weight_decay = 0.0, .max_grad_norm = 1.0};
  adam_step(s1, big, c);
  c.max_grad_norm = 0.0;
  adam_step(s2, unit, c);
  EXPECT_NEAR(s1.value("p")[0], s2.value("p")[0], 1e-15);
  EXPECT_NEAR(global_grad_norm(big), 50.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Determinism and checkpoints
// ---------------------------------------------------------------------------

TEST(Forward, DeterministicAcrossTapes) {
  std::mt19937_64 rng(21);
  ParameterStore s;
  Mlp mlp{"m", {3, 6, 2}};
  mlp.init(s, rng);
  AttentionBlock blk{"att", 2, 4, 2};
  blk.init(s, rng);
  Tensor x = random_tensor(6, 3, rng);
  auto run = [&] {
    Tape t(Tape::Mode::inference);
    Var y = mlp.forward(t, s, t.constant(x));
    return blk.forward(t, s, y, y, 2, nullptr).value();
  };
  const Tensor a = run(), b = run();
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
}

TEST(Checkpoint, RoundTripIsExact) {
  std::mt19937_64 rng(22);
  ParameterStore s;
  Mlp mlp{"net", {3, 5, 2}};
  mlp.init(s, rng);
  s.add("scalar", Tensor::scalar(-0.1));
  const std::string bytes = encode_checkpoint(s);
  EXPECT_EQ(bytes.substr(0, 4), "ODM1");

  ParameterStore t;
  Mlp{"net", {3, 5, 2}}.init(t, rng);
  t.add("scalar", Tensor::scalar(0.0));
  load_into(t, decode_checkpoint(bytes));
  EXPECT_EQ(encode_checkpoint(t), bytes);

  const auto path = (std::filesystem::temp_directory_path() / "odm_ckpt_roundtrip.odm").string();
  save_checkpoint(s, path);
  ParameterStore u;
  Mlp{"net", {3, 5, 2}}.init(u, rng);
  u.add("scalar", Tensor::scalar(1.0));
  load_into(u, read_checkpoint(path));
  EXPECT_EQ(encode_checkpoint(u), bytes);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptInput) {
  ParameterStore s;
  s.add("p", Tensor::matrix(2, 2, 1.0));
  std::string bytes = encode_checkpoint(s);
  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), std::runtime_error);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), std::runtime_error);

  ParameterStore other;
  other.add("p", Tensor::matrix(3, 2, 1.0));
  EXPECT_THROW(load_into(other, decode_checkpoint(bytes)), std::runtime_error);
  ParameterStore missing;
  EXPECT_THROW(load_into(missing, decode_checkpoint(bytes)), std::runtime_error);
}
