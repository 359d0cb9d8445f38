#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "odm/numerics/attention.hpp"
#include "odm/numerics/parameters.hpp"
#include "odm/numerics/tape.hpp"

namespace odm::nn {

inline constexpr double kLayerNormEps = 1e-8;

/// Row-wise (x - mean) / sqrt(var + eps) * gain + bias.
inline Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps) {
  const std::size_t c = x.cols(), rows = x.rows();
  detail::require(gain.size() == c && bias.size() == c, "layer_norm",
                  "gain/bias width mismatch with " + std::to_string(c));
  Tensor xhat = Tensor::matrix(rows, c);
  std::vector<double> inv_std(rows);
  Tensor out = Tensor::matrix(rows, c);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.value().data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat.at(r, j) = (xr[j] - mu) * inv_std[r];
      out.at(r, j) = xhat.at(r, j) * gain.value()[j] + bias.value()[j];
    }
  }
  return x.tape()->record(std::move(out), {x, gain, bias},
      [x, gain, bias, c, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(gain) || t.requires_grad(bias)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) {
              if (t.requires_grad(gain)) t.grad_target(gain)[j] += g.at(r, j) * xhat.at(r, j);
              if (t.requires_grad(bias)) t.grad_target(bias)[j] += g.at(r, j);
            }
        }
        if (!t.requires_grad(x)) return;
        Tensor& gx = t.grad_target(x);
        const Tensor& gv = t.value(gain.id());
        const double n = static_cast<double>(c);
        for (std::size_t r = 0; r < rows; ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double dy = g.at(r, j) * gv[j];
            s1 += dy;
            s2 += dy * xhat.at(r, j);
          }
          for (std::size_t j = 0; j < c; ++j) {
            const double dy = g.at(r, j) * gv[j];
            gx.at(r, j) += inv_std[r] * (dy - s1 / n - xhat.at(r, j) * s2 / n);
          }
        }
      },
      "layer_norm");
}

/// Affine layer parameters `<prefix>/w` (in x out) and `<prefix>/b` (1 x out).
inline void add_affine_params(ParameterStore& store, const std::string& prefix, std::size_t in,
                              std::size_t out, std::mt19937_64& rng) {
  store.add_uniform(prefix + "/w", Shape{in, out}, in, rng);
  store.add_uniform(prefix + "/b", Shape{1, out}, in, rng);
}

inline void add_layer_norm_params(ParameterStore& store, const std::string& prefix, std::size_t width) {
  store.add(prefix + "/g", Tensor(Shape{1, width}, 1.0));
  store.add(prefix + "/b", Tensor(Shape{1, width}, 0.0));
}

inline Var affine_layer(Tape& tape, const ParameterStore& store, const std::string& prefix, Var x) {
  return affine(x, tape.param(store, prefix + "/w"), tape.param(store, prefix + "/b"));
}

inline Var layer_norm_layer(Tape& tape, const ParameterStore& store, const std::string& prefix, Var x) {
  return layer_norm(x, tape.param(store, prefix + "/g"), tape.param(store, prefix + "/b"));
}

/// MLP with layer widths `dims` (input first). Hidden layers are
/// affine -> LayerNorm -> ReLU; the final layer is affine only.
/// Parameters live at `<prefix>/l<i>` and `<prefix>/ln<i>`.
struct Mlp {
  std::string prefix;
  std::vector<std::size_t> dims;

  std::size_t in_dim() const { return dims.front(); }
  std::size_t out_dim() const { return dims.back(); }

  void init(ParameterStore& store, std::mt19937_64& rng) const {
    if (dims.size() < 2) throw std::invalid_argument("Mlp '" + prefix + "': need at least two widths");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      add_affine_params(store, prefix + "/l" + std::to_string(i), dims[i], dims[i + 1], rng);
      if (i + 2 < dims.size()) add_layer_norm_params(store, prefix + "/ln" + std::to_string(i), dims[i + 1]);
    }
  }

  Var forward(Tape& tape, const ParameterStore& store, Var x) const {
    detail::require(x.cols() == dims.front(), "mlp_forward",
                    prefix + " expects width " + std::to_string(dims.front()) + ", got " +
                        std::to_string(x.cols()));
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      x = affine_layer(tape, store, prefix + "/l" + std::to_string(i), x);
      if (i + 2 < dims.size()) {
        x = layer_norm_layer(tape, store, prefix + "/ln" + std::to_string(i), x);
        x = relu(x);
      }
    }
    return x;
  }
};

inline Var mlp_forward(Tape& tape, const ParameterStore& store, const Mlp& mlp, Var x) {
  return mlp.forward(tape, store, x);
}

/// Multi-head attention block: Q/K/V projections (model -> inner width),
/// grouped attention, output projection back to the model width.
struct AttentionBlock {
  std::string prefix;
  std::size_t model_dim = 0;
  std::size_t inner_dim = 0;
  std::size_t heads = 1;

  void init(ParameterStore& store, std::mt19937_64& rng) const {
    add_affine_params(store, prefix + "/q", model_dim, inner_dim, rng);
    add_affine_params(store, prefix + "/k", model_dim, inner_dim, rng);
    add_affine_params(store, prefix + "/v", model_dim, inner_dim, rng);
    add_affine_params(store, prefix + "/o", inner_dim, model_dim, rng);
  }

  Var forward(Tape& tape, const ParameterStore& store, Var query, Var context, std::size_t groups,
              const AttentionMask* mask) const {
    Var q = affine_layer(tape, store, prefix + "/q", query);
    Var k = affine_layer(tape, store, prefix + "/k", context);
    Var v = affine_layer(tape, store, prefix + "/v", context);
    Var a = attention(q, k, v, groups, heads, mask);
    return affine_layer(tape, store, prefix + "/o", a);
  }
};

}  // namespace odm::nn
