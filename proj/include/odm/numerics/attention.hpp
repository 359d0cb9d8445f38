#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "odm/numerics/tape.hpp"

namespace odm::nn {

/// Boolean allow-matrix of shape q_len x k_len, either shared by every group
/// or given once per group (groups x q_len x k_len). true = may attend.
struct AttentionMask {
  std::size_t q_len = 0;
  std::size_t k_len = 0;
  std::vector<std::uint8_t> allow;

  bool per_group() const { return allow.size() > q_len * k_len; }

  bool allowed(std::size_t group, std::size_t i, std::size_t j) const {
    const std::size_t base = per_group() ? group * q_len * k_len : 0;
    return allow[base + i * k_len + j] != 0;
  }

  static AttentionMask causal(std::size_t n) {
    AttentionMask m{n, n, std::vector<std::uint8_t>(n * n, 0)};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) m.allow[i * n + j] = 1;
    return m;
  }

  /// Every query may see exactly the keys flagged in `key_ok`.
  static AttentionMask keys(std::size_t q_len, const std::vector<bool>& key_ok) {
    AttentionMask m{q_len, key_ok.size(), std::vector<std::uint8_t>(q_len * key_ok.size(), 0)};
    for (std::size_t i = 0; i < q_len; ++i)
      for (std::size_t j = 0; j < key_ok.size(); ++j) m.allow[i * key_ok.size() + j] = key_ok[j];
    return m;
  }
};

struct AttentionResult {
  Tensor output;
  /// groups x heads x q_len x k_len softmax weights (exact zeros where masked).
  std::vector<double> weights;
};

/// Scaled dot-product multi-head attention without projections.
///
/// q is (groups*q_len) x d, k and v are (groups*k_len) x d. Each group
/// attends only within itself; heads split d into equal slices.
inline AttentionResult attention_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                                         std::size_t groups, std::size_t heads,
                                         const AttentionMask* mask = nullptr) {
  const std::size_t d = q.cols();
  if (groups == 0 || heads == 0 || d % heads != 0)
    throw std::invalid_argument("attention: width " + std::to_string(d) +
                                " not divisible by " + std::to_string(heads) + " heads");
  if (k.cols() != d || v.cols() != d)
    throw std::invalid_argument("attention: Q/K/V widths differ");
  if (q.rows() % groups || k.rows() % groups || v.rows() != k.rows())
    throw std::invalid_argument("attention: row counts incompatible with groups");
  const std::size_t lq = q.rows() / groups, lk = k.rows() / groups, dh = d / heads;
  if (mask) {
    if (mask->q_len != lq || mask->k_len != lk)
      throw std::invalid_argument("attention: mask shape mismatch");
    if (mask->allow.size() != lq * lk && mask->allow.size() != groups * lq * lk)
      throw std::invalid_argument("attention: mask size mismatch");
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionResult res{Tensor::matrix(q.rows(), d), std::vector<double>(groups * heads * lq * lk, 0.0)};
  std::vector<double> scores(lk);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t i = 0; i < lq; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < lk && !any; ++j) any = !mask || mask->allowed(g, i, j);
      if (!any)
        throw std::invalid_argument("attention: fully masked query row " + std::to_string(i) +
                                    " in group " + std::to_string(g));
      const double* qi = q.data() + (g * lq + i) * d;
      for (std::size_t h = 0; h < heads; ++h) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < lk; ++j) {
          if (mask && !mask->allowed(g, i, j)) continue;
          const double* kj = k.data() + (g * lk + j) * d + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[h * dh + c] * kj[c];
          scores[j] = s * inv_sqrt;
          mx = std::max(mx, scores[j]);
        }
        double* w = res.weights.data() + ((g * heads + h) * lq + i) * lk;
        double z = 0.0;
        for (std::size_t j = 0; j < lk; ++j) {
          if (mask && !mask->allowed(g, i, j)) continue;
          w[j] = std::exp(scores[j] - mx);
          z += w[j];
        }
        double* out = res.output.data() + (g * lq + i) * d + h * dh;
        for (std::size_t j = 0; j < lk; ++j) {
          if (w[j] == 0.0) continue;
          w[j] /= z;
          const double* vj = v.data() + (g * lk + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) out[c] += w[j] * vj[c];
        }
      }
    }
  }
  return res;
}

/// Differentiable attention; same contract as attention_forward.
inline Var attention(Var q, Var k, Var v, std::size_t groups, std::size_t heads,
                     const AttentionMask* mask = nullptr) {
  AttentionResult res = attention_forward(q.value(), k.value(), v.value(), groups, heads, mask);
  auto weights = std::make_shared<std::vector<double>>(std::move(res.weights));
  const std::size_t d = q.cols(), lq = q.rows() / groups, lk = k.rows() / groups, dh = d / heads;
  return q.tape()->record(std::move(res.output), {q, k, v},
      [q, k, v, groups, heads, d, lq, lk, dh, weights](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& qv = t.value(q.id());
        const Tensor& kv = t.value(k.id());
        const Tensor& vv = t.value(v.id());
        const bool rq = t.requires_grad(q), rk = t.requires_grad(k), rv = t.requires_grad(v);
        Tensor* gq = rq ? &t.grad_target(q) : nullptr;
        Tensor* gk = rk ? &t.grad_target(k) : nullptr;
        Tensor* gv = rv ? &t.grad_target(v) : nullptr;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        std::vector<double> dw(lk);
        for (std::size_t gr = 0; gr < groups; ++gr)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < lq; ++i) {
              const double* w = weights->data() + ((gr * heads + h) * lq + i) * lk;
              const double* go = g.data() + (gr * lq + i) * d + h * dh;
              double dot = 0.0;
              for (std::size_t j = 0; j < lk; ++j) {
                dw[j] = 0.0;
                if (w[j] == 0.0) continue;
                const double* vj = vv.data() + (gr * lk + j) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) dw[j] += go[c] * vj[c];
                dot += w[j] * dw[j];
                if (gv) {
                  double* gvj = gv->data() + (gr * lk + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gvj[c] += w[j] * go[c];
                }
              }
              if (!gq && !gk) continue;
              const double* qi = qv.data() + (gr * lq + i) * d + h * dh;
              for (std::size_t j = 0; j < lk; ++j) {
                if (w[j] == 0.0) continue;
                const double ds = w[j] * (dw[j] - dot) * inv_sqrt;
                const double* kj = kv.data() + (gr * lk + j) * d + h * dh;
                if (gq) {
                  double* gqi = gq->data() + (gr * lq + i) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                }
                if (gk) {
                  double* gkj = gk->data() + (gr * lk + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
      },
      "attention");
}

}  // namespace odm::nn
