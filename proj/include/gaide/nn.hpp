#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gaide/tensor.hpp"

namespace gaide {

// name -> parameter handle pairs; handles share storage with the model
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline void zero_grads(NamedParams& params) {
  for (auto& [name, p] : params) p.zero_grad();
}

struct Linear {
  Tensor w;  // [in x out]
  Tensor b;  // [out]

  Linear() = default;

  Linear(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    w = Tensor::uniform({in, out}, rng, -bound, bound).set_requires_grad(true);
    b = Tensor::zeros({out}).set_requires_grad(true);
  }

  Tensor forward(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }

  void collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

// Fully connected stack with the smooth gated unit between layers.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;

  Mlp(const std::vector<std::size_t>& widths, Rng& rng) {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
      layers.emplace_back(widths[i], widths[i + 1], rng);
  }

  Tensor forward(Tensor x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].forward(x);
      if (i + 1 < layers.size()) x = silu(x);
    }
    return x;
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + ".l" + std::to_string(i), out);
  }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  LayerNormParams() = default;

  explicit LayerNormParams(std::size_t h) {
    gain = Tensor::full({h}, 1.0).set_requires_grad(true);
    bias = Tensor::zeros({h}).set_requires_grad(true);
  }

  Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias); }

  void collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".gain", gain);
    out.emplace_back(prefix + ".bias", bias);
  }
};

// Standard Adam with bias correction. Moment buffers are keyed by position in
// the parameter list, which must stay stable across steps.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

inline void adam_step(NamedParams& params, AdamState& state, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].second.numel(), 0.0);
      state.v[i].assign(params[i].second.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state holds " + std::to_string(state.m.size()) +
                                " buffers for " + std::to_string(params.size()) +
                                " parameters");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].second;
    if (state.m[i].size() != p.numel())
      throw std::invalid_argument("adam_step: buffer size mismatch for " + params[i].first);
    if (!p.has_grad()) continue;  // no gradient reached this parameter
    const auto& g = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    auto& x = p.data();
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      x[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace gaide
