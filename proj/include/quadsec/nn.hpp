#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace quadsec {

// Shared-trunk MLP: tanh hidden layers, linear mean head (action_dim) and
// linear value head (1), plus a state-independent learnable log-std vector.
struct MlpSpec {
  int input_dim = 18;
  std::vector<int> hidden{128, 64};
  int action_dim = 4;

  bool valid() const {
    if (input_dim <= 0 || action_dim <= 0 || hidden.empty()) return false;
    for (int h : hidden)
      if (h <= 0) return false;
    return true;
  }
  bool operator==(const MlpSpec&) const = default;
};

struct DenseLayer {
  int in = 0, out = 0;
  std::vector<double> w;  // row-major, out x in
  std::vector<double> b;  // out

  DenseLayer() = default;
  DenseLayer(int in_, int out_) : in(in_), out(out_), w(size_t(in_) * out_, 0.0), b(out_, 0.0) {}
};

struct PolicyParams {
  MlpSpec spec;
  std::vector<DenseLayer> trunk;
  DenseLayer mean_head;
  DenseLayer value_head;
  std::vector<double> log_std;  // action_dim

  static PolicyParams zeros(const MlpSpec& spec) {
    if (!spec.valid()) throw std::invalid_argument("invalid MlpSpec");
    PolicyParams p;
    p.spec = spec;
    int prev = spec.input_dim;
    for (int h : spec.hidden) {
      p.trunk.emplace_back(prev, h);
      prev = h;
    }
    p.mean_head = DenseLayer(prev, spec.action_dim);
    p.value_head = DenseLayer(prev, 1);
    p.log_std.assign(spec.action_dim, 0.0);
    return p;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& l : trunk) n += l.w.size() + l.b.size();
    n += mean_head.w.size() + mean_head.b.size();
    n += value_head.w.size() + value_head.b.size();
    n += log_std.size();
    return n;
  }

  template <class Fn>
  void for_each(Fn&& fn) {
    for (auto& l : trunk) {
      for (double& v : l.w) fn(v);
      for (double& v : l.b) fn(v);
    }
    for (double& v : mean_head.w) fn(v);
    for (double& v : mean_head.b) fn(v);
    for (double& v : value_head.w) fn(v);
    for (double& v : value_head.b) fn(v);
    for (double& v : log_std) fn(v);
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(count());
    const_cast<PolicyParams*>(this)->for_each([&](double& v) { out.push_back(v); });
    return out;
  }

  void unflatten(std::span<const double> flat) {
    if (flat.size() != count()) throw std::invalid_argument("flat size mismatch");
    std::size_t i = 0;
    for_each([&](double& v) { v = flat[i++]; });
  }
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

namespace detail {

// Orthogonal init: orthonormalize gaussian rows (or columns when in < out)
// by modified Gram-Schmidt, then scale by gain.
inline void orthogonal_init(DenseLayer& layer, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int rows = layer.out, cols = layer.in;
  const bool wide = rows <= cols;
  const int nvec = wide ? rows : cols;
  const int dim = wide ? cols : rows;
  std::vector<std::vector<double>> v(nvec, std::vector<double>(dim));
  for (auto& row : v)
    for (double& x : row) x = gauss(rng);
  for (int i = 0; i < nvec; ++i) {
    for (int j = 0; j < i; ++j) {
      double d = 0.0;
      for (int k = 0; k < dim; ++k) d += v[i][k] * v[j][k];
      for (int k = 0; k < dim; ++k) v[i][k] -= d * v[j][k];
    }
    double n = 0.0;
    for (double x : v[i]) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-12) n = 1.0;
    for (double& x : v[i]) x /= n;
  }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      layer.w[size_t(r) * cols + c] = gain * (wide ? v[r][c] : v[c][r]);
  std::fill(layer.b.begin(), layer.b.end(), 0.0);
}

}  // namespace detail

inline PolicyParams init_params(const MlpSpec& spec, std::uint64_t seed) {
  PolicyParams p = PolicyParams::zeros(spec);
  std::mt19937_64 rng(seed);
  for (auto& l : p.trunk) detail::orthogonal_init(l, std::sqrt(2.0), rng);
  detail::orthogonal_init(p.mean_head, 0.01, rng);
  detail::orthogonal_init(p.value_head, 1.0, rng);
  std::fill(p.log_std.begin(), p.log_std.end(), std::log(0.5));
  return p;
}

struct ForwardOut {
  std::vector<double> mean;  // action_dim
  double value = 0.0;
};

// Activations cached for backprop: input plus post-tanh output of each
// trunk layer.
struct ForwardCache {
  std::vector<std::vector<double>> acts;
};

namespace detail {

inline std::vector<double> dense(const DenseLayer& l, std::span<const double> x) {
  std::vector<double> y(l.b);
  for (int r = 0; r < l.out; ++r) {
    const double* wr = l.w.data() + size_t(r) * l.in;
    double s = y[r];
    for (int c = 0; c < l.in; ++c) s += wr[c] * x[c];
    y[r] = s;
  }
  return y;
}

}  // namespace detail

inline ForwardOut forward(const PolicyParams& p, std::span<const double> obs,
                          ForwardCache* cache = nullptr) {
  if (int(obs.size()) != p.spec.input_dim)
    throw std::invalid_argument("observation dimension mismatch");
  std::vector<double> x(obs.begin(), obs.end());
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(x);
  }
  for (const auto& l : p.trunk) {
    x = detail::dense(l, x);
    for (double& v : x) v = std::tanh(v);
    if (cache) cache->acts.push_back(x);
  }
  ForwardOut out;
  out.mean = detail::dense(p.mean_head, x);
  out.value = detail::dense(p.value_head, x)[0];
  return out;
}

// One sample's upstream loss gradients at the network outputs.
struct OutputGrad {
  std::vector<double> d_mean;  // action_dim
  double d_value = 0.0;
};

// Exact reverse pass for one sample, accumulating into `grads` (same shape
// as the parameters; log_std untouched here).
inline void backward_sample(const PolicyParams& p, const ForwardCache& cache,
                            const OutputGrad& up, PolicyParams& grads) {
  const auto& top = cache.acts.back();
  const int top_dim = int(top.size());
  std::vector<double> d_top(top_dim, 0.0);

  auto head_back = [&](const DenseLayer& head, DenseLayer& ghead,
                       std::span<const double> dy) {
    for (int r = 0; r < head.out; ++r) {
      ghead.b[r] += dy[r];
      double* gw = ghead.w.data() + size_t(r) * head.in;
      const double* wr = head.w.data() + size_t(r) * head.in;
      for (int c = 0; c < head.in; ++c) {
        gw[c] += dy[r] * top[c];
        d_top[c] += dy[r] * wr[c];
      }
    }
  };
  head_back(p.mean_head, grads.mean_head, up.d_mean);
  const double dv[1] = {up.d_value};
  head_back(p.value_head, grads.value_head, std::span<const double>(dv, 1));

  std::vector<double> dy = std::move(d_top);
  for (int li = int(p.trunk.size()) - 1; li >= 0; --li) {
    const DenseLayer& l = p.trunk[li];
    DenseLayer& g = grads.trunk[li];
    const auto& act_out = cache.acts[li + 1];
    const auto& act_in = cache.acts[li];
    // through tanh: dz = dy * (1 - y^2)
    for (int r = 0; r < l.out; ++r) dy[r] *= 1.0 - act_out[r] * act_out[r];
    std::vector<double> dx(l.in, 0.0);
    for (int r = 0; r < l.out; ++r) {
      g.b[r] += dy[r];
      double* gw = g.w.data() + size_t(r) * l.in;
      const double* wr = l.w.data() + size_t(r) * l.in;
      for (int c = 0; c < l.in; ++c) {
        gw[c] += dy[r] * act_in[c];
        dx[c] += dy[r] * wr[c];
      }
    }
    dy = std::move(dx);
  }
}

struct BackwardSample {
  std::vector<double> obs;
  OutputGrad grad;
};

// Mean gradient over a batch of per-output upstream gradients.
inline PolicyParams backward(const PolicyParams& p,
                             const std::vector<BackwardSample>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  PolicyParams grads = PolicyParams::zeros(p.spec);
  ForwardCache cache;
  for (const auto& s : batch) {
    forward(p, s.obs, &cache);
    backward_sample(p, cache, s.grad, grads);
  }
  const double inv = 1.0 / double(batch.size());
  grads.for_each([&](double& v) { v *= inv; });
  return grads;
}

struct AdamState {
  std::vector<double> m, v;
  std::int64_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static AdamState zeros(const PolicyParams& p) {
    AdamState s;
    s.m.assign(p.count(), 0.0);
    s.v.assign(p.count(), 0.0);
    return s;
  }
};

struct gradient_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void adam_step(PolicyParams& params, AdamState& adam,
                      const PolicyParams& grads, double lr) {
  std::vector<double> g = grads.flatten();
  if (g.size() != adam.m.size()) throw std::invalid_argument("adam shape mismatch");
  for (double x : g)
    if (!std::isfinite(x)) throw gradient_error("non-finite gradient");
  adam.step += 1;
  const double c1 = 1.0 - std::pow(adam.beta1, double(adam.step));
  const double c2 = 1.0 - std::pow(adam.beta2, double(adam.step));
  std::size_t i = 0;
  params.for_each([&](double& p) {
    adam.m[i] = adam.beta1 * adam.m[i] + (1.0 - adam.beta1) * g[i];
    adam.v[i] = adam.beta2 * adam.v[i] + (1.0 - adam.beta2) * g[i] * g[i];
    const double mhat = adam.m[i] / c1;
    const double vhat = adam.v[i] / c2;
    p -= lr * mhat / (std::sqrt(vhat) + adam.eps);
    ++i;
  });
  for (double& ls : params.log_std)
    ls = std::clamp(ls, kLogStdMin, kLogStdMax);
}

}  // namespace quadsec
