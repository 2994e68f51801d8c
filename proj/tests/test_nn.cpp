#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "quadsec/checkpoint.hpp"
#include "quadsec/nn.hpp"

using namespace quadsec;

namespace {

MlpSpec tiny_spec() {
  MlpSpec s;
  s.input_dim = 5;
  s.hidden = {7, 6};
  s.action_dim = 3;
  return s;
}

// Naive forward oracle: explicit loops, no shared code with the header.
ForwardOut forward_oracle(const PolicyParams& p, const std::vector<double>& obs) {
  std::vector<double> x = obs;
  for (const auto& l : p.trunk) {
    std::vector<double> y(l.out);
    for (int r = 0; r < l.out; ++r) {
      double s = l.b[r];
      for (int c = 0; c < l.in; ++c) s += l.w[size_t(r) * l.in + c] * x[c];
      y[r] = std::tanh(s);
    }
    x = y;
  }
  ForwardOut out;
  out.mean.resize(p.spec.action_dim);
  for (int r = 0; r < p.spec.action_dim; ++r) {
    double s = p.mean_head.b[r];
    for (int c = 0; c < p.mean_head.in; ++c)
      s += p.mean_head.w[size_t(r) * p.mean_head.in + c] * x[c];
    out.mean[r] = s;
  }
  out.value = p.value_head.b[0];
  for (int c = 0; c < p.value_head.in; ++c)
    out.value += p.value_head.w[c] * x[c];
  return out;
}

std::vector<double> random_obs(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST_CASE("parameter counting and flatten round trip") {
  const MlpSpec spec = tiny_spec();
  PolicyParams p = init_params(spec, 1);
  // 5*7+7 + 7*6+6 + 6*3+3 + 6*1+1 + 3
  REQUIRE(p.count() == 35u + 7u + 42u + 6u + 18u + 3u + 6u + 1u + 3u);

  std::vector<double> flat = p.flatten();
  REQUIRE(flat.size() == p.count());
  PolicyParams q = PolicyParams::zeros(spec);
  q.unflatten(flat);
  REQUIRE(q.flatten() == flat);

  flat.pop_back();
  REQUIRE_THROWS_AS(q.unflatten(flat), std::invalid_argument);
}

TEST_CASE("orthogonal init produces orthonormal rows at the stated gain") {
  const MlpSpec spec = tiny_spec();
  PolicyParams p = init_params(spec, 17);

  auto check_layer = [](const DenseLayer& l, double gain) {
    const bool wide = l.out <= l.in;
    const int nvec = wide ? l.out : l.in;
    auto vec = [&](int i, int k) {
      return wide ? l.w[size_t(i) * l.in + k] : l.w[size_t(k) * l.in + i];
    };
    const int dim = wide ? l.in : l.out;
    for (int i = 0; i < nvec; ++i)
      for (int j = 0; j <= i; ++j) {
        double d = 0.0;
        for (int k = 0; k < dim; ++k) d += vec(i, k) * vec(j, k);
        const double expect = (i == j) ? gain * gain : 0.0;
        REQUIRE(d == Catch::Approx(expect).margin(1e-10));
      }
    for (double b : l.b) REQUIRE(b == 0.0);
  };
  for (const auto& l : p.trunk) check_layer(l, std::sqrt(2.0));
  check_layer(p.mean_head, 0.01);
  check_layer(p.value_head, 1.0);
  for (double ls : p.log_std) REQUIRE(ls == Catch::Approx(std::log(0.5)));
}

TEST_CASE("init is deterministic in the seed") {
  const MlpSpec spec = tiny_spec();
  REQUIRE(init_params(spec, 5).flatten() == init_params(spec, 5).flatten());
  REQUIRE(init_params(spec, 5).flatten() != init_params(spec, 6).flatten());
}

TEST_CASE("forward matches the naive oracle") {
  const MlpSpec spec = tiny_spec();
  PolicyParams p = init_params(spec, 3);
  // perturb biases so they participate
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 0.3);
  p.for_each([&](double& v) { v += g(rng); });

  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> obs = random_obs(spec.input_dim, rng);
    const ForwardOut got = forward(p, obs);
    const ForwardOut want = forward_oracle(p, obs);
    REQUIRE(got.value == Catch::Approx(want.value).margin(1e-12));
    for (int i = 0; i < spec.action_dim; ++i)
      REQUIRE(got.mean[i] == Catch::Approx(want.mean[i]).margin(1e-12));
  }

  REQUIRE_THROWS_AS(forward(p, std::vector<double>(4, 0.0)),
                    std::invalid_argument);
}

TEST_CASE("backward matches central finite differences") {
  const MlpSpec spec = tiny_spec();
  PolicyParams p = init_params(spec, 9);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 0.2);
  p.for_each([&](double& v) { v += g(rng); });

  // loss L = sum_i a_i * mean_i + c * value over a 3-sample batch
  std::vector<BackwardSample> batch;
  std::vector<std::vector<double>> coeffs;
  std::vector<double> vcoeff;
  for (int s = 0; s < 3; ++s) {
    BackwardSample bs;
    bs.obs = random_obs(spec.input_dim, rng);
    bs.grad.d_mean.resize(spec.action_dim);
    for (double& a : bs.grad.d_mean) a = g(rng);
    bs.grad.d_value = g(rng);
    coeffs.push_back(bs.grad.d_mean);
    vcoeff.push_back(bs.grad.d_value);
    batch.push_back(std::move(bs));
  }
  auto loss = [&](const PolicyParams& q) {
    double total = 0.0;
    for (size_t s = 0; s < batch.size(); ++s) {
      const ForwardOut out = forward(q, batch[s].obs);
      for (int i = 0; i < spec.action_dim; ++i) total += coeffs[s][i] * out.mean[i];
      total += vcoeff[s] * out.value;
    }
    return total / double(batch.size());
  };

  const PolicyParams analytic = backward(p, batch);
  const std::vector<double> ga = analytic.flatten();
  std::vector<double> flat = p.flatten();
  const double h = 1e-6;
  const size_t n_weight = p.count() - p.log_std.size();

  double max_rel = 0.0;
  PolicyParams q = p;
  for (size_t i = 0; i < n_weight; ++i) {
    const double saved = flat[i];
    flat[i] = saved + h;
    q.unflatten(flat);
    const double up = loss(q);
    flat[i] = saved - h;
    q.unflatten(flat);
    const double dn = loss(q);
    flat[i] = saved;
    const double fd = (up - dn) / (2.0 * h);
    const double rel = std::abs(fd - ga[i]) / std::max(1.0, std::abs(fd));
    max_rel = std::max(max_rel, rel);
  }
  REQUIRE(max_rel < 1e-4);
  // log_std does not enter this loss, so its slots stay zero
  for (size_t i = n_weight; i < p.count(); ++i) REQUIRE(ga[i] == 0.0);
}

TEST_CASE("adam matches a scalar reference implementation") {
  MlpSpec spec;
  spec.input_dim = 1;
  spec.hidden = {1};
  spec.action_dim = 1;
  PolicyParams p = PolicyParams::zeros(spec);
  PolicyParams grads = PolicyParams::zeros(spec);

  // constant gradient 0.3 on every coordinate; track one scalar by hand
  grads.for_each([](double& v) { v = 0.3; });
  AdamState adam = AdamState::zeros(p);
  const double lr = 0.01;

  double m = 0.0, v = 0.0, x = 0.0;
  for (int t = 1; t <= 5; ++t) {
    adam_step(p, adam, grads, lr);
    m = 0.9 * m + 0.1 * 0.3;
    v = 0.999 * v + 0.001 * 0.09;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    x -= lr * mhat / (std::sqrt(vhat) + 1e-8);
  }
  REQUIRE(p.trunk[0].w[0] == Catch::Approx(x).margin(1e-14));
  REQUIRE(p.mean_head.b[0] == Catch::Approx(x).margin(1e-14));
  REQUIRE(adam.step == 5);
}

TEST_CASE("adam clamps log_std and rejects non-finite gradients") {
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden = {3};
  spec.action_dim = 2;
  PolicyParams p = init_params(spec, 1);
  p.log_std = {kLogStdMax + 5.0, kLogStdMin - 5.0};
  AdamState adam = AdamState::zeros(p);
  PolicyParams zero_g = PolicyParams::zeros(spec);
  adam_step(p, adam, zero_g, 0.0);
  REQUIRE(p.log_std[0] == kLogStdMax);
  REQUIRE(p.log_std[1] == kLogStdMin);

  PolicyParams bad = PolicyParams::zeros(spec);
  bad.trunk[0].w[0] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(adam_step(p, adam, bad, 0.01), gradient_error);
}

TEST_CASE("checkpoint round trip preserves every bit") {
  const MlpSpec spec = tiny_spec();
  Checkpoint ck;
  ck.params = init_params(spec, 77);
  ck.seed = 123456789ull;
  ck.adam = AdamState::zeros(ck.params);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& x : ck.adam->m) x = g(rng);
  for (double& x : ck.adam->v) x = g(rng);
  ck.adam->step = 42;

  const auto path = std::filesystem::temp_directory_path() / "qsck_rt.bin";
  save_checkpoint(path.string(), ck);
  const Checkpoint back = load_checkpoint(path.string());

  REQUIRE(back.seed == ck.seed);
  REQUIRE(back.params.spec == spec);
  REQUIRE(back.params.flatten() == ck.params.flatten());
  REQUIRE(back.adam.has_value());
  REQUIRE(back.adam->m == ck.adam->m);
  REQUIRE(back.adam->v == ck.adam->v);
  REQUIRE(back.adam->step == 42);

  // hashing the same file twice is stable
  REQUIRE(checkpoint_hash(path.string()) == checkpoint_hash(path.string()));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint without optimizer state round trips") {
  Checkpoint ck;
  ck.params = init_params(tiny_spec(), 8);
  ck.seed = 1;
  const auto path = std::filesystem::temp_directory_path() / "qsck_noopt.bin";
  save_checkpoint(path.string(), ck);
  const Checkpoint back = load_checkpoint(path.string());
  REQUIRE_FALSE(back.adam.has_value());
  REQUIRE(back.params.flatten() == ck.params.flatten());
  std::filesystem::remove(path);
}

TEST_CASE("corrupted checkpoints are rejected") {
  Checkpoint ck;
  ck.params = init_params(tiny_spec(), 8);
  const auto path = std::filesystem::temp_directory_path() / "qsck_bad.bin";
  save_checkpoint(path.string(), ck);

  SECTION("flipped payload byte fails the checksum") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(32);
    char b;
    f.seekg(32);
    f.get(b);
    f.seekp(32);
    f.put(char(b ^ 0x5a));
    f.close();
    REQUIRE_THROWS(load_checkpoint(path.string()));
  }

  SECTION("truncation fails") {
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 7);
    REQUIRE_THROWS(load_checkpoint(path.string()));
  }

  SECTION("wrong magic fails") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
    f.close();
    REQUIRE_THROWS(load_checkpoint(path.string()));
  }
  std::filesystem::remove(path);
}
