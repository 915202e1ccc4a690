#include <cmath>
#include <random>

#include "doctest.h"
#include "hypergoal/errors.hpp"
#include "hypergoal/gradcheck.hpp"
#include "hypergoal/optim.hpp"
#include "hypergoal/shaping.hpp"

using namespace hypergoal;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

Tensor uniform_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t({r, c});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("dynamics zero network and determinism") {
  DynamicsConfig cfg;
  Rng rng(1);
  ParamSet p = init_dynamics(cfg, rng);
  LatentVector z{random_vector(16, rng)};
  CHECK(dynamics_forward(p, cfg, z, {0.3, -0.2}) == dynamics_forward(p, cfg, z, {0.3, -0.2}));
  for (auto& [name, t] : p.entries())
    for (auto& v : t.data()) v = 0.0;
  CHECK(dynamics_forward(p, cfg, z, {0.3, -0.2}).values == std::vector<double>(16, 0.0));
  CHECK_THROWS_AS(dynamics_forward(p, cfg, LatentVector{{1.0}}, {0, 0}), ShapeError);
}

TEST_CASE("dynamics gradient matches finite differences") {
  DynamicsConfig cfg{3, 5};
  Rng rng(2);
  ParamSet p = init_dynamics(cfg, rng);
  Graph g;
  Binder bind(g);
  bind.attach(p, true);
  auto z = g.param("z", Tensor({2, 3}, random_vector(6, rng)));
  auto out = dynamics_forward(bind, cfg, z, g.input("a", uniform_matrix(2, 2, rng)));
  CHECK(fd_check(g, g.sum(g.square(out))).max_relative_error < 1e-6);
}

TEST_CASE("pred_loss examples") {
  DynamicsConfig cfg;
  Rng rng(3);
  ParamSet p = init_dynamics(cfg, rng);
  Graph g;
  Binder bind(g);
  bind.attach(p, false);
  auto z = g.input("z", Tensor({1, 16}, random_vector(16, rng)));
  auto a = g.input("a", Tensor::row({0.1, 0.2}));
  auto predicted = dynamics_forward(bind, cfg, z, a);
  CHECK(g.scalar(pred_loss(bind, cfg, z, a, g.constant(g.value(predicted)))) == 0.0);
  Tensor shifted = g.value(predicted);
  shifted[0] -= 1.0;
  CHECK(g.scalar(pred_loss(bind, cfg, z, a, g.constant(shifted))) == doctest::Approx(1.0 / 16).epsilon(1e-12));
  CHECK(g.scalar(pred_loss(bind, cfg, z, a, g.input("n", Tensor({1, 16}, random_vector(16, rng))))) >= 0.0);
}

TEST_CASE("pred_loss reaches both encoder and dynamics") {
  EncoderConfig enc{9, 4, 3};
  DynamicsConfig dyn{3, 4};
  Rng rng(4);
  ParamSet pe = init_encoder(enc, rng), pd = init_dynamics(dyn, rng);
  Graph g;
  Binder bind(g);
  bind.attach(pe, true);
  bind.attach(pd, true);
  auto loss = pred_loss(bind, enc, dyn, g.input("i0", uniform_matrix(3, 9, rng)), g.input("a", uniform_matrix(3, 2, rng)),
                        g.input("i1", uniform_matrix(3, 9, rng)));
  FdReport r = fd_check(g, loss);
  CHECK(r.max_relative_error < 1e-6);
  CHECK(r.per_group().count("encoder") == 1);
  CHECK(r.per_group().count("dynamics") == 1);
}

TEST_CASE("dist_loss examples") {
  const std::vector<double> falling{0.8, 0.5, 0.2, 0.0};
  CHECK(dist_loss_from_distances(falling, 0.0) == 0.0);
  const std::vector<double> rising{0.5, 0.8};
  CHECK(dist_loss_from_distances(rising, 0.0) == doctest::Approx(0.3));
  CHECK_THROWS_AS(dist_loss_from_distances(std::vector<double>{1.0}, 0.0), ShapeError);

  // Latents on a line towards the origin reproduce the distance examples.
  ShapingConfig cfg;
  std::vector<LatentVector> zs{{{0.8, 0}}, {{0.5, 0}}, {{0.2, 0}}, {{0.0, 0}}};
  CHECK(dist_loss(zs, LatentVector{{0, 0}}, cfg) == 0.0);
}

TEST_CASE("graph dist_loss equals the brute-force increment sum") {
  Rng rng(5);
  std::uniform_int_distribution<int> length(2, 30);
  std::uniform_real_distribution<double> beta_dist(0.0, 0.5);
  for (int trial = 0; trial < 1000; ++trial) {
    ShapingConfig cfg;
    cfg.beta = trial % 2 == 0 ? 0.0 : beta_dist(rng);
    cfg.metric = trial % 3 == 0 ? Metric::cosine : Metric::euclidean;
    const std::size_t n = static_cast<std::size_t>(length(rng)), d = 5;
    Tensor zs({n, d}, random_vector(n * d, rng));
    std::vector<double> ref = random_vector(d, rng);
    double expected = 0.0;
    auto dist = [&](std::size_t j) {
      return latent_distance(std::span<const double>(zs.data().data() + j * d, d), ref, cfg.metric);
    };
    for (std::size_t j = 0; j + 1 < n; ++j) expected += std::max(0.0, cfg.beta + dist(j + 1) - dist(j));
    Graph g;
    const double got = g.scalar(dist_loss(g, g.input("z", zs), g.input("r", Tensor::row(ref)), cfg));
    REQUIRE(std::abs(got - expected) <= 1e-12);
  }
}

TEST_CASE("dist_loss is zero exactly on margin-respecting sequences and translation invariant") {
  Rng rng(6);
  ShapingConfig cfg;
  cfg.beta = 0.1;
  const std::vector<double> ok{1.0, 0.9, 0.5, 0.4};
  const std::vector<double> bad{1.0, 0.95, 0.5};
  CHECK(dist_loss_from_distances(ok, cfg.beta) == doctest::Approx(0.0));
  CHECK(dist_loss_from_distances(bad, cfg.beta) > 0.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LatentVector> zs;
    for (int j = 0; j < 8; ++j) zs.push_back(LatentVector{random_vector(4, rng)});
    LatentVector ref{random_vector(4, rng)};
    const double before = dist_loss(zs, ref, cfg);
    CHECK(before >= 0.0);
    auto shift = random_vector(4, rng, 10.0);
    for (auto& z : zs)
      for (std::size_t i = 0; i < 4; ++i) z.values[i] += shift[i];
    for (std::size_t i = 0; i < 4; ++i) ref.values[i] += shift[i];
    CHECK(dist_loss(zs, ref, cfg) == doctest::Approx(before).epsilon(1e-9));
  }
}

TEST_CASE("dist_loss gradient reaches the reference unless detached") {
  Rng rng(7);
  for (bool detach : {false, true}) {
    ShapingConfig cfg;
    cfg.beta = 0.05;
    cfg.detach_reference = detach;
    Graph g;
    auto zs = g.param("z", Tensor({6, 3}, random_vector(18, rng)));
    auto ref = g.param("ref", Tensor({1, 3}, random_vector(3, rng)));
    auto loss = dist_loss(g, zs, ref, cfg);
    REQUIRE(g.scalar(loss) > 0.0);
    CHECK(fd_check(g, loss).max_relative_error < (detach ? 2.0 : 1e-6));
    double ref_grad = 0.0;
    const GradientMap grads = g.backward(loss);
    for (double v : grads.at("ref").data()) ref_grad += std::abs(v);
    CHECK((ref_grad > 0.0) == !detach);
  }
}

TEST_CASE("dynamics model fits a linear system") {
  DynamicsConfig cfg{4, 64};
  Rng rng(8);
  Tensor a_mat = uniform_matrix(4, 4, rng), b_mat = uniform_matrix(2, 4, rng);
  for (auto& v : a_mat.data()) v *= 0.4;
  Tensor z = uniform_matrix(256, 4, rng), act = uniform_matrix(256, 2, rng);
  Tensor next = Tensor::zeros(256, 4);
  for (std::size_t r = 0; r < 256; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 4; ++k) acc += z.at(r, k) * a_mat.at(k, c);
      for (std::size_t k = 0; k < 2; ++k) acc += act.at(r, k) * b_mat.at(k, c);
      next.at(r, c) = acc;
    }
  ParamSet p = init_dynamics(cfg, rng);
  AdamState state;
  double initial = 0.0, last = 0.0;
  for (int step = 0; step < 500; ++step) {
    Graph g;
    Binder bind(g);
    bind.attach(p, true);
    auto loss = pred_loss(bind, cfg, g.input("z", z), g.input("a", act), g.input("n", next));
    if (step == 0) initial = g.scalar(loss);
    last = g.scalar(loss);
    adam_step(p, g.backward(loss), state, 1e-2);
  }
  CHECK(last < 0.01 * initial);
}
