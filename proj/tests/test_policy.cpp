#include <cmath>
#include <random>

#include "doctest.h"
#include "hypergoal/errors.hpp"
#include "hypergoal/gradcheck.hpp"
#include "hypergoal/policy.hpp"

using namespace hypergoal;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

ObsWindow random_window(std::size_t dz, Rng& rng) {
  auto s0 = random_vector(4, rng), s1 = random_vector(4, rng);
  return make_window(LatentVector{random_vector(dz, rng)}, LatentVector{random_vector(dz, rng)},
                     {s0[0], s0[1], s0[2], s0[3]}, {s1[0], s1[1], s1[2], s1[3]});
}

}  // namespace

TEST_CASE("window features are ordered oldest first, latents then proprio") {
  ObsWindow w = make_window(LatentVector{{1, 2}}, LatentVector{{3, 4}}, {5, 6, 7, 8}, {9, 10, 11, 12});
  CHECK(window_features(w) == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  CHECK(window_feature_dim(16) == 40);
  CHECK(default_policy_layout(16).param_count() == 2434);
  w.latents.pop_back();
  CHECK_THROWS_AS(window_features(w), ShapeError);
}

TEST_CASE("zero parameters give a zero action") {
  PolicyLayout layout = default_policy_layout(16);
  Rng rng(1);
  Action a = policy_forward(ParamVector{std::vector<double>(layout.param_count(), 0.0)}, layout, random_window(16, rng));
  CHECK(a.values[0] == 0.0);
  CHECK(a.values[1] == 0.0);
}

TEST_CASE("policy matches a hand-written forward pass") {
  PolicyLayout layout({12, 5, 3, 2});
  Rng rng(2);
  ParamVector theta{random_vector(layout.param_count(), rng, 0.5)};
  ObsWindow w = random_window(2, rng);
  std::vector<double> x = window_features(w);
  for (const auto& lp : unpack(theta, layout)) {
    std::vector<double> y(lp.weight.cols());
    for (std::size_t o = 0; o < y.size(); ++o) {
      double acc = lp.bias[o];
      for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * lp.weight.at(i, o);
      y[o] = std::tanh(acc);
    }
    x = y;
  }
  Action a = policy_forward(theta, layout, w);
  CHECK(a.values[0] == doctest::Approx(x[0]).epsilon(1e-12));
  CHECK(a.values[1] == doctest::Approx(x[1]).epsilon(1e-12));
}

TEST_CASE("actions stay strictly inside (-1, 1)") {
  PolicyLayout layout = default_policy_layout(16);
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Action a = policy_forward(ParamVector{random_vector(layout.param_count(), rng, 0.3)}, layout, random_window(16, rng));
    for (double v : a.values) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("policy rejects mismatched shapes") {
  PolicyLayout layout = default_policy_layout(16);
  Rng rng(4);
  CHECK_THROWS_AS(policy_forward(ParamVector{std::vector<double>(10, 0.0)}, layout, random_window(16, rng)), ShapeError);
  CHECK_THROWS_AS(policy_forward(ParamVector{std::vector<double>(layout.param_count(), 0.0)}, layout,
                                 random_window(8, rng)),
                  ShapeError);
}

TEST_CASE("policy gradient matches finite differences") {
  PolicyLayout layout({12, 4, 3, 2});
  Rng rng(5);
  Graph g;
  auto theta = g.param("theta", Tensor({2, layout.param_count()}, random_vector(2 * layout.param_count(), rng, 0.7)));
  auto feats = g.param("features", Tensor({2, 12}, random_vector(24, rng)));
  auto loss = g.sum(g.square(policy_forward(g, layout, theta, feats)));
  CHECK(fd_check(g, loss).max_relative_error < 1e-6);
}

TEST_CASE("gcbc width matching and zero network") {
  GcbcConfig cfg{16, matched_gcbc_hidden(16, 660000)};
  const double count = static_cast<double>(gcbc_param_count(cfg));
  CHECK(count >= 660000.0);
  CHECK(count <= 660000.0 * 1.1);
  GcbcConfig small{4, 6};
  Rng rng(6);
  ParamSet p = init_gcbc(small, rng);
  CHECK(p.scalar_count() == gcbc_param_count(small));
  for (auto& [name, t] : p.entries())
    for (auto& v : t.data()) v = 0.0;
  Action a = gcbc_forward(p, small, random_window(4, rng), LatentVector{random_vector(4, rng)});
  CHECK(a.values[0] == 0.0);
  CHECK(a.values[1] == 0.0);
}

TEST_CASE("gcbc ignores the goal when its input weights are zero") {
  GcbcConfig cfg{4, 6};
  Rng rng(7);
  ParamSet p = init_gcbc(cfg, rng);
  Tensor& w = p.get("gcbc.l0.w");
  const std::size_t goal_begin = window_feature_dim(4);
  for (std::size_t r = goal_begin; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c) w.at(r, c) = 0.0;
  ObsWindow win = random_window(4, rng);
  Action a = gcbc_forward(p, cfg, win, LatentVector{random_vector(4, rng)});
  Action b = gcbc_forward(p, cfg, win, LatentVector{random_vector(4, rng)});
  CHECK(a.values == b.values);
  CHECK(gcbc_forward(p, cfg, win, LatentVector{{1, 2, 3, 4}}).values ==
        gcbc_forward(p, cfg, win, LatentVector{{1, 2, 3, 4}}).values);
  CHECK_THROWS_AS(gcbc_forward(p, cfg, win, LatentVector{{1, 2}}), ShapeError);
}
