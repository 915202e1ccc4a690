#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "hypergoal/encoder.hpp"
#include "hypergoal/errors.hpp"
#include "hypergoal/gradcheck.hpp"

using namespace hypergoal;

namespace {

Tensor random_image(std::size_t pixels, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({1, pixels});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

double spectral_norm(const Tensor& w) {
  Eigen::MatrixXd m(w.rows(), w.cols());
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c) m(r, c) = w.at(r, c);
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

}  // namespace

TEST_CASE("zero image with zero final weights yields the final bias") {
  EncoderConfig cfg;
  Rng rng(1);
  ParamSet p = init_encoder(cfg, rng);
  p.get("encoder.l2.w") = Tensor::zeros(cfg.hidden, cfg.latent_dim);
  Tensor bias({1, cfg.latent_dim});
  for (std::size_t i = 0; i < cfg.latent_dim; ++i) bias[i] = 0.1 * static_cast<double>(i) - 0.5;
  p.get("encoder.l2.b") = bias;
  LatentVector z = encode(p, cfg, Tensor({24, 24}));
  CHECK(z.values == bias.values());
}

TEST_CASE("encode is deterministic and checks shape") {
  EncoderConfig cfg;
  Rng rng(2);
  ParamSet p = init_encoder(cfg, rng);
  Tensor img = random_image(576, rng);
  CHECK(encode(p, cfg, img) == encode(p, cfg, img));
  CHECK(encode(p, cfg, img).size() == 16);
  CHECK_THROWS_AS(encode(p, cfg, Tensor({20, 20})), ShapeError);

  Tensor other = random_image(576, rng);
  const Tensor* both[] = {&img, &other};
  Tensor batch = encode_batch(p, cfg, both);
  CHECK(batch.rows() == 2);
  auto z1 = encode(p, cfg, other).values;
  for (std::size_t i = 0; i < 16; ++i) CHECK(batch.at(1, i) == doctest::Approx(z1[i]).epsilon(1e-12));
}

TEST_CASE("single-pixel perturbation is bounded by the product of operator norms") {
  EncoderConfig cfg;
  Rng rng(3);
  ParamSet p = init_encoder(cfg, rng);
  const double lipschitz = spectral_norm(p.get("encoder.l0.w")) * spectral_norm(p.get("encoder.l1.w")) *
                           spectral_norm(p.get("encoder.l2.w"));
  std::uniform_int_distribution<std::size_t> pixel(0, 575);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor img = random_image(576, rng);
    Tensor bumped = img;
    bumped[pixel(rng)] += 1e-3;
    const double moved = latent_distance(encode(p, cfg, img), encode(p, cfg, bumped), Metric::euclidean);
    CHECK(moved > 0.0);
    CHECK(moved <= lipschitz * 1e-3 * (1 + 1e-9));
  }
}

TEST_CASE("latent distance examples") {
  CHECK(latent_distance(LatentVector{{0.3, -1.2}}, LatentVector{{0.3, -1.2}}, Metric::euclidean) == 0.0);
  CHECK(latent_distance(LatentVector{{0, 3}}, LatentVector{{4, 0}}, Metric::euclidean) == doctest::Approx(5.0));
  CHECK(latent_distance(LatentVector{{1, 0}}, LatentVector{{0, 1}}, Metric::cosine) == doctest::Approx(1.0));
  CHECK(latent_distance(LatentVector{{2, 0}}, LatentVector{{5, 0}}, Metric::cosine) == doctest::Approx(0.0));
  CHECK_THROWS_AS(latent_distance(LatentVector{{0, 0}}, LatentVector{{0, 1}}, Metric::cosine), std::invalid_argument);
  CHECK_THROWS_AS(latent_distance(LatentVector{{0}}, LatentVector{{0, 1}}, Metric::euclidean), ShapeError);
  CHECK(parse_metric("cosine") == Metric::cosine);
  CHECK_THROWS_AS(parse_metric("l1"), ConfigError);
}

TEST_CASE("euclidean distance is a metric on random triples") {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    auto a = random_vector(16, rng), b = random_vector(16, rng), c = random_vector(16, rng);
    const double ab = latent_distance(a, b, Metric::euclidean);
    const double ba = latent_distance(b, a, Metric::euclidean);
    const double ac = latent_distance(a, c, Metric::euclidean);
    const double bc = latent_distance(b, c, Metric::euclidean);
    CHECK(ab > 0.0);
    CHECK(ab == ba);
    CHECK(ac <= ab + bc + 1e-12);
  }
}

TEST_CASE("graph distance matches value distance for both metrics") {
  Rng rng(5);
  Graph g;
  Tensor pts({5, 6});
  for (auto& v : pts.data()) v = std::normal_distribution<double>(0, 1)(rng);
  auto ref_vals = random_vector(6, rng);
  auto points = g.input("p", pts);
  auto ref = g.input("r", Tensor::row(ref_vals));
  for (Metric m : {Metric::euclidean, Metric::cosine}) {
    const Tensor& d = g.value(latent_distance(g, points, ref, m));
    REQUIRE(d.rows() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      std::vector<double> row(pts.data().begin() + i * 6, pts.data().begin() + (i + 1) * 6);
      CHECK(d[i] == doctest::Approx(latent_distance(row, ref_vals, m)).epsilon(1e-12));
    }
  }
}

TEST_CASE("encoder gradient matches finite differences") {
  EncoderConfig cfg{36, 8, 4};
  Rng rng(6);
  ParamSet p = init_encoder(cfg, rng);
  Graph g;
  Binder bind(g);
  bind.attach(p, true);
  Tensor imgs({3, 36});
  for (auto& v : imgs.data()) v = std::uniform_real_distribution<double>(0, 1)(rng);
  auto z = encode(bind, cfg, g.input("images", imgs));
  auto loss = g.sum(g.mul(z, g.constant(Tensor({3, 4}, random_vector(12, rng)))));
  CHECK(fd_check(g, loss).max_relative_error < 1e-6);
}
