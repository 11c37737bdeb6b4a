#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "gradcheck.hpp"
#include "hndh/error.hpp"
#include "hndh/loss.hpp"
#include "hndh/trainer.hpp"
#include "oracles.hpp"

using namespace hndh;

namespace {

EmbeddingStore store_of(std::size_t r, const std::vector<std::vector<double>>& cols) {
  EmbeddingStore s(r, cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) s.set_column(i, cols[i], 0);
  return s;
}

LabelMatrix random_labels(std::size_t l, std::size_t n, bool multi, std::mt19937_64& rng) {
  std::vector<std::uint8_t> v(l * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    v[i * l + (i < l ? i : rng() % l)] = 1;
    if (multi && rng() % 3 == 0) v[i * l + rng() % l] = 1;
  }
  return LabelMatrix(l, n, v);
}

EmbeddingStore random_store(std::size_t r, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-0.95, 0.95);
  EmbeddingStore s(r, n);
  std::vector<double> u(r);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : u) v = uni(rng);
    s.set_column(i, u, 0);
  }
  return s;
}

}  // namespace

TEST_CASE("compute_centers is the per-class mean") {
  // Components must stay inside (-1, 1), so the documented (2,0)/(0,2) case is
  // scaled by 0.4.
  const auto store = store_of(2, {{0.8, 0.0}, {0.0, 0.8}});
  const LabelMatrix labels(1, 2, {1, 1});
  const auto c = compute_centers(store, labels);
  CHECK(c.column(0)[0] == doctest::Approx(0.4));
  CHECK(c.column(0)[1] == doctest::Approx(0.4));

  const auto single = store_of(3, {{0.1, -0.2, 0.3}});
  const auto c1 = compute_centers(single, LabelMatrix(1, 1, {1}));
  CHECK(c1.column(0)[0] == 0.1);
  CHECK(c1.column(0)[1] == -0.2);
  CHECK(c1.column(0)[2] == 0.3);
}

TEST_CASE("compute_centers matches the oracle and names an empty class") {
  std::mt19937_64 rng(3);
  const auto store = random_store(5, 30, rng);
  const auto labels = random_labels(4, 30, true, rng);
  const auto c = compute_centers(store, labels, 3);
  std::vector<oracle::Vec> u;
  oracle::Labels y;
  for (std::size_t i = 0; i < 30; ++i) {
    u.emplace_back(store.column(i).begin(), store.column(i).end());
    y.emplace_back(labels.column(i).begin(), labels.column(i).end());
  }
  const auto want = oracle::centers(u, y, 4);
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t b = 0; b < 5; ++b) CHECK(c.column(k)[b] == doctest::Approx(want[k][b]).epsilon(1e-14));
  }

  const LabelMatrix gap(3, 2, {1, 0, 0, 1, 0, 0});
  try {
    compute_centers(store_of(2, {{0.1, 0.1}, {0.2, 0.2}}), gap);
    FAIL("expected EmptyClassError");
  } catch (const EmptyClassError& e) {
    CHECK(e.class_index() == 1);
  }
}

TEST_CASE("neighbor_probs") {
  const ClassCenters equal(2, 3, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  for (double p : neighbor_probs(equal, std::vector<double>{0.3, -0.7})) CHECK(p == doctest::Approx(1.0 / 3.0));

  // Scores 1/2 c^T u = (ln 2, 0) with u = (1, 0) scaled into range.
  const double u0 = 0.5;
  const ClassCenters two(1, 2, {4.0 * std::log(2.0), 0.0});
  const auto p = neighbor_probs(two, std::vector<double>{u0});
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  const auto big = softmax(std::vector<double>{1000.0, 1000.0, -1000.0});
  CHECK(big[0] == doctest::Approx(0.5));
  CHECK(big[2] == 0.0);
}

TEST_CASE("correct_class_prob") {
  const ClassCenters c(2, 3, {0.9, 0.1, -0.3, 0.4, 0.2, -0.8});
  const std::vector<double> u{0.6, -0.2};
  const auto p = neighbor_probs(c, u);
  const std::vector<std::uint8_t> one_hot{0, 1, 0};
  CHECK(correct_class_prob(c, u, one_hot) == doctest::Approx(p[1]).epsilon(1e-14));
  const std::vector<std::uint8_t> all{1, 1, 1};
  CHECK(correct_class_prob(c, u, all) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("coarse_loss") {
  const ClassCenters c(2, 3, {0.9, 0.1, -0.3, 0.4, 0.2, -0.8});
  const std::vector<Embedding> u{{0.6, -0.2}, {-0.1, 0.5}};
  const std::vector<std::uint8_t> all{1, 1, 1};
  const std::vector<LabelColumn> ys{all, all};
  CHECK(std::abs(coarse_loss(c, u, ys)) < 1e-15);

  const ClassCenters equal(2, 3, {0.2, 0.2, 0.2, 0.2, 0.2, 0.2});
  const std::vector<std::uint8_t> a{1, 0, 0};
  const std::vector<std::uint8_t> b{0, 0, 1};
  const std::vector<LabelColumn> hot{a, b};
  CHECK(coarse_loss(equal, u, hot) == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("coarse_loss reduces to softmax cross-entropy for one-hot labels") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(-0.99, 0.99);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = 4 + rng() % 20;
    const std::size_t l = 2 + rng() % 9;
    std::vector<double> cv(r * l);
    for (auto& v : cv) v = normal(rng);
    const ClassCenters centers(r, l, cv);
    std::vector<oracle::Vec> oc(l);
    for (std::size_t k = 0; k < l; ++k) oc[k].assign(centers.column(k).begin(), centers.column(k).end());

    const std::size_t m = 1 + rng() % 10;
    std::vector<Embedding> u(m, Embedding(r));
    std::vector<std::vector<std::uint8_t>> y(m, std::vector<std::uint8_t>(l, 0));
    std::vector<LabelColumn> cols;
    double want = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (auto& v : u[i]) v = uni(rng);
      const std::size_t k = rng() % l;
      y[i][k] = 1;
      want += oracle::cross_entropy(oc, u[i], k);
    }
    for (const auto& col : y) cols.emplace_back(col);
    CHECK(std::abs(coarse_loss(centers, u, cols) - want) <= 1e-12);
  }
}

TEST_CASE("fined_loss") {
  const LabelMatrix labels(2, 3, {1, 0, 0, 1, 1, 0});
  const auto zero = store_of(2, {{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}});
  const std::vector<BatchEmbedding> batch{{0, {0.0, 0.0}}, {2, {0.0, 0.0}}};
  CHECK(fined_loss(batch, zero, labels) == doctest::Approx(2.0 * 3.0 * std::log(2.0)).epsilon(1e-14));

  // Saturation limits of the per-pair term.
  CHECK(softplus(40.0) - 40.0 == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(softplus(-40.0) < 1e-17);
  CHECK(std::isfinite(softplus(1e6)));
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(sigmoid(-800.0) == 0.0);
  CHECK(sigmoid(800.0) == 1.0);
}

TEST_CASE("total_objective") {
  CHECK(total_objective(2.0, 5.0, LossConfig{0.0, 10.0}) == 20.0);
  CHECK(total_objective(0.0, 5.0, LossConfig{1.0, 10.0}) == 5.0);
  CHECK_THROWS_AS(LossConfig({-1.0, 1.0}).validate(), ValidationError);
  CHECK_THROWS_AS(LossConfig({std::numeric_limits<double>::quiet_NaN(), 1.0}).validate(), ValidationError);
}

TEST_CASE("batch_objective matches the naive objective") {
  std::mt19937_64 rng(5);
  const auto store = random_store(6, 20, rng);
  const auto labels = random_labels(3, 20, true, rng);
  const auto centers = compute_centers(store, labels);
  const std::vector<std::size_t> batch{4, 0, 17, 9};
  const LossConfig cfg{0.5, 20.0};
  const auto terms = batch_objective(centers, store, labels, batch, cfg);

  std::vector<oracle::Vec> u;
  oracle::Labels y;
  for (std::size_t i = 0; i < 20; ++i) {
    u.emplace_back(store.column(i).begin(), store.column(i).end());
    y.emplace_back(labels.column(i).begin(), labels.column(i).end());
  }
  std::vector<oracle::Vec> c(3);
  for (std::size_t k = 0; k < 3; ++k) c[k].assign(centers.column(k).begin(), centers.column(k).end());
  const double want = oracle::objective(u, y, c, batch, cfg.lambda, cfg.n_total);
  CHECK(total_objective(terms.j1, terms.j2, cfg) == doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("grad_embedding vanishes for all-ones labels at lambda 0") {
  std::mt19937_64 rng(9);
  const auto store = random_store(5, 6, rng);
  const LabelMatrix labels(2, 6, std::vector<std::uint8_t>(12, 1));
  const auto centers = compute_centers(store, labels);
  const std::vector<std::size_t> batch{1, 3};
  const auto g = grad_embedding(centers, store, labels, batch, LossConfig{0.0, 6.0});
  for (const auto& gi : g) {
    for (double v : gi) CHECK(std::abs(v) < 1e-15);
  }
}

TEST_CASE("grad_params of a zero embedding gradient is zero") {
  HashHeadConfig head;
  head.input_dim = 4;
  head.code_length = 6;
  head.hidden_dims = {5};
  const auto params = init_params(head);
  const std::vector<double> x{0.1, -2.0, 0.3, 1.0};
  const std::vector<std::span<const double>> xs{x, x};
  const std::vector<Embedding> g(2, Embedding(6, 0.0));
  const auto gp = grad_params(params, xs, g);
  for (const auto& layer : gp.layers) {
    for (double v : layer.weights) CHECK(v == 0.0);
    for (double v : layer.bias) CHECK(v == 0.0);
  }
}

TEST_CASE("analytic gradients match central differences") {
  std::uint64_t seed = 100;
  for (bool multi : {false, true}) {
    for (double lambda : {0.0, 0.5, 1.0}) {
      for (bool hidden : {false, true}) {
        const auto out = gradcheck::run({seed++, multi, lambda, hidden});
        INFO("multi=" << multi << " lambda=" << lambda << " hidden=" << hidden);
        CHECK(out.embedding_error <= 1e-5);
        CHECK(out.param_error <= 1e-5);
      }
    }
  }
}

TEST_CASE("gradients do not depend on the thread count") {
  std::mt19937_64 rng(21);
  const auto store = random_store(12, 40, rng);
  const auto labels = random_labels(4, 40, true, rng);
  const auto centers = compute_centers(store, labels);
  std::vector<std::size_t> batch{3, 7, 11, 0, 39, 20, 21, 5};
  const LossConfig cfg{1.0, 40.0};
  GradientWorkspace w1;
  GradientWorkspace w8;
  const auto g1 = grad_embedding(centers, store, labels, batch, cfg, &w1, 1);
  const auto g8 = grad_embedding(centers, store, labels, batch, cfg, &w8, 8);
  CHECK(g1 == g8);
  CHECK(w1.a == w8.a);
  CHECK(w1.terms.j1 == w8.terms.j1);
  CHECK(w1.terms.j2 == w8.terms.j2);

  HashHeadConfig head;
  head.input_dim = 12;
  head.code_length = 12;
  head.hidden_dims = {9};
  const auto params = init_params(head);
  std::vector<std::span<const double>> xs;
  for (auto i : batch) xs.push_back(store.column(i));
  CHECK(grad_params(params, xs, g1, 1) == grad_params(params, xs, g1, 8));
}

TEST_CASE("workspace probabilities") {
  std::mt19937_64 rng(2);
  const auto store = random_store(4, 10, rng);
  const auto labels = random_labels(3, 10, true, rng);
  const auto centers = compute_centers(store, labels);
  const std::vector<std::size_t> batch{2, 5};
  GradientWorkspace w;
  grad_embedding(centers, store, labels, batch, LossConfig{}, &w);
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto p = neighbor_probs(centers, store.column(batch[t]));
    double psum = 0.0;
    double qsum = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(w.p_column(t)[k] == doctest::Approx(p[k]).epsilon(1e-14));
      psum += w.p_column(t)[k];
      qsum += w.q_column(t)[k];
      if (!labels.has(k, batch[t])) CHECK(w.q_column(t)[k] == 0.0);
    }
    CHECK(psum == doctest::Approx(1.0));
    CHECK(qsum == doctest::Approx(1.0));
    for (std::size_t j = 0; j < 10; ++j) {
      const double theta = 0.5 * oracle::dot(oracle::Vec(store.column(batch[t]).begin(), store.column(batch[t]).end()),
                                             oracle::Vec(store.column(j).begin(), store.column(j).end()));
      CHECK(w.a_row(t)[j] == doctest::Approx(1.0 / (1.0 + std::exp(-theta))).epsilon(1e-13));
    }
  }
}

TEST_CASE("EmbeddingStore rejects values outside the open interval") {
  EmbeddingStore s(2, 2);
  CHECK_THROWS(s.set_column(0, std::vector<double>{1.0, 0.0}, 0));
  CHECK_THROWS(s.set_column(0, std::vector<double>{0.0, -1.0}, 0));
  CHECK_THROWS(s.set_column(0, std::vector<double>{0.0}, 0));
  CHECK_THROWS(s.set_column(0, std::vector<double>{std::nan(""), 0.0}, 0));
  s.set_column(1, std::vector<double>{0.5, -0.5}, 7);
  CHECK(s.epoch_stamp(1) == 7);
}
