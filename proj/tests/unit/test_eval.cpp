#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <json.hpp>
#include <numeric>
#include <random>

#include "hndh/error.hpp"
#include "hndh/eval.hpp"
#include "oracles.hpp"

using namespace hndh;

namespace {

std::vector<std::uint8_t> rel(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("average_precision examples") {
  CHECK(average_precision(rel({1, 1, 0}), 2) == 1.0);
  CHECK(average_precision(rel({0, 1}), 1) == 0.5);
  CHECK(average_precision(rel({1, 0, 1}), 2) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  CHECK(average_precision(rel({0, 0}), 0) == 0.0);
  CHECK(average_precision(rel({0, 0, 1}), 1, 2) == 0.0);
  CHECK(average_precision(rel({1, 0, 1, 1}), 3, 3) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
}

TEST_CASE("precision_at_k") {
  CHECK(precision_at_k(rel({1, 1, 0}), 2) == 1.0);
  CHECK(precision_at_k(rel({0, 0}), 2) == 0.0);
  CHECK(precision_at_k(rel({1}), 4) == 0.25);
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::uint8_t> r(1 + rng() % 50);
    for (auto& v : r) v = static_cast<std::uint8_t>(rng() % 2);
    const std::size_t k = 1 + rng() % 60;
    double hits = 0.0;
    for (std::size_t i = 0; i < std::min(k, r.size()); ++i) hits += r[i];
    CHECK(precision_at_k(r, k) == doctest::Approx(hits / static_cast<double>(k)).epsilon(1e-15));
  }
}

TEST_CASE("MAP is 1 when everything is relevant") {
  std::mt19937_64 rng(2);
  CodeDatabase db(16);
  std::vector<PackedCode> queries;
  for (int i = 0; i < 40; ++i) db.add(pack(oracle::random_code(16, rng)), static_cast<std::uint64_t>(i));
  for (int i = 0; i < 5; ++i) queries.push_back(pack(oracle::random_code(16, rng)));
  const RelevanceOracle oracle(LabelMatrix(1, 5, std::vector<std::uint8_t>(5, 1)),
                               LabelMatrix(1, 40, std::vector<std::uint8_t>(40, 1)));
  CHECK(mean_average_precision(queries, db, oracle).map == 1.0);
}

TEST_CASE("random codes score MAP near the relevant fraction") {
  std::mt19937_64 rng(12);
  const double rho = 0.3;
  const std::size_t n_db = 1000;
  CodeDatabase db(32);
  std::vector<std::size_t> db_classes;
  for (std::size_t i = 0; i < n_db; ++i) {
    db.add(pack(oracle::random_code(32, rng)), i);
    db_classes.push_back(i % 10 < 3 ? 0 : 1);
  }
  std::vector<PackedCode> queries;
  for (int q = 0; q < 1000; ++q) queries.push_back(pack(oracle::random_code(32, rng)));
  const std::vector<std::size_t> q_classes(1000, 0);
  const RelevanceOracle oracle(LabelMatrix::from_classes(2, q_classes), LabelMatrix::from_classes(2, db_classes));
  CHECK(std::abs(mean_average_precision(queries, db, oracle).map - rho) <= 0.02);
}

TEST_CASE("MAP pipeline matches the brute-force oracle") {
  std::mt19937_64 rng(77);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t r = 4 + rng() % 40;
    const std::size_t n = 1 + rng() % 200;
    const std::size_t nq = 1 + rng() % 10;
    const std::size_t l = 2 + rng() % 5;
    oracle::Labels ql(nq, std::vector<int>(l, 0));
    oracle::Labels dl(n, std::vector<int>(l, 0));
    std::vector<std::uint8_t> qv(nq * l, 0);
    std::vector<std::uint8_t> dv(n * l, 0);
    std::vector<std::vector<std::int8_t>> qc;
    std::vector<std::vector<std::int8_t>> dc;
    CodeDatabase db(r);
    std::vector<PackedCode> queries;
    for (std::size_t i = 0; i < n; ++i) {
      dl[i][rng() % l] = 1;
      if (rng() % 4 == 0) dl[i][rng() % l] = 1;
      for (std::size_t k = 0; k < l; ++k) dv[i * l + k] = static_cast<std::uint8_t>(dl[i][k]);
      dc.push_back(oracle::random_code(r, rng));
      db.add(pack(dc.back()), i);
    }
    for (std::size_t q = 0; q < nq; ++q) {
      ql[q][rng() % l] = 1;
      for (std::size_t k = 0; k < l; ++k) qv[q * l + k] = static_cast<std::uint8_t>(ql[q][k]);
      qc.push_back(oracle::random_code(r, rng));
      queries.push_back(pack(qc.back()));
    }
    const RelevanceOracle oracle(LabelMatrix(l, nq, qv), LabelMatrix(l, n, dv));
    for (std::optional<std::size_t> cutoff : {std::optional<std::size_t>{}, std::optional<std::size_t>{1 + rng() % n}}) {
      const auto got = mean_average_precision(queries, db, oracle, cutoff, 3);
      const auto want = oracle::brute_force_map(qc, dc, ql, dl, cutoff);
      CHECK(std::abs(got.map - want.map) <= 1e-12);
      for (std::size_t q = 0; q < nq; ++q) CHECK(std::abs(got.per_query_ap[q] - want.ap[q]) <= 1e-12);
    }
  }
}

TEST_CASE("AP is invariant under database permutation with id tie-break") {
  std::mt19937_64 rng(5);
  const std::size_t n = 150;
  std::vector<PackedCode> codes;
  std::vector<std::size_t> classes;
  for (std::size_t i = 0; i < n; ++i) {
    codes.push_back(pack(oracle::random_code(10, rng)));
    classes.push_back(rng() % 3);
  }
  std::vector<PackedCode> queries{pack(oracle::random_code(10, rng)), pack(oracle::random_code(10, rng))};
  const std::vector<std::size_t> qclasses{0, 2};

  auto score = [&](const std::vector<std::size_t>& order) {
    CodeDatabase db(10);
    std::vector<std::size_t> cls;
    for (auto i : order) {
      db.add(codes[i], i);
      cls.push_back(classes[i]);
    }
    const RelevanceOracle oracle(LabelMatrix::from_classes(3, qclasses), LabelMatrix::from_classes(3, cls));
    return mean_average_precision(queries, db, oracle, std::nullopt, 1, TieBreak::id).per_query_ap;
  };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto base = score(order);
  std::shuffle(order.begin(), order.end(), rng);
  CHECK(score(order) == base);
}

TEST_CASE("precision curve and thread invariance") {
  std::mt19937_64 rng(31);
  CodeDatabase db(20);
  std::vector<std::size_t> cls;
  for (std::uint64_t i = 0; i < 120; ++i) {
    db.add(pack(oracle::random_code(20, rng)), i);
    cls.push_back(rng() % 4);
  }
  std::vector<PackedCode> queries;
  std::vector<std::size_t> qcls;
  for (int q = 0; q < 17; ++q) {
    queries.push_back(pack(oracle::random_code(20, rng)));
    qcls.push_back(rng() % 4);
  }
  const RelevanceOracle oracle(LabelMatrix::from_classes(4, qcls), LabelMatrix::from_classes(4, cls));
  CHECK(mean_average_precision(queries, db, oracle, 50, 1).per_query_ap ==
        mean_average_precision(queries, db, oracle, 50, 8).per_query_ap);
  const std::vector<std::size_t> ks{1, 10, 500};
  const auto curve = precision_curve(queries, db, oracle, ks, 4);
  CHECK(curve.size() == 3);
  CHECK(curve == precision_curve(queries, db, oracle, ks, 1));
  CHECK(curve[2].second <= curve[1].second + 1.0);
}

TEST_CASE("encoding and embedding export") {
  SyntheticSpec spec;
  spec.n_per_class = 10;
  spec.classes = 3;
  spec.dim = 5;
  spec.multi_label_fraction = 0.2;
  const auto data = generate_synthetic(spec);
  HashHeadConfig head;
  head.input_dim = 5;
  head.code_length = 9;
  const auto params = init_params(head);

  const auto db = encode_dataset(params, data, 2);
  CHECK(db.size() == data.size());
  CHECK(db.ids() == data.ids());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(db.code(i) == pack(encode(forward(params, data.features().row(i)))));
  }

  const auto path = std::filesystem::temp_directory_path() / "hndh_embeddings.csv";
  export_embeddings(params, data, path, 3);
  const auto rows = read_embeddings(path);
  CHECK(rows.size() == data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].id == data.ids()[i]);
    CHECK(rows[i].classes == data.labels().classes_of(i));
    const auto u = forward(params, data.features().row(i));
    for (std::size_t k = 0; k < u.size(); ++k) CHECK(rows[i].values[k] == static_cast<double>(static_cast<float>(u[k])));
  }
}

TEST_CASE("report json") {
  EvalReport report;
  BitLengthResult r;
  r.r = 16;
  r.map = 0.5;
  r.cutoff = 5000;
  r.precision_at_k = {{10, 0.75}};
  r.per_query_ap = {0.25, 0.75};
  report.results.push_back(r);
  report.config = {{"train.lambda", "1"}};
  const auto j = nlohmann::json::parse(to_json(report));
  CHECK(j["results"][0]["bits"] == 16);
  CHECK(j["results"][0]["map_at_k"] == 0.5);
  CHECK(j["results"][0]["cutoff"] == 5000);
  CHECK(j["config"]["train.lambda"] == "1");
}

TEST_CASE("ablation harness") {
  CHECK(parse_ablation_variant("j1_only") == AblationVariant::j1_only);
  CHECK_THROWS_AS(parse_ablation_variant("both"), ValidationError);
  TrainConfig base;
  const auto j1 = ablation_config(base, AblationVariant::j1_only, 24);
  CHECK(j1.lambda == 0.0);
  CHECK(j1.coarse_term);
  CHECK(j1.head.code_length == 24);
  const auto j2 = ablation_config(base, AblationVariant::j2_only, 12);
  CHECK_FALSE(j2.coarse_term);
  CHECK(j2.lambda == base.lambda);

  SyntheticSpec spec;
  spec.n_per_class = 20;
  spec.classes = 3;
  spec.dim = 6;
  const auto data = generate_synthetic(spec);
  base.epochs = 2;
  base.batch_size = 16;
  const std::vector<std::size_t> bits{8};
  const std::vector<AblationVariant> one{AblationVariant::combined};
  const auto table = ablation_run(data, base, SplitSpec{4, 10, 0}, bits, one);
  CHECK(table.cells.size() == 1);
  CHECK(table.cells[0].size() == 1);
  INFO(table.cells[0][0].error);
  CHECK(table.cells[0][0].map.has_value());
  const auto csv = to_csv(table);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(nlohmann::json::parse(to_json(table)).is_object());

  // A cell that cannot train records its error and does not stop the table.
  const auto bad = ablation_run(data, base, SplitSpec{4, 10, 0}, std::vector<std::size_t>{0, 8}, one);
  CHECK_FALSE(bad.cells[0][0].map.has_value());
  CHECK_FALSE(bad.cells[0][0].error.empty());
  CHECK(bad.cells[0][1].map.has_value());
}
