#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>
#include <tuple>

#include "helpers.hpp"
#include "rct/analysis.hpp"
#include "rct/errors.hpp"
#include "rct/sweep.hpp"

using namespace rct;

namespace {

Eigen::MatrixXd random_stochastic(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd m(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) m(i, j) = u(rng);
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

// Sorts all n^2 entries by (value desc, i asc, j asc) and keeps k.
std::vector<std::pair<Index, Index>> brute_top(const Eigen::MatrixXd& m, std::size_t k) {
  std::vector<std::tuple<double, Index, Index>> all;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) all.emplace_back(m(i, j), i, j);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::make_pair(std::get<1>(a), std::get<2>(a)) < std::make_pair(std::get<1>(b), std::get<2>(b));
  });
  std::vector<std::pair<Index, Index>> out;
  for (std::size_t t = 0; t < std::min(k, all.size()); ++t) out.emplace_back(std::get<1>(all[t]), std::get<2>(all[t]));
  return out;
}

Eigen::VectorXd brute_counts(const Eigen::MatrixXd& m, std::size_t k) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(m.cols());
  for (const auto& [i, j] : brute_top(m, k)) c(j) += 1;
  return c;
}

RateCard shuffled_copy(const RateCard& r, std::mt19937_64& rng) {
  RateCard p = r;
  std::shuffle(p.items.begin(), p.items.end(), rng);
  return p;
}

}  // namespace

TEST_CASE("top interactions match a brute-force sort") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd m = random_stochastic(6, rng);
    for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{36}, std::size_t{100}}) {
      CHECK(top_interactions(m, k) == brute_top(m, k));
      Eigen::VectorXd c = Eigen::VectorXd::Zero(6);
      count_top_interactions(m, k, c);
      CHECK(c == brute_counts(m, k));
    }
  }
}

TEST_CASE("ties are broken by position") {
  const Eigen::MatrixXd m = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0);
  const auto top = top_interactions(m, 4);
  const std::vector<std::pair<Index, Index>> want{{0, 0}, {0, 1}, {0, 2}, {1, 0}};
  CHECK(top == want);
}

TEST_CASE("counting every interaction gives an all-zero column") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd m = random_stochastic(3, rng);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(3);
  count_top_interactions(m, 9, c);
  CHECK(c == Eigen::VectorXd::Constant(3, 3.0));
  CHECK(minmax_normalize(c) == Eigen::VectorXd::Zero(3));
}

TEST_CASE("a column holding the largest entries becomes an indicator") {
  // 3 x 3: column 1 holds the three largest entries.
  Eigen::MatrixXd small(3, 3);
  small << 0.1, 0.8, 0.1, 0.05, 0.9, 0.05, 0.2, 0.7, 0.1;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(3);
  count_top_interactions(small, 3, c);
  CHECK(c == Eigen::Vector3d(0, 3, 0));
  CHECK(minmax_normalize(c) == Eigen::Vector3d(0, 1, 0));

  // 6 x 6: column 4 holds the five largest entries.
  std::mt19937_64 rng(3);
  Eigen::MatrixXd big = random_stochastic(6, rng) * 0.1;
  for (Index i = 0; i < 5; ++i) big(i, 4) = 0.5 + 0.01 * static_cast<double>(i);
  c = Eigen::VectorXd::Zero(6);
  count_top_interactions(big, 5, c);
  Eigen::VectorXd want = Eigen::VectorXd::Zero(6);
  want(4) = 5;
  CHECK(c == want);
  want(4) = 1;
  CHECK(minmax_normalize(c) == want);
}

TEST_CASE("heat map columns are normalized per head") {
  Eigen::MatrixXd counters(4, 3);
  counters << 2, 7, 1, 4, 7, 1, 6, 7, 3, 4, 7, 0;
  const HeatMap h = heatmap_from_counters(counters, {"a", "b", "c", "d"});
  CHECK(h.values.col(0) == Eigen::Vector4d(0, 0.5, 1, 0.5));
  CHECK(h.values.col(1) == Eigen::Vector4d::Zero());
  CHECK(h.values.col(2).isApprox(Eigen::Vector4d(1.0 / 3, 1.0 / 3, 1, 0)));
  std::ostringstream out;
  h.write_csv(out);
  CHECK(out.str().rfind("token,head_0,head_1,head_2\na,0,0,", 0) == 0);
}

TEST_CASE("identical heads give identical columns") {
  std::mt19937_64 rng(4);
  Eigen::MatrixXd counters = Eigen::MatrixXd::Zero(6, 2);
  for (int r = 0; r < 10; ++r) {
    const Eigen::MatrixXd m = random_stochastic(6, rng);
    Eigen::VectorXd a = counters.col(0), b = counters.col(1);
    count_top_interactions(m, 5, a);
    count_top_interactions(m, 5, b);
    counters.col(0) = a;
    counters.col(1) = b;
  }
  const HeatMap h = heatmap_from_counters(counters, std::vector<std::string>(6, "t"));
  CHECK(h.values.col(0) == h.values.col(1));
}

TEST_CASE("heat map values stay in [0, 1] and attain both ends") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> u(0, 20);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd counters(7, 3);
    for (Index i = 0; i < counters.size(); ++i) counters.data()[i] = u(rng);
    if (trial % 10 == 0) counters.col(1).setConstant(4);
    const HeatMap h = heatmap_from_counters(counters, std::vector<std::string>(7, "t"));
    for (Index c = 0; c < 3; ++c) {
      CHECK(h.values.col(c).minCoeff() >= 0.0);
      CHECK(h.values.col(c).maxCoeff() <= 1.0);
      if (counters.col(c).maxCoeff() > counters.col(c).minCoeff()) {
        CHECK(h.values.col(c).minCoeff() == 0.0);
        CHECK(h.values.col(c).maxCoeff() == 1.0);
      } else {
        CHECK(h.values.col(c).isZero(0.0));
      }
    }
  }
}

TEST_CASE("attention importance over a stratum matches per-record brute force") {
  const auto e = testing::encoded_sample(600);
  const Dataset stratum = filter_stratum(e.ds, 2, 1);
  REQUIRE(stratum.size() >= 10);
  auto m = build_model<float>(e.ds.schema, testing::tiny_model(ModelKind::rct, 8, 2, 2), e.state, 1);
  testing::randomize(m->parameters(), 2, 0.5);
  for (int layer : {0, 1}) {
    const Eigen::MatrixXd got = importance_counters(*m, stratum, layer, 5);
    Eigen::MatrixXd want = Eigen::MatrixXd::Zero(got.rows(), 2);
    for (const auto& r : stratum.records) {
      const Prediction p = forward(*m, r, true);
      for (const AttentionMap& map : p.maps) {
        if (map.layer == layer) want.col(map.head) += brute_counts(map.scores, 5);
      }
    }
    CHECK(got == want);
  }
  CHECK(importance_counters(*m, stratum, -1, 5) == importance_counters(*m, stratum, 1, 5));
  const HeatMap h = attention_importance(*m, stratum);
  CHECK(h.labels.size() == 4 + 3 + 3 + 2 + 1 + 1);
  CHECK(h.labels.front() == "dimension.weight");
  CHECK(h.labels[10] == "item_0");
  CHECK(h.labels[12] == "charge_0");
  CHECK(h.labels.back() == "heuristic");
  CHECK_THROWS_AS(importance_counters(*m, stratum, 2, 5), ValidationError);
}

TEST_CASE("attention importance refuses mixed lengths and non-attention models") {
  const auto e = testing::encoded_sample(200);
  auto m = build_model<float>(e.ds.schema, testing::tiny_model(), e.state, 1);
  try {
    attention_importance(*m, e.ds);
    FAIL("expected ValidationError");
  } catch (const ValidationError& err) {
    CHECK(std::string(err.what()).find("stratum") != std::string::npos);
  }
  auto ff = build_model<float>(e.ds.schema, testing::tiny_model(ModelKind::feedforward), e.state, 1);
  CHECK_THROWS(attention_importance(*ff, filter_stratum(e.ds, 1, 0)));
}

TEST_CASE("exported embeddings are the mean of the final encoder tokens") {
  const auto e = testing::encoded_sample(120);
  auto m = build_model<float>(e.ds.schema, testing::tiny_model(ModelKind::rct, 8, 2, 2), e.state, 3);
  testing::randomize(m->parameters(), 4, 0.3);
  const auto& rct = dynamic_cast<const RctModel<float>&>(*m);
  const Eigen::MatrixXd pooled = pooled_embeddings(*m, e.ds, 32);
  REQUIRE(pooled.rows() == static_cast<Index>(e.ds.size()));
  REQUIRE(pooled.cols() == 8);
  for (std::size_t k = 0; k < 30; ++k) {
    Graph<float> g(false);
    const TokenBatch<float> t = embed_rate_card(g, rct.embedder(), e.ds.records[k], e.state->cost);
    Tensor<float> x = t.tokens.value();
    for (const auto& block : rct.encoder().blocks) {
      Graph<float> gb(false);
      x = block.forward(gb, gb.constant(x), t.segments, {}).value();
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(8);
    for (Index i = 0; i < x.rows(); ++i) mean += x.row(i).transpose().cast<double>();
    mean /= static_cast<double>(x.rows());
    CHECK((pooled.row(static_cast<Index>(k)).transpose() - mean).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("export writes one row per record and identical records match") {
  const auto e = testing::encoded_sample(50);
  auto m = build_model<float>(e.ds.schema, testing::tiny_model(), e.state, 3);
  Dataset ds = e.ds;
  ds.records.push_back(ds.records[7]);
  std::ostringstream out;
  export_embeddings(*m, ds, out);
  std::istringstream in(out.str());
  std::string line;
  std::vector<std::string> rows;
  std::getline(in, line);
  CHECK(line == "index,emb_0,emb_1,emb_2,emb_3,emb_4,emb_5,emb_6,emb_7,actual_cost,heuristic_cost");
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == ds.size());
  CHECK(rows[7].substr(rows[7].find(',')) == rows[50].substr(rows[50].find(',')));
  CHECK(rows[3].rfind("3,", 0) == 0);
}

TEST_CASE("feedforward baseline never reads items or charges") {
  const auto e = testing::encoded_sample(200);
  auto m = build_model<float>(e.ds.schema, testing::tiny_model(ModelKind::feedforward), e.state, 5);
  testing::randomize(m->parameters(), 6, 0.3);
  std::mt19937_64 rng(7);
  for (std::size_t k = 0; k < 40; ++k) {
    const RateCard& r = e.ds.records[k];
    RateCard dup = shuffled_copy(r, rng);
    dup.items.push_back(dup.items.front());
    dup.charges.clear();
    CHECK(forward(*m, dup).cost == forward(*m, r).cost);
  }
}

TEST_CASE("rate-card transformer does read items") {
  const auto e = testing::encoded_sample(50);
  auto m = build_model<float>(e.ds.schema, testing::tiny_model(), e.state, 5);
  testing::randomize(m->parameters(), 6, 0.3);
  RateCard r = e.ds.records[0];
  const double before = forward(*m, r).cost;
  r.items.push_back(r.items.front());
  r.items.push_back(r.items.front());
  CHECK(forward(*m, r).cost != before);
}

TEST_CASE("flat transformer attends over fixed groups and the heuristic only") {
  const auto e = testing::encoded_sample(100);
  auto m = build_model<float>(e.ds.schema, testing::tiny_model(ModelKind::flat_transformer), e.state, 5);
  testing::randomize(m->parameters(), 6, 0.3);
  const Index expected = static_cast<Index>(e.ds.schema.fixed_feature_count()) + 1;
  std::mt19937_64 rng(8);
  for (std::size_t k = 0; k < 20; ++k) {
    const RateCard& r = e.ds.records[k];
    const Prediction p = forward(*m, r, true);
    REQUIRE(p.maps.size() == 2);
    CHECK(p.maps[0].scores.rows() == expected);
    RateCard dup = shuffled_copy(r, rng);
    dup.items.push_back(dup.items.front());
    CHECK(forward(*m, dup).cost == p.cost);
  }
}

TEST_CASE("hybrid with a zeroed attention branch is a pure dense predictor") {
  const auto e = testing::encoded_sample(100);
  auto m = build_model<float>(e.ds.schema, testing::tiny_model(ModelKind::hybrid), e.state, 5);
  testing::randomize(m->parameters(), 6, 0.3);
  auto& hybrid = dynamic_cast<HybridModel<float>&>(*m);
  RateCard r = e.ds.records[0];
  RateCard more = r;
  more.items.push_back(more.items.front());
  more.items.push_back(more.items.front());
  CHECK(forward(*m, more).cost != forward(*m, r).cost);
  // Rows d..2d of the head read the attention branch.
  hybrid.head().weight->value.bottomRows(8).setZero();
  for (std::size_t k = 0; k < 20; ++k) {
    RateCard a = e.ds.records[k];
    RateCard b = a;
    b.items.push_back(b.items.front());
    b.charges.clear();
    CHECK(forward(*m, a).cost == forward(*m, b).cost);
  }
}

TEST_CASE("sweep validation") {
  SweepSpec s;
  s.kind = SweepKind::heads;
  s.values = {3};
  s.seeds = {0};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.values = {2, 2};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.values = {2, 4};
  CHECK_NOTHROW(s.validate());
  s.seeds.clear();
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.seeds = {0};
  s.kind = SweepKind::layers;
  s.values = {0};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  CHECK(parse_sweep_kind("datascale") == SweepKind::datascale);
  CHECK_THROWS(parse_sweep_kind("width"));
}

TEST_CASE("summary uses the sample standard deviation") {
  const SweepSummary s = summarize(4, {1.0, 2.0, 4.0});
  CHECK(s.mean == doctest::Approx(7.0 / 3.0));
  const double var = ((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) + (4 - 7.0 / 3) * (4 - 7.0 / 3)) / 2;
  CHECK(s.std == doctest::Approx(std::sqrt(var)));
  CHECK(summarize(4, {3.0}).std == 0.0);
}

TEST_CASE("sweep rows, scheduling independence and one-cell equivalence") {
  const Dataset raw = generate(testing::small_config(500, 31), synth_std_schema());
  SweepSpec s;
  s.kind = SweepKind::heads;
  s.values = {1, 2};
  s.seeds = {0, 1};
  s.model = testing::tiny_model(ModelKind::rct, 8, 1, 2);
  s.train.batch_size = 64;
  s.train.max_epochs = 2;
  s.train.eval_every = 5;
  s.split_seed = 3;
  const SweepReport one = run_sweep(s, raw, 1);
  const SweepReport two = run_sweep(s, raw, 2);
  REQUIRE(one.cells.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(one.cells[i].value == two.cells[i].value);
    CHECK(one.cells[i].seed == two.cells[i].seed);
    CHECK(one.cells[i].test_mae_percent == two.cells[i].test_mae_percent);
  }
  std::ostringstream out;
  one.write_csv(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "kind,value,seed,test_mae_percent,std");
  std::size_t rows = 0, summary_rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    summary_rows += line.find(",summary,") != std::string::npos ? 1 : 0;
  }
  CHECK(rows == s.values.size() * s.seeds.size() + s.values.size());
  CHECK(summary_rows == s.values.size());

  SweepSpec single = s;
  single.values = {2};
  single.seeds = {1};
  const SweepReport cell = run_sweep(single, raw, 1);
  const PreparedData data = prepare_data(raw, s.fractions, s.split_seed);
  TrainConfig tc = s.train;
  tc.seed = 1;
  const RunOutcome plain = run_experiment(data, s.model, tc);
  CHECK(cell.cells.at(0).test_mae_percent == plain.test_mae_percent);
  CHECK(one.cells[3].test_mae_percent == plain.test_mae_percent);
}

TEST_CASE("datascale sweep trains on the requested number of records") {
  const Dataset raw = generate(testing::small_config(400, 37), synth_std_schema());
  SweepSpec s;
  s.kind = SweepKind::datascale;
  s.values = {100};
  s.seeds = {0};
  s.model = testing::tiny_model();
  s.train.batch_size = 50;
  s.train.max_epochs = 1;
  s.train.eval_every = 1;
  const SweepReport r = run_sweep(s, raw, 1);
  const PreparedData data = prepare_data(raw, s.fractions, s.split_seed, 100);
  CHECK(data.split.train.size() == 100);
  TrainConfig tc = s.train;
  tc.seed = 0;
  const RunOutcome plain = run_experiment(data, s.model, tc);
  CHECK(plain.train.steps == 2);
  CHECK(r.cells.at(0).test_mae_percent == plain.test_mae_percent);
}
