#include <cmath>

#include "doctest.h"
#include "pimoe/checkpoint.hpp"
#include "pimoe/error.hpp"
#include "pimoe/synthgen.hpp"
#include "pimoe/trainer.hpp"
#include "support/test_support.hpp"

using namespace pimoe;
using pimoe::testing::random_tensor;

namespace {

TrainConfig small_train_config(std::uint64_t seed) {
  TrainConfig tc;
  tc.model.horizon = 10;
  tc.model.expert_hidden = 16;
  tc.model.lstm_hidden = 16;
  tc.sampling.horizon = 10;
  tc.batch_size = 32;
  tc.epochs = 5;
  tc.seed = seed;
  return tc;
}

const Dataset& fleet5() {
  static const Dataset ds = [] {
    SynthConfig cfg;
    cfg.n_batteries = 5;
    cfg.seed = 21;
    cfg.schedule.conditions = {{1.0, 1.0, 25.0}, {0.5, 1.0, 35.0}, {1.5, 1.0, 25.0}};
    return gen_fleet(cfg).dataset;
  }();
  return ds;
}

std::set<std::string> all_ids(const Dataset& ds) {
  std::set<std::string> ids;
  for (const auto& b : ds.batteries) ids.insert(b.battery_id);
  return ids;
}

double mse_oracle(const Tensor& p, const Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return s / static_cast<double>(p.rows());
}

double cv_oracle(const Tensor& g, double eps) {
  std::vector<double> a(g.cols(), 0.0);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) a[c] += g.at(r, c);
  }
  double mean = 0.0;
  for (double v : a) mean += v;
  mean /= static_cast<double>(a.size());
  double var = 0.0;
  for (double v : a) var += (v - mean) * (v - mean);
  var /= static_cast<double>(a.size());
  return var / (mean * mean + eps);
}

}  // namespace

TEST_CASE("total loss against oracles") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor p = random_tensor(6, 4, rng);
    const Tensor t = random_tensor(6, 4, rng);
    Tensor g = random_tensor(6, 5, rng, 0.0, 1.0);
    const double alpha = rng.uniform(0.1, 1.0), beta = rng.uniform(0.0, 1.0);
    const LossParts parts = total_loss(p, t, &g, alpha, beta, 10.0);
    const double expected = alpha * mse_oracle(p, t) + beta * cv_oracle(g, 10.0);
    CHECK(std::abs(parts.total - expected) < 1e-12);
    CHECK(parts.total >= 0.0);

    ad::Graph graph;
    const ad::Var gv = graph.constant(g);
    const ad::Var l = total_loss(graph, graph.constant(p), graph.constant(t), &gv, alpha, beta, 10.0);
    CHECK(std::abs(l.value()[0] - expected) < 1e-12);

    CHECK(std::abs(total_loss(p, t, &g, alpha, 0.0, 10.0).total - alpha * mse_oracle(p, t)) < 1e-12);
  }

  const Tensor p = random_tensor(4, 3, rng);
  Tensor uniform = Tensor::matrix(4, 2, 0.5);
  CHECK(total_loss(p, p, &uniform, 0.75, 0.25, 10.0).total == 0.0);
  CHECK(total_loss(p, p, nullptr, 0.75, 0.25, 10.0).total == 0.0);
}

TEST_CASE("full-model gradient on the tiny config") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ModelState model = init_model(testing::tiny_config(), seed);
    Rng rng(seed + 1000);
    const ModelInputs in = testing::random_inputs(model.config, 3, rng);
    CHECK(testing::model_gradcheck(model, in, seed) < 1e-4);
  }
}

TEST_CASE("config JSON round trip and validation") {
  TrainConfig tc = small_train_config(3);
  tc.model.variant = Variant::AblateAmdpLinear;
  const TrainConfig back = train_config_from_json(to_json(tc));
  CHECK(to_json(back) == to_json(tc));

  nlohmann::json j = to_json(tc);
  j["surprise"] = 1;
  try {
    train_config_from_json(j);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }
  TrainConfig bad = tc;
  bad.alpha = 0.0;
  bad.beta = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  TrainConfig tc = small_train_config(2);
  tc.lr = 0.0;
  const auto samples = samples_for(fleet5(), all_ids(fleet5()), tc);
  FitResult r = fit(samples, {}, [&] {
    TrainConfig one = tc;
    one.epochs = 1;
    return one;
  }());
  ModelState model = r.model;
  const ParamSet before = model.params;
  AdamState adam;
  adam.lr = 0.0;
  Rng rng(4);
  train_epoch(model, adam, samples, tc, rng);
  CHECK(model.params.same_values(before));
}

TEST_CASE("training loss falls over the first epochs") {
  std::size_t good = 0;
  const std::size_t seeds = 10;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const TrainConfig tc = small_train_config(seed);
    const auto samples = samples_for(fleet5(), all_ids(fleet5()), tc);
    const FitResult r = fit(samples, {}, tc);
    bool decreasing = true;
    for (std::size_t e = 1; e < r.history.size(); ++e) {
      decreasing = decreasing && r.history[e].loss < r.history[e - 1].loss;
    }
    good += decreasing;
  }
  CHECK(good * 10 >= seeds * 9);
}

TEST_CASE("CV term lowers importance dispersion") {
  TrainConfig tc = small_train_config(5);
  tc.epochs = 50;
  tc.patience = 0;
  const auto samples = samples_for(fleet5(), all_ids(fleet5()), tc);
  TrainConfig no_cv = tc;
  no_cv.beta = 0.0;
  const FitResult with = fit(samples, {}, tc);
  const FitResult without = fit(samples, {}, no_cv);
  MESSAGE("importance CV with beta: " << with.history.back().importance_cv
                                      << ", without: " << without.history.back().importance_cv);
  CHECK(with.history.back().importance_cv < without.history.back().importance_cv);
}

TEST_CASE("fit: determinism, selection, variants, errors") {
  const Dataset& ds = fleet5();
  SplitSpec split;
  for (std::size_t i = 0; i < ds.batteries.size(); ++i) {
    (i == 1 ? split.val_ids : split.train_ids).insert(ds.batteries[i].battery_id);
  }
  TrainConfig tc = small_train_config(8);
  tc.epochs = 6;
  const FitResult a = fit(ds, split, tc);
  const FitResult b = fit(ds, split, tc);
  CHECK(a.model.params.same_values(b.model.params));
  CHECK(a.best_epoch >= 1);
  for (const auto& h : a.history) CHECK(a.best_val_loss <= h.val_loss);
  CHECK(a.best_val_loss == a.history[a.best_epoch - 1].val_loss);

  for (Variant v : {Variant::AblateAmdpLinear, Variant::AblateFornnPlainRnn, Variant::HistoryMode}) {
    TrainConfig vc = tc;
    vc.epochs = 2;
    vc.model.variant = v;
    const FitResult r = fit(ds, split, vc);
    CHECK(r.history.size() == 2);
    CHECK(std::isfinite(r.history.back().loss));
    if (v == Variant::AblateAmdpLinear) {
      CHECK(r.model.params.contains(std::string(param_names::kLinearTrend) + ".w"));
      CHECK_FALSE(r.model.params.contains(param_names::kRouterGate));
    }
  }

  try {
    fit(std::span<const Sample>{}, {}, tc);
    FAIL("expected InvalidDataset");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidDataset);
  }
}

TEST_CASE("non-finite loss raises TrainingDiverged") {
  const TrainConfig tc = small_train_config(1);
  const auto samples = samples_for(fleet5(), all_ids(fleet5()), tc);
  TrainConfig one = tc;
  one.epochs = 1;
  ModelState model = fit(samples, {}, one).model;
  model.params.get(std::string(param_names::kHead) + ".b").value[0] = NAN;
  AdamState adam;
  Rng rng(1);
  try {
    train_epoch(model, adam, samples, tc, rng);
    FAIL("expected TrainingDiverged");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TrainingDiverged);
  }
}

TEST_CASE("trend embeddings") {
  TrainConfig tc = small_train_config(3);
  tc.epochs = 1;
  auto samples = samples_for(fleet5(), all_ids(fleet5()), tc);
  const ModelState model = fit(samples, {}, tc).model;
  samples.push_back(samples.front());
  const Tensor emb = export_trend_embeddings(model, samples);
  CHECK(emb.rows() == samples.size());
  CHECK(emb.cols() == 10);
  for (double v : emb.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (std::size_t c = 0; c < 10; ++c) CHECK(emb.at(0, c) == emb.at(samples.size() - 1, c));
}

TEST_CASE("checkpoint round trip and corruption") {
  TrainConfig tc = small_train_config(6);
  tc.epochs = 2;
  const auto samples = samples_for(fleet5(), all_ids(fleet5()), tc);
  FitResult r = fit(samples, {}, tc);
  r.model.stage_map = StageMap{0, 2, 4, false};
  Rng rng(77);
  rng.normal();
  const std::string bytes = encode_checkpoint(r.model, &r.adam, &rng);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.model.params.same_values(r.model.params));
  CHECK(back.model.feature_norm.min() == r.model.feature_norm.min());
  CHECK(back.model.condition_norm.max() == r.model.condition_norm.max());
  REQUIRE(back.model.stage_map);
  CHECK(back.model.stage_map->late == 4);
  REQUIRE(back.adam);
  CHECK(back.adam->step == r.adam.step);
  REQUIRE(back.rng_state);
  Rng restored;
  restored.deserialize(*back.rng_state);
  CHECK(restored.normal() == rng.normal());

  const std::size_t n = std::min<std::size_t>(samples.size(), 100);
  const auto p1 = predict_batch(std::span(samples).first(n), r.model);
  const auto p2 = predict_batch(std::span(samples).first(n), back.model);
  for (std::size_t i = 0; i < n; ++i) CHECK(p1[i].soh == p2[i].soh);

  const ModelState fresh = init_model(tc.model, 9);
  CHECK(decode_checkpoint(encode_checkpoint(fresh)).model.params.same_values(fresh.params));

  auto code = [](std::string_view b) {
    try {
      decode_checkpoint(b);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  CHECK(code(std::string_view(bytes).substr(0, bytes.size() - 9)) == ErrorCode::ChecksumError);
  CHECK(code(std::string_view(bytes).substr(0, 10)) == ErrorCode::ChecksumError);
  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x10;
  CHECK(code(flipped) == ErrorCode::ChecksumError);
  std::string version = bytes;
  const auto at = version.find("\"version\":1");
  REQUIRE(at != std::string::npos);
  version[at + 10] = '7';
  CHECK(code(version) == ErrorCode::IncompatibleCheckpoint);
  CHECK(code("not a checkpoint at all") == ErrorCode::IncompatibleCheckpoint);
}
