#include "pimoe/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "pimoe/amdp.hpp"
#include "pimoe/error.hpp"
#include "pimoe/json_util.hpp"

namespace pimoe {

void TrainConfig::validate() const {
  model.validate();
  require(lr >= 0.0 && std::isfinite(lr), ErrorCode::InvalidArgument, "lr must be >= 0");
  require(weight_decay >= 0.0, ErrorCode::InvalidArgument, "weight_decay must be >= 0");
  require(batch_size >= 1, ErrorCode::InvalidArgument, "batch_size must be >= 1");
  require(alpha >= 0.0 && beta >= 0.0 && alpha + beta > 0.0, ErrorCode::InvalidArgument,
          "alpha and beta must be non-negative with a positive sum");
  require(cv_eps > 0.0, ErrorCode::InvalidArgument, "cv_eps must be > 0");
  require(sampling.charge_points >= 2, ErrorCode::InvalidArgument, "charge_points must be >= 2");
  require(sampling.relax_points >= 2, ErrorCode::InvalidArgument, "relax_points must be >= 2");
}

namespace {

nlohmann::json start_to_json(const StartPolicy& policy) {
  if (const auto* fixed = std::get_if<FixedStart>(&policy)) {
    return {{"policy", "fixed"}, {"voltage_v", fixed->voltage_v}};
  }
  const auto& r = std::get<RandomSocStart>(policy);
  return {{"policy", "random_soc"}, {"seed", r.seed}, {"soc_lo", r.soc_lo}, {"soc_hi", r.soc_hi}};
}

StartPolicy start_from_json(const nlohmann::json& j) {
  const std::string where = "sampling.start";
  check_keys(j, {"policy", "voltage_v", "seed", "soc_lo", "soc_hi"}, where);
  std::string policy = "random_soc";
  read_key(j, "policy", policy, where);
  if (policy == "fixed") {
    FixedStart fixed;
    require(j.contains("voltage_v"), ErrorCode::ConfigError, "fixed start needs voltage_v");
    read_key(j, "voltage_v", fixed.voltage_v, where);
    return fixed;
  }
  require(policy == "random_soc", ErrorCode::ConfigError, "unknown start policy '" + policy + "'");
  RandomSocStart r;
  read_key(j, "seed", r.seed, where);
  read_key(j, "soc_lo", r.soc_lo, where);
  read_key(j, "soc_hi", r.soc_hi, where);
  require(0.0 <= r.soc_lo && r.soc_lo < r.soc_hi && r.soc_hi < 1.0, ErrorCode::ConfigError,
          "random_soc needs 0 <= soc_lo < soc_hi < 1");
  return r;
}

// The shared pieces of the sample options; horizon, feature mode and history
// window always come from the model config.
void sync_sampling(TrainConfig& c) {
  c.sampling.horizon = c.model.horizon;
  c.sampling.mode = c.model.feature_mode;
  c.sampling.history_window = c.model.history_window;
}

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},
          {"sampling",
           {{"start", start_to_json(c.sampling.start)},
            {"charge_points", c.sampling.charge_points},
            {"relax_window_min", c.sampling.relax_window_min},
            {"relax_points", c.sampling.relax_points},
            {"q_window_v", c.sampling.q_window_v},
            {"dv_window_mAh", c.sampling.dv_window_mAh}}},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"cv_eps", c.cv_eps},
          {"epochs", c.epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"pooled", c.pooled}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  const std::string where = "train";
  check_keys(j,
             {"model", "sampling", "lr", "weight_decay", "batch_size", "alpha", "beta", "cv_eps",
              "epochs", "patience", "seed", "pooled"},
             where);
  TrainConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("sampling")) {
    const auto& s = j.at("sampling");
    const std::string sw = "sampling";
    check_keys(s,
               {"start", "charge_points", "relax_window_min", "relax_points", "q_window_v",
                "dv_window_mAh"},
               sw);
    if (s.contains("start")) c.sampling.start = start_from_json(s.at("start"));
    read_key(s, "charge_points", c.sampling.charge_points, sw);
    read_key(s, "relax_window_min", c.sampling.relax_window_min, sw);
    read_key(s, "relax_points", c.sampling.relax_points, sw);
    read_key(s, "q_window_v", c.sampling.q_window_v, sw);
    read_key(s, "dv_window_mAh", c.sampling.dv_window_mAh, sw);
  }
  read_key(j, "lr", c.lr, where);
  read_key(j, "weight_decay", c.weight_decay, where);
  read_key(j, "batch_size", c.batch_size, where);
  read_key(j, "alpha", c.alpha, where);
  read_key(j, "beta", c.beta, where);
  read_key(j, "cv_eps", c.cv_eps, where);
  read_key(j, "epochs", c.epochs, where);
  read_key(j, "patience", c.patience, where);
  read_key(j, "seed", c.seed, where);
  read_key(j, "pooled", c.pooled, where);
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------

LossParts total_loss(const Tensor& prediction, const Tensor& target, const Tensor* gates,
                     double alpha, double beta, double eps) {
  require(prediction.same_shape(target) && prediction.rank() == 2, ErrorCode::ShapeError,
          "prediction " + shape_string(prediction.shape()) + " vs target " +
              shape_string(target.shape()));
  LossParts out;
  double sq = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = prediction[i] - target[i];
    sq += d * d;
  }
  out.trajectory = sq / static_cast<double>(prediction.rows());
  if (gates != nullptr) {
    require(gates->rows() == prediction.rows(), ErrorCode::ShapeError,
            "gate rows do not match the batch");
    std::vector<GateOutput> rows(gates->rows());
    for (std::size_t r = 0; r < gates->rows(); ++r) {
      rows[r].weights.assign(gates->data() + r * gates->cols(),
                             gates->data() + (r + 1) * gates->cols());
    }
    out.cv = importance_cv_loss(rows, eps);
  }
  out.total = alpha * out.trajectory + beta * out.cv;
  return out;
}

ad::Var total_loss(ad::Graph& graph, ad::Var prediction, ad::Var target, const ad::Var* gates,
                   double alpha, double beta, double eps) {
  const double batch = static_cast<double>(prediction.rows());
  ad::Var traj = ad::scale(ad::sum_all(ad::square(ad::sub(prediction, target))), alpha / batch);
  if (gates == nullptr || beta == 0.0) return traj;
  return ad::add(traj, ad::scale(cv_loss(graph, *gates, eps), beta));
}

nlohmann::json to_json(const EpochStats& s, bool with_timing) {
  auto number = [](double v) -> nlohmann::json {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  nlohmann::json j = {{"epoch", s.epoch},
                      {"loss", number(s.loss)},
                      {"trajectory_loss", number(s.trajectory_loss)},
                      {"cv_loss", number(s.cv_loss)},
                      {"importance_cv", number(s.importance_cv)},
                      {"grad_norm_mean", number(s.grad_norm_mean)},
                      {"grad_norm_max", number(s.grad_norm_max)},
                      {"val_loss", number(s.val_loss)}};
  if (with_timing) j["seconds"] = s.seconds;
  return j;
}

// ---------------------------------------------------------------------------

namespace {

double importance_dispersion(const std::vector<double>& importance) {
  if (importance.empty()) return 0.0;
  const double n = static_cast<double>(importance.size());
  const double mean = std::accumulate(importance.begin(), importance.end(), 0.0) / n;
  if (mean <= 0.0) return 0.0;
  double var = 0.0;
  for (double a : importance) var += (a - mean) * (a - mean);
  return std::sqrt(var / n) / mean;
}

}  // namespace

EpochStats train_epoch(ModelState& model, AdamState& adam, std::span<const Sample> samples,
                       const TrainConfig& config, Rng& rng) {
  require(!samples.empty(), ErrorCode::InvalidDataset, "no training samples");
  const auto started = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

  adam.lr = config.lr;
  adam.weight_decay = config.weight_decay;
  EpochStats stats;
  std::vector<double> importance(model.config.experts, 0.0);
  std::size_t batches = 0;
  std::vector<const Sample*> batch;
  for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
    const std::size_t last = std::min(order.size(), first + config.batch_size);
    batch.clear();
    for (std::size_t i = first; i < last; ++i) batch.push_back(&samples[order[i]]);
    const ModelInputs inputs = make_inputs(model, batch);
    require(inputs.target_soh.size() > 0, ErrorCode::InvalidDataset,
            "training sample without a target trajectory");

    ad::Graph graph(true);
    const ForwardPass pass = model_forward(graph, model, inputs, true, &rng);
    const ad::Var target = graph.constant(inputs.target_soh);
    const ad::Var* gates = pass.gate ? &pass.gate->weights : nullptr;
    const ad::Var loss =
        total_loss(graph, pass.prediction, target, gates, config.alpha, config.beta, config.cv_eps);
    const LossParts parts =
        total_loss(pass.prediction.value(), inputs.target_soh,
                   pass.gate ? &pass.gate->weights.value() : nullptr, config.alpha, config.beta,
                   config.cv_eps);
    if (!std::isfinite(loss.value()[0])) {
      fail(ErrorCode::TrainingDiverged,
           "non-finite loss at batch " + std::to_string(batches) + " (trajectory " +
               std::to_string(parts.trajectory) + ", cv " + std::to_string(parts.cv) + ")");
    }
    model.params.zero_grad();
    graph.backward(loss, model.params);
    const double gnorm = model.params.grad_norm();
    require(std::isfinite(gnorm), ErrorCode::TrainingDiverged,
            "non-finite gradient at batch " + std::to_string(batches));
    adam_step(model.params, adam);

    stats.loss += loss.value()[0];
    stats.trajectory_loss += parts.trajectory;
    stats.cv_loss += parts.cv;
    stats.grad_norm_mean += gnorm;
    stats.grad_norm_max = std::max(stats.grad_norm_max, gnorm);
    if (pass.gate) {
      const Tensor& g = pass.gate->weights.value();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t j = 0; j < g.cols(); ++j) importance[j] += g.at(r, j);
      }
    }
    ++batches;
  }
  const double nb = static_cast<double>(batches);
  stats.loss /= nb;
  stats.trajectory_loss /= nb;
  stats.cv_loss /= nb;
  stats.grad_norm_mean /= nb;
  stats.importance_cv = model.config.uses_gate() ? importance_dispersion(importance) : 0.0;
  stats.val_loss = std::numeric_limits<double>::quiet_NaN();
  stats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return stats;
}

LossParts evaluate_loss(const ModelState& model, std::span<const Sample> samples,
                        const TrainConfig& config) {
  require(!samples.empty(), ErrorCode::InvalidDataset, "no samples to evaluate");
  LossParts sum;
  std::size_t count = 0;
  std::vector<const Sample*> batch;
  for (std::size_t first = 0; first < samples.size(); first += config.batch_size) {
    const std::size_t last = std::min(samples.size(), first + config.batch_size);
    batch.clear();
    for (std::size_t i = first; i < last; ++i) batch.push_back(&samples[i]);
    const ModelInputs inputs = make_inputs(model, batch);
    require(inputs.target_soh.size() > 0, ErrorCode::InvalidDataset,
            "evaluation sample without a target trajectory");
    ad::Graph graph(false);
    const ForwardPass pass = model_forward(graph, model, inputs, false, nullptr);
    const LossParts parts =
        total_loss(pass.prediction.value(), inputs.target_soh,
                   pass.gate ? &pass.gate->weights.value() : nullptr, config.alpha, config.beta,
                   config.cv_eps);
    const double w = static_cast<double>(batch.size());
    sum.trajectory += parts.trajectory * w;
    sum.cv += parts.cv * w;
    sum.total += parts.total * w;
    count += batch.size();
  }
  const double n = static_cast<double>(count);
  return {sum.trajectory / n, sum.cv / n, sum.total / n};
}

FitResult fit(std::span<const Sample> train, std::span<const Sample> val,
              const TrainConfig& config_in, const EpochCallback& on_epoch) {
  require(!train.empty(), ErrorCode::InvalidDataset, "training split has no samples");
  TrainConfig config = config_in;
  sync_sampling(config);
  config.validate();

  FitResult result;
  ModelState model = init_model(config.model, derive_stream(config.seed, "init").next_u64());
  if (config.model.variant != Variant::HistoryMode) model.feature_norm = fit_norm(train);
  std::vector<std::vector<double>> condition_rows;
  for (const auto& s : train) {
    for (const auto& c : s.conditions) {
      condition_rows.push_back({c.charge_c_rate, c.discharge_c_rate, c.temperature_c});
    }
  }
  model.condition_norm = NormStats::fit(condition_rows);

  Rng rng = derive_stream(config.seed, "train");
  AdamState adam;
  ParamSet best = model.params;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochStats stats = train_epoch(model, adam, train, config, rng);
    stats.epoch = epoch;
    // Without a validation split the epoch's own training loss drives selection.
    double score = stats.trajectory_loss;
    if (!val.empty()) {
      stats.val_loss = evaluate_loss(model, val, config).trajectory;
      score = stats.val_loss;
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (score < best_loss) {
      best_loss = score;
      best = model.params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  if (result.best_epoch > 0) model.params = std::move(best);
  model.params.zero_grad();
  result.best_val_loss = best_loss;
  model.metadata["train_config"] = to_json(config);
  model.metadata["best_epoch"] = result.best_epoch;
  model.metadata["epochs_run"] = result.history.size();
  model.metadata["early_stopped"] = result.early_stopped;
  model.metadata["train_samples"] = train.size();
  model.metadata["val_samples"] = val.size();
  if (std::isfinite(best_loss)) model.metadata["best_val_loss"] = best_loss;
  result.model = std::move(model);
  result.adam = std::move(adam);
  return result;
}

std::vector<Sample> samples_for(const Dataset& dataset, const std::set<std::string>& ids,
                                const TrainConfig& config_in) {
  TrainConfig config = config_in;
  sync_sampling(config);
  std::vector<Sample> out;
  for (const auto& battery : dataset.batteries) {
    if (!ids.contains(battery.battery_id)) continue;
    if (battery.cycles.size() <= config.sampling.horizon) continue;
    for (auto& s : build_samples(battery, config.sampling)) {
      if (config.model.variant == Variant::HistoryMode &&
          s.history_mAh.size() < config.model.history_window) {
        continue;
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

FitResult fit(const Dataset& dataset, const SplitSpec& split, const TrainConfig& config,
              const EpochCallback& on_epoch) {
  require(!split.train_ids.empty(), ErrorCode::InvalidDataset, "split has no training batteries");
  const std::vector<Sample> train = samples_for(dataset, split.train_ids, config);
  const std::vector<Sample> val = samples_for(dataset, split.val_ids, config);
  return fit(train, val, config, on_epoch);
}

Tensor export_trend_embeddings(const ModelState& model, std::span<const Sample> samples) {
  const std::size_t horizon = model.config.horizon;
  Tensor out = Tensor::matrix(samples.size(), horizon);
  if (samples.empty()) return out;
  const ModelInputs inputs = make_inputs(model, samples);
  ad::Graph graph(false);
  const ForwardPass pass = model_forward(graph, model, inputs, false, nullptr);
  out = pass.trend.value();
  for (std::size_t c = 0; c < horizon; ++c) {
    double lo = out.at(0, c), hi = out.at(0, c);
    for (std::size_t r = 1; r < out.rows(); ++r) {
      lo = std::min(lo, out.at(r, c));
      hi = std::max(hi, out.at(r, c));
    }
    for (std::size_t r = 0; r < out.rows(); ++r) {
      out.at(r, c) = hi > lo ? (out.at(r, c) - lo) / (hi - lo) : 0.5;
    }
  }
  return out;
}

}  // namespace pimoe
