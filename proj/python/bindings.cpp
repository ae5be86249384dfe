#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pimoe/amdp.hpp"
#include "pimoe/baselines.hpp"
#include "pimoe/checkpoint.hpp"
#include "pimoe/csv_io.hpp"
#include "pimoe/error.hpp"
#include "pimoe/evaluation.hpp"
#include "pimoe/features.hpp"
#include "pimoe/metrics.hpp"
#include "pimoe/synthgen.hpp"
#include "pimoe/trainer.hpp"
#include "pimoe/tsne.hpp"

namespace py = pybind11;
using namespace pimoe;

namespace {

// JSON crosses the boundary as text; the Python wrapper does the dict side.
nlohmann::json parse_or_empty(const std::string& text) {
  return text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text);
}

SampleOptions options_for(const ModelState& model) {
  TrainConfig cfg;
  if (model.metadata.contains("train_config")) {
    cfg = train_config_from_json(model.metadata.at("train_config"));
  }
  SampleOptions options = cfg.sampling;
  options.horizon = model.config.horizon;
  options.mode = model.config.feature_mode;
  options.history_window = model.config.history_window;
  return options;
}

std::set<std::string> all_or(const Dataset& ds, const std::vector<std::string>& ids) {
  if (!ids.empty()) return {ids.begin(), ids.end()};
  std::set<std::string> out;
  for (const auto& b : ds.batteries) out.insert(b.battery_id);
  return out;
}

py::dict prediction_dict(const Sample& s, const Prediction& p) {
  py::dict d;
  d["battery_id"] = s.battery_id;
  d["anchor_cycle"] = s.anchor_cycle;
  d["soh"] = p.soh;
  d["capacity_mAh"] = p.capacity_mAh;
  d["target_mAh"] = s.target_mAh;
  return d;
}

}  // namespace

PYBIND11_MODULE(_pimoe, m) {
  m.doc() = "Battery degradation trajectory forecasting (native core)";

  py::register_exception<Error>(m, "PimoeError", PyExc_RuntimeError);

  m.def(
      "synth",
      [](const std::string& out_dir, const std::string& config_json) {
        const SynthFleet fleet = gen_fleet(synth_config_from_json(parse_or_empty(config_json)));
        write_archive(out_dir, Archive{fleet.dataset, fleet.stages, {}});
        std::vector<std::string> ids;
        for (const auto& b : fleet.dataset.batteries) ids.push_back(b.battery_id);
        return ids;
      },
      py::arg("out_dir"), py::arg("config_json") = "");

  m.def("compute_metrics", [](const std::vector<double>& pred, const std::vector<double>& truth) {
    return to_json(compute_metrics(pred, truth)).dump();
  });

  m.def("stat_features", [](const std::vector<double>& x) {
    const StatFeatures s = stat_features(x);
    return std::vector<double>{s.max, s.mean, s.min, s.var, s.skew, s.kurt};
  });

  m.def(
      "gate_weights",
      [](const std::vector<double>& logits, std::size_t k, bool literal) {
        return gate_weights(logits, k, literal).weights;
      },
      py::arg("logits"), py::arg("k"), py::arg("literal_double_softmax") = false);

  m.def(
      "importance_cv_loss",
      [](const std::vector<std::vector<double>>& weights, double eps) {
        std::vector<GateOutput> gates(weights.size());
        for (std::size_t i = 0; i < weights.size(); ++i) gates[i].weights = weights[i];
        return importance_cv_loss(gates, eps);
      },
      py::arg("weights"), py::arg("eps") = 10.0);

  m.def(
      "poly_baseline",
      [](const std::vector<double>& history, std::size_t degree, std::size_t horizon) {
        return poly_baseline(history, degree, horizon);
      },
      py::arg("history"), py::arg("degree") = 3, py::arg("horizon") = 50);

  m.def(
      "tsne",
      [](const std::vector<std::vector<double>>& points, double perplexity, std::size_t iterations,
         std::uint64_t seed) {
        require(!points.empty(), ErrorCode::InvalidArgument, "tsne needs points");
        Tensor t = Tensor::matrix(points.size(), points.front().size());
        for (std::size_t i = 0; i < points.size(); ++i) {
          require(points[i].size() == t.cols(), ErrorCode::ShapeError, "ragged point rows");
          for (std::size_t j = 0; j < t.cols(); ++j) t.at(i, j) = points[i][j];
        }
        TsneOptions opt;
        opt.perplexity = perplexity;
        opt.iterations = iterations;
        opt.seed = seed;
        const TsneResult r = tsne_embed(t, opt);
        std::vector<std::vector<double>> emb(r.embedding.rows(), std::vector<double>(2));
        for (std::size_t i = 0; i < emb.size(); ++i) {
          emb[i] = {r.embedding.at(i, 0), r.embedding.at(i, 1)};
        }
        return py::make_tuple(emb, r.kl_trace);
      },
      py::arg("points"), py::arg("perplexity") = 30.0, py::arg("iterations") = 1000,
      py::arg("seed") = 0);

  py::class_<ModelState>(m, "Model")
      .def_static("load", [](const std::string& path) { return load_checkpoint(path).model; })
      .def("save", [](const ModelState& model, const std::string& path) { save_checkpoint(path, model); })
      .def_property_readonly("horizon", [](const ModelState& model) { return model.config.horizon; })
      .def_property_readonly("config_json",
                             [](const ModelState& model) { return to_json(model.config).dump(); })
      .def_property_readonly("metadata_json",
                             [](const ModelState& model) { return model.metadata.dump(); })
      .def(
          "predict",
          [](const ModelState& model, const std::string& data_dir, const std::string& battery,
             int cycle) {
            const Archive archive = read_archive(data_dir);
            const BatterySeries& b = archive.dataset.battery(battery);
            const SampleOptions options = options_for(model);
            for (const Sample& s : build_samples(b, options)) {
              if (s.anchor_cycle == cycle) return prediction_dict(s, predict_trajectory(s, model));
            }
            throw Error(ErrorCode::InsufficientData,
                        battery + " has no forecastable sample anchored at cycle " +
                            std::to_string(cycle));
          },
          py::arg("data_dir"), py::arg("battery"), py::arg("cycle"))
      .def(
          "evaluate",
          [](const ModelState& model, const std::string& data_dir,
             const std::vector<std::string>& ids) {
            const Archive archive = read_archive(data_dir);
            return to_json(evaluate_model(model, archive.dataset, all_or(archive.dataset, ids),
                                          options_for(model).start))
                .dump();
          },
          py::arg("data_dir"), py::arg("ids") = std::vector<std::string>{});

  m.def(
      "train",
      [](const std::string& data_dir, const std::string& config_json,
         const std::vector<std::string>& ids) {
        const Archive archive = read_archive(data_dir);
        const TrainConfig config = train_config_from_json(parse_or_empty(config_json));
        SplitSpec split;
        split.train_ids = all_or(archive.dataset, ids);
        py::gil_scoped_release release;
        return fit(archive.dataset, split, config).model;
      },
      py::arg("data_dir"), py::arg("config_json") = "",
      py::arg("ids") = std::vector<std::string>{});
}
