#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "deepheart/biomarkers.hpp"
#include "deepheart/cli.hpp"
#include "deepheart/errors.hpp"
#include "deepheart/eval.hpp"
#include "deepheart/model.hpp"
#include "deepheart/sensorstream.hpp"
#include "deepheart/synthcohort.hpp"

namespace py = pybind11;
namespace ss = deepheart::sensorstream;
namespace md = deepheart::model;
namespace ev = deepheart::eval;
namespace bm = deepheart::biomarkers;
namespace sc = deepheart::synthcohort;

namespace {

using Scores = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<int, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const Scores& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }
std::span<const int> view(const Labels& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

void check_pair(const Scores& s, const Labels& y) {
  if (s.ndim() != 1 || y.ndim() != 1 || s.size() != y.size()) {
    throw py::value_error("scores and labels must be 1-D arrays of equal length");
  }
}

md::ModelConfig model_config(int width, int conv_depth, int lstm_depth, int initial_filter) {
  md::ModelConfig cfg;
  cfg.width = width;
  cfg.conv_depth = conv_depth;
  cfg.lstm_depth = lstm_depth;
  cfg.initial_filter = initial_filter;
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_deepheart, m) {
  m.doc() = "Wearable heart-rate and step-count risk models";
  m.attr("__version__") = deepheart::cli::kToolVersion;

  py::register_exception<deepheart::UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<deepheart::DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<deepheart::NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("dt_transform", &ss::dt_transform, py::arg("dt_ms"),
        "Encoded inter-event gap: 0.1 * ln(dt_ms / 5000).");
  m.def("default_tasks", &ss::default_tasks);

  m.def(
      "c_statistic",
      [](const Scores& s, const Labels& y) {
        check_pair(s, y);
        return ev::c_statistic(view(s), view(y));
      },
      py::arg("scores"), py::arg("labels"), "Rank AUC with ties counted one half; None unless both classes occur.");
  m.def(
      "roc_curve",
      [](const Scores& s, const Labels& y) -> py::object {
        check_pair(s, y);
        const auto roc = ev::roc_curve(view(s), view(y));
        if (!roc) return py::none();
        std::vector<double> fpr, tpr, thr;
        for (const auto& p : roc->points) {
          fpr.push_back(p.fpr);
          tpr.push_back(p.tpr);
          thr.push_back(p.threshold);
        }
        py::dict d;
        d["fpr"] = py::array(py::cast(fpr));
        d["tpr"] = py::array(py::cast(tpr));
        d["threshold"] = py::array(py::cast(thr));
        d["auc"] = roc->auc;
        return std::move(d);
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "bootstrap_ci",
      [](const Scores& s, const Labels& y, std::size_t n_boot, double level, std::uint64_t seed) {
        check_pair(s, y);
        const auto ci = ev::bootstrap_ci(view(s), view(y), {}, {n_boot, level, seed});
        return py::make_tuple(ci.low, ci.high);
      },
      py::arg("scores"), py::arg("labels"), py::arg("n_boot") = 1000, py::arg("level") = 0.95, py::arg("seed") = 0);

  m.def(
      "rmssd", [](const Scores& bpm) { return bm::rmssd(view(bpm)); }, py::arg("bpm"),
      "Root mean square of successive differences.");
  m.def("feature_names", [] {
    std::vector<std::string> out;
    for (auto n : bm::feature_names()) out.emplace_back(n);
    return out;
  });

  m.def(
      "generate_cohort",
      [](std::size_t n_users, std::size_t weeks_per_user, std::uint64_t seed) {
        sc::SynthConfig cfg;
        cfg.n_users = n_users;
        cfg.weeks_per_user = weeks_per_user;
        cfg.seed = seed;
        const auto cohort = sc::generate_cohort(cfg);
        std::vector<std::string> user;
        std::vector<std::int64_t> t;
        std::vector<std::string> channel;
        std::vector<double> value;
        for (const auto& r : cohort.records) {
          user.push_back(r.user_id);
          t.push_back(r.timestamp_ms);
          channel.emplace_back(ss::channel_name(r.channel));
          value.push_back(r.value);
        }
        py::dict records;
        records["user_id"] = user;
        records["timestamp_ms"] = py::array(py::cast(t));
        records["channel"] = channel;
        records["value"] = py::array(py::cast(value));
        py::dict labels;
        for (const auto& u : cohort.users) labels[py::str(u.user_id)] = u.conditions;
        return py::make_tuple(records, labels);
      },
      py::arg("n_users"), py::arg("weeks_per_user") = 2, py::arg("seed") = 1,
      "Planted-signal cohort as (records dict of columns, {user: {task: +1/-1}}).");

  m.def(
      "model_output_shape",
      [](std::size_t input_len, int width, int conv_depth, int lstm_depth, int initial_filter) {
        const auto cfg = model_config(width, conv_depth, lstm_depth, initial_filter);
        deepheart::autodiff::Tensor<float> x({input_len, ss::kInputChannels});
        const auto y = md::predict(md::build_parameters<float>(cfg, md::Head::Classifier, 0), cfg,
                                   md::Head::Classifier, x);
        return py::make_tuple(y.dim(0), y.dim(1));
      },
      py::arg("input_len"), py::arg("width") = 128, py::arg("conv_depth") = 3, py::arg("lstm_depth") = 4,
      py::arg("initial_filter") = 12, "Runs one forward pass and returns (steps, tasks).");
  m.def(
      "parameter_count",
      [](int width, int conv_depth, int lstm_depth, int initial_filter) {
        const auto store = md::build_parameters<float>(model_config(width, conv_depth, lstm_depth, initial_filter),
                                                       md::Head::Classifier, 0);
        std::size_t n = 0;
        for (const auto& p : store.params()) n += p.value.size();
        return n;
      },
      py::arg("width") = 128, py::arg("conv_depth") = 3, py::arg("lstm_depth") = 4, py::arg("initial_filter") = 12);
  m.def("grid_size", [] { return md::hyperparameter_grid(ss::default_tasks()).size(); });

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "deepheart");
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = deepheart::cli::dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI subcommand in-process; returns (exit_code, stdout, stderr).");
}
