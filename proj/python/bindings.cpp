#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lea/errors.hpp"
#include "lea/harness.hpp"

namespace py = pybind11;
using namespace lea;

namespace {

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> a({m.rows(), m.cols()});
  auto v = a.mutable_unchecked<2>();
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) v(r, c) = m(r, c);
  return a;
}

py::array_t<int> to_array(const IntMatrix& m) {
  py::array_t<int> a({m.rows(), m.cols()});
  auto v = a.mutable_unchecked<2>();
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) v(r, c) = m(r, c);
  return a;
}

Matrix from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw InvalidInput("expected a 2-d array");
  Matrix m(a.shape(0), a.shape(1));
  auto v = a.unchecked<2>();
  for (py::ssize_t r = 0; r < a.shape(0); ++r)
    for (py::ssize_t c = 0; c < a.shape(1); ++c) m(r, c) = v(r, c);
  return m;
}

// (features n x 4, labels n) for one split.
py::tuple split_arrays(const std::vector<taskgen::Sample>& s) {
  py::array_t<double> f({s.size(), std::size_t{4}});
  py::array_t<int> y(s.size());
  auto fv = f.mutable_unchecked<2>();
  auto yv = y.mutable_unchecked<1>();
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t k = 0; k < 4; ++k) fv(i, k) = s[i].features[k];
    yv(i) = static_cast<int>(s[i].label);
  }
  return py::make_tuple(f, y);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Layer ensemble averaging on a simulated memristive crossbar";
  m.attr("__version__") = harness::tool_version();

  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

  // taskgen
  m.def("classify_point", [](double x, double y) -> std::optional<int> {
    auto l = taskgen::classify_point(x, y);
    if (!l) return std::nullopt;
    return static_cast<int>(*l);
  });
  m.def("sample_task", [](int task, std::size_t n, std::uint64_t seed) {
    if (task != 1 && task != 2) throw InvalidInput("task must be 1 or 2");
    return split_arrays(taskgen::sample_task(static_cast<taskgen::Task>(task), n, seed));
  }, py::arg("task"), py::arg("n"), py::arg("seed"));

  py::class_<taskgen::YinYangGeometry>(m, "YinYangGeometry").def(py::init<>());
  py::class_<taskgen::MultiTaskDataset>(m, "Dataset")
      .def_readonly("seed", &taskgen::MultiTaskDataset::seed)
      .def("train", [](const taskgen::MultiTaskDataset& d, int t) {
        return split_arrays(d.train(static_cast<taskgen::Task>(t)));
      })
      .def("test", [](const taskgen::MultiTaskDataset& d, int t) {
        return split_arrays(d.test(static_cast<taskgen::Task>(t)));
      });
  m.def("make_dataset", &taskgen::make_multitask_dataset, py::arg("n_train"), py::arg("n_test"),
        py::arg("seed"), py::arg("geometry") = taskgen::YinYangGeometry{});

  // neural network
  py::class_<nn::Network>(m, "Network")
      .def_property_readonly("weights", [](const nn::Network& n) {
        py::list out;
        for (const auto& w : n.weights) out.append(to_array(w));
        return out;
      })
      .def("forward", [](const nn::Network& n, std::vector<double> f) {
        return nn::forward(n, f).probabilities;
      })
      .def("predict", [](const nn::Network& n, std::vector<double> f) { return nn::predict(n, f); });
  m.def("init_network", &nn::init_network, py::arg("seed"));
  m.def("network_from_weights", [](const std::vector<py::array_t<double>>& ws) {
    nn::Network n;
    for (const auto& w : ws) n.weights.push_back(from_array(w));
    n.validate();
    return n;
  });

  py::class_<nn::Hyperparameters>(m, "Hyperparameters")
      .def(py::init<>())
      .def_readwrite("learning_rate", &nn::Hyperparameters::learning_rate)
      .def_readwrite("batch_size", &nn::Hyperparameters::batch_size)
      .def_readwrite("epochs_per_task", &nn::Hyperparameters::epochs_per_task)
      .def_readwrite("ewc_lambda", &nn::Hyperparameters::ewc_lambda);

  m.def("train_continual", [](std::uint64_t seed, const taskgen::MultiTaskDataset& d,
                              const std::string& method, const nn::Hyperparameters& hp) {
    auto r = nn::train_continual(seed, d, nn::parse_method(method), hp);
    py::list hist;
    for (const auto& e : r.history.epochs)
      hist.append(py::make_tuple(e.epoch, e.task1_acc, e.task2_acc, e.loss));
    return py::make_tuple(r.network, hist);
  }, py::arg("seed"), py::arg("data"), py::arg("method") = "EWC",
     py::arg("hp") = nn::Hyperparameters{});

  py::class_<nn::TernarySolution>(m, "TernarySolution")
      .def_property_readonly("ternary", [](const nn::TernarySolution& s) {
        py::list out;
        for (const auto& t : s.ternary) out.append(to_array(t));
        return out;
      })
      .def_readonly("scales", &nn::TernarySolution::scales)
      .def_readonly("accuracy", &nn::TernarySolution::accuracy)
      .def("to_network", &nn::TernarySolution::to_network);
  m.def("ternarize", &nn::ternarize);
  m.def("score_solution", [](nn::TernarySolution s, const taskgen::MultiTaskDataset& d) {
    nn::score_solution(s, d);
    return s;
  });
  m.def("load_solution", [](const std::filesystem::path& p) {
    return harness::load_solution(p).ternary;
  });

  // chip
  py::class_<chip::NoiseConfig>(m, "NoiseConfig")
      .def(py::init<>())
      .def_static("ideal", &chip::NoiseConfig::ideal, py::arg("seed") = 0)
      .def_static("defaults", &chip::NoiseConfig::defaults, py::arg("seed") = 0)
      .def_static("hardware_like", &chip::NoiseConfig::hardware_like, py::arg("seed") = 0)
      .def_readwrite("prog_sigma", &chip::NoiseConfig::prog_sigma)
      .def_readwrite("read_current_sigma", &chip::NoiseConfig::read_current_sigma)
      .def_readwrite("adc_bits", &chip::NoiseConfig::adc_bits)
      .def_readwrite("adc_fullscale", &chip::NoiseConfig::adc_fullscale)
      .def_readwrite("dac_bits", &chip::NoiseConfig::dac_bits)
      .def_readwrite("seed", &chip::NoiseConfig::seed);

  py::class_<chip::SimChip>(m, "SimChip")
      .def(py::init([](const chip::NoiseConfig& n, bool ideal) { return chip::SimChip(n, ideal); }),
           py::arg("noise") = chip::NoiseConfig::defaults(), py::arg("ideal") = false)
      .def("inject_faults", [](chip::SimChip& c, double rate, const std::string& mode,
                               std::uint64_t seed) {
        return c.inject_faults(rate, chip::parse_fault(mode), seed).count();
      }, py::arg("rate"), py::arg("mode") = "StuckHigh", py::arg("seed") = 0)
      .def("fault_count", [](const chip::SimChip& c) { return c.faults().count(); })
      .def("conductance", [](const chip::SimChip& c, std::size_t k, std::size_t r, std::size_t col) {
        return c.conductance({k, r, col});
      })
      .def("program_device", [](chip::SimChip& c, std::size_t k, std::size_t r, std::size_t col,
                                double target, double theta) {
        auto res = c.program_device({k, r, col}, target, theta);
        return py::make_tuple(res.success, res.iterations, res.final_read);
      }, py::arg("kernel"), py::arg("row"), py::arg("col"), py::arg("target"),
         py::arg("theta") = chip::kDefaultTheta)
      .def("kernel_vmm", [](chip::SimChip& c, std::size_t k, std::vector<double> v) {
        return c.kernel_vmm(k, v);
      })
      .def("save", py::overload_cast<const std::string&>(&chip::SimChip::save, py::const_))
      .def_static("load", py::overload_cast<const std::string&>(&chip::SimChip::load));

  // ensemble
  py::class_<ensemble::EnsembleNetwork>(m, "EnsembleNetwork")
      .def("all_successful", &ensemble::EnsembleNetwork::all_successful)
      .def("set_g_norm", &ensemble::EnsembleNetwork::set_g_norm)
      .def_property_readonly("alpha", [](const ensemble::EnsembleNetwork& n) {
        return ensemble::ensemble_stats(n.mappings).alpha;
      })
      .def_property_readonly("devices", [](const ensemble::EnsembleNetwork& n) {
        return ensemble::ensemble_stats(n.mappings).total_devices;
      })
      .def_property_readonly("g_diff", [](const ensemble::EnsembleNetwork& n) {
        std::vector<double> out;
        for (const auto& c : n.calibration) out.push_back(c.g_diff_mean);
        return out;
      });
  m.def("deploy", [](chip::SimChip& c, const nn::TernarySolution& s, std::size_t beta,
                     double theta, double g_norm) {
    return ensemble::deploy(c, s, beta, theta, g_norm);
  }, py::arg("chip"), py::arg("solution"), py::arg("beta") = 1,
     py::arg("theta") = chip::kDefaultTheta, py::arg("g_norm") = 1.0);
  m.def("ensemble_forward", [](chip::SimChip& c, const ensemble::EnsembleNetwork& n,
                               std::vector<double> f, bool allow_degraded) {
    return ensemble::ensemble_forward(c, n, f, allow_degraded).probabilities;
  }, py::arg("chip"), py::arg("net"), py::arg("features"), py::arg("allow_degraded") = false);
  m.def("evaluate_ensemble", [](chip::SimChip& c, const ensemble::EnsembleNetwork& n,
                                const taskgen::MultiTaskDataset& d, bool allow_degraded) {
    auto a = harness::evaluate_ensemble(c, n, d, allow_degraded);
    return py::make_tuple(a.task1, a.task2);
  }, py::arg("chip"), py::arg("net"), py::arg("data"), py::arg("allow_degraded") = false);
}
