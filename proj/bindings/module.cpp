#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgfd/common.hpp"
#include "dgfd/mldg.hpp"
#include "dgfd/models.hpp"
#include "dgfd/rvfl.hpp"
#include "dgfd/signal.hpp"
#include "dgfd/sim.hpp"
#include "dgfd/stream.hpp"

namespace py = pybind11;
using namespace dgfd;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& a) {
    std::vector<size_t> shape(static_cast<size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = static_cast<size_t>(a.shape(i));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.ndim());
    for (size_t i = 0; i < t.ndim(); ++i) shape[i] = static_cast<py::ssize_t>(t.extent(i));
    py::array_t<double> a(shape);
    std::memcpy(a.mutable_data(), t.data(), t.size() * sizeof(double));
    return a;
}

Standardizer make_stats(const DoubleArray& mean, const DoubleArray& std_dev) {
    Standardizer s;
    s.mean.assign(mean.data(), mean.data() + mean.size());
    s.std_dev.assign(std_dev.data(), std_dev.data() + std_dev.size());
    return s;
}

/// Thin owning wrappers so checkpoints round-trip through python naturally.
struct PyModel {
    DgeModel m;
};

struct PyRvfl {
    RvflModel m;
};

py::array_t<double> to_array_1d(const std::vector<double>& v) {
    py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
    std::memcpy(a.mutable_data(), v.data(), v.size() * sizeof(double));
    return a;
}

py::dict series_dict(const CumAccuracySeries& s) {
    py::dict d;
    d["values"] = to_array_1d(s.values);
    d["final"] = s.final_value;
    d["per_segment"] = s.per_segment;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "gearbox fault-diagnosis core: signal synthesis, windowing, the "
              "domain-generalized encoder, RVFL solvers and stream replay";
    m.attr("__version__") = "0.1.0";

    m.def("derive_seed", [](uint64_t root, const std::string& label) { return derive_seed(root, label); },
          py::arg("root"), py::arg("label"), "Stable child seed for a named subtask.");

    m.def(
        "synth",
        [](double speed_rpm, double torque_nm, const std::string& fault, double duration_s, uint64_t seed,
           double noise_std, int teeth_count, double base_amplitude, double wear_harmonic_gain,
           double break_impulse_amplitude, double crack_modulation_depth) {
            SimConfig cfg;
            cfg.seed = seed;
            cfg.noise_std = noise_std;
            cfg.teeth_count = teeth_count;
            cfg.base_amplitude = base_amplitude;
            cfg.wear_harmonic_gain = wear_harmonic_gain;
            cfg.break_impulse_amplitude = break_impulse_amplitude;
            cfg.crack_modulation_depth = crack_modulation_depth;
            MultichannelSignal sig =
                synth_signal({speed_rpm, torque_nm}, fault_from_name(fault), duration_s, cfg);
            return to_array(sig.samples);
        },
        py::arg("speed_rpm"), py::arg("torque_nm"), py::arg("fault") = "healthy",
        py::arg("duration_s") = 1.0, py::arg("seed") = 1, py::arg("noise_std") = 0.3,
        py::arg("teeth_count") = 24, py::arg("base_amplitude") = 1.0, py::arg("wear_harmonic_gain") = 1.5,
        py::arg("break_impulse_amplitude") = 3.0, py::arg("crack_modulation_depth") = 0.5,
        "Six-channel vibration signal at 12.8 kHz as a [6, L] array.");

    m.attr("SAMPLE_RATE_HZ") = kMcc5SampleRateHz;
    m.attr("FAULTS") = py::make_tuple("healthy", "wear", "break", "crack");

    m.def("window_count",
          [](size_t length, size_t window, size_t stride) { return window_count(length, window, stride); },
          py::arg("length"), py::arg("window"), py::arg("stride"));

    m.def(
        "segment",
        [](const DoubleArray& x, size_t window, size_t stride) {
            if (x.ndim() != 2) throw std::invalid_argument("segment: want a [channels, length] array");
            MultichannelSignal sig;
            sig.sample_rate_hz = kMcc5SampleRateHz;
            sig.samples = to_tensor(x);
            return to_array(segment(sig, window, stride));
        },
        py::arg("signal"), py::arg("window"), py::arg("stride"),
        "Cut [C, L] into windows [n, C, window] at the given stride.");

    m.def(
        "load_mcc5_csv",
        [](const std::string& path, bool vibration_only) {
            return to_array(load_mcc5_csv(path, vibration_only).samples);
        },
        py::arg("path"), py::arg("vibration_only") = true,
        "Read an 8-column rig CSV; by default keep the six vibration channels.");

    m.def(
        "fit_standardizer",
        [](const DoubleArray& windows) {
            WindowedDataset ds;
            ds.windows = to_tensor(windows);
            Standardizer s = fit_standardizer(ds);
            return py::make_tuple(to_array_1d(s.mean), to_array_1d(s.std_dev));
        },
        py::arg("windows"), "Per-channel (mean, std) over [n, C, W] training windows.");

    m.def(
        "standardize",
        [](const DoubleArray& windows, const DoubleArray& mean, const DoubleArray& std_dev) {
            return to_array(apply_standardizer(make_stats(mean, std_dev), to_tensor(windows)));
        },
        py::arg("windows"), py::arg("mean"), py::arg("std"));

    m.def(
        "cross_entropy",
        [](const DoubleArray& logits, const std::vector<int>& labels) {
            return cross_entropy(to_tensor(logits), labels);
        },
        py::arg("logits"), py::arg("labels"), "Mean cross-entropy of [B, T] logits.");

    m.def(
        "cumulative_accuracy",
        [](const std::vector<int>& pred, const std::vector<int>& truth) {
            return series_dict(cumulative_accuracy(pred, truth));
        },
        py::arg("pred"), py::arg("truth"));

    py::class_<PyModel>(m, "Model", "Multi-scale encoder plus MLP head over standardized windows.")
        .def_property_readonly("feature_dim", [](const PyModel& s) { return s.m.cfg.feature_dim; })
        .def_property_readonly("num_classes", [](const PyModel& s) { return s.m.cfg.num_classes; })
        .def("features",
             [](const PyModel& s, const DoubleArray& x) { return to_array(model_features(s.m, to_tensor(x))); },
             py::arg("windows"), "Encoder output [B, feature_dim] for [B, C, W] windows.")
        .def("logits",
             [](const PyModel& s, const DoubleArray& x) { return to_array(model_logits(s.m, to_tensor(x))); },
             py::arg("windows"))
        .def("predict",
             [](const PyModel& s, const DoubleArray& x) {
                 Tensor y = model_logits(s.m, to_tensor(x));
                 std::vector<int> out(y.extent(0));
                 for (size_t i = 0; i < y.extent(0); ++i) {
                     size_t best = 0;
                     for (size_t j = 1; j < y.extent(1); ++j)
                         if (y(i, j) > y(i, best)) best = j;
                     out[i] = static_cast<int>(best);
                 }
                 return out;
             },
             py::arg("windows"), "Argmax class per window; ties go to the lowest index.")
        .def("save", [](const PyModel& s, const std::string& stem) { save_model(s.m, stem); }, py::arg("stem"))
        .def_static("load", [](const std::string& stem) { return PyModel{load_model(stem)}; }, py::arg("stem"));

    m.def(
        "train_dge",
        [](const DoubleArray& windows, const std::vector<int>& class_labels,
           const std::vector<int>& domain_labels, int epochs, int batch_size, double alpha, double eta,
           double gamma_max, double rho, const std::string& meta_mode, double hvp_step, uint64_t seed,
           const std::vector<int>& kernel_sizes, int branch_channels, int pool, int feature_dim,
           int head_hidden, int num_classes) {
            WindowedDataset ds;
            ds.windows = to_tensor(windows);
            if (ds.windows.ndim() != 3) throw std::invalid_argument("train_dge: want [n, C, W] windows");
            ds.class_labels = class_labels;
            ds.domain_labels = domain_labels;
            ds.window_length = ds.windows.extent(2);

            ModelConfig mcfg;
            mcfg.kernel_sizes = kernel_sizes;
            mcfg.branch_channels = branch_channels;
            mcfg.pool = pool;
            mcfg.in_channels = static_cast<int>(ds.windows.extent(1));
            mcfg.feature_dim = feature_dim;
            mcfg.head_hidden = head_hidden;
            mcfg.num_classes = num_classes;

            TrainConfig tcfg;
            tcfg.epochs = epochs;
            tcfg.batch_size = batch_size;
            tcfg.alpha = alpha;
            tcfg.eta = eta;
            tcfg.gamma_max = gamma_max;
            tcfg.rho = rho;
            tcfg.mode = meta_mode_from_name(meta_mode);
            tcfg.hvp_step = hvp_step;
            tcfg.seed = seed;

            TrainResult r = train(ds, mcfg, tcfg);
            py::list hist;
            for (const EpochStats& e : r.history) {
                py::dict d;
                d["epoch"] = e.epoch;
                d["loss_mtrain"] = e.loss_mtrain;
                d["loss_mtest"] = e.loss_mtest;
                d["gamma"] = e.gamma;
                hist.append(d);
            }
            return py::make_tuple(PyModel{std::move(r.model)}, hist);
        },
        py::arg("windows"), py::arg("class_labels"), py::arg("domain_labels"), py::kw_only(),
        py::arg("epochs") = 10, py::arg("batch_size") = 64, py::arg("alpha") = 0.005, py::arg("eta") = 0.01,
        py::arg("gamma_max") = 1.0, py::arg("rho") = 0.95, py::arg("meta_mode") = "first-order",
        py::arg("hvp_step") = 1e-4, py::arg("seed") = 0, py::arg("kernel_sizes") = std::vector<int>{7, 31, 127},
        py::arg("branch_channels") = 16, py::arg("pool") = 4, py::arg("feature_dim") = 64,
        py::arg("head_hidden") = 32, py::arg("num_classes") = 4,
        "Meta-learning domain-generalized training; returns (Model, history).");

    py::class_<PyRvfl>(m, "Rvfl", "Random-feature classifier with a closed-form ridge readout.")
        .def_property_readonly("input_dim", [](const PyRvfl& s) { return s.m.input_dim(); })
        .def_property_readonly("hidden_dim", [](const PyRvfl& s) { return s.m.hidden_dim(); })
        .def_property_readonly("num_classes", [](const PyRvfl& s) { return s.m.num_classes(); })
        .def_property_readonly("sigma", [](const PyRvfl& s) { return s.m.sigma; })
        .def("scores",
             [](const PyRvfl& s, const DoubleArray& Z) { return to_array(rvfl_scores(s.m, to_tensor(Z))); },
             py::arg("Z"))
        .def("predict",
             [](const PyRvfl& s, const DoubleArray& Z) { return rvfl_predict(s.m, to_tensor(Z)); },
             py::arg("Z"))
        .def("save", [](const PyRvfl& s, const std::string& stem) { save_rvfl(s.m, stem); }, py::arg("stem"))
        .def_static("load", [](const std::string& stem) { return PyRvfl{load_rvfl(stem)}; }, py::arg("stem"));

    m.def(
        "rvfl_train",
        [](const DoubleArray& Z, const std::vector<int>& labels, int hidden, double sigma, uint64_t seed,
           int num_classes) {
            if (num_classes <= 0)
                for (int l : labels) num_classes = std::max(num_classes, l + 1);
            return PyRvfl{rvfl_train(make_features(to_tensor(Z), labels, num_classes), hidden, sigma, seed)};
        },
        py::arg("Z"), py::arg("labels"), py::kw_only(), py::arg("hidden") = 100, py::arg("sigma") = 1e-4,
        py::arg("seed") = 0, py::arg("num_classes") = 0,
        "Solve the output weights over [n, J] features; num_classes=0 infers from labels.");

    m.def(
        "run_stream",
        [](const std::string& kind, const std::string& fault, const DoubleArray& mean,
           const DoubleArray& std_dev, const std::string& pipeline, const PyModel* model, const PyRvfl* rvfl,
           uint64_t seed, size_t m1_windows, size_t m2_windows, size_t m1_return_windows, size_t onset,
           int transition_steps, size_t transition_windows, size_t window_length, size_t stride,
           double noise_std) {
            StreamConfig scfg;
            scfg.m1_windows = m1_windows;
            scfg.m2_windows = m2_windows;
            scfg.m1_return_windows = m1_return_windows;
            scfg.onset = onset;
            scfg.transition_steps = transition_steps;
            scfg.transition_windows = transition_windows;
            scfg.window_length = window_length;
            scfg.stride = stride;
            SimConfig sim;
            sim.noise_std = noise_std;
            StreamScenario sc = build_scenario(stream_kind_from_name(kind), fault_from_name(fault), scfg);
            Pipeline p;
            p.kind = pipeline_from_name(pipeline);
            p.model = model ? &model->m : nullptr;
            p.rvfl = rvfl ? &rvfl->m : nullptr;
            CumAccuracySeries s = run_stream(p, sc, make_stats(mean, std_dev), sim, scfg, seed);
            py::dict d = series_dict(s);
            d["fault_onset_index"] = sc.fault_onset_index;
            d["total_windows"] = sc.total_windows();
            return d;
        },
        py::arg("kind"), py::arg("fault"), py::arg("mean"), py::arg("std"), py::kw_only(),
        py::arg("pipeline") = "e2e", py::arg("model") = nullptr, py::arg("rvfl") = nullptr, py::arg("seed") = 1,
        py::arg("m1_windows") = 6000, py::arg("m2_windows") = 10000, py::arg("m1_return_windows") = 6000,
        py::arg("onset") = 4984, py::arg("transition_steps") = 0, py::arg("transition_windows") = 0,
        py::arg("window_length") = 1024, py::arg("stride") = 64, py::arg("noise_std") = 0.3,
        "Replay a condition-switching stream and return the cumulative-accuracy series.");
}
