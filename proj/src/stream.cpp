#include "dgfd/stream.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "dgfd/common.hpp"

namespace dgfd {

namespace {

constexpr size_t kReplayChunk = 128;  // windows per forward pass during replay

std::vector<int> argmax_rows(const Tensor& scores) {
    std::vector<int> out(scores.extent(0));
    for (size_t r = 0; r < scores.extent(0); ++r) {
        size_t best = 0;
        for (size_t c = 1; c < scores.extent(1); ++c)
            if (scores(r, c) > scores(r, best)) best = c;
        out[r] = static_cast<int>(best);
    }
    return out;
}

Tensor flatten_windows(const Tensor& x) {
    return Tensor({x.extent(0), x.extent(1) * x.extent(2)}, x.values());
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

const char* stream_kind_name(StreamKind k) {
    return k == StreamKind::VariableSpeed ? "variable-speed" : "variable-torque";
}

StreamKind stream_kind_from_name(const std::string& name) {
    if (name == "variable-speed") return StreamKind::VariableSpeed;
    if (name == "variable-torque") return StreamKind::VariableTorque;
    fail(cat("unknown scenario '", name, "', want variable-speed or variable-torque"));
}

const char* pipeline_name(PipelineKind k) {
    switch (k) {
        case PipelineKind::EndToEnd: return "e2e";
        case PipelineKind::TwoStage: return "two-stage";
        default: return "raw-rvfl";
    }
}

PipelineKind pipeline_from_name(const std::string& name) {
    if (name == "e2e") return PipelineKind::EndToEnd;
    if (name == "two-stage") return PipelineKind::TwoStage;
    if (name == "raw-rvfl") return PipelineKind::RawRvfl;
    fail(cat("unknown pipeline '", name, "', want e2e, two-stage or raw-rvfl"));
}

size_t StreamScenario::total_windows() const {
    size_t n = 0;
    for (const auto& s : segments) n += s.length;
    return n;
}

void validate(const StreamConfig& cfg) {
    check(cfg.m1_windows >= 1 && cfg.m2_windows >= 1 && cfg.m1_return_windows >= 1,
          "stream config: segment lengths must be >= 1");
    check(cfg.onset >= 1 && cfg.onset < cfg.m2_windows,
          cat("stream config: onset ", cfg.onset, " must fall inside the M2 stretch of ", cfg.m2_windows,
              " windows"));
    check(cfg.transition_steps >= 0, "stream config: transition_steps must be >= 0");
    check(cfg.transition_steps == 0 || cfg.transition_windows >= 1,
          "stream config: transition_windows must be >= 1 when transitions are enabled");
    check(cfg.window_length >= 1 && cfg.stride >= 1, "stream config: window and stride must be >= 1");
}

void to_json(nlohmann::json& j, const StreamConfig& cfg) {
    j = nlohmann::json{{"m1_windows", cfg.m1_windows},
                       {"m2_windows", cfg.m2_windows},
                       {"m1_return_windows", cfg.m1_return_windows},
                       {"onset", cfg.onset},
                       {"transition_steps", cfg.transition_steps},
                       {"transition_windows", cfg.transition_windows},
                       {"window_length", cfg.window_length},
                       {"stride", cfg.stride}};
}

void from_json(const nlohmann::json& j, StreamConfig& cfg) {
    cfg.m1_windows = j.value("m1_windows", cfg.m1_windows);
    cfg.m2_windows = j.value("m2_windows", cfg.m2_windows);
    cfg.m1_return_windows = j.value("m1_return_windows", cfg.m1_return_windows);
    cfg.onset = j.value("onset", cfg.onset);
    cfg.transition_steps = j.value("transition_steps", cfg.transition_steps);
    cfg.transition_windows = j.value("transition_windows", cfg.transition_windows);
    cfg.window_length = j.value("window_length", cfg.window_length);
    cfg.stride = j.value("stride", cfg.stride);
}

StreamScenario build_scenario(StreamKind kind, FaultClass fault, const StreamConfig& cfg) {
    validate(cfg);
    check(fault != FaultClass::Healthy, "build_scenario: the introduced fault cannot be Healthy");

    ConditionSpec m1, m2;
    if (kind == StreamKind::VariableSpeed) {
        m1 = {2000.0, 20.0};
        m2 = {1500.0, 20.0};
    } else {
        m1 = {1000.0, 20.0};
        m2 = {1000.0, 15.0};
    }

    StreamScenario sc;
    sc.kind = kind;
    sc.fault = fault;
    sc.segments.push_back({m1, FaultClass::Healthy, cfg.m1_windows});

    auto lerp = [&](double t) {
        return ConditionSpec{m1.speed_rpm + t * (m2.speed_rpm - m1.speed_rpm),
                             m1.torque_nm + t * (m2.torque_nm - m1.torque_nm)};
    };
    int K = cfg.transition_steps;
    for (int i = 1; i <= K; ++i)  // ramp toward M2, still healthy
        sc.segments.push_back({lerp(static_cast<double>(i) / (K + 1)), FaultClass::Healthy,
                               cfg.transition_windows});

    sc.fault_onset_index = cfg.m1_windows + static_cast<size_t>(K) * cfg.transition_windows + cfg.onset;
    sc.segments.push_back({m2, FaultClass::Healthy, cfg.onset});
    sc.segments.push_back({m2, fault, cfg.m2_windows - cfg.onset});

    for (int i = K; i >= 1; --i)  // ramp back; the fault does not heal
        sc.segments.push_back({lerp(static_cast<double>(i) / (K + 1)), fault, cfg.transition_windows});
    sc.segments.push_back({m1, fault, cfg.m1_return_windows});
    return sc;
}

std::vector<int> scenario_truth(const StreamScenario& sc) {
    std::vector<int> truth(sc.total_windows(), static_cast<int>(FaultClass::Healthy));
    for (size_t i = sc.fault_onset_index; i < truth.size(); ++i) truth[i] = static_cast<int>(sc.fault);
    return truth;
}

void for_each_stream_chunk(const StreamScenario& sc, const SimConfig& sim, const StreamConfig& cfg,
                           uint64_t seed, size_t chunk_windows,
                           const std::function<void(const Tensor&, size_t)>& fn) {
    check(chunk_windows >= 1, "for_each_stream_chunk: chunk must be >= 1");
    const size_t W = cfg.window_length, stride = cfg.stride;
    size_t base = 0;
    for (size_t si = 0; si < sc.segments.size(); ++si) {
        const StreamSegment& seg = sc.segments[si];
        SimConfig seg_sim = sim;
        seg_sim.seed = derive_seed(seed, cat("stream.seg", si));
        const size_t samples = (seg.length - 1) * stride + W;
        MultichannelSignal sig =
            synth_signal(seg.condition, seg.fault, static_cast<double>(samples) / kMcc5SampleRateHz, seg_sim);
        const size_t C = sig.samples.extent(0), L = sig.samples.extent(1);
        check(L >= samples, cat("for_each_stream_chunk: segment signal too short, ", L, " < ", samples));
        for (size_t c0 = 0; c0 < seg.length; c0 += chunk_windows) {
            const size_t b = std::min(chunk_windows, seg.length - c0);
            Tensor out({b, C, W});
            for (size_t w = 0; w < b; ++w)
                for (size_t ch = 0; ch < C; ++ch)
                    std::memcpy(&out(w, ch, 0), sig.samples.data() + ch * L + (c0 + w) * stride,
                                W * sizeof(double));
            fn(out, base + c0);
        }
        base += seg.length;
    }
}

CumAccuracySeries cumulative_accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                                      const std::vector<size_t>& segment_lengths) {
    check(pred.size() == truth.size(),
          cat("cumulative_accuracy: ", pred.size(), " predictions vs ", truth.size(), " labels"));
    CumAccuracySeries s;
    s.values.reserve(pred.size());
    size_t correct = 0;
    for (size_t t = 0; t < pred.size(); ++t) {
        correct += pred[t] == truth[t];
        s.values.push_back(static_cast<double>(correct) / static_cast<double>(t + 1));
    }
    s.final_value = s.values.empty() ? 0.0 : s.values.back();

    if (!segment_lengths.empty()) {
        size_t total = 0;
        for (size_t len : segment_lengths) total += len;
        check(total == pred.size(), cat("cumulative_accuracy: segment lengths sum to ", total, ", stream has ",
                                        pred.size(), " windows"));
        size_t at = 0;
        for (size_t len : segment_lengths) {
            size_t hits = 0;
            for (size_t t = at; t < at + len; ++t) hits += pred[t] == truth[t];
            s.per_segment.push_back(len ? static_cast<double>(hits) / static_cast<double>(len) : 0.0);
            at += len;
        }
    }
    return s;
}

void write_series_csv(const CumAccuracySeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(cat("cannot write ", path));
    out << "index,cumulative_accuracy\n";
    char buf[64];
    for (size_t i = 0; i < series.values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, series.values[i]);
        out << buf;
    }
}

void validate(const Pipeline& p) {
    switch (p.kind) {
        case PipelineKind::EndToEnd:
            check(p.model != nullptr, "pipeline e2e: missing trained model");
            break;
        case PipelineKind::TwoStage:
            check(p.model != nullptr && p.rvfl != nullptr, "pipeline two-stage: missing encoder or classifier");
            break;
        case PipelineKind::RawRvfl:
            check(p.rvfl != nullptr, "pipeline raw-rvfl: missing classifier");
            break;
    }
}

std::vector<int> pipeline_predict(const Pipeline& p, const Tensor& windows_std) {
    validate(p);
    check(windows_std.ndim() == 3,
          cat("pipeline_predict: want [B,C,W], got ", shape_str(windows_std.shape())));
    switch (p.kind) {
        case PipelineKind::EndToEnd: return argmax_rows(model_logits(*p.model, windows_std));
        case PipelineKind::TwoStage: return rvfl_predict(*p.rvfl, model_features(*p.model, windows_std));
        default: return rvfl_predict(*p.rvfl, flatten_windows(windows_std));
    }
}

CumAccuracySeries run_stream(const Pipeline& p, const StreamScenario& sc, const Standardizer& stats,
                             const SimConfig& sim, const StreamConfig& cfg, uint64_t seed) {
    validate(p);
    std::vector<int> pred;
    pred.reserve(sc.total_windows());
    for_each_stream_chunk(sc, sim, cfg, seed, kReplayChunk, [&](const Tensor& x, size_t) {
        std::vector<int> part = pipeline_predict(p, apply_standardizer(stats, x));
        pred.insert(pred.end(), part.begin(), part.end());
    });
    std::vector<size_t> lens;
    for (const auto& seg : sc.segments) lens.push_back(seg.length);
    return cumulative_accuracy(pred, scenario_truth(sc), lens);
}

std::vector<CompareRow> compare_pipelines(const std::vector<Pipeline>& pipelines,
                                          const std::vector<StreamKind>& scenarios,
                                          const std::vector<FaultClass>& faults,
                                          const std::vector<uint64_t>& seeds,
                                          const Standardizer& stats, const SimConfig& sim,
                                          const StreamConfig& cfg) {
    check(!pipelines.empty() && !scenarios.empty() && !faults.empty(), "compare_pipelines: empty axis");
    check(!seeds.empty(), "compare_pipelines: need at least one seed");
    for (const Pipeline& p : pipelines) validate(p);

    // finals[pipeline][scenario][fault] -> per-seed final accuracy
    std::map<std::tuple<size_t, size_t, size_t>, std::vector<double>> finals;
    for (size_t si = 0; si < scenarios.size(); ++si)
        for (size_t fi = 0; fi < faults.size(); ++fi) {
            StreamScenario sc = build_scenario(scenarios[si], faults[fi], cfg);
            std::vector<int> truth = scenario_truth(sc);
            for (uint64_t seed : seeds) {
                uint64_t stream_seed = derive_seed(
                    seed, cat("stream.", stream_kind_name(scenarios[si]), ".", fault_name(faults[fi])));
                std::vector<size_t> correct(pipelines.size(), 0);
                for_each_stream_chunk(sc, sim, cfg, stream_seed, kReplayChunk,
                                      [&](const Tensor& x, size_t at) {
                    Tensor xs = apply_standardizer(stats, x);
                    // encoder features are shared between pipelines using the same model
                    std::map<const DgeModel*, Tensor> feat;
                    for (size_t pi = 0; pi < pipelines.size(); ++pi) {
                        const Pipeline& p = pipelines[pi];
                        std::vector<int> part;
                        if (p.kind == PipelineKind::RawRvfl) {
                            part = rvfl_predict(*p.rvfl, flatten_windows(xs));
                        } else {
                            auto it = feat.find(p.model);
                            if (it == feat.end())
                                it = feat.emplace(p.model, model_features(*p.model, xs)).first;
                            if (p.kind == PipelineKind::TwoStage) {
                                part = rvfl_predict(*p.rvfl, it->second);
                            } else {
                                HeadParams head = head_slice(p.model->theta);
                                part = argmax_rows(head_forward(p.model->cfg, head, it->second));
                            }
                        }
                        for (size_t t = 0; t < part.size(); ++t)
                            correct[pi] += part[t] == truth[at + t];
                    }
                });
                for (size_t pi = 0; pi < pipelines.size(); ++pi)
                    finals[{pi, si, fi}].push_back(static_cast<double>(correct[pi]) /
                                                   static_cast<double>(truth.size()));
            }
        }

    std::vector<CompareRow> rows;
    for (size_t pi = 0; pi < pipelines.size(); ++pi)
        for (size_t si = 0; si < scenarios.size(); ++si)
            for (size_t fi = 0; fi < faults.size(); ++fi) {
                const std::vector<double>& cell = finals[{pi, si, fi}];
                double med = median(cell);
                for (size_t k = 0; k < seeds.size(); ++k)
                    rows.push_back({pipelines[pi].kind, scenarios[si], faults[fi], seeds[k], cell[k], med});
            }
    return rows;
}

void write_compare_csv(const std::vector<CompareRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(cat("cannot write ", path));
    out << "pipeline,scenario,fault,seed,final_accuracy,cell_median\n";
    char buf[160];
    for (const CompareRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%s,%llu,%.17g,%.17g\n", pipeline_name(r.pipeline),
                      stream_kind_name(r.scenario), fault_name(r.fault),
                      static_cast<unsigned long long>(r.seed), r.final_accuracy, r.cell_median);
        out << buf;
    }
}

void export_features(const DgeModel& m, const WindowedDataset& data, const Standardizer& stats,
                     const std::string& path) {
    check(data.windows.ndim() == 3, "export_features: want a windowed dataset");
    std::ofstream out(path);
    if (!out) fail(cat("cannot write ", path));
    for (size_t f = 0; f < m.cfg.feature_dim; ++f) out << 'f' << f << ',';
    out << "class,domain\n";

    const size_t n = data.n(), C = data.channels(), W = data.window_length;
    const size_t row = C * W;
    char buf[32];
    for (size_t i0 = 0; i0 < n; i0 += kReplayChunk) {
        const size_t b = std::min(kReplayChunk, n - i0);
        Tensor chunk({b, C, W});
        std::memcpy(chunk.data(), data.windows.data() + i0 * row, b * row * sizeof(double));
        Tensor z = model_features(m, apply_standardizer(stats, chunk));
        for (size_t r = 0; r < b; ++r) {
            for (size_t f = 0; f < z.extent(1); ++f) {
                std::snprintf(buf, sizeof buf, "%.17g,", z(r, f));
                out << buf;
            }
            out << data.class_labels[i0 + r] << ',' << data.domain_labels[i0 + r] << '\n';
        }
    }
}

}  // namespace dgfd
