#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dgfd/models.hpp"
#include "dgfd/rvfl.hpp"
#include "dgfd/signal.hpp"
#include "dgfd/sim.hpp"
#include "json.hpp"

namespace dgfd {

enum class StreamKind { VariableSpeed, VariableTorque };

const char* stream_kind_name(StreamKind k);  // "variable-speed" | "variable-torque"
StreamKind stream_kind_from_name(const std::string& name);

/// One homogeneous stretch of the stream: fixed operating condition and class.
struct StreamSegment {
    ConditionSpec condition;
    FaultClass fault = FaultClass::Healthy;
    size_t length = 0;  // windows
};

/// M1 -> M2 -> M1 replay with a fault introduced mid-M2. Condition
/// transitions may pass through interpolated intermediate segments.
struct StreamScenario {
    StreamKind kind = StreamKind::VariableSpeed;
    FaultClass fault = FaultClass::Healthy;
    std::vector<StreamSegment> segments;
    size_t fault_onset_index = 0;  // global window index of the first faulty window

    size_t total_windows() const;
};

struct StreamConfig {
    size_t m1_windows = 6000;
    size_t m2_windows = 10000;
    size_t m1_return_windows = 6000;
    size_t onset = 4984;            // windows into the M2 stretch
    int transition_steps = 0;       // interpolated conditions at each boundary
    size_t transition_windows = 0;  // windows per interpolated condition
    size_t window_length = 1024;
    size_t stride = 64;
};

void validate(const StreamConfig& cfg);
void to_json(nlohmann::json& j, const StreamConfig& cfg);
void from_json(const nlohmann::json& j, StreamConfig& cfg);

/// variable-speed: M1=(2000rpm,20Nm) -> M2=(1500rpm,20Nm);
/// variable-torque: M1=(1000rpm,20Nm) -> M2=(1000rpm,15Nm).
/// Healthy up to the onset window, then `fault` for the rest of the stream.
StreamScenario build_scenario(StreamKind kind, FaultClass fault, const StreamConfig& cfg);

/// Ground-truth class per window: Healthy before the onset index, the
/// scenario fault from it onward.
std::vector<int> scenario_truth(const StreamScenario& sc);

/// Synthesizes the stream and hands it over in chunks of at most
/// `chunk_windows` raw (unstandardized) windows: fn(windows [b,C,W],
/// first_global_index). Keeps memory bounded for long streams.
void for_each_stream_chunk(const StreamScenario& sc, const SimConfig& sim, const StreamConfig& cfg,
                           uint64_t seed, size_t chunk_windows,
                           const std::function<void(const Tensor&, size_t)>& fn);

struct CumAccuracySeries {
    std::vector<double> values;        // values[t] = correct among first t+1, over t+1
    double final_value = 0.0;
    std::vector<double> per_segment;   // plain (non-cumulative) accuracy inside each segment
};

/// Pass segment lengths to get the per-segment breakdown; they must sum to
/// the stream length.
CumAccuracySeries cumulative_accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                                      const std::vector<size_t>& segment_lengths = {});

void write_series_csv(const CumAccuracySeries& series, const std::string& path);

enum class PipelineKind { EndToEnd, TwoStage, RawRvfl };

const char* pipeline_name(PipelineKind k);  // "e2e" | "two-stage" | "raw-rvfl"
PipelineKind pipeline_from_name(const std::string& name);

/// A trained classifier over standardized windows. e2e: encoder + MLP head;
/// two-stage: encoder + RVFL on features; raw-rvfl: RVFL on flattened windows.
struct Pipeline {
    PipelineKind kind = PipelineKind::EndToEnd;
    const DgeModel* model = nullptr;  // e2e, two-stage
    const RvflModel* rvfl = nullptr;  // two-stage, raw-rvfl
};

void validate(const Pipeline& p);

/// Class per window of a standardized batch [B,C,W].
std::vector<int> pipeline_predict(const Pipeline& p, const Tensor& windows_std);

/// Replays the scenario (windows standardized with the offline stats), never
/// adapting the model, and accumulates the accuracy curve.
CumAccuracySeries run_stream(const Pipeline& p, const StreamScenario& sc, const Standardizer& stats,
                             const SimConfig& sim, const StreamConfig& cfg, uint64_t seed);

struct CompareRow {
    PipelineKind pipeline = PipelineKind::EndToEnd;
    StreamKind scenario = StreamKind::VariableSpeed;
    FaultClass fault = FaultClass::Healthy;
    uint64_t seed = 0;
    double final_accuracy = 0.0;
    double cell_median = 0.0;  // median of final_accuracy over seeds in this cell
};

/// Full cross of pipelines x scenarios x faults x seeds. Streams are shared
/// across pipelines within a cell, and encoder features are computed once.
std::vector<CompareRow> compare_pipelines(const std::vector<Pipeline>& pipelines,
                                          const std::vector<StreamKind>& scenarios,
                                          const std::vector<FaultClass>& faults,
                                          const std::vector<uint64_t>& seeds,
                                          const Standardizer& stats, const SimConfig& sim,
                                          const StreamConfig& cfg);

void write_compare_csv(const std::vector<CompareRow>& rows, const std::string& path);

/// CSV of encoder features: f0..f63,class,domain; one row per window.
void export_features(const DgeModel& m, const WindowedDataset& data, const Standardizer& stats,
                     const std::string& path);

}  // namespace dgfd
