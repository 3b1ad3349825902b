#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "dgfd/common.hpp"
#include "dgfd/stream.hpp"

using namespace dgfd;

namespace {

// short stream over short windows so replay stays cheap
StreamConfig tiny_stream() {
    StreamConfig cfg;
    cfg.m1_windows = 5;
    cfg.m2_windows = 7;
    cfg.m1_return_windows = 4;
    cfg.onset = 3;
    cfg.window_length = 64;
    cfg.stride = 32;
    return cfg;
}

ModelConfig tiny_model_cfg() {
    ModelConfig cfg;
    cfg.kernel_sizes = {3, 7};
    cfg.branch_channels = 2;
    cfg.pool = 2;
    cfg.in_channels = 6;
    cfg.feature_dim = 8;
    cfg.head_hidden = 5;
    cfg.num_classes = 4;
    return cfg;
}

DgeModel tiny_model(uint64_t seed = 3) {
    DgeModel m;
    m.cfg = tiny_model_cfg();
    auto [enc, head] = init_params(m.cfg, seed);
    m.theta = merge_theta(enc, head);
    return m;
}

Standardizer unit_stats(size_t channels) {
    Standardizer s;
    s.mean.assign(channels, 0.0);
    s.std_dev.assign(channels, 1.0);
    return s;
}

uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    return fnv1a64(bytes.data(), bytes.size());
}

std::filesystem::path scratch_dir() {
    auto dir = std::filesystem::temp_directory_path() / "dgfd-tests";
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_SUITE("stream") {

TEST_CASE("scenario conditions follow the two experiment designs") {
    StreamConfig cfg;  // defaults: 6000/10000/6000, onset 4984
    StreamScenario vs = build_scenario(StreamKind::VariableSpeed, FaultClass::TeethBreak, cfg);
    CHECK(vs.segments.size() == 4);
    CHECK(vs.segments[0].condition.speed_rpm == 2000.0);
    CHECK(vs.segments[0].condition.torque_nm == 20.0);
    CHECK(vs.segments[1].condition.speed_rpm == 1500.0);
    CHECK(vs.segments[1].condition.torque_nm == 20.0);
    CHECK(vs.segments[3].condition.speed_rpm == 2000.0);
    CHECK(vs.fault_onset_index == 6000 + 4984);
    // onset falls inside the M2 stretch
    CHECK(vs.fault_onset_index >= 6000);
    CHECK(vs.fault_onset_index < 6000 + 10000);
    CHECK(vs.total_windows() == 22000);

    StreamScenario vt = build_scenario(StreamKind::VariableTorque, FaultClass::GearWear, cfg);
    CHECK(vt.segments[0].condition.speed_rpm == 1000.0);
    CHECK(vt.segments[1].condition.speed_rpm == 1000.0);
    CHECK(vt.segments[0].condition.torque_nm == 20.0);
    CHECK(vt.segments[1].condition.torque_nm == 15.0);

    // the fault persists after the return to M1
    CHECK(vs.segments.back().fault == FaultClass::TeethBreak);
    CHECK(vt.segments.back().fault == FaultClass::GearWear);
    CHECK(vs.segments[0].fault == FaultClass::Healthy);
}

TEST_CASE("transition segments interpolate the conditions") {
    StreamConfig cfg = tiny_stream();
    cfg.transition_steps = 2;
    cfg.transition_windows = 3;
    StreamScenario sc = build_scenario(StreamKind::VariableSpeed, FaultClass::TeethCrack, cfg);
    REQUIRE(sc.segments.size() == 8);  // M1, 2 ramps, M2 pre+post onset, 2 ramps, M1

    // monotone speed ramp down then up, strictly between the endpoints
    CHECK(sc.segments[1].condition.speed_rpm > sc.segments[2].condition.speed_rpm);
    CHECK(sc.segments[1].condition.speed_rpm < 2000.0);
    CHECK(sc.segments[2].condition.speed_rpm > 1500.0);
    CHECK(sc.segments[5].condition.speed_rpm == sc.segments[2].condition.speed_rpm);
    CHECK(sc.segments[6].condition.speed_rpm == sc.segments[1].condition.speed_rpm);

    // ramps in are healthy, ramps out carry the fault
    CHECK(sc.segments[1].fault == FaultClass::Healthy);
    CHECK(sc.segments[2].fault == FaultClass::Healthy);
    CHECK(sc.segments[5].fault == FaultClass::TeethCrack);
    CHECK(sc.segments[6].fault == FaultClass::TeethCrack);

    CHECK(sc.fault_onset_index == 5 + 2 * 3 + 3);
    CHECK(sc.total_windows() == 5 + 3 + 3 + 7 + 3 + 3 + 4);
}

TEST_CASE("scenario validation") {
    StreamConfig cfg = tiny_stream();
    CHECK_THROWS_AS(build_scenario(StreamKind::VariableSpeed, FaultClass::Healthy, cfg),
                    std::invalid_argument);
    cfg.onset = cfg.m2_windows;  // outside M2
    CHECK_THROWS_AS(build_scenario(StreamKind::VariableSpeed, FaultClass::GearWear, cfg),
                    std::invalid_argument);
    cfg = tiny_stream();
    cfg.transition_steps = 1;  // enabled but zero-length
    CHECK_THROWS_AS(build_scenario(StreamKind::VariableSpeed, FaultClass::GearWear, cfg),
                    std::invalid_argument);
}

TEST_CASE("ground truth flips exactly at the onset") {
    StreamConfig cfg = tiny_stream();
    StreamScenario sc = build_scenario(StreamKind::VariableTorque, FaultClass::TeethBreak, cfg);
    std::vector<int> truth = scenario_truth(sc);
    REQUIRE(truth.size() == sc.total_windows());
    for (size_t i = 0; i < truth.size(); ++i) {
        if (i < sc.fault_onset_index)
            CHECK(truth[i] == static_cast<int>(FaultClass::Healthy));
        else
            CHECK(truth[i] == static_cast<int>(FaultClass::TeethBreak));
    }
}

TEST_CASE("cumulative accuracy definition") {
    std::vector<int> truth{1, 1, 1, 1};
    std::vector<int> pred{1, 0, 1, 1};  // hit, miss, hit, hit
    CumAccuracySeries s = cumulative_accuracy(pred, truth);
    REQUIRE(s.values.size() == 4);
    CHECK(std::abs(s.values[0] - 1.0) < 1e-9);
    CHECK(std::abs(s.values[1] - 0.5) < 1e-9);
    CHECK(std::abs(s.values[2] - 0.667) < 1e-3);
    CHECK(std::abs(s.values[2] - 2.0 / 3.0) < 1e-9);
    CHECK(std::abs(s.values[3] - 0.75) < 1e-9);
    CHECK(s.final_value == s.values.back());

    // steps between consecutive values stay within 1/t
    for (size_t t = 1; t < s.values.size(); ++t)
        CHECK(std::abs(s.values[t] - s.values[t - 1]) <= 1.0 / static_cast<double>(t + 1) + 1e-12);

    CumAccuracySeries seg = cumulative_accuracy(pred, truth, {2, 2});
    REQUIRE(seg.per_segment.size() == 2);
    CHECK(seg.per_segment[0] == 0.5);
    CHECK(seg.per_segment[1] == 1.0);

    CHECK_THROWS_AS(cumulative_accuracy(pred, {1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(cumulative_accuracy(pred, truth, {1, 2}), std::invalid_argument);
    CHECK(cumulative_accuracy({}, {}).values.empty());
}

TEST_CASE("oracle and constant predictors bound the series") {
    StreamConfig cfg = tiny_stream();
    StreamScenario sc = build_scenario(StreamKind::VariableSpeed, FaultClass::GearWear, cfg);
    std::vector<int> truth = scenario_truth(sc);

    CumAccuracySeries oracle = cumulative_accuracy(truth, truth);
    for (double v : oracle.values) CHECK(v == 1.0);

    std::vector<int> always_healthy(truth.size(), static_cast<int>(FaultClass::Healthy));
    CumAccuracySeries fixed = cumulative_accuracy(always_healthy, truth);
    double expect = static_cast<double>(sc.fault_onset_index) / static_cast<double>(truth.size());
    CHECK(std::abs(fixed.final_value - expect) < 1e-12);
}

TEST_CASE("chunked replay covers the stream deterministically") {
    StreamConfig cfg = tiny_stream();
    StreamScenario sc = build_scenario(StreamKind::VariableTorque, FaultClass::TeethCrack, cfg);
    SimConfig sim;

    std::vector<size_t> starts;
    std::vector<double> first_sample;
    size_t seen = 0;
    for_each_stream_chunk(sc, sim, cfg, 99, 4, [&](const Tensor& x, size_t at) {
        CHECK(x.ndim() == 3);
        CHECK(x.extent(1) == 6);
        CHECK(x.extent(2) == cfg.window_length);
        starts.push_back(at);
        for (size_t w = 0; w < x.extent(0); ++w) first_sample.push_back(x(w, 0, 0));
        seen += x.extent(0);
    });
    CHECK(seen == sc.total_windows());
    REQUIRE(!starts.empty());
    CHECK(starts.front() == 0);

    // same seed, different chunk size: identical windows at identical indices
    std::vector<double> again;
    for_each_stream_chunk(sc, sim, cfg, 99, 7, [&](const Tensor& x, size_t) {
        for (size_t w = 0; w < x.extent(0); ++w) again.push_back(x(w, 0, 0));
    });
    CHECK(again == first_sample);

    // consecutive windows of one segment overlap by stride
    Tensor whole;
    for_each_stream_chunk(sc, sim, cfg, 99, sc.segments[0].length, [&](const Tensor& x, size_t at) {
        if (at == 0) whole = x;
    });
    for (size_t k = 0; k + cfg.stride < cfg.window_length; ++k)
        CHECK(whole(0, 2, k + cfg.stride) == whole(1, 2, k));

    // a different seed changes the signal
    std::vector<double> other;
    for_each_stream_chunk(sc, sim, cfg, 100, 4, [&](const Tensor& x, size_t) {
        for (size_t w = 0; w < x.extent(0); ++w) other.push_back(x(w, 0, 0));
    });
    CHECK(other != first_sample);
}

TEST_CASE("pipeline predictions dispatch to the right classifier") {
    DgeModel model = tiny_model();
    std::mt19937_64 rng(17);
    std::normal_distribution<double> d(0.0, 1.0);
    Tensor x({3, 6, 64});
    for (size_t i = 0; i < x.size(); ++i) x[i] = d(rng);

    // two-stage and raw-rvfl classifiers of matching input width
    FeatureMatrix feat;
    feat.Z = model_features(model, x);
    feat.Y = one_hot({0, 1, 2}, 4);
    RvflModel rv_feat = rvfl_train(feat, 6, 1e-4, 5);

    FeatureMatrix raw;
    raw.Z = Tensor({3, 6 * 64}, x.values());
    raw.Y = feat.Y;
    RvflModel rv_raw = rvfl_train(raw, 6, 1e-4, 5);

    Pipeline e2e{PipelineKind::EndToEnd, &model, nullptr};
    Pipeline two{PipelineKind::TwoStage, &model, &rv_feat};
    Pipeline rawp{PipelineKind::RawRvfl, nullptr, &rv_raw};

    Tensor logits = model_logits(model, x);
    std::vector<int> want_e2e;
    for (size_t r = 0; r < 3; ++r) {
        int best = 0;
        for (int c = 1; c < 4; ++c)
            if (logits(r, c) > logits(r, best)) best = c;
        want_e2e.push_back(best);
    }
    CHECK(pipeline_predict(e2e, x) == want_e2e);
    CHECK(pipeline_predict(two, x) == rvfl_predict(rv_feat, feat.Z));
    CHECK(pipeline_predict(rawp, x) == rvfl_predict(rv_raw, raw.Z));

    Pipeline broken{PipelineKind::TwoStage, &model, nullptr};
    CHECK_THROWS_AS(pipeline_predict(broken, x), std::invalid_argument);
}

TEST_CASE("replay never adapts the model and is repeatable") {
    DgeModel model = tiny_model();
    StreamConfig cfg = tiny_stream();
    StreamScenario sc = build_scenario(StreamKind::VariableSpeed, FaultClass::GearWear, cfg);
    SimConfig sim;
    Standardizer stats = unit_stats(6);
    Pipeline p{PipelineKind::EndToEnd, &model, nullptr};

    auto before = (scratch_dir() / "replay-before").string();
    auto after = (scratch_dir() / "replay-after").string();
    save_model(model, before);
    CumAccuracySeries a = run_stream(p, sc, stats, sim, cfg, 7);
    save_model(model, after);
    CHECK(file_hash(before + ".bin") == file_hash(after + ".bin"));
    CHECK(file_hash(before + ".json") == file_hash(after + ".json"));

    REQUIRE(a.values.size() == sc.total_windows());
    for (double v : a.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(a.per_segment.size() == sc.segments.size());

    CumAccuracySeries b = run_stream(p, sc, stats, sim, cfg, 7);
    CHECK(a.values == b.values);

    // feature-width mismatch surfaces as an error
    FeatureMatrix bad;
    bad.Z = Tensor({2, 5}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    bad.Y = one_hot({0, 1}, 4);
    RvflModel rv = rvfl_train(bad, 3, 1e-4, 1);
    Pipeline mismatched{PipelineKind::TwoStage, &model, &rv};
    CHECK_THROWS(run_stream(mismatched, sc, stats, sim, cfg, 7));
}

TEST_CASE("pipeline comparison emits the full cross with medians") {
    DgeModel model = tiny_model();
    StreamConfig cfg = tiny_stream();
    SimConfig sim;
    Standardizer stats = unit_stats(6);

    std::mt19937_64 rng(23);
    std::normal_distribution<double> d(0.0, 1.0);
    Tensor zx({8, 6, 64});
    for (size_t i = 0; i < zx.size(); ++i) zx[i] = d(rng);
    FeatureMatrix feat;
    feat.Z = model_features(model, zx);
    feat.Y = one_hot({0, 1, 2, 3, 0, 1, 2, 3}, 4);
    RvflModel rv_feat = rvfl_train(feat, 6, 1e-4, 5);

    std::vector<Pipeline> pipelines{{PipelineKind::EndToEnd, &model, nullptr},
                                    {PipelineKind::TwoStage, &model, &rv_feat}};
    std::vector<StreamKind> scenarios{StreamKind::VariableSpeed, StreamKind::VariableTorque};
    std::vector<FaultClass> faults{FaultClass::GearWear};
    std::vector<uint64_t> seeds{1, 2, 3};

    std::vector<CompareRow> rows = compare_pipelines(pipelines, scenarios, faults, seeds, stats, sim, cfg);
    CHECK(rows.size() == 2 * 2 * 1 * 3);

    for (size_t base = 0; base < rows.size(); base += seeds.size()) {
        std::vector<double> cell;
        for (size_t k = 0; k < seeds.size(); ++k) {
            const CompareRow& r = rows[base + k];
            CHECK(r.pipeline == rows[base].pipeline);
            CHECK(r.scenario == rows[base].scenario);
            CHECK(r.fault == rows[base].fault);
            CHECK(r.seed == seeds[k]);
            CHECK(r.final_accuracy >= 0.0);
            CHECK(r.final_accuracy <= 1.0);
            CHECK(r.cell_median == rows[base].cell_median);
            cell.push_back(r.final_accuracy);
        }
        std::sort(cell.begin(), cell.end());
        CHECK(rows[base].cell_median == cell[1]);  // odd count: middle value
    }

    // the two pipelines saw the same stream: run_stream agrees with the row
    StreamScenario sc = build_scenario(StreamKind::VariableSpeed, FaultClass::GearWear, cfg);
    uint64_t stream_seed = derive_seed(1, "stream.variable-speed.wear");
    CumAccuracySeries direct = run_stream(pipelines[0], sc, stats, sim, cfg, stream_seed);
    CHECK(rows[0].final_accuracy == direct.final_value);

    CHECK_THROWS_AS(compare_pipelines(pipelines, scenarios, faults, {}, stats, sim, cfg),
                    std::invalid_argument);
}

TEST_CASE("report and series files") {
    std::vector<CompareRow> rows{{PipelineKind::EndToEnd, StreamKind::VariableSpeed,
                                  FaultClass::GearWear, 1, 0.8, 0.8},
                                 {PipelineKind::RawRvfl, StreamKind::VariableTorque,
                                  FaultClass::TeethBreak, 2, 0.5, 0.5}};
    auto report = (scratch_dir() / "compare.csv").string();
    write_compare_csv(rows, report);
    std::ifstream in(report);
    std::string line;
    std::getline(in, line);
    CHECK(line == "pipeline,scenario,fault,seed,final_accuracy,cell_median");
    size_t data_rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++data_rows;
    CHECK(data_rows == rows.size());

    CumAccuracySeries s = cumulative_accuracy({1, 0, 1}, {1, 1, 1});
    auto curve = (scratch_dir() / "curve.csv").string();
    write_series_csv(s, curve);
    std::ifstream cin_(curve);
    std::getline(cin_, line);
    CHECK(line == "index,cumulative_accuracy");
    size_t curve_rows = 0;
    while (std::getline(cin_, line))
        if (!line.empty()) ++curve_rows;
    CHECK(curve_rows == 3);
}

TEST_CASE("feature export writes 66 deterministic columns") {
    DgeModel model;
    model.cfg = ModelConfig{};  // full-width feature head
    auto [enc, head] = init_params(model.cfg, 9);
    model.theta = merge_theta(enc, head);

    std::mt19937_64 rng(31);
    std::normal_distribution<double> d(0.0, 1.0);
    WindowedDataset data;
    data.windows = Tensor({6, 6, 1024});
    for (size_t i = 0; i < data.windows.size(); ++i) data.windows[i] = d(rng);
    data.class_labels = {0, 1, 2, 3, 0, 1};
    data.domain_labels = {0, 0, 0, 1, 1, 1};
    data.window_length = 1024;
    data.stride = 64;
    Standardizer stats = fit_standardizer(data);

    auto path = (scratch_dir() / "features.csv").string();
    export_features(model, data, stats, path);

    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    size_t cols = 1;
    for (char c : header) cols += c == ',';
    CHECK(cols == 66);
    CHECK(header.substr(0, 3) == "f0,");
    CHECK(header.find("class,domain") != std::string::npos);

    size_t rows = 0;
    std::string line, last;
    while (std::getline(in, line))
        if (!line.empty()) {
            ++rows;
            last = line;
        }
    CHECK(rows == data.n());
    // label columns survive at the row tail
    CHECK(last.substr(last.size() - 4) == ",1,1");

    uint64_t h1 = file_hash(path);
    export_features(model, data, stats, path);
    CHECK(file_hash(path) == h1);
}

}  // TEST_SUITE
