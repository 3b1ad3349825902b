#include "dgfd/cli.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dgfd/common.hpp"
#include "dgfd/manifest.hpp"
#include "dgfd/mldg.hpp"
#include "dgfd/models.hpp"
#include "dgfd/rvfl.hpp"
#include "dgfd/signal.hpp"
#include "dgfd/sim.hpp"
#include "dgfd/stream.hpp"

namespace fs = std::filesystem;

namespace dgfd::cli {

namespace {

// ---------------------------------------------------------------------------
// configuration

struct RvflSettings {
    int hidden = 100;
    double sigma = 1e-4;
};

struct SynthPlan {
    size_t per_class = 1984;
    size_t window = 1024;
    size_t stride = 64;
    int signals_per_cell = 4;  // recordings per (condition, class)
    std::vector<ConditionSpec> conditions{{2000.0, 20.0}, {1000.0, 20.0}};
};

struct AppConfig {
    uint64_t seed = 1;
    SimConfig sim;
    ModelConfig model;
    TrainConfig train;
    StreamConfig stream;
    RvflSettings rvfl;
    SynthPlan synth;
};

AppConfig load_config(const std::string& path) {
    AppConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) fail(cat("cannot read config ", path));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        fail(cat(path, ": ", ex.what()));
    }
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("sim")) j.at("sim").get_to(cfg.sim);
    if (j.contains("model")) j.at("model").get_to(cfg.model);
    if (j.contains("train")) j.at("train").get_to(cfg.train);
    if (j.contains("stream")) j.at("stream").get_to(cfg.stream);
    if (j.contains("rvfl")) {
        cfg.rvfl.hidden = j["rvfl"].value("hidden", cfg.rvfl.hidden);
        cfg.rvfl.sigma = j["rvfl"].value("sigma", cfg.rvfl.sigma);
    }
    if (j.contains("synth")) {
        const auto& s = j["synth"];
        cfg.synth.per_class = s.value("per_class", cfg.synth.per_class);
        cfg.synth.window = s.value("window", cfg.synth.window);
        cfg.synth.stride = s.value("stride", cfg.synth.stride);
        cfg.synth.signals_per_cell = s.value("signals_per_cell", cfg.synth.signals_per_cell);
        if (s.contains("conditions")) s.at("conditions").get_to(cfg.synth.conditions);
    }
    return cfg;
}

nlohmann::json effective_config(const AppConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["sim"] = cfg.sim;
    j["model"] = cfg.model;
    j["train"] = cfg.train;
    j["stream"] = cfg.stream;
    j["rvfl"] = {{"hidden", cfg.rvfl.hidden}, {"sigma", cfg.rvfl.sigma}};
    j["synth"] = {{"per_class", cfg.synth.per_class},
                  {"window", cfg.synth.window},
                  {"stride", cfg.synth.stride},
                  {"signals_per_cell", cfg.synth.signals_per_cell},
                  {"conditions", cfg.synth.conditions}};
    return j;
}

// shared flags; config-file values yield to explicitly passed flags
struct CommonArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--seed", args.seed, "root seed (all randomness derives from it)");
    cmd->add_option("--out", args.out, "output directory")->required();
}

AppConfig resolve_config(const CommonArgs& args) {
    AppConfig cfg = load_config(args.config_path);
    if (args.seed) cfg.seed = *args.seed;
    return cfg;
}

fs::path ensure_out_dir(const std::string& out) {
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
}

void finish_manifest(RunManifest& m, const fs::path& dir) {
    std::string path = (dir / "manifest.json").string();
    write_manifest(m, path);
    std::printf("wrote %s\n", path.c_str());
}

void require_artifact(RunManifest& m, const std::string& path) {
    verify_against_manifest(path);
    add_input(m, path);
}

DgeModel load_model_checked(RunManifest& m, const std::string& stem) {
    require_artifact(m, stem + ".json");
    require_artifact(m, stem + ".bin");
    return load_model(stem);
}

RvflModel load_rvfl_checked(RunManifest& m, const std::string& stem) {
    require_artifact(m, stem + ".json");
    require_artifact(m, stem + ".bin");
    return load_rvfl(stem);
}

uint64_t stream_seed_for(uint64_t root, StreamKind kind, FaultClass fault) {
    return derive_seed(root, cat("stream.", stream_kind_name(kind), ".", fault_name(fault)));
}

// ---------------------------------------------------------------------------
// feature CSV (as written by export-features): f0..f{J-1},class,domain

FeatureMatrix read_feature_csv(const std::string& path, std::vector<int>* domains = nullptr) {
    std::ifstream in(path);
    if (!in) fail(cat("cannot read ", path));
    std::string line;
    if (!std::getline(in, line)) fail(cat(path, ": empty file"));

    std::vector<std::string> header;
    size_t from = 0;
    while (from <= line.size()) {
        size_t comma = line.find(',', from);
        if (comma == std::string::npos) comma = line.size();
        header.push_back(line.substr(from, comma - from));
        from = comma + 1;
    }
    check(header.size() >= 3 && header[header.size() - 2] == "class" && header.back() == "domain",
          cat(path, ": want columns f0..fJ,class,domain"));
    const size_t J = header.size() - 2;

    std::vector<double> z;
    std::vector<int> labels;
    size_t rows = 0;
    for (size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        const char* p = line.data();
        const char* end = p + line.size();
        for (size_t c = 0; c < J + 2; ++c) {
            const char* stop = std::find(p, end, ',');
            double v = 0.0;
            auto res = std::from_chars(p, stop, v);
            if (res.ec != std::errc() || res.ptr != stop)
                fail(cat(path, ": row ", lineno, ": bad number in column ", c + 1));
            if (c < J)
                z.push_back(v);
            else if (c == J)
                labels.push_back(static_cast<int>(v));
            else if (domains)
                domains->push_back(static_cast<int>(v));
            check(c == J + 1 || stop != end, cat(path, ": row ", lineno, ": expected ", J + 2, " columns"));
            p = stop + 1;
        }
        ++rows;
    }
    check(rows > 0, cat(path, ": no data rows"));
    int num_classes = 0;
    for (int l : labels) num_classes = std::max(num_classes, l + 1);
    num_classes = std::max(num_classes, 2);
    return make_features(Tensor({rows, J}, std::move(z)), labels, num_classes);
}

// ---------------------------------------------------------------------------
// subcommand bodies

int cmd_synth(const CommonArgs& common, std::optional<size_t> per_class_flag) {
    AppConfig cfg = resolve_config(common);
    if (per_class_flag) cfg.synth.per_class = *per_class_flag;
    const SynthPlan& plan = cfg.synth;
    check(plan.signals_per_cell >= 1, "synth: signals_per_cell must be >= 1");
    check(!plan.conditions.empty(), "synth: need at least one offline condition");

    fs::path dir = ensure_out_dir(common.out);
    const size_t per_signal =
        (plan.per_class + plan.signals_per_cell - 1) / static_cast<size_t>(plan.signals_per_cell);
    const size_t samples = (per_signal - 1) * plan.stride + plan.window;

    std::vector<LabeledSignal> parts;
    for (size_t ci = 0; ci < plan.conditions.size(); ++ci)
        for (int t = 0; t < kNumFaultClasses; ++t)
            for (int rep = 0; rep < plan.signals_per_cell; ++rep) {
                SimConfig sim = cfg.sim;
                sim.seed = derive_seed(cfg.seed, cat("offline.c", ci, ".f", t, ".r", rep));
                LabeledSignal part;
                part.condition = static_cast<int>(ci);
                part.fault_class = t;
                part.signal = synth_signal(plan.conditions[ci], static_cast<FaultClass>(t),
                                           static_cast<double>(samples) / kMcc5SampleRateHz, sim);
                parts.push_back(std::move(part));
            }

    WindowedDataset ds = assemble_offline(parts, plan.window, plan.stride, plan.per_class);
    Standardizer stats = fit_standardizer(ds);
    std::string stem = (dir / "offline").string();
    save_dataset(ds, stem, &stats);

    RunManifest m;
    m.command = "synth";
    m.seed = cfg.seed;
    m.config = effective_config(cfg);
    add_output(m, stem + ".bin");
    add_output(m, stem + ".json");

    for (StreamKind kind : {StreamKind::VariableSpeed, StreamKind::VariableTorque}) {
        nlohmann::json sj{{"kind", stream_kind_name(kind)}, {"stream", cfg.stream}};
        std::string path = (dir / cat("stream-", stream_kind_name(kind), ".json")).string();
        std::ofstream out(path);
        if (!out) fail(cat("cannot write ", path));
        out << sj.dump(2) << '\n';
        out.close();
        add_output(m, path);
    }

    std::printf("offline dataset: %zu windows of [%zu x %zu]\n", ds.n(), ds.channels(), ds.window_length);
    finish_manifest(m, dir);
    return 0;
}

int cmd_train_dge(const CommonArgs& common, const std::string& data_stem, const std::string& meta_mode) {
    AppConfig cfg = resolve_config(common);
    fs::path dir = ensure_out_dir(common.out);

    RunManifest m;
    m.command = "train-dge";
    m.seed = cfg.seed;
    require_artifact(m, data_stem + ".json");
    require_artifact(m, data_stem + ".bin");
    Standardizer stats;
    WindowedDataset ds = load_dataset(data_stem, &stats);
    check(!stats.mean.empty(), cat(data_stem, ".json carries no standardizer stats"));
    // the replay standardizes with these stats, so the net must be fit on the same scale
    ds.windows = apply_standardizer(stats, ds.windows);

    TrainConfig tcfg = cfg.train;
    if (!meta_mode.empty()) tcfg.mode = meta_mode_from_name(meta_mode);
    tcfg.seed = derive_seed(cfg.seed, "train-dge");
    cfg.train = tcfg;
    m.config = effective_config(cfg);

    TrainResult result = train(ds, cfg.model, tcfg);

    std::string stem = (dir / "model").string();
    save_model(result.model, stem);
    std::string history = (dir / "history.csv").string();
    write_history_csv(result.history, history);
    add_output(m, stem + ".json");
    add_output(m, stem + ".bin");
    add_output(m, history);

    if (!result.history.empty())
        std::printf("trained %d epochs, final meta-train loss %.6f\n",
                    static_cast<int>(result.history.size()), result.history.back().loss_mtrain);
    finish_manifest(m, dir);
    return 0;
}

int cmd_train_rvfl(const CommonArgs& common, const std::string& features_path,
                   const std::string& data_stem, bool raw) {
    AppConfig cfg = resolve_config(common);
    check(!features_path.empty() || (raw && !data_stem.empty()),
          "train-rvfl: pass --features CSV, or --data with --raw");
    check(features_path.empty() || !raw, "train-rvfl: --features and --raw are mutually exclusive");
    fs::path dir = ensure_out_dir(common.out);

    RunManifest m;
    m.command = "train-rvfl";
    m.seed = cfg.seed;
    m.config = effective_config(cfg);

    FeatureMatrix feat;
    if (!features_path.empty()) {
        require_artifact(m, features_path);
        feat = read_feature_csv(features_path);
    } else {
        require_artifact(m, data_stem + ".json");
        require_artifact(m, data_stem + ".bin");
        Standardizer stats;
        WindowedDataset ds = load_dataset(data_stem, &stats);
        check(!stats.mean.empty(), cat(data_stem, ".json carries no standardizer stats"));
        Tensor x = apply_standardizer(stats, ds.windows);
        feat = make_features(Tensor({ds.n(), ds.channels() * ds.window_length}, std::move(x.values())),
                             ds.class_labels, kNumFaultClasses);
    }

    RvflModel model = rvfl_train(feat, cfg.rvfl.hidden, cfg.rvfl.sigma, derive_seed(cfg.seed, "rvfl.init"));
    std::string stem = (dir / "rvfl").string();
    save_rvfl(model, stem);
    add_output(m, stem + ".json");
    add_output(m, stem + ".bin");

    std::printf("rvfl: %zu -> %zu hidden -> %zu classes (sigma %g)\n", model.input_dim(),
                model.hidden_dim(), model.num_classes(), model.sigma);
    finish_manifest(m, dir);
    return 0;
}

int cmd_export_features(const CommonArgs& common, const std::string& model_stem,
                        const std::string& data_stem) {
    AppConfig cfg = resolve_config(common);
    fs::path dir = ensure_out_dir(common.out);

    RunManifest m;
    m.command = "export-features";
    m.seed = cfg.seed;
    m.config = effective_config(cfg);

    DgeModel model = load_model_checked(m, model_stem);
    require_artifact(m, data_stem + ".json");
    require_artifact(m, data_stem + ".bin");
    Standardizer stats;
    WindowedDataset ds = load_dataset(data_stem, &stats);
    check(!stats.mean.empty(), cat(data_stem, ".json carries no standardizer stats"));

    std::string path = (dir / "features.csv").string();
    export_features(model, ds, stats, path);
    add_output(m, path);

    std::printf("exported %zu feature rows\n", ds.n());
    finish_manifest(m, dir);
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& pipeline, const std::string& scenario,
             const std::string& fault, const std::string& model_stem, const std::string& rvfl_stem,
             const std::string& data_stem) {
    AppConfig cfg = resolve_config(common);
    fs::path dir = ensure_out_dir(common.out);

    PipelineKind kind = pipeline_from_name(pipeline);
    StreamKind sk = stream_kind_from_name(scenario);
    FaultClass fc = fault_from_name(fault);

    RunManifest m;
    m.command = "eval";
    m.seed = cfg.seed;
    m.config = effective_config(cfg);

    DgeModel model;
    RvflModel rvfl;
    Pipeline p;
    p.kind = kind;
    if (kind == PipelineKind::EndToEnd || kind == PipelineKind::TwoStage) {
        check(!model_stem.empty(), cat("eval: pipeline ", pipeline, " needs --model"));
        model = load_model_checked(m, model_stem);
        p.model = &model;
    }
    if (kind == PipelineKind::TwoStage || kind == PipelineKind::RawRvfl) {
        check(!rvfl_stem.empty(), cat("eval: pipeline ", pipeline, " needs --rvfl"));
        rvfl = load_rvfl_checked(m, rvfl_stem);
        p.rvfl = &rvfl;
    }
    check(!data_stem.empty(), "eval: --data is required for the offline standardizer");
    require_artifact(m, data_stem + ".json");
    Standardizer stats = load_standardizer(data_stem);

    StreamScenario sc = build_scenario(sk, fc, cfg.stream);
    CumAccuracySeries series =
        run_stream(p, sc, stats, cfg.sim, cfg.stream, stream_seed_for(cfg.seed, sk, fc));

    std::string curve = (dir / "curve.csv").string();
    write_series_csv(series, curve);
    nlohmann::json summary{{"pipeline", pipeline},
                           {"scenario", scenario},
                           {"fault", fault},
                           {"windows", series.values.size()},
                           {"fault_onset_index", sc.fault_onset_index},
                           {"final_accuracy", series.final_value},
                           {"per_segment_accuracy", series.per_segment}};
    std::string summary_path = (dir / "summary.json").string();
    std::ofstream out(summary_path);
    if (!out) fail(cat("cannot write ", summary_path));
    out << summary.dump(2) << '\n';
    out.close();
    add_output(m, curve);
    add_output(m, summary_path);

    std::printf("%s / %s / %s: final cumulative accuracy %.4f over %zu windows\n", pipeline.c_str(),
                scenario.c_str(), fault.c_str(), series.final_value, series.values.size());
    finish_manifest(m, dir);
    return 0;
}

int cmd_compare(const CommonArgs& common, const std::string& model_stem, const std::string& rvfl_stem,
                const std::string& raw_rvfl_stem, const std::string& data_stem, int num_seeds) {
    AppConfig cfg = resolve_config(common);
    check(num_seeds >= 1, "compare: need at least one seed");
    fs::path dir = ensure_out_dir(common.out);

    RunManifest m;
    m.command = "compare";
    m.seed = cfg.seed;
    m.config = effective_config(cfg);

    DgeModel model = load_model_checked(m, model_stem);
    RvflModel feat_rvfl = load_rvfl_checked(m, rvfl_stem);
    RvflModel raw_rvfl = load_rvfl_checked(m, raw_rvfl_stem);
    require_artifact(m, data_stem + ".json");
    Standardizer stats = load_standardizer(data_stem);

    std::vector<Pipeline> pipelines{{PipelineKind::EndToEnd, &model, nullptr},
                                    {PipelineKind::TwoStage, &model, &feat_rvfl},
                                    {PipelineKind::RawRvfl, nullptr, &raw_rvfl}};
    std::vector<StreamKind> scenarios{StreamKind::VariableSpeed, StreamKind::VariableTorque};
    std::vector<FaultClass> faults{FaultClass::GearWear, FaultClass::TeethBreak, FaultClass::TeethCrack};
    std::vector<uint64_t> seeds;
    for (int i = 0; i < num_seeds; ++i) seeds.push_back(cfg.seed + static_cast<uint64_t>(i));

    std::vector<CompareRow> rows =
        compare_pipelines(pipelines, scenarios, faults, seeds, stats, cfg.sim, cfg.stream);
    std::string report = (dir / "compare.csv").string();
    write_compare_csv(rows, report);
    add_output(m, report);

    std::printf("compare: %zu rows over %d seeds\n", rows.size(), num_seeds);
    finish_manifest(m, dir);
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"domain-generalized gearbox fault diagnosis toolkit"};
    app.require_subcommand(1);

    CommonArgs synth_args, dge_args, rvfl_args, exp_args, eval_args, cmp_args;
    std::optional<size_t> per_class;
    std::string dge_data, dge_meta_mode;
    std::string rvfl_features, rvfl_data;
    bool rvfl_raw = false;
    std::string exp_model, exp_data;
    std::string eval_pipeline = "two-stage", eval_scenario = "variable-speed", eval_fault = "break";
    std::string eval_model, eval_rvfl, eval_data;
    std::string cmp_model, cmp_rvfl, cmp_raw_rvfl, cmp_data;
    int cmp_seeds = 5;

    CLI::App* synth = app.add_subcommand("synth", "generate the offline dataset and stream descriptors");
    add_common(synth, synth_args);
    synth->add_option("--per-class", per_class, "windows per (condition, class) cell");

    CLI::App* dge = app.add_subcommand("train-dge", "train the encoder and classifier head");
    add_common(dge, dge_args);
    dge->add_option("--data", dge_data, "offline dataset stem (from synth)")->required();
    dge->add_option("--meta-mode", dge_meta_mode, "first-order | exact-hvp")
        ->check(CLI::IsMember({"first-order", "exact-hvp"}));

    CLI::App* rvfl = app.add_subcommand("train-rvfl", "solve the closed-form classifier");
    add_common(rvfl, rvfl_args);
    rvfl->add_option("--features", rvfl_features, "feature CSV (from export-features)");
    rvfl->add_option("--data", rvfl_data, "offline dataset stem (with --raw)");
    rvfl->add_flag("--raw", rvfl_raw, "fit on flattened standardized windows");

    CLI::App* exp = app.add_subcommand("export-features", "dump encoder features for a dataset");
    add_common(exp, exp_args);
    exp->add_option("--model", exp_model, "encoder checkpoint stem")->required();
    exp->add_option("--data", exp_data, "dataset stem")->required();

    CLI::App* ev = app.add_subcommand("eval", "replay an online scenario and record the accuracy curve");
    add_common(ev, eval_args);
    ev->add_option("--pipeline", eval_pipeline, "e2e | two-stage | raw-rvfl")
        ->check(CLI::IsMember({"e2e", "two-stage", "raw-rvfl"}));
    ev->add_option("--scenario", eval_scenario, "variable-speed | variable-torque")
        ->check(CLI::IsMember({"variable-speed", "variable-torque"}));
    ev->add_option("--fault", eval_fault, "wear | break | crack")
        ->check(CLI::IsMember({"wear", "break", "crack"}));
    ev->add_option("--model", eval_model, "encoder checkpoint stem");
    ev->add_option("--rvfl", eval_rvfl, "rvfl checkpoint stem");
    ev->add_option("--data", eval_data, "offline dataset stem (standardizer source)")->required();

    CLI::App* cmp = app.add_subcommand("compare", "final accuracy of all pipelines across scenarios");
    add_common(cmp, cmp_args);
    cmp->add_option("--model", cmp_model, "encoder checkpoint stem")->required();
    cmp->add_option("--rvfl", cmp_rvfl, "feature-space rvfl checkpoint stem")->required();
    cmp->add_option("--raw-rvfl", cmp_raw_rvfl, "raw-signal rvfl checkpoint stem")->required();
    cmp->add_option("--data", cmp_data, "offline dataset stem")->required();
    cmp->add_option("--seeds", cmp_seeds, "number of replay seeds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_args, per_class);
        if (dge->parsed()) return cmd_train_dge(dge_args, dge_data, dge_meta_mode);
        if (rvfl->parsed()) return cmd_train_rvfl(rvfl_args, rvfl_features, rvfl_data, rvfl_raw);
        if (exp->parsed()) return cmd_export_features(exp_args, exp_model, exp_data);
        if (ev->parsed())
            return cmd_eval(eval_args, eval_pipeline, eval_scenario, eval_fault, eval_model, eval_rvfl,
                            eval_data);
        if (cmp->parsed())
            return cmd_compare(cmp_args, cmp_model, cmp_rvfl, cmp_raw_rvfl, cmp_data, cmp_seeds);
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "dgfd: %s\n", ex.what());
        return 1;
    }
    return 2;
}

}  // namespace dgfd::cli
