#include "dgfd/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "json.hpp"

#include "dgfd/common.hpp"

namespace dgfd {

void validate(const ModelConfig& cfg) {
    check(!cfg.kernel_sizes.empty(), "model config: need at least one branch");
    std::set<int> seen;
    for (int k : cfg.kernel_sizes) {
        check(k >= 1 && k % 2 == 1, cat("model config: kernel sizes must be odd, got ", k));
        check(seen.insert(k).second, cat("model config: duplicate kernel size ", k));
    }
    check(cfg.branch_channels >= 1 && cfg.pool >= 1 && cfg.in_channels >= 1, "model config: bad extents");
    check(cfg.feature_dim >= 1 && cfg.head_hidden >= 1 && cfg.num_classes >= 2, "model config: bad widths");
}

namespace {

Tensor kaiming_uniform(std::vector<size_t> shape, size_t fan_in, std::mt19937_64& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> d(-bound, bound);
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    return t;
}

}  // namespace

std::pair<EncoderParams, HeadParams> init_params(const ModelConfig& cfg, uint64_t seed) {
    validate(cfg);
    std::mt19937_64 rng(seed);
    size_t C = static_cast<size_t>(cfg.in_channels);
    size_t O = static_cast<size_t>(cfg.branch_channels);
    size_t F = static_cast<size_t>(cfg.feature_dim);
    size_t concat = O * cfg.kernel_sizes.size();

    EncoderParams enc;
    for (size_t i = 0; i < cfg.kernel_sizes.size(); ++i) {
        size_t K = static_cast<size_t>(cfg.kernel_sizes[i]);
        enc.p.add(cat("branch", i, ".w"), kaiming_uniform({O, C, K}, C * K, rng));
        enc.p.add(cat("branch", i, ".b"), Tensor({O}));
    }
    enc.p.add("proj.w", kaiming_uniform({concat, F}, concat, rng));
    enc.p.add("proj.b", Tensor({F}));

    HeadParams head;
    size_t H = static_cast<size_t>(cfg.head_hidden);
    size_t T = static_cast<size_t>(cfg.num_classes);
    head.p.add("fc1.w", kaiming_uniform({F, H}, F, rng));
    head.p.add("fc1.b", Tensor({H}));
    head.p.add("fc2.w", kaiming_uniform({H, T}, H, rng));
    head.p.add("fc2.b", Tensor({T}));
    return {std::move(enc), std::move(head)};
}

ParamVector merge_theta(const EncoderParams& enc, const HeadParams& head) {
    ParamVector theta;
    theta.merge("enc.", enc.p);
    theta.merge("head.", head.p);
    return theta;
}

EncoderParams encoder_slice(const ParamVector& theta) { return {theta.subset("enc.")}; }
HeadParams head_slice(const ParamVector& theta) { return {theta.subset("head.")}; }

ad::Var encoder_graph(ad::Graph& g, const ParamBinding& b, const std::string& prefix, ad::Var batch,
                      const ModelConfig& cfg) {
    std::vector<ad::Var> pooled;
    for (size_t i = 0; i < cfg.kernel_sizes.size(); ++i) {
        ad::Var w = b.at(cat(prefix, "branch", i, ".w"));
        ad::Var bias = b.at(cat(prefix, "branch", i, ".b"));
        ad::Var y = g.relu(g.conv1d(batch, w, bias));
        pooled.push_back(g.global_avg_pool1d(g.max_pool1d(y, cfg.pool)));
    }
    ad::Var z = pooled.size() == 1 ? pooled[0] : g.concat_cols(pooled);
    return g.relu(g.dense(z, b.at(prefix + "proj.w"), b.at(prefix + "proj.b")));
}

ad::Var head_graph(ad::Graph& g, const ParamBinding& b, const std::string& prefix, ad::Var z,
                   const ModelConfig& cfg) {
    (void)cfg;
    ad::Var h = g.relu(g.dense(z, b.at(prefix + "fc1.w"), b.at(prefix + "fc1.b")));
    return g.dense(h, b.at(prefix + "fc2.w"), b.at(prefix + "fc2.b"));
}

Tensor encoder_forward(const ModelConfig& cfg, const EncoderParams& enc, const Tensor& batch) {
    check(batch.ndim() == 3, cat("encoder_forward: want [B,C,W], got ", shape_str(batch.shape())));
    check(batch.extent(1) == static_cast<size_t>(cfg.in_channels),
          cat("encoder_forward: expected ", cfg.in_channels, " channels, got ", batch.extent(1)));
    ad::Graph g;
    ParamBinding b = bind_params(g, enc.p, false);
    return g.value(encoder_graph(g, b, "", g.constant(batch), cfg));
}

Tensor head_forward(const ModelConfig& cfg, const HeadParams& head, const Tensor& z) {
    check(z.ndim() == 2 && z.extent(1) == static_cast<size_t>(cfg.feature_dim),
          cat("head_forward: want [B,", cfg.feature_dim, "], got ", shape_str(z.shape())));
    if (z.extent(0) == 0) return Tensor({0, static_cast<size_t>(cfg.num_classes)});
    ad::Graph g;
    ParamBinding b = bind_params(g, head.p, false);
    return g.value(head_graph(g, b, "", g.constant(z), cfg));
}

Tensor model_features(const DgeModel& m, const Tensor& batch) {
    return encoder_forward(m.cfg, encoder_slice(m.theta), batch);
}

Tensor model_logits(const DgeModel& m, const Tensor& batch) {
    return head_forward(m.cfg, head_slice(m.theta), model_features(m, batch));
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
    j = nlohmann::json{{"kernel_sizes", cfg.kernel_sizes},   {"branch_channels", cfg.branch_channels},
                       {"pool", cfg.pool},                   {"in_channels", cfg.in_channels},
                       {"feature_dim", cfg.feature_dim},     {"head_hidden", cfg.head_hidden},
                       {"num_classes", cfg.num_classes}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
    if (j.contains("kernel_sizes")) j.at("kernel_sizes").get_to(cfg.kernel_sizes);
    cfg.branch_channels = j.value("branch_channels", cfg.branch_channels);
    cfg.pool = j.value("pool", cfg.pool);
    cfg.in_channels = j.value("in_channels", cfg.in_channels);
    cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
    cfg.head_hidden = j.value("head_hidden", cfg.head_hidden);
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
}

void save_model(const DgeModel& m, const std::string& stem) {
    nlohmann::json j;
    j["config"] = m.cfg;
    nlohmann::json slots = nlohmann::json::array();
    for (const auto& name : m.theta.names())
        slots.push_back({{"name", name}, {"shape", m.theta.at(name).shape()}});
    j["slots"] = slots;
    std::ofstream js(stem + ".json");
    if (!js) fail(cat("cannot write ", stem, ".json"));
    js << j.dump(2) << "\n";

    std::ofstream bin(stem + ".bin", std::ios::binary);
    if (!bin) fail(cat("cannot write ", stem, ".bin"));
    for (const auto& name : m.theta.names()) {
        const Tensor& t = m.theta.at(name);
        bin.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!bin) fail(cat("short write to ", stem, ".bin"));
}

DgeModel load_model(const std::string& stem) {
    std::ifstream js(stem + ".json");
    if (!js) fail(cat("cannot open ", stem, ".json"));
    nlohmann::json j = nlohmann::json::parse(js);
    DgeModel m;
    m.cfg = j.at("config").get<ModelConfig>();
    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) fail(cat("cannot open ", stem, ".bin"));
    for (const auto& slot : j.at("slots")) {
        std::string name = slot.at("name").get<std::string>();
        std::vector<size_t> shape = slot.at("shape").get<std::vector<size_t>>();
        size_t total = 1;
        for (size_t e : shape) total *= e;
        std::vector<double> data(total);
        bin.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(total * sizeof(double)));
        if (static_cast<size_t>(bin.gcount()) != total * sizeof(double))
            fail(cat(stem, ".bin: truncated slot ", name));
        m.theta.add(name, Tensor(std::move(shape), std::move(data)));
    }
    return m;
}

}  // namespace dgfd
