#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "dgfd/models.hpp"
#include "support/oracles.hpp"

using dgfd::DgeModel;
using dgfd::EncoderParams;
using dgfd::HeadParams;
using dgfd::ModelConfig;
using dgfd::ParamVector;
using dgfd::Tensor;

namespace {

Tensor random_batch(size_t B, size_t C, size_t W, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    Tensor t({B, C, W});
    for (size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    return t;
}

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.kernel_sizes = {3, 7};
    cfg.branch_channels = 4;
    cfg.in_channels = 2;
    cfg.feature_dim = 8;
    cfg.head_hidden = 5;
    cfg.num_classes = 3;
    return cfg;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("init produces the documented slot layout and is seed-stable") {
    ModelConfig cfg;  // defaults: kernels 7/31/127, 6->16 channels, 48->64 proj
    auto [enc, head] = dgfd::init_params(cfg, 77);
    CHECK(enc.p.total_size() == 16 * 6 * (7 + 31 + 127) + 3 * 16 + 48 * 64 + 64);
    CHECK(head.p.total_size() == 64 * 32 + 32 + 32 * 4 + 4);
    CHECK(enc.p.at("branch2.w").shape() == std::vector<size_t>{16, 6, 127});
    CHECK(head.p.at("fc2.w").shape() == std::vector<size_t>{32, 4});

    auto [enc2, head2] = dgfd::init_params(cfg, 77);
    CHECK(enc.p.flatten() == enc2.p.flatten());
    CHECK(head.p.flatten() == head2.p.flatten());
    auto [enc3, head3] = dgfd::init_params(cfg, 78);
    CHECK(enc.p.flatten() != enc3.p.flatten());

    // biases start at zero
    for (double v : enc.p.at("proj.b").values()) CHECK(v == 0.0);
}

TEST_CASE("init weight spread follows the fan-in rule") {
    ModelConfig cfg;
    auto [enc, head] = dgfd::init_params(cfg, 123);
    (void)head;
    const Tensor& w = enc.p.at("branch2.w");  // 16*6*127 = 12192 draws
    REQUIRE(w.size() > 10000);
    double mean = std::accumulate(w.values().begin(), w.values().end(), 0.0) / static_cast<double>(w.size());
    double var = 0.0;
    for (double v : w.values()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size());
    double want = std::sqrt(2.0 / (6.0 * 127.0));  // std of U[-sqrt(6/f), sqrt(6/f)]
    double got = std::sqrt(var);
    CHECK(got > want / 2.0);
    CHECK(got < want * 2.0);
    CHECK(std::abs(mean) < 0.1 * want);
}

TEST_CASE("config validation rejects even or duplicate kernels") {
    ModelConfig cfg;
    cfg.kernel_sizes = {8, 31, 127};
    CHECK_THROWS_AS(dgfd::init_params(cfg, 1), std::invalid_argument);
    cfg.kernel_sizes = {7, 7, 127};
    CHECK_THROWS_AS(dgfd::init_params(cfg, 1), std::invalid_argument);
    cfg.kernel_sizes = {7, 31};
    cfg.num_classes = 1;
    CHECK_THROWS_AS(dgfd::init_params(cfg, 1), std::invalid_argument);
}

TEST_CASE("encoder maps [64,6,1024] to [64,64]") {
    ModelConfig cfg;
    auto [enc, head] = dgfd::init_params(cfg, 5);
    (void)head;
    // the 64x6144 batch is stored flat and viewed as [64,6,1024]
    Tensor flat = random_batch(1, 1, 64 * 6144, 9);
    Tensor batch({64, 6, 1024}, flat.values());
    Tensor z = dgfd::encoder_forward(cfg, enc, batch);
    CHECK(z.shape() == std::vector<size_t>{64, 64});
    CHECK(z.all_finite());
}

TEST_CASE("encoder handles degenerate and duplicated inputs") {
    ModelConfig cfg;
    auto [enc, head] = dgfd::init_params(cfg, 6);
    (void)head;
    Tensor zero({1, 6, 1024});
    Tensor z = dgfd::encoder_forward(cfg, enc, zero);
    CHECK(z.shape() == std::vector<size_t>{1, 64});
    CHECK(z.all_finite());

    Tensor one = random_batch(1, 6, 1024, 3);
    Tensor two({2, 6, 1024});
    std::copy(one.values().begin(), one.values().end(), two.values().begin());
    std::copy(one.values().begin(), one.values().end(), two.values().begin() + 6 * 1024);
    Tensor zz = dgfd::encoder_forward(cfg, enc, two);
    for (size_t f = 0; f < 64; ++f) CHECK(zz(0, f) == zz(1, f));

    CHECK_THROWS_AS(dgfd::encoder_forward(cfg, enc, random_batch(1, 5, 1024, 2)), std::invalid_argument);
}

TEST_CASE("batch rows are independent: permuting inputs permutes outputs") {
    ModelConfig cfg = small_config();
    auto [enc, head] = dgfd::init_params(cfg, 8);
    (void)head;
    Tensor batch = random_batch(4, 2, 64, 12);
    Tensor perm({4, 2, 64});
    size_t order[4] = {2, 0, 3, 1};
    for (size_t i = 0; i < 4; ++i)
        std::copy(&batch(order[i], 0, 0), &batch(order[i], 0, 0) + 2 * 64, &perm(i, 0, 0));
    Tensor za = dgfd::encoder_forward(cfg, enc, batch);
    Tensor zb = dgfd::encoder_forward(cfg, enc, perm);
    for (size_t i = 0; i < 4; ++i)
        for (size_t f = 0; f < 8; ++f) CHECK(zb(i, f) == za(order[i], f));
}

TEST_CASE("head: zero params give uniform softmax, empty batch gives [0,T]") {
    ModelConfig cfg;
    HeadParams head;
    head.p.add("fc1.w", Tensor({64, 32}));
    head.p.add("fc1.b", Tensor({32}));
    head.p.add("fc2.w", Tensor({32, 4}));
    head.p.add("fc2.b", Tensor({4}));
    Tensor z = random_batch(1, 1, 3 * 64, 4);
    Tensor logits = dgfd::head_forward(cfg, head, Tensor({3, 64}, z.values()));
    CHECK(logits.shape() == std::vector<size_t>{3, 4});
    for (double v : logits.values()) CHECK(v == 0.0);

    Tensor empty = dgfd::head_forward(cfg, head, Tensor({0, 64}));
    CHECK(empty.shape() == std::vector<size_t>{0, 4});
}

TEST_CASE("head matches a hand-computed affine-relu-affine chain") {
    ModelConfig cfg = small_config();
    auto [enc, head] = dgfd::init_params(cfg, 31);
    (void)enc;
    std::mt19937_64 rng(14);
    std::normal_distribution<double> d(0.0, 1.0);
    for (const auto& name : head.p.names())
        for (double& v : head.p.at(name).values()) v = d(rng);

    Tensor z({2, 8});
    for (double& v : z.values()) v = d(rng);
    Tensor logits = dgfd::head_forward(cfg, head, z);

    const Tensor& w1 = head.p.at("fc1.w");
    const Tensor& b1 = head.p.at("fc1.b");
    const Tensor& w2 = head.p.at("fc2.w");
    const Tensor& b2 = head.p.at("fc2.b");
    for (size_t r = 0; r < 2; ++r) {
        std::vector<double> h(5);
        for (size_t j = 0; j < 5; ++j) {
            double acc = b1[j];
            for (size_t i = 0; i < 8; ++i) acc += z(r, i) * w1(i, j);
            h[j] = std::max(0.0, acc);
        }
        for (size_t t = 0; t < 3; ++t) {
            double acc = b2[t];
            for (size_t j = 0; j < 5; ++j) acc += h[j] * w2(j, t);
            CHECK(std::abs(logits(r, t) - acc) < 1e-12);
        }
    }
}

TEST_CASE("cross-entropy gradient through the full model matches finite differences") {
    ModelConfig cfg = small_config();
    auto [enc, head] = dgfd::init_params(cfg, 55);
    ParamVector theta = dgfd::merge_theta(enc, head);
    Tensor batch = random_batch(4, 2, 64, 21);
    std::vector<int> labels{0, 2, 1, 1};
    auto loss = [&](dgfd::ad::Graph& g, const dgfd::ParamBinding& b) {
        dgfd::ad::Var z = dgfd::encoder_graph(g, b, "enc.", g.constant(batch), cfg);
        dgfd::ad::Var logits = dgfd::head_graph(g, b, "head.", z, cfg);
        return g.softmax_cross_entropy(logits, labels);
    };
    ParamVector analytic = dgfd::grad(loss, theta);
    std::vector<double> flat = theta.flatten(), aflat = analytic.flatten();

    // probe 20 random coordinates with central differences
    std::mt19937_64 rng(2);
    const double h = 1e-5;
    for (int probe = 0; probe < 20; ++probe) {
        size_t i = rng() % flat.size();
        ParamVector plus = theta.zeros_like(), minus = theta.zeros_like();
        std::vector<double> fp = flat, fm = flat;
        fp[i] += h;
        fm[i] -= h;
        plus.assign_flat(fp);
        minus.assign_flat(fm);
        double lp = dgfd::loss_and_grad(loss, plus, nullptr);
        double lm = dgfd::loss_and_grad(loss, minus, nullptr);
        double fd = (lp - lm) / (2 * h);
        CHECK(oracles::rel_err(aflat[i], fd, 1e-8) <= 1e-4);
    }
}

TEST_CASE("theta slices invert merge") {
    ModelConfig cfg = small_config();
    auto [enc, head] = dgfd::init_params(cfg, 9);
    ParamVector theta = dgfd::merge_theta(enc, head);
    CHECK(theta.total_size() == enc.p.total_size() + head.p.total_size());
    EncoderParams enc2 = dgfd::encoder_slice(theta);
    HeadParams head2 = dgfd::head_slice(theta);
    CHECK(enc2.p.flatten() == enc.p.flatten());
    CHECK(head2.p.flatten() == head.p.flatten());
    CHECK(enc2.p.names() == enc.p.names());
}

TEST_CASE("model checkpoint round trip") {
    ModelConfig cfg = small_config();
    auto [enc, head] = dgfd::init_params(cfg, 99);
    DgeModel m{cfg, dgfd::merge_theta(enc, head)};
    auto dir = std::filesystem::temp_directory_path() / "dgfd-tests";
    std::filesystem::create_directories(dir);
    auto stem = (dir / "model-ckpt").string();
    dgfd::save_model(m, stem);
    DgeModel back = dgfd::load_model(stem);
    CHECK(back.cfg.kernel_sizes == cfg.kernel_sizes);
    CHECK(back.cfg.num_classes == cfg.num_classes);
    CHECK(back.theta.names() == m.theta.names());
    CHECK(back.theta.flatten() == m.theta.flatten());

    Tensor batch = random_batch(2, 2, 64, 77);
    CHECK(dgfd::model_logits(back, batch).values() == dgfd::model_logits(m, batch).values());
}

}  // TEST_SUITE
