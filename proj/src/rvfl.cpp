#include "dgfd/rvfl.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <Eigen/Dense>

#include "json.hpp"

#include "dgfd/common.hpp"

namespace dgfd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

ConstMap map2d(const Tensor& t) {
    return ConstMap(t.data(), static_cast<Eigen::Index>(t.extent(0)), static_cast<Eigen::Index>(t.extent(1)));
}

}  // namespace

Tensor one_hot(const std::vector<int>& labels, int num_classes) {
    check(num_classes >= 2, "one_hot: need at least 2 classes");
    Tensor y({labels.size(), static_cast<size_t>(num_classes)});
    for (size_t i = 0; i < labels.size(); ++i) {
        check(labels[i] >= 0 && labels[i] < num_classes,
              cat("one_hot: label ", labels[i], " out of [0,", num_classes, ")"));
        y(i, static_cast<size_t>(labels[i])) = 1.0;
    }
    return y;
}

FeatureMatrix make_features(Tensor Z, const std::vector<int>& labels, int num_classes) {
    check(Z.ndim() == 2, cat("make_features: want [n,J], got ", shape_str(Z.shape())));
    check(Z.extent(0) == labels.size(),
          cat("make_features: ", Z.extent(0), " rows but ", labels.size(), " labels"));
    FeatureMatrix f;
    f.Y = one_hot(labels, num_classes);
    f.Z = std::move(Z);
    return f;
}

Tensor hidden_layer(const RvflModel& m, const Tensor& Z) {
    check(Z.ndim() == 2, cat("hidden_layer: want [n,J], got ", shape_str(Z.shape())));
    check(Z.extent(1) == m.input_dim(),
          cat("hidden_layer: model takes ", m.input_dim(), " inputs, got ", Z.extent(1)));
    size_t n = Z.extent(0), Q = m.hidden_dim();
    Tensor h({n, Q});
    if (n == 0 || Q == 0) return h;
    Map(h.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(Q)).noalias() =
        map2d(Z) * map2d(m.w).transpose();
    for (size_t r = 0; r < n; ++r)
        for (size_t i = 0; i < Q; ++i) h(r, i) = 1.0 / (1.0 + std::exp(-(h(r, i) + m.b[i])));
    return h;
}

Tensor build_design(const Tensor& Z, const Tensor& H) {
    check(Z.ndim() == 2 && H.ndim() == 2, "build_design: want 2-d Z and H");
    check(Z.extent(0) == H.extent(0),
          cat("build_design: row mismatch ", Z.extent(0), " vs ", H.extent(0)));
    size_t n = Z.extent(0), J = Z.extent(1), Q = H.extent(1);
    Tensor e({n, J + Q});
    for (size_t r = 0; r < n; ++r) {
        if (J) std::memcpy(&e(r, 0), &Z(r, 0), J * sizeof(double));
        if (Q) std::memcpy(&e(r, J), &H(r, 0), Q * sizeof(double));
    }
    return e;
}

Tensor solve_beta(const Tensor& E, const Tensor& Y, double sigma) {
    check(E.ndim() == 2 && Y.ndim() == 2, "solve_beta: want 2-d E and Y");
    check(E.extent(0) == Y.extent(0), cat("solve_beta: E has ", E.extent(0), " rows, Y has ", Y.extent(0)));
    check(sigma >= 0.0, "solve_beta: sigma must be >= 0");
    size_t n = E.extent(0), m = E.extent(1), V = Y.extent(1);
    check(n >= 1 && m >= 1, "solve_beta: empty design");

    if (sigma == 0.0 && m > n)
        fail(cat("solve_beta: E^T E is rank-deficient for a ", n, "x", m, " design; use sigma > 0"));

    ConstMap e = map2d(E);
    ConstMap y = map2d(Y);
    Tensor beta({m, V});
    Map bmap(beta.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(V));

    if (m <= n || sigma == 0.0) {
        Eigen::MatrixXd A = e.transpose() * e;
        A.diagonal().array() += sigma;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() != Eigen::Success)
            fail(cat("solve_beta: E^T E + sigma I is not positive definite (sigma=", sigma,
                     "); use sigma > 0"));
        bmap = llt.solve(e.transpose() * y);
    } else {
        Eigen::MatrixXd G = e * e.transpose();
        G.diagonal().array() += sigma;
        Eigen::LLT<Eigen::MatrixXd> llt(G);
        if (llt.info() != Eigen::Success)
            fail(cat("solve_beta: E E^T + sigma I is not positive definite (sigma=", sigma,
                     "); use sigma > 0"));
        bmap = e.transpose() * llt.solve(y);
    }
    if (!beta.all_finite()) fail("solve_beta: non-finite solution");

    // normal-equation residual, via matvecs so the wide case never forms E^T E
    Eigen::MatrixXd ety = e.transpose() * y;
    Eigen::MatrixXd resid = e.transpose() * (e * bmap) + sigma * bmap - ety;
    double lim = 1e-8 * std::max(1.0, ety.cwiseAbs().maxCoeff());
    double got = resid.cwiseAbs().maxCoeff();
    if (got > lim)
        fail(cat("solve_beta: normal-equation residual ", got, " exceeds ", lim, "; system ill-conditioned"));
    return beta;
}

RvflModel rvfl_train(const FeatureMatrix& data, int hidden, double sigma, uint64_t seed) {
    check(data.Z.ndim() == 2 && data.Y.ndim() == 2, "rvfl_train: want 2-d Z and Y");
    check(data.Z.extent(0) == data.Y.extent(0), "rvfl_train: Z/Y row mismatch");
    check(data.Z.extent(0) >= 1, "rvfl_train: empty training set");
    check(hidden >= 0, "rvfl_train: hidden count must be >= 0");

    size_t J = data.Z.extent(1), Q = static_cast<size_t>(hidden);
    RvflModel m;
    m.sigma = sigma;
    m.seed = seed;
    m.w = Tensor({Q, J});
    m.b = Tensor({Q});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (size_t i = 0; i < m.w.size(); ++i) m.w[i] = u(rng);
    for (size_t i = 0; i < Q; ++i) m.b[i] = u(rng);

    Tensor e = build_design(data.Z, hidden_layer(m, data.Z));
    m.beta = solve_beta(e, data.Y, sigma);
    return m;
}

Tensor rvfl_scores(const RvflModel& m, const Tensor& Z) {
    Tensor e = build_design(Z, hidden_layer(m, Z));
    check(e.extent(1) == m.beta.extent(0),
          cat("rvfl_scores: design width ", e.extent(1), " does not match beta rows ", m.beta.extent(0)));
    size_t n = e.extent(0), V = m.num_classes();
    Tensor out({n, V});
    if (n == 0) return out;
    Map(out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(V)).noalias() =
        map2d(e) * map2d(m.beta);
    return out;
}

std::vector<int> rvfl_predict(const RvflModel& m, const Tensor& Z) {
    Tensor scores = rvfl_scores(m, Z);
    size_t n = scores.extent(0), V = scores.extent(1);
    std::vector<int> out(n);
    for (size_t r = 0; r < n; ++r) {
        size_t best = 0;
        for (size_t v = 1; v < V; ++v)
            if (scores(r, v) > scores(r, best)) best = v;
        out[r] = static_cast<int>(best);
    }
    return out;
}

void save_rvfl(const RvflModel& m, const std::string& stem) {
    nlohmann::json j;
    j["input_dim"] = m.input_dim();
    j["hidden_dim"] = m.hidden_dim();
    j["num_classes"] = m.num_classes();
    j["sigma"] = m.sigma;
    j["seed"] = m.seed;
    std::ofstream js(stem + ".json");
    if (!js) fail(cat("cannot write ", stem, ".json"));
    js << j.dump(2) << "\n";

    std::ofstream bin(stem + ".bin", std::ios::binary);
    if (!bin) fail(cat("cannot write ", stem, ".bin"));
    for (const Tensor* t : {&m.w, &m.b, &m.beta})
        bin.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
    if (!bin) fail(cat("short write to ", stem, ".bin"));
}

RvflModel load_rvfl(const std::string& stem) {
    std::ifstream js(stem + ".json");
    if (!js) fail(cat("cannot open ", stem, ".json"));
    nlohmann::json j = nlohmann::json::parse(js);
    size_t J = j.at("input_dim").get<size_t>();
    size_t Q = j.at("hidden_dim").get<size_t>();
    size_t V = j.at("num_classes").get<size_t>();

    RvflModel m;
    m.sigma = j.at("sigma").get<double>();
    m.seed = j.at("seed").get<uint64_t>();
    m.w = Tensor({Q, J});
    m.b = Tensor({Q});
    m.beta = Tensor({J + Q, V});
    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) fail(cat("cannot open ", stem, ".bin"));
    for (Tensor* t : {&m.w, &m.b, &m.beta}) {
        bin.read(reinterpret_cast<char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
        if (static_cast<size_t>(bin.gcount()) != t->size() * sizeof(double))
            fail(cat(stem, ".bin: truncated"));
    }
    return m;
}

}  // namespace dgfd
