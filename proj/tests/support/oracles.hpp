#pragma once

// Independent numeric oracles used by the tests. Everything here is written
// with plain loops on purpose: these must not share a code path with the
// library routines they check.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "dgfd/params.hpp"

namespace oracles {

// Central finite differences of a scalar loss, one coordinate at a time.
inline dgfd::ParamVector fd_grad(const dgfd::LossBuilder& f, const dgfd::ParamVector& p, double h) {
    dgfd::ParamVector g = p.zeros_like();
    std::vector<double> flat = p.flatten();
    std::vector<double> gflat(flat.size());
    for (size_t i = 0; i < flat.size(); ++i) {
        dgfd::ParamVector pp = p;
        std::vector<double> fplus = flat, fminus = flat;
        fplus[i] += h;
        fminus[i] -= h;
        pp.assign_flat(fplus);
        double lp = dgfd::loss_and_grad(f, pp, nullptr);
        pp.assign_flat(fminus);
        double lm = dgfd::loss_and_grad(f, pp, nullptr);
        gflat[i] = (lp - lm) / (2.0 * h);
    }
    g.assign_flat(gflat);
    return g;
}

// Dense Hessian from finite differences of analytic gradients (column j =
// (grad(p + d e_j) - grad(p - d e_j)) / 2d), then an explicit H*v.
inline dgfd::ParamVector dense_hessian_vp(const dgfd::LossBuilder& f, const dgfd::ParamVector& p,
                                          const dgfd::ParamVector& v, double d) {
    size_t n = p.total_size();
    std::vector<double> flat = p.flatten();
    std::vector<std::vector<double>> H(n, std::vector<double>(n, 0.0));
    for (size_t j = 0; j < n; ++j) {
        dgfd::ParamVector pp = p;
        std::vector<double> fplus = flat, fminus = flat;
        fplus[j] += d;
        fminus[j] -= d;
        pp.assign_flat(fplus);
        std::vector<double> gp = dgfd::grad(f, pp).flatten();
        pp.assign_flat(fminus);
        std::vector<double> gm = dgfd::grad(f, pp).flatten();
        for (size_t i = 0; i < n; ++i) H[i][j] = (gp[i] - gm[i]) / (2.0 * d);
    }
    std::vector<double> vf = v.flatten(), out(n, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) out[i] += H[i][j] * vf[j];
    dgfd::ParamVector r = p.zeros_like();
    r.assign_flat(out);
    return r;
}

inline double rel_err(double got, double want, double floor = 1e-9) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), floor});
}

// Conjugate gradient on the ridge normal equations, run to machine-level
// residual. Minimizes ||Y - E beta||^2 + sigma ||beta||^2 column by column
// without any factorization. Plain loops, no Eigen.
inline std::vector<std::vector<double>> ridge_iterative(const std::vector<std::vector<double>>& E,
                                                        const std::vector<std::vector<double>>& Y,
                                                        double sigma) {
    size_t n = E.size(), d = E.empty() ? 0 : E[0].size(), V = Y.empty() ? 0 : Y[0].size();
    // A = E^T E + sigma I, b_v = E^T y_v
    std::vector<std::vector<double>> A(d, std::vector<double>(d, 0.0));
    for (size_t r = 0; r < n; ++r)
        for (size_t i = 0; i < d; ++i)
            for (size_t j = 0; j < d; ++j) A[i][j] += E[r][i] * E[r][j];
    for (size_t i = 0; i < d; ++i) A[i][i] += sigma;

    auto matvec = [&](const std::vector<double>& x) {
        std::vector<double> y(d, 0.0);
        for (size_t i = 0; i < d; ++i)
            for (size_t j = 0; j < d; ++j) y[i] += A[i][j] * x[j];
        return y;
    };

    std::vector<std::vector<double>> beta(d, std::vector<double>(V, 0.0));
    for (size_t v = 0; v < V; ++v) {
        std::vector<double> b(d, 0.0);
        for (size_t r = 0; r < n; ++r)
            for (size_t i = 0; i < d; ++i) b[i] += E[r][i] * Y[r][v];
        std::vector<double> x(d, 0.0), res = b, dir = b;
        double rs = 0.0;
        for (double t : res) rs += t * t;
        for (size_t it = 0; it < 20 * d + 100 && rs > 1e-28; ++it) {
            std::vector<double> Ad = matvec(dir);
            double dAd = 0.0;
            for (size_t i = 0; i < d; ++i) dAd += dir[i] * Ad[i];
            if (dAd <= 0.0) break;
            double alpha = rs / dAd;
            for (size_t i = 0; i < d; ++i) {
                x[i] += alpha * dir[i];
                res[i] -= alpha * Ad[i];
            }
            double rs_new = 0.0;
            for (double t : res) rs_new += t * t;
            for (size_t i = 0; i < d; ++i) dir[i] = res[i] + (rs_new / rs) * dir[i];
            rs = rs_new;
        }
        for (size_t i = 0; i < d; ++i) beta[i][v] = x[i];
    }
    return beta;
}

// Radix-2 FFT magnitude spectrum (power of two length only).
inline std::vector<double> fft_magnitude(const std::vector<double>& x) {
    size_t n = x.size();
    std::vector<double> re(x), im(n, 0.0);
    // bit reversal
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * M_PI / static_cast<double>(len);
        double wr = std::cos(ang), wi = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t k = 0; k < len / 2; ++k) {
                double ur = re[i + k], ui = im[i + k];
                double vr = re[i + k + len / 2] * cr - im[i + k + len / 2] * ci;
                double vi = re[i + k + len / 2] * ci + im[i + k + len / 2] * cr;
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
    std::vector<double> mag(n / 2);
    for (size_t i = 0; i < n / 2; ++i) mag[i] = std::hypot(re[i], im[i]);
    return mag;
}

}  // namespace oracles
