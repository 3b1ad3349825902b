#include "dgfd/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "dgfd/common.hpp"

namespace dgfd::ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

// ---------------------------------------------------------------------------
// Node plumbing
// ---------------------------------------------------------------------------

int Graph::push(Tensor value, std::vector<int> inputs, std::function<void(Graph&, int)> backprop) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backprop = std::move(backprop);
    for (int i : n.inputs) n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Graph::Node& Graph::node(Var v) {
    check(v.g == this && v.node >= 0 && v.node < static_cast<int>(nodes_.size()),
          "graph: var does not belong to this graph");
    return nodes_[v.node];
}

const Graph::Node& Graph::cnode(Var v) const {
    check(v.g == this && v.node >= 0 && v.node < static_cast<int>(nodes_.size()),
          "graph: var does not belong to this graph");
    return nodes_[v.node];
}

Tensor& Graph::grad_buf(int idx) {
    Node& n = nodes_[idx];
    if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
    return n.grad;
}

Var Graph::leaf(Tensor value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::value(Var v) const { return cnode(v).value; }

const Tensor& Graph::grad(Var v) const {
    const Node& n = cnode(v);
    check(n.grad.size() != 0, "graph: grad() before backward(), or node not reached");
    return n.grad;
}

void Graph::backward(Var loss) {
    check(!ran_backward_, "graph: backward() may run only once per graph");
    const Node& ln = cnode(loss);
    check(ln.value.is_scalar(), cat("graph: backward needs a scalar loss, got shape ", shape_str(ln.value.shape())));
    ran_backward_ = true;

    // Mark ancestors of the loss; each is visited once in reverse tape order.
    std::vector<char> marked(nodes_.size(), 0);
    std::vector<int> stack{loss.node};
    marked[loss.node] = 1;
    while (!stack.empty()) {
        int i = stack.back();
        stack.pop_back();
        for (int in : nodes_[i].inputs)
            if (!marked[in]) {
                marked[in] = 1;
                stack.push_back(in);
            }
    }

    grad_buf(loss.node)[0] = 1.0;
    for (int i = loss.node; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!marked[i] || !n.needs_grad || !n.backprop || n.grad.size() == 0) continue;
        n.backprop(*this, i);
    }
    // Untouched grads of requested leaves read as zeros.
    for (size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].needs_grad && nodes_[i].grad.size() == 0) grad_buf(static_cast<int>(i));
}

// ---------------------------------------------------------------------------
// Elementwise / shape ops
// ---------------------------------------------------------------------------

namespace {
void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    check(a.same_shape(b), cat(op, ": shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
}
}  // namespace

Var Graph::add(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    check_same_shape("add", va, vb);
    Tensor out = va;
    for (size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    int ia = a.node, ib = b.node;
    int idx = push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        if (g.nodes_[ia].needs_grad) {
            Tensor& ga = g.grad_buf(ia);
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (g.nodes_[ib].needs_grad) {
            Tensor& gb = g.grad_buf(ib);
            for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
        }
    });
    return {this, idx};
}

Var Graph::sub(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    check_same_shape("sub", va, vb);
    Tensor out = va;
    for (size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
    int ia = a.node, ib = b.node;
    int idx = push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        if (g.nodes_[ia].needs_grad) {
            Tensor& ga = g.grad_buf(ia);
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (g.nodes_[ib].needs_grad) {
            Tensor& gb = g.grad_buf(ib);
            for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
        }
    });
    return {this, idx};
}

Var Graph::mul(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    check_same_shape("mul", va, vb);
    Tensor out = va;
    for (size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    int ia = a.node, ib = b.node;
    int idx = push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor &va2 = g.nodes_[ia].value, &vb2 = g.nodes_[ib].value;
        if (g.nodes_[ia].needs_grad) {
            Tensor& ga = g.grad_buf(ia);
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb2[i];
        }
        if (g.nodes_[ib].needs_grad) {
            Tensor& gb = g.grad_buf(ib);
            for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va2[i];
        }
    });
    return {this, idx};
}

Var Graph::scale(Var a, double c) {
    Tensor out = value(a);
    for (size_t i = 0; i < out.size(); ++i) out[i] *= c;
    int ia = a.node;
    int idx = push(std::move(out), {ia}, [ia, c](Graph& g, int self) {
        if (!g.nodes_[ia].needs_grad) return;
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_buf(ia);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
    });
    return {this, idx};
}

Var Graph::relu(Var a) {
    Tensor out = value(a);
    for (size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    int ia = a.node;
    int idx = push(std::move(out), {ia}, [ia](Graph& g, int self) {
        if (!g.nodes_[ia].needs_grad) return;
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& va = g.nodes_[ia].value;
        Tensor& ga = g.grad_buf(ia);
        for (size_t i = 0; i < go.size(); ++i)
            if (va[i] > 0.0) ga[i] += go[i];
    });
    return {this, idx};
}

Var Graph::sigmoid(Var a) {
    Tensor out = value(a);
    for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    int ia = a.node;
    int idx = push(std::move(out), {ia}, [ia](Graph& g, int self) {
        if (!g.nodes_[ia].needs_grad) return;
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& s = g.nodes_[self].value;
        Tensor& ga = g.grad_buf(ia);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s[i] * (1.0 - s[i]);
    });
    return {this, idx};
}

Var Graph::reshape(Var a, std::vector<size_t> shape) {
    const Tensor& va = value(a);
    Tensor out(std::move(shape), va.values());
    int ia = a.node;
    int idx = push(std::move(out), {ia}, [ia](Graph& g, int self) {
        if (!g.nodes_[ia].needs_grad) return;
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_buf(ia);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
    return {this, idx};
}

Var Graph::sum(Var a) {
    const Tensor& va = value(a);
    double s = 0.0;
    for (size_t i = 0; i < va.size(); ++i) s += va[i];
    int ia = a.node;
    int idx = push(Tensor::scalar(s), {ia}, [ia](Graph& g, int self) {
        if (!g.nodes_[ia].needs_grad) return;
        double go = g.nodes_[self].grad[0];
        Tensor& ga = g.grad_buf(ia);
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += go;
    });
    return {this, idx};
}

Var Graph::mean(Var a) {
    const Tensor& va = value(a);
    check(va.size() > 0, "mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(va.size()));
}

// ---------------------------------------------------------------------------
// Layer ops
// ---------------------------------------------------------------------------

Var Graph::matmul(Var x, Var w) {
    const Tensor &vx = value(x), &vw = value(w);
    check(vx.ndim() == 2 && vw.ndim() == 2,
          cat("matmul: need 2-D operands, got ", shape_str(vx.shape()), " x ", shape_str(vw.shape())));
    check(vx.extent(1) == vw.extent(0),
          cat("matmul: inner extents differ, ", shape_str(vx.shape()), " x ", shape_str(vw.shape())));
    size_t B = vx.extent(0), I = vx.extent(1), O = vw.extent(1);
    Tensor out({B, O});
    if (B > 0) {
        CMatMap X(vx.data(), B, I), W(vw.data(), I, O);
        MatMap(out.data(), B, O).noalias() = X * W;
    }
    int ix = x.node, iw = w.node;
    int idx = push(std::move(out), {ix, iw}, [ix, iw, B, I, O](Graph& g, int self) {
        if (B == 0) return;
        CMatMap G(g.nodes_[self].grad.data(), B, O);
        CMatMap X(g.nodes_[ix].value.data(), B, I), W(g.nodes_[iw].value.data(), I, O);
        if (g.nodes_[ix].needs_grad) MatMap(g.grad_buf(ix).data(), B, I).noalias() += G * W.transpose();
        if (g.nodes_[iw].needs_grad) MatMap(g.grad_buf(iw).data(), I, O).noalias() += X.transpose() * G;
    });
    return {this, idx};
}

Var Graph::add_bias(Var x, Var b) {
    const Tensor &vx = value(x), &vb = value(b);
    check(vx.ndim() == 2 && vb.ndim() == 1 && vx.extent(1) == vb.extent(0),
          cat("add_bias: need [B,F] + [F], got ", shape_str(vx.shape()), " + ", shape_str(vb.shape())));
    size_t B = vx.extent(0), F = vx.extent(1);
    Tensor out = vx;
    for (size_t i = 0; i < B; ++i)
        for (size_t j = 0; j < F; ++j) out(i, j) += vb[j];
    int ix = x.node, ib = b.node;
    int idx = push(std::move(out), {ix, ib}, [ix, ib, B, F](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        if (g.nodes_[ix].needs_grad) {
            Tensor& gx = g.grad_buf(ix);
            for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
        }
        if (g.nodes_[ib].needs_grad) {
            Tensor& gb = g.grad_buf(ib);
            for (size_t i = 0; i < B; ++i)
                for (size_t j = 0; j < F; ++j) gb[j] += go(i, j);
        }
    });
    return {this, idx};
}

namespace {
// Gather conv patches of one sample into a [C*K, Lout] column matrix.
void im2col(const Tensor& x, size_t b, size_t C, size_t K, size_t Lout, int stride, double* col) {
    for (size_t c = 0; c < C; ++c) {
        for (size_t k = 0; k < K; ++k) {
            const double* src = &x(b, c, k);
            double* dst = col + (c * K + k) * Lout;
            if (stride == 1) {
                std::memcpy(dst, src, Lout * sizeof(double));
            } else {
                for (size_t l = 0; l < Lout; ++l) dst[l] = src[l * stride];
            }
        }
    }
}
}  // namespace

Var Graph::conv1d(Var x, Var w, Var b, int stride) {
    const Tensor &vx = value(x), &vw = value(w), &vb = value(b);
    check(stride >= 1, cat("conv1d: stride must be >= 1, got ", stride));
    check(vx.ndim() == 3, cat("conv1d: input must be [batch,channels,length], got ", shape_str(vx.shape())));
    check(vw.ndim() == 3, cat("conv1d: weight must be [out,in,kernel], got ", shape_str(vw.shape())));
    check(vx.extent(1) == vw.extent(1),
          cat("conv1d: channel mismatch, input ", shape_str(vx.shape()), " vs weight ", shape_str(vw.shape())));
    check(vb.ndim() == 1 && vb.extent(0) == vw.extent(0),
          cat("conv1d: bias ", shape_str(vb.shape()), " vs weight ", shape_str(vw.shape())));
    size_t B = vx.extent(0), C = vx.extent(1), L = vx.extent(2);
    size_t O = vw.extent(0), K = vw.extent(2);
    check(L >= K, cat("conv1d: input length ", L, " shorter than kernel ", K));
    size_t Lout = (L - K) / static_cast<size_t>(stride) + 1;

    Tensor out({B, O, Lout});
    {
        std::vector<double> colbuf(C * K * Lout);
        CMatMap W(vw.data(), O, C * K);
        for (size_t i = 0; i < B; ++i) {
            im2col(vx, i, C, K, Lout, stride, colbuf.data());
            CMatMap col(colbuf.data(), C * K, Lout);
            MatMap Y(&out(i, 0, 0), O, Lout);
            Y.noalias() = W * col;
            for (size_t o = 0; o < O; ++o) Y.row(o).array() += vb[o];
        }
    }
    int ix = x.node, iw = w.node, ib = b.node;
    int idx = push(std::move(out), {ix, iw, ib}, [=](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& vx2 = g.nodes_[ix].value;
        const Tensor& vw2 = g.nodes_[iw].value;
        bool nx = g.nodes_[ix].needs_grad, nw = g.nodes_[iw].needs_grad, nb = g.nodes_[ib].needs_grad;
        std::vector<double> colbuf(C * K * Lout);
        std::vector<double> dcolbuf(nx ? C * K * Lout : 0);
        for (size_t i = 0; i < B; ++i) {
            CMatMap G(&go(i, 0, 0), O, Lout);
            if (nw) {
                im2col(vx2, i, C, K, Lout, stride, colbuf.data());
                CMatMap col(colbuf.data(), C * K, Lout);
                MatMap(g.grad_buf(iw).data(), O, C * K).noalias() += G * col.transpose();
            }
            if (nb) {
                Tensor& gb = g.grad_buf(ib);
                for (size_t o = 0; o < O; ++o) gb[o] += G.row(o).sum();
            }
            if (nx) {
                CMatMap W(vw2.data(), O, C * K);
                MatMap dcol(dcolbuf.data(), C * K, Lout);
                dcol.noalias() = W.transpose() * G;
                Tensor& gx = g.grad_buf(ix);
                for (size_t c = 0; c < C; ++c)
                    for (size_t k = 0; k < K; ++k) {
                        const double* src = dcolbuf.data() + (c * K + k) * Lout;
                        double* dst = &gx(i, c, k);
                        for (size_t l = 0; l < Lout; ++l) dst[l * stride] += src[l];
                    }
            }
        }
    });
    return {this, idx};
}

Var Graph::max_pool1d(Var x, int pool) {
    const Tensor& vx = value(x);
    check(pool >= 1, cat("max_pool1d: pool must be >= 1, got ", pool));
    check(vx.ndim() == 3, cat("max_pool1d: input must be [batch,channels,length], got ", shape_str(vx.shape())));
    size_t B = vx.extent(0), C = vx.extent(1), L = vx.extent(2);
    size_t p = static_cast<size_t>(pool);
    check(L >= p, cat("max_pool1d: length ", L, " shorter than pool ", pool));
    size_t Lout = L / p;
    Tensor out({B, C, Lout});
    for (size_t i = 0; i < B; ++i)
        for (size_t c = 0; c < C; ++c)
            for (size_t l = 0; l < Lout; ++l) {
                const double* w = &vx(i, c, l * p);
                double m = w[0];
                for (size_t k = 1; k < p; ++k) m = std::max(m, w[k]);
                out(i, c, l) = m;
            }
    int ix = x.node;
    int idx = push(std::move(out), {ix}, [ix, B, C, Lout, p](Graph& g, int self) {
        if (!g.nodes_[ix].needs_grad) return;
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& vx2 = g.nodes_[ix].value;
        Tensor& gx = g.grad_buf(ix);
        for (size_t i = 0; i < B; ++i)
            for (size_t c = 0; c < C; ++c)
                for (size_t l = 0; l < Lout; ++l) {
                    const double* w = &vx2(i, c, l * p);
                    size_t best = 0;
                    for (size_t k = 1; k < p; ++k)
                        if (w[k] > w[best]) best = k;  // first max wins ties
                    gx(i, c, l * p + best) += go(i, c, l);
                }
    });
    return {this, idx};
}

Var Graph::global_avg_pool1d(Var x) {
    const Tensor& vx = value(x);
    check(vx.ndim() == 3,
          cat("global_avg_pool1d: input must be [batch,channels,length], got ", shape_str(vx.shape())));
    size_t B = vx.extent(0), C = vx.extent(1), L = vx.extent(2);
    check(L >= 1, "global_avg_pool1d: zero length");
    Tensor out({B, C});
    for (size_t i = 0; i < B; ++i)
        for (size_t c = 0; c < C; ++c) {
            double s = 0.0;
            const double* w = &vx(i, c, 0);
            for (size_t l = 0; l < L; ++l) s += w[l];
            out(i, c) = s / static_cast<double>(L);
        }
    int ix = x.node;
    int idx = push(std::move(out), {ix}, [ix, B, C, L](Graph& g, int self) {
        if (!g.nodes_[ix].needs_grad) return;
        const Tensor& go = g.nodes_[self].grad;
        Tensor& gx = g.grad_buf(ix);
        double inv = 1.0 / static_cast<double>(L);
        for (size_t i = 0; i < B; ++i)
            for (size_t c = 0; c < C; ++c) {
                double v = go(i, c) * inv;
                double* dst = &gx(i, c, 0);
                for (size_t l = 0; l < L; ++l) dst[l] += v;
            }
    });
    return {this, idx};
}

Var Graph::concat_cols(const std::vector<Var>& xs) {
    check(!xs.empty(), "concat: no inputs");
    size_t B = value(xs[0]).extent(0), total = 0;
    std::vector<int> in;
    std::vector<size_t> widths;
    for (const Var& v : xs) {
        const Tensor& t = value(v);
        check(t.ndim() == 2, cat("concat: inputs must be 2-D, got ", shape_str(t.shape())));
        check(t.extent(0) == B,
              cat("concat: row mismatch, ", t.extent(0), " vs ", B));
        widths.push_back(t.extent(1));
        total += t.extent(1);
        in.push_back(v.node);
    }
    Tensor out({B, total});
    size_t off = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
        const Tensor& t = value(xs[k]);
        for (size_t i = 0; i < B; ++i)
            std::memcpy(&out(i, off), &t(i, 0), widths[k] * sizeof(double));
        off += widths[k];
    }
    int idx = push(std::move(out), in, [in, widths, B, total](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        size_t off2 = 0;
        for (size_t k = 0; k < in.size(); ++k) {
            if (g.nodes_[in[k]].needs_grad) {
                Tensor& gi = g.grad_buf(in[k]);
                for (size_t i = 0; i < B; ++i)
                    for (size_t j = 0; j < widths[k]; ++j) gi(i, j) += go(i, off2 + j);
            }
            off2 += widths[k];
        }
    });
    return {this, idx};
}

Var Graph::softmax(Var logits) {
    const Tensor& vz = value(logits);
    check(vz.ndim() == 2, cat("softmax: input must be [batch,classes], got ", shape_str(vz.shape())));
    size_t B = vz.extent(0), T = vz.extent(1);
    check(T >= 1, "softmax: zero classes");
    Tensor out({B, T});
    for (size_t i = 0; i < B; ++i) {
        double m = vz(i, 0);
        for (size_t t = 1; t < T; ++t) m = std::max(m, vz(i, t));
        double s = 0.0;
        for (size_t t = 0; t < T; ++t) {
            out(i, t) = std::exp(vz(i, t) - m);
            s += out(i, t);
        }
        for (size_t t = 0; t < T; ++t) out(i, t) /= s;
    }
    int iz = logits.node;
    int idx = push(std::move(out), {iz}, [iz, B, T](Graph& g, int self) {
        if (!g.nodes_[iz].needs_grad) return;
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& s = g.nodes_[self].value;
        Tensor& gz = g.grad_buf(iz);
        for (size_t i = 0; i < B; ++i) {
            double dot = 0.0;
            for (size_t t = 0; t < T; ++t) dot += go(i, t) * s(i, t);
            for (size_t t = 0; t < T; ++t) gz(i, t) += s(i, t) * (go(i, t) - dot);
        }
    });
    return {this, idx};
}

Var Graph::softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
    const Tensor& vz = value(logits);
    check(vz.ndim() == 2, cat("cross_entropy: logits must be [batch,classes], got ", shape_str(vz.shape())));
    size_t B = vz.extent(0), T = vz.extent(1);
    check(B > 0, "cross_entropy: empty batch");
    check(labels.size() == B, cat("cross_entropy: ", labels.size(), " labels for batch ", B));
    for (size_t i = 0; i < B; ++i)
        check(labels[i] >= 0 && static_cast<size_t>(labels[i]) < T,
              cat("cross_entropy: label ", labels[i], " out of range [0,", T, ") at row ", i));
    double loss = 0.0;
    for (size_t i = 0; i < B; ++i) {
        double m = vz(i, 0);
        for (size_t t = 1; t < T; ++t) m = std::max(m, vz(i, t));
        double s = 0.0;
        for (size_t t = 0; t < T; ++t) s += std::exp(vz(i, t) - m);
        loss += m + std::log(s) - vz(i, static_cast<size_t>(labels[i]));
    }
    loss /= static_cast<double>(B);
    int iz = logits.node;
    int idx = push(Tensor::scalar(loss), {iz}, [iz, B, T, labels](Graph& g, int self) {
        if (!g.nodes_[iz].needs_grad) return;
        double go = g.nodes_[self].grad[0] / static_cast<double>(B);
        const Tensor& vz2 = g.nodes_[iz].value;
        Tensor& gz = g.grad_buf(iz);
        for (size_t i = 0; i < B; ++i) {
            double m = vz2(i, 0);
            for (size_t t = 1; t < T; ++t) m = std::max(m, vz2(i, t));
            double s = 0.0;
            for (size_t t = 0; t < T; ++t) s += std::exp(vz2(i, t) - m);
            for (size_t t = 0; t < T; ++t) {
                double p = std::exp(vz2(i, t) - m) / s;
                gz(i, t) += go * (p - (static_cast<size_t>(labels[i]) == t ? 1.0 : 0.0));
            }
        }
    });
    return {this, idx};
}

}  // namespace dgfd::ad
