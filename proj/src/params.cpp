#include "dgfd/params.hpp"

#include <cmath>
#include <cstring>

#include "dgfd/common.hpp"

namespace dgfd {

void ParamVector::add(const std::string& name, Tensor t) {
    check(!index_.count(name), cat("params: duplicate slot name '", name, "'"));
    index_[name] = slots_.size();
    names_.push_back(name);
    slots_.push_back(std::move(t));
}

Tensor& ParamVector::at(const std::string& name) {
    auto it = index_.find(name);
    check(it != index_.end(), cat("params: no slot named '", name, "'"));
    return slots_[it->second];
}

const Tensor& ParamVector::at(const std::string& name) const {
    auto it = index_.find(name);
    check(it != index_.end(), cat("params: no slot named '", name, "'"));
    return slots_[it->second];
}

size_t ParamVector::total_size() const {
    size_t n = 0;
    for (const Tensor& t : slots_) n += t.size();
    return n;
}

std::vector<double> ParamVector::flatten() const {
    std::vector<double> flat;
    flat.reserve(total_size());
    for (const Tensor& t : slots_) flat.insert(flat.end(), t.values().begin(), t.values().end());
    return flat;
}

void ParamVector::assign_flat(const std::vector<double>& flat) {
    check(flat.size() == total_size(),
          cat("params: flat length ", flat.size(), " does not match total size ", total_size()));
    size_t off = 0;
    for (Tensor& t : slots_) {
        std::memcpy(t.data(), flat.data() + off, t.size() * sizeof(double));
        off += t.size();
    }
}

ParamVector ParamVector::zeros_like() const {
    ParamVector out;
    for (size_t i = 0; i < slots_.size(); ++i) out.add(names_[i], Tensor(slots_[i].shape()));
    return out;
}

namespace {
void check_same_slots(const ParamVector& a, const ParamVector& b) {
    check(a.slot_count() == b.slot_count() && a.names() == b.names(), "params: slot structures differ");
}
}  // namespace

void ParamVector::axpy(double a, const ParamVector& x) {
    check_same_slots(*this, x);
    for (size_t s = 0; s < slots_.size(); ++s) {
        const Tensor& xs = x.slots_[s];
        Tensor& ts = slots_[s];
        check(ts.same_shape(xs), cat("params: slot '", names_[s], "' shape mismatch"));
        for (size_t i = 0; i < ts.size(); ++i) ts[i] += a * xs[i];
    }
}

void ParamVector::scale(double a) {
    for (Tensor& t : slots_)
        for (size_t i = 0; i < t.size(); ++i) t[i] *= a;
}

double ParamVector::dot(const ParamVector& other) const {
    check_same_slots(*this, other);
    double s = 0.0;
    for (size_t k = 0; k < slots_.size(); ++k)
        for (size_t i = 0; i < slots_[k].size(); ++i) s += slots_[k][i] * other.slots_[k][i];
    return s;
}

double ParamVector::norm() const { return std::sqrt(dot(*this)); }

double ParamVector::inf_norm() const {
    double m = 0.0;
    for (const Tensor& t : slots_)
        for (size_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t[i]));
    return m;
}

bool ParamVector::all_finite() const {
    for (const Tensor& t : slots_)
        if (!t.all_finite()) return false;
    return true;
}

ParamVector ParamVector::subset(const std::string& prefix) const {
    ParamVector out;
    for (size_t i = 0; i < names_.size(); ++i)
        if (names_[i].rfind(prefix, 0) == 0) out.add(names_[i].substr(prefix.size()), slots_[i]);
    return out;
}

void ParamVector::merge(const std::string& prefix, const ParamVector& other) {
    for (size_t i = 0; i < other.names_.size(); ++i) add(prefix + other.names_[i], other.slots_[i]);
}

// ---------------------------------------------------------------------------
// Graph binding, grad, hvp
// ---------------------------------------------------------------------------

ad::Var ParamBinding::at(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return vars[i];
    throw std::invalid_argument(cat("binding: no var named '", name, "'"));
}

ParamBinding bind_params(ad::Graph& g, const ParamVector& p, bool needs_grad) {
    ParamBinding b;
    for (const std::string& name : p.names()) {
        b.names.push_back(name);
        b.vars.push_back(g.leaf(p.at(name), needs_grad));
    }
    return b;
}

ParamVector collect_grads(const ad::Graph& g, const ParamBinding& binding) {
    ParamVector out;
    for (size_t i = 0; i < binding.names.size(); ++i) out.add(binding.names[i], g.grad(binding.vars[i]));
    return out;
}

double loss_and_grad(const LossBuilder& f, const ParamVector& p, ParamVector* grad_out) {
    ad::Graph g;
    ParamBinding binding = bind_params(g, p, grad_out != nullptr);
    ad::Var loss = f(g, binding);
    const Tensor& lv = g.value(loss);
    check(lv.is_scalar(), cat("grad: loss must be scalar, got shape ", shape_str(lv.shape())));
    if (grad_out) {
        g.backward(loss);
        *grad_out = collect_grads(g, binding);
    }
    return lv.item();
}

ParamVector grad(const LossBuilder& f, const ParamVector& p) {
    ParamVector g;
    loss_and_grad(f, p, &g);
    return g;
}

ParamVector hvp(const LossBuilder& f, const ParamVector& p, const ParamVector& v, double h) {
    check(h > 0.0, cat("hvp: step must be positive, got ", h));
    ParamVector plus = p;
    plus.axpy(h, v);
    ParamVector gp = grad(f, plus);
    ParamVector minus = p;
    minus.axpy(-h, v);
    ParamVector gm = grad(f, minus);
    gp.axpy(-1.0, gm);
    gp.scale(1.0 / (2.0 * h));
    if (!gp.all_finite()) fail("hvp: non-finite result");
    return gp;
}

}  // namespace dgfd
