#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dgfd/graph.hpp"
#include "dgfd/tensor.hpp"

namespace dgfd {

/// Named parameter slots in insertion order. flatten()/assign_flat() walk
/// slots in that order, so flatten -> unflatten is the identity.
class ParamVector {
public:
    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    const std::vector<std::string>& names() const { return names_; }
    size_t slot_count() const { return slots_.size(); }
    size_t total_size() const;

    std::vector<double> flatten() const;
    void assign_flat(const std::vector<double>& flat);

    /// Same slots and shapes, all zeros.
    ParamVector zeros_like() const;

    // In-place arithmetic over matching slot structures.
    void axpy(double a, const ParamVector& x);  // this += a * x
    void scale(double a);
    double dot(const ParamVector& other) const;
    double norm() const;
    double inf_norm() const;
    bool all_finite() const;

    /// Slots whose names start with `prefix`, with the prefix stripped.
    ParamVector subset(const std::string& prefix) const;
    /// Append every slot of `other` under `prefix + name`.
    void merge(const std::string& prefix, const ParamVector& other);

private:
    std::vector<std::string> names_;
    std::vector<Tensor> slots_;
    std::map<std::string, size_t> index_;
};

/// Leaf vars for every slot of a ParamVector, in slot order.
struct ParamBinding {
    std::vector<std::string> names;
    std::vector<ad::Var> vars;
    ad::Var at(const std::string& name) const;
};

ParamBinding bind_params(ad::Graph& g, const ParamVector& p, bool needs_grad = true);
ParamVector collect_grads(const ad::Graph& g, const ParamBinding& binding);

/// Builds a scalar loss node over bound parameters.
using LossBuilder = std::function<ad::Var(ad::Graph&, const ParamBinding&)>;

/// Loss value at p; if grad_out is non-null, also dloss/dp via backward().
double loss_and_grad(const LossBuilder& f, const ParamVector& p, ParamVector* grad_out);

/// dloss/dp for every slot.
ParamVector grad(const LossBuilder& f, const ParamVector& p);

/// Central-difference Hessian-vector product:
/// (grad(p + h v) - grad(p - h v)) / (2 h).
ParamVector hvp(const LossBuilder& f, const ParamVector& p, const ParamVector& v, double h);

}  // namespace dgfd
