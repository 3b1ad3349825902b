#include "dgfd/tensor.hpp"

#include <cmath>

#include "dgfd/common.hpp"

namespace dgfd {

namespace {
size_t product(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t e : shape) n *= e;
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<size_t> shape) : shape_(std::move(shape)), data_(product(shape_), 0.0) {
    stride0_ = (shape_.size() >= 2 && shape_[0] != 0) ? data_.size() / shape_[0] : 0;
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check(product(shape_) == data_.size(),
          cat("tensor: shape ", shape_str(shape_), " does not match data length ", data_.size()));
    stride0_ = (shape_.size() >= 2 && shape_[0] != 0) ? data_.size() / shape_[0] : 0;
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(std::vector<size_t> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

size_t Tensor::extent(size_t axis) const {
    check(axis < shape_.size(), cat("tensor: axis ", axis, " out of range for shape ", shape_str(shape_)));
    return shape_[axis];
}

double Tensor::item() const {
    check(data_.size() == 1, cat("tensor: item() on non-scalar shape ", shape_str(shape_)));
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string shape_str(const std::vector<size_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace dgfd
