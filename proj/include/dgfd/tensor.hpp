#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dgfd {

/// Dense row-major tensor of 64-bit reals. Shapes are immutable after
/// construction; data is mutable through data()/operator().
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<size_t> shape);  // zero-filled
    Tensor(std::vector<size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor full(std::vector<size_t> shape, double v);

    const std::vector<size_t>& shape() const { return shape_; }
    size_t ndim() const { return shape_.size(); }
    size_t extent(size_t axis) const;
    size_t size() const { return data_.size(); }
    bool is_scalar() const { return data_.size() == 1; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& operator()(size_t i, size_t j) { return data_[i * stride0_ + j]; }
    const double& operator()(size_t i, size_t j) const { return data_[i * stride0_ + j]; }
    double& operator()(size_t i, size_t j, size_t k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
    const double& operator()(size_t i, size_t j, size_t k) const { return data_[(i * shape_[1] + j) * shape_[2] + k]; }

    /// Value of a one-element tensor; throws otherwise.
    double item() const;

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
    size_t stride0_ = 0;  // row stride for 2-D+ access
};

std::string shape_str(const std::vector<size_t>& shape);

}  // namespace dgfd
