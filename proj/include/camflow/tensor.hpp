#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <vector>

#include "camflow/errors.hpp"
#include "camflow/rng.hpp"

namespace camflow {

// Dense row-major double tensor with a shared buffer. Copies are shallow;
// use clone() for a deep copy. Ops never mutate inputs, so sharing is safe;
// the only in-place mutation in the project is the optimizer's parameter
// update between steps.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(count(shape_), 0.0)) {}

    Tensor(std::initializer_list<int64_t> shape) : Tensor(std::vector<int64_t>(shape)) {}

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data().begin(), t.data().end(), v);
        return t;
    }

    static Tensor scalar(double v) { return full({1}, v); }

    static Tensor randn(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
        Tensor t(std::move(shape));
        for (auto& v : t.data()) v = rng.normal() * scale;
        return t;
    }

    static Tensor from(std::vector<int64_t> shape, std::vector<double> values) {
        if (count(shape) != static_cast<int64_t>(values.size()))
            throw ShapeError("Tensor::from: element count mismatch");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::make_shared<std::vector<double>>(std::move(values));
        return t;
    }

    bool defined() const { return static_cast<bool>(data_); }
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t ndim() const { return shape_.size(); }
    int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

    double* ptr() { return data_->data(); }
    const double* ptr() const { return data_->data(); }
    std::vector<double>& data() { return *data_; }
    const std::vector<double>& data() const { return *data_; }

    double& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

    // Same buffer, new shape. Element count must match.
    Tensor reshape(std::vector<int64_t> shape) const {
        if (count(shape) != numel()) throw ShapeError("reshape: element count mismatch");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<double>>(*data_);
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : *data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static int64_t count(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

private:
    std::vector<int64_t> shape_;
    std::shared_ptr<std::vector<double>> data_;
};

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    for (int64_t i = 0; i < a.numel(); ++i)
        if (pa[i] != pb[i] || std::signbit(pa[i]) != std::signbit(pb[i])) return false;
    return true;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace camflow
