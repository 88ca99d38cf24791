#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wmx2/error.hpp"
#include "wmx2/rng.hpp"

namespace wmx2 {

struct Shape {
    int n = 0;  // batch
    int c = 0;  // channels
    int h = 0;  // rows
    int w = 0;  // cols

    bool operator==(const Shape& o) const = default;

    int64_t count() const {
        return static_cast<int64_t>(n) * c * h * w;
    }

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Dense 4-D array in batch-channel-height-width layout, row-major within
// (n,c,h,w) nesting. The universal value type of the engine. T is float on
// the production path; double instantiations exist for gradient checking.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    TensorT(int n, int c, int h, int w) : shape_{n, c, h, w} {
        if (n < 1 || c < 1 || h < 1 || w < 1) {
            throw ShapeError("tensor dims must all be >= 1, got " + shape_.str());
        }
        data_.assign(static_cast<size_t>(shape_.count()), T(0));
    }

    explicit TensorT(const Shape& s) : TensorT(s.n, s.c, s.h, s.w) {}

    static TensorT full(int n, int c, int h, int w, T value) {
        TensorT t(n, c, h, w);
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static TensorT random_uniform(int n, int c, int h, int w, Rng& rng,
                                  double lo = -1.0, double hi = 1.0) {
        TensorT t(n, c, h, w);
        for (auto& v : t.data_) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    const Shape& shape() const { return shape_; }
    int n() const { return shape_.n; }
    int c() const { return shape_.c; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    T operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    int64_t offset(int in, int ic, int ih, int iw) const {
        return ((static_cast<int64_t>(in) * shape_.c + ic) * shape_.h + ih) * shape_.w + iw;
    }

    T& at(int in, int ic, int ih, int iw) { return data_[static_cast<size_t>(offset(in, ic, ih, iw))]; }
    T at(int in, int ic, int ih, int iw) const { return data_[static_cast<size_t>(offset(in, ic, ih, iw))]; }

    // Pointer to the start of row ih of channel ic in batch item in.
    T* row(int in, int ic, int ih) { return data() + offset(in, ic, ih, 0); }
    const T* row(int in, int ic, int ih) const { return data() + offset(in, ic, ih, 0); }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(shape_.n, shape_.c, shape_.h, shape_.w);
        for (int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
        return out;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;

template <typename T>
double sum_squares(const TensorT<T>& t) {
    double acc = 0.0;
    for (int64_t i = 0; i < t.size(); ++i) acc += static_cast<double>(t[i]) * t[i];
    return acc;
}

template <typename T>
double l2_norm(const TensorT<T>& t) {
    return std::sqrt(sum_squares(t));
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    double m = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    }
    return m;
}

template <typename T>
bool bit_equal(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

}  // namespace wmx2
