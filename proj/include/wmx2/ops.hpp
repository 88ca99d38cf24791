#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "wmx2/parallel.hpp"
#include "wmx2/rng.hpp"
#include "wmx2/tensor.hpp"

// Differentiable kernel operations on 4-D tensors. Forward functions here are
// pure (except dropout's RNG and batch_norm's running stats, which mutate only
// caller-owned state); the autograd layer in autograd.hpp wraps them.

namespace wmx2 {

template <typename T>
struct ConvParamsT {
    TensorT<T> weight;  // (out_ch, in_ch, kh, kw)
    TensorT<T> bias;    // stored as (1, out_ch, 1, 1), serialized rank-1

    int out_ch() const { return weight.n(); }
    int in_ch() const { return weight.c(); }
    int kh() const { return weight.h(); }
    int kw() const { return weight.w(); }

    static ConvParamsT zeros(int out_ch, int in_ch, int kh, int kw) {
        ConvParamsT p;
        p.weight = TensorT<T>(out_ch, in_ch, kh, kw);
        p.bias = TensorT<T>(1, out_ch, 1, 1);
        return p;
    }
};

template <typename T>
struct BatchNormParamsT {
    TensorT<T> gamma;         // scale, (1,c,1,1)
    TensorT<T> beta;          // shift, (1,c,1,1)
    TensorT<T> running_mean;  // (1,c,1,1)
    TensorT<T> running_var;   // (1,c,1,1)
    T epsilon = T(1e-5);
    T momentum = T(0.1);  // weight of the new batch statistic

    int channels() const { return gamma.c(); }

    static BatchNormParamsT init(int c) {
        BatchNormParamsT p;
        p.gamma = TensorT<T>::full(1, c, 1, 1, T(1));
        p.beta = TensorT<T>(1, c, 1, 1);
        p.running_mean = TensorT<T>(1, c, 1, 1);
        p.running_var = TensorT<T>::full(1, c, 1, 1, T(1));
        return p;
    }
};

using ConvParams = ConvParamsT<float>;
using BatchNormParams = BatchNormParamsT<float>;

inline int conv_out_dim(int in, int k, int stride, int padding) {
    return (in + 2 * padding - k) / stride + 1;
}

// Cross-correlation (no kernel flip), zero padding. weight is
// (out_ch, in_ch, kh, kw); bias holds out_ch values.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& weight, const TensorT<T>& bias,
                  int stride = 1, int padding = 0) {
    const int out_ch = weight.n(), in_ch = weight.c(), kh = weight.h(), kw = weight.w();
    if (x.c() != in_ch) {
        throw ShapeError("conv2d: input has " + std::to_string(x.c()) + " channels, kernel expects " +
                         std::to_string(in_ch));
    }
    if (bias.size() != out_ch) {
        throw ShapeError("conv2d: bias has " + std::to_string(bias.size()) + " values, expected " +
                         std::to_string(out_ch));
    }
    if (stride < 1) throw ParamError("conv2d: stride must be >= 1");
    if (padding < 0) throw ParamError("conv2d: padding must be >= 0");
    const int oh = conv_out_dim(x.h(), kh, stride, padding);
    const int ow = conv_out_dim(x.w(), kw, stride, padding);
    if (oh < 1 || ow < 1) {
        throw ShapeError("conv2d: output dims " + std::to_string(oh) + "x" + std::to_string(ow) +
                         " < 1 for input " + x.shape().str());
    }
    TensorT<T> out(x.n(), out_ch, oh, ow);
    const bool unit_stride = (stride == 1);

    // One (n, oc) plane per task; every output element is written by exactly
    // one worker with a fixed accumulation order over (ic, kh, kw).
    parallel_for(0, static_cast<int64_t>(x.n()) * out_ch, [&](int64_t lo, int64_t hi) {
        for (int64_t task = lo; task < hi; ++task) {
            const int in = static_cast<int>(task / out_ch);
            const int oc = static_cast<int>(task % out_ch);
            const T bias_v = bias[oc];
            T* out_plane = out.row(in, oc, 0);
            for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i) out_plane[i] = bias_v;

            if (unit_stride) {
                // Shift-and-accumulate: each tap contributes an axpy over a row.
                for (int ic = 0; ic < in_ch; ++ic) {
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const T wv = weight.at(oc, ic, ky, kx);
                            if (wv == T(0)) continue;
                            for (int oy = 0; oy < oh; ++oy) {
                                const int iy = oy + ky - padding;
                                if (iy < 0 || iy >= x.h()) continue;
                                const T* in_row = x.row(in, ic, iy);
                                T* out_row = out_plane + static_cast<int64_t>(oy) * ow;
                                const int x0 = std::max(0, padding - kx);
                                const int x1 = std::min(ow, x.w() + padding - kx);
                                for (int ox = x0; ox < x1; ++ox) {
                                    out_row[ox] += wv * in_row[ox + kx - padding];
                                }
                            }
                        }
                    }
                }
            } else {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        T acc = out_plane[static_cast<int64_t>(oy) * ow + ox];
                        for (int ic = 0; ic < in_ch; ++ic) {
                            for (int ky = 0; ky < kh; ++ky) {
                                const int iy = oy * stride + ky - padding;
                                if (iy < 0 || iy >= x.h()) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    const int ix = ox * stride + kx - padding;
                                    if (ix < 0 || ix >= x.w()) continue;
                                    acc += weight.at(oc, ic, ky, kx) * x.at(in, ic, iy, ix);
                                }
                            }
                        }
                        out_plane[static_cast<int64_t>(oy) * ow + ox] = acc;
                    }
                }
            }
        }
    });
    return out;
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const ConvParamsT<T>& p, int stride = 1, int padding = 0) {
    return conv2d(x, p.weight, p.bias, stride, padding);
}

// dL/dx given upstream gradient g on the conv output.
template <typename T>
TensorT<T> conv2d_backward_input(const TensorT<T>& g, const TensorT<T>& weight, const Shape& x_shape,
                                 int stride, int padding) {
    TensorT<T> dx(x_shape);
    const int kh = weight.h(), kw = weight.w();
    // Scatter form; parallel over batch (each item writes a disjoint slice).
    parallel_for(0, x_shape.n, [&](int64_t lo, int64_t hi) {
        for (int64_t in = lo; in < hi; ++in) {
            for (int oc = 0; oc < weight.n(); ++oc) {
                for (int oy = 0; oy < g.h(); ++oy) {
                    for (int ox = 0; ox < g.w(); ++ox) {
                        const T gv = g.at(static_cast<int>(in), oc, oy, ox);
                        if (gv == T(0)) continue;
                        for (int ic = 0; ic < weight.c(); ++ic) {
                            for (int ky = 0; ky < kh; ++ky) {
                                const int iy = oy * stride + ky - padding;
                                if (iy < 0 || iy >= x_shape.h) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    const int ix = ox * stride + kx - padding;
                                    if (ix < 0 || ix >= x_shape.w) continue;
                                    dx.at(static_cast<int>(in), ic, iy, ix) += gv * weight.at(oc, ic, ky, kx);
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    return dx;
}

// dL/dweight and dL/dbias given upstream gradient g and the saved input x.
template <typename T>
void conv2d_backward_params(const TensorT<T>& g, const TensorT<T>& x, const Shape& weight_shape,
                            int stride, int padding, TensorT<T>& dweight, TensorT<T>& dbias) {
    if (dweight.empty()) dweight = TensorT<T>(weight_shape);
    if (dbias.empty()) dbias = TensorT<T>(1, weight_shape.n, 1, 1);
    const int kh = weight_shape.h, kw = weight_shape.w;
    // Parallel over output channels: each owns its weight/bias slices.
    parallel_for(0, weight_shape.n, [&](int64_t lo, int64_t hi) {
        for (int64_t oc = lo; oc < hi; ++oc) {
            T bias_acc = T(0);
            for (int in = 0; in < g.n(); ++in) {
                for (int oy = 0; oy < g.h(); ++oy) {
                    for (int ox = 0; ox < g.w(); ++ox) {
                        const T gv = g.at(in, static_cast<int>(oc), oy, ox);
                        bias_acc += gv;
                        if (gv == T(0)) continue;
                        for (int ic = 0; ic < weight_shape.c; ++ic) {
                            for (int ky = 0; ky < kh; ++ky) {
                                const int iy = oy * stride + ky - padding;
                                if (iy < 0 || iy >= x.h()) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    const int ix = ox * stride + kx - padding;
                                    if (ix < 0 || ix >= x.w()) continue;
                                    dweight.at(static_cast<int>(oc), ic, ky, kx) += gv * x.at(in, ic, iy, ix);
                                }
                            }
                        }
                    }
                }
            }
            dbias[oc] += bias_acc;
        }
    });
}

// Exact GELU: x * Phi(x) with Phi the standard normal CDF (erf form).
template <typename T>
inline T gelu_scalar(T x) {
    const double xd = static_cast<double>(x);
    return static_cast<T>(xd * 0.5 * (1.0 + std::erf(xd * M_SQRT1_2)));
}

template <typename T>
inline T gelu_grad_scalar(T x) {
    const double xd = static_cast<double>(x);
    const double phi = 0.5 * (1.0 + std::erf(xd * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * M_PI);
    return static_cast<T>(phi + xd * pdf);
}

template <typename T>
TensorT<T> gelu(const TensorT<T>& x) {
    TensorT<T> out(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) out[i] = gelu_scalar(x[i]);
    return out;
}

// Per-channel statistics over (n, h, w). Two-pass, double accumulators.
template <typename T>
void channel_mean_var(const TensorT<T>& x, std::vector<double>& mean, std::vector<double>& var) {
    const int c = x.c();
    mean.assign(static_cast<size_t>(c), 0.0);
    var.assign(static_cast<size_t>(c), 0.0);
    const int64_t per_channel = static_cast<int64_t>(x.n()) * x.h() * x.w();
    for (int ic = 0; ic < c; ++ic) {
        double acc = 0.0;
        for (int in = 0; in < x.n(); ++in) {
            const T* plane = x.row(in, ic, 0);
            for (int64_t i = 0; i < static_cast<int64_t>(x.h()) * x.w(); ++i) acc += plane[i];
        }
        mean[static_cast<size_t>(ic)] = acc / static_cast<double>(per_channel);
        double vacc = 0.0;
        for (int in = 0; in < x.n(); ++in) {
            const T* plane = x.row(in, ic, 0);
            for (int64_t i = 0; i < static_cast<int64_t>(x.h()) * x.w(); ++i) {
                const double d = plane[i] - mean[static_cast<size_t>(ic)];
                vacc += d * d;
            }
        }
        var[static_cast<size_t>(ic)] = vacc / static_cast<double>(per_channel);
    }
}

// Training mode: normalize with batch statistics and update running stats
// (new = (1 - momentum) * old + momentum * batch). Eval mode: normalize with
// running stats. Then scale by gamma and shift by beta.
template <typename T>
TensorT<T> batch_norm(const TensorT<T>& x, BatchNormParamsT<T>& p, bool training) {
    if (x.c() != p.channels()) {
        throw ShapeError("batch_norm: input has " + std::to_string(x.c()) + " channels, params have " +
                         std::to_string(p.channels()));
    }
    TensorT<T> out(x.shape());
    const int64_t plane = static_cast<int64_t>(x.h()) * x.w();
    if (training) {
        std::vector<double> mean, var;
        channel_mean_var(x, mean, var);
        const int64_t cnt = static_cast<int64_t>(x.n()) * plane;
        for (int ic = 0; ic < x.c(); ++ic) {
            const double inv_std = 1.0 / std::sqrt(var[static_cast<size_t>(ic)] + static_cast<double>(p.epsilon));
            const double g = p.gamma[ic], b = p.beta[ic], m = mean[static_cast<size_t>(ic)];
            for (int in = 0; in < x.n(); ++in) {
                const T* src = x.row(in, ic, 0);
                T* dst = out.row(in, ic, 0);
                for (int64_t i = 0; i < plane; ++i) {
                    dst[i] = static_cast<T>((src[i] - m) * inv_std * g + b);
                }
            }
            // Running variance uses the unbiased estimate when possible.
            const double v_running = cnt > 1 ? var[static_cast<size_t>(ic)] * static_cast<double>(cnt) / (cnt - 1)
                                             : var[static_cast<size_t>(ic)];
            p.running_mean[ic] = static_cast<T>((1.0 - p.momentum) * p.running_mean[ic] + p.momentum * m);
            p.running_var[ic] = static_cast<T>((1.0 - p.momentum) * p.running_var[ic] + p.momentum * v_running);
        }
    } else {
        for (int ic = 0; ic < x.c(); ++ic) {
            const double inv_std = 1.0 / std::sqrt(static_cast<double>(p.running_var[ic]) + static_cast<double>(p.epsilon));
            const double g = p.gamma[ic], b = p.beta[ic], m = p.running_mean[ic];
            for (int in = 0; in < x.n(); ++in) {
                const T* src = x.row(in, ic, 0);
                T* dst = out.row(in, ic, 0);
                for (int64_t i = 0; i < plane; ++i) {
                    dst[i] = static_cast<T>((src[i] - m) * inv_std * g + b);
                }
            }
        }
    }
    return out;
}

// Inverted dropout: zero with probability rate, scale survivors by
// 1/(1-rate). Eval mode is the identity. mask_out, when non-null, receives
// the applied multiplier per element (for the backward pass).
template <typename T>
TensorT<T> dropout(const TensorT<T>& x, double rate, bool training, Rng& rng,
                   TensorT<T>* mask_out = nullptr) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ParamError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        if (mask_out) *mask_out = TensorT<T>::full(x.n(), x.c(), x.h(), x.w(), T(1));
        return x;
    }
    TensorT<T> out(x.shape());
    TensorT<T> mask(x.shape());
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    for (int64_t i = 0; i < x.size(); ++i) {
        const T m = rng.uniform() >= rate ? scale : T(0);
        mask[i] = m;
        out[i] = x[i] * m;
    }
    if (mask_out) *mask_out = std::move(mask);
    return out;
}

enum class ResizeMode : uint8_t { kBilinear = 0, kBicubic = 1 };

namespace detail {

// Catmull-Rom-family cubic kernel, a = -0.5.
inline double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

struct ResampleTap {
    int idx[4];
    double w[4];
    int taps;
};

// Half-pixel-center mapping: src = (dst + 0.5) * in/out - 0.5, edges clamped.
inline std::vector<ResampleTap> make_taps(int in_dim, int out_dim, ResizeMode mode) {
    std::vector<ResampleTap> taps(static_cast<size_t>(out_dim));
    const double scale = static_cast<double>(in_dim) / out_dim;
    for (int o = 0; o < out_dim; ++o) {
        const double src = (o + 0.5) * scale - 0.5;
        ResampleTap& t = taps[static_cast<size_t>(o)];
        if (mode == ResizeMode::kBilinear) {
            const double f = std::floor(src);
            const int i0 = static_cast<int>(f);
            const double frac = src - f;
            t.taps = 2;
            t.idx[0] = std::clamp(i0, 0, in_dim - 1);
            t.idx[1] = std::clamp(i0 + 1, 0, in_dim - 1);
            t.w[0] = 1.0 - frac;
            t.w[1] = frac;
        } else {
            const double f = std::floor(src);
            const int i0 = static_cast<int>(f);
            const double frac = src - f;
            t.taps = 4;
            for (int k = 0; k < 4; ++k) {
                t.idx[k] = std::clamp(i0 - 1 + k, 0, in_dim - 1);
                t.w[k] = cubic_weight(frac - (k - 1));
            }
        }
    }
    return taps;
}

}  // namespace detail

// Separable interpolation to (out_h, out_w). Carries no gradient; the
// autograd layer rejects gradient requests through it.
template <typename T>
TensorT<T> resize(const TensorT<T>& x, int out_h, int out_w, ResizeMode mode) {
    if (out_h < 1 || out_w < 1) throw ParamError("resize: target dims must be >= 1");
    if (out_h == x.h() && out_w == x.w()) return x;
    const auto col_taps = detail::make_taps(x.w(), out_w, mode);
    const auto row_taps = detail::make_taps(x.h(), out_h, mode);

    // Horizontal pass, then vertical.
    TensorT<T> mid(x.n(), x.c(), x.h(), out_w);
    parallel_for(0, static_cast<int64_t>(x.n()) * x.c(), [&](int64_t lo, int64_t hi) {
        for (int64_t pc = lo; pc < hi; ++pc) {
            const int in = static_cast<int>(pc / x.c());
            const int ic = static_cast<int>(pc % x.c());
            for (int iy = 0; iy < x.h(); ++iy) {
                const T* src = x.row(in, ic, iy);
                T* dst = mid.row(in, ic, iy);
                for (int ox = 0; ox < out_w; ++ox) {
                    const auto& t = col_taps[static_cast<size_t>(ox)];
                    double acc = 0.0;
                    for (int k = 0; k < t.taps; ++k) acc += t.w[k] * src[t.idx[k]];
                    dst[ox] = static_cast<T>(acc);
                }
            }
        }
    });
    TensorT<T> out(x.n(), x.c(), out_h, out_w);
    parallel_for(0, static_cast<int64_t>(x.n()) * x.c(), [&](int64_t lo, int64_t hi) {
        for (int64_t pc = lo; pc < hi; ++pc) {
            const int in = static_cast<int>(pc / x.c());
            const int ic = static_cast<int>(pc % x.c());
            for (int oy = 0; oy < out_h; ++oy) {
                const auto& t = row_taps[static_cast<size_t>(oy)];
                const T* rows[4];
                for (int k = 0; k < t.taps; ++k) rows[k] = mid.row(in, ic, t.idx[k]);
                T* dst = out.row(in, ic, oy);
                for (int ox = 0; ox < out_w; ++ox) {
                    double acc = 0.0;
                    for (int k = 0; k < t.taps; ++k) acc += t.w[k] * rows[k][ox];
                    dst[ox] = static_cast<T>(acc);
                }
            }
        }
    });
    return out;
}

// Channels stacked in argument order.
template <typename T>
TensorT<T> concat_channels(const std::vector<TensorT<T>>& xs) {
    if (xs.empty()) throw ParamError("concat_channels: empty input list");
    int total_c = 0;
    for (const auto& x : xs) {
        if (x.n() != xs[0].n() || x.h() != xs[0].h() || x.w() != xs[0].w()) {
            throw ShapeError("concat_channels: mismatched batch/spatial dims " + x.shape().str() +
                             " vs " + xs[0].shape().str());
        }
        total_c += x.c();
    }
    TensorT<T> out(xs[0].n(), total_c, xs[0].h(), xs[0].w());
    const int64_t plane = static_cast<int64_t>(xs[0].h()) * xs[0].w();
    for (int in = 0; in < out.n(); ++in) {
        int oc = 0;
        for (const auto& x : xs) {
            for (int ic = 0; ic < x.c(); ++ic, ++oc) {
                std::copy_n(x.row(in, ic, 0), plane, out.row(in, oc, 0));
            }
        }
    }
    return out;
}

// Channels [c0, c0+count) as their own tensor.
template <typename T>
TensorT<T> slice_channels(const TensorT<T>& x, int c0, int count) {
    if (c0 < 0 || count < 1 || c0 + count > x.c()) {
        throw ShapeError("slice_channels: range [" + std::to_string(c0) + ", " +
                         std::to_string(c0 + count) + ") out of " + std::to_string(x.c()));
    }
    TensorT<T> out(x.n(), count, x.h(), x.w());
    const int64_t plane = static_cast<int64_t>(x.h()) * x.w();
    for (int in = 0; in < x.n(); ++in) {
        for (int ic = 0; ic < count; ++ic) {
            std::copy_n(x.row(in, c0 + ic, 0), plane, out.row(in, ic, 0));
        }
    }
    return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& x, const TensorT<T>& y) {
    if (!x.same_shape(y)) {
        throw ShapeError("add: shape mismatch " + x.shape().str() + " vs " + y.shape().str());
    }
    TensorT<T> out(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return out;
}

// Mirror index for reflect padding (edge not repeated; degenerates to clamp
// when the axis has a single element).
inline int reflect_index(int i, int dim) {
    if (i < dim) return i;
    return std::max(0, 2 * dim - 2 - i);
}

// Reflect-pads the bottom/right edge so both spatial dims become even.
template <typename T>
TensorT<T> reflect_pad_to_even(const TensorT<T>& x) {
    const int ph = x.h() % 2, pw = x.w() % 2;
    if (ph == 0 && pw == 0) return x;
    TensorT<T> out(x.n(), x.c(), x.h() + ph, x.w() + pw);
    for (int in = 0; in < x.n(); ++in) {
        for (int ic = 0; ic < x.c(); ++ic) {
            for (int oy = 0; oy < out.h(); ++oy) {
                const T* src = x.row(in, ic, reflect_index(oy, x.h()));
                T* dst = out.row(in, ic, oy);
                for (int ox = 0; ox < out.w(); ++ox) {
                    dst[ox] = src[reflect_index(ox, x.w())];
                }
            }
        }
    }
    return out;
}

// Adjoint of reflect_pad_to_even for a given original shape.
template <typename T>
TensorT<T> reflect_pad_to_even_adjoint(const TensorT<T>& g, const Shape& x_shape) {
    TensorT<T> dx(x_shape);
    for (int in = 0; in < g.n(); ++in) {
        for (int ic = 0; ic < g.c(); ++ic) {
            for (int oy = 0; oy < g.h(); ++oy) {
                const int iy = reflect_index(oy, x_shape.h);
                const T* src = g.row(in, ic, oy);
                T* dst = dx.row(in, ic, iy);
                for (int ox = 0; ox < g.w(); ++ox) {
                    dst[reflect_index(ox, x_shape.w)] += src[ox];
                }
            }
        }
    }
    return dx;
}

// Top-left h x w window.
template <typename T>
TensorT<T> crop_top_left(const TensorT<T>& x, int h, int w) {
    if (h > x.h() || w > x.w() || h < 1 || w < 1) {
        throw ShapeError("crop_top_left: window " + std::to_string(h) + "x" + std::to_string(w) +
                         " does not fit " + x.shape().str());
    }
    if (h == x.h() && w == x.w()) return x;
    TensorT<T> out(x.n(), x.c(), h, w);
    for (int in = 0; in < x.n(); ++in) {
        for (int ic = 0; ic < x.c(); ++ic) {
            for (int iy = 0; iy < h; ++iy) {
                std::copy_n(x.row(in, ic, iy), w, out.row(in, ic, iy));
            }
        }
    }
    return out;
}

// Adjoint of crop_top_left: grad goes to the window, zeros elsewhere.
template <typename T>
TensorT<T> crop_top_left_adjoint(const TensorT<T>& g, const Shape& x_shape) {
    TensorT<T> dx(x_shape);
    for (int in = 0; in < g.n(); ++in) {
        for (int ic = 0; ic < g.c(); ++ic) {
            for (int iy = 0; iy < g.h(); ++iy) {
                std::copy_n(g.row(in, ic, iy), g.w(), dx.row(in, ic, iy));
            }
        }
    }
    return dx;
}

}  // namespace wmx2
