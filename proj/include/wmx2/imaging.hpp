#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "wmx2/ops.hpp"

// Color-space conversion, the bicubic degradation model, image quality
// metrics, and the Huber training loss.

namespace wmx2 {

// BT.601 studio-swing YCbCr, the convention under which SR Y-channel metrics
// are conventionally reported. All values normalized to [0,1].
namespace bt601 {
// Row-major 3x3: (Y, Cb, Cr) x (R, G, B), plus offsets, all in 8-bit scale.
constexpr double kForward[3][3] = {
    {65.481, 128.553, 24.966},
    {-37.797, -74.203, 112.0},
    {112.0, -93.786, -18.214},
};
constexpr double kOffset[3] = {16.0, 128.0, 128.0};
}  // namespace bt601

namespace detail {

// Inverse of the forward 3x3 via Cramer's rule, computed once.
inline const std::array<std::array<double, 3>, 3>& bt601_inverse() {
    static const std::array<std::array<double, 3>, 3> inv = [] {
        const auto& m = bt601::kForward;
        const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        std::array<std::array<double, 3>, 3> r{};
        r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
        r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
        r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
        r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
        r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
        r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
        r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
        r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
        r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
        return r;
    }();
    return inv;
}

}  // namespace detail

// RGB in [0,1] (clamped first) -> YCbCr in [0,1].
template <typename T>
TensorT<T> rgb_to_ycbcr(const TensorT<T>& x) {
    if (x.c() != 3) throw ShapeError("rgb_to_ycbcr: expected 3 channels, got " + x.shape().str());
    TensorT<T> out(x.shape());
    const int64_t plane = static_cast<int64_t>(x.h()) * x.w();
    for (int in = 0; in < x.n(); ++in) {
        const T* r = x.row(in, 0, 0);
        const T* g = x.row(in, 1, 0);
        const T* b = x.row(in, 2, 0);
        T* yo = out.row(in, 0, 0);
        T* cbo = out.row(in, 1, 0);
        T* cro = out.row(in, 2, 0);
        for (int64_t i = 0; i < plane; ++i) {
            const double rv = std::clamp(static_cast<double>(r[i]), 0.0, 1.0);
            const double gv = std::clamp(static_cast<double>(g[i]), 0.0, 1.0);
            const double bv = std::clamp(static_cast<double>(b[i]), 0.0, 1.0);
            for (int ch = 0; ch < 3; ++ch) {
                const double v = (bt601::kOffset[ch] + bt601::kForward[ch][0] * rv +
                                  bt601::kForward[ch][1] * gv + bt601::kForward[ch][2] * bv) / 255.0;
                (ch == 0 ? yo : ch == 1 ? cbo : cro)[i] = static_cast<T>(v);
            }
        }
    }
    return out;
}

// Exact inverse on the transform's range, clamped to [0,1].
template <typename T>
TensorT<T> ycbcr_to_rgb(const TensorT<T>& x) {
    if (x.c() != 3) throw ShapeError("ycbcr_to_rgb: expected 3 channels, got " + x.shape().str());
    const auto& inv = detail::bt601_inverse();
    TensorT<T> out(x.shape());
    const int64_t plane = static_cast<int64_t>(x.h()) * x.w();
    for (int in = 0; in < x.n(); ++in) {
        const T* y = x.row(in, 0, 0);
        const T* cb = x.row(in, 1, 0);
        const T* cr = x.row(in, 2, 0);
        T* ro = out.row(in, 0, 0);
        T* go = out.row(in, 1, 0);
        T* bo = out.row(in, 2, 0);
        for (int64_t i = 0; i < plane; ++i) {
            const double yv = y[i] * 255.0 - bt601::kOffset[0];
            const double cbv = cb[i] * 255.0 - bt601::kOffset[1];
            const double crv = cr[i] * 255.0 - bt601::kOffset[2];
            for (int ch = 0; ch < 3; ++ch) {
                const double v = inv[static_cast<size_t>(ch)][0] * yv +
                                 inv[static_cast<size_t>(ch)][1] * cbv +
                                 inv[static_cast<size_t>(ch)][2] * crv;
                (ch == 0 ? ro : ch == 1 ? go : bo)[i] = static_cast<T>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

// Crops the right/bottom remainder so both spatial dims divide `multiple`.
template <typename T>
TensorT<T> crop_to_multiple(const TensorT<T>& x, int multiple) {
    if (multiple < 1) throw ParamError("crop_to_multiple: multiple must be >= 1");
    const int h = (x.h() / multiple) * multiple;
    const int w = (x.w() / multiple) * multiple;
    if (h < 1 || w < 1) {
        throw ShapeError("crop_to_multiple: image " + x.shape().str() + " smaller than " +
                         std::to_string(multiple));
    }
    return crop_top_left(x, h, w);
}

// Bicubic downsampling; defines the LR-HR pairing for training and eval.
// Input dims must already divide the scale (use crop_to_multiple).
template <typename T>
TensorT<T> degrade_bicubic(const TensorT<T>& hr, int scale) {
    if (scale < 1) throw ParamError("degrade_bicubic: scale must be >= 1");
    if (scale == 1) return hr;
    if (hr.h() % scale != 0 || hr.w() % scale != 0) {
        throw ShapeError("degrade_bicubic: dims " + hr.shape().str() + " not divisible by scale " +
                         std::to_string(scale));
    }
    return resize(hr, hr.h() / scale, hr.w() / scale, ResizeMode::kBicubic);
}

// 10*log10(peak^2/MSE) in dB; +infinity when MSE is zero.
template <typename T>
double psnr(const TensorT<T>& a, const TensorT<T>& b, double peak = 1.0) {
    if (!a.same_shape(b)) {
        throw ShapeError("psnr: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    }
    double se = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

namespace detail {

inline const std::vector<double>& ssim_window() {
    // 11x11 Gaussian, sigma 1.5, normalized to sum 1.
    static const std::vector<double> win = [] {
        std::vector<double> w(121);
        double total = 0.0;
        for (int i = 0; i < 11; ++i) {
            for (int j = 0; j < 11; ++j) {
                const double dy = i - 5.0, dx = j - 5.0;
                w[static_cast<size_t>(i) * 11 + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
                total += w[static_cast<size_t>(i) * 11 + j];
            }
        }
        for (auto& v : w) v /= total;
        return w;
    }();
    return win;
}

}  // namespace detail

// Mean local SSIM over all fully-interior 11x11 Gaussian windows (sigma 1.5,
// K1=0.01, K2=0.03, peak 1). Single-channel input; callers pass the Y plane.
template <typename T>
double ssim(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("ssim: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    }
    if (a.c() != 1) throw ShapeError("ssim: expected single-channel input, got " + a.shape().str());
    constexpr int kWin = 11;
    if (a.h() < kWin || a.w() < kWin) {
        throw ParamError("ssim: image " + a.shape().str() + " smaller than the 11x11 window");
    }
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;
    const auto& win = detail::ssim_window();
    double total = 0.0;
    int64_t windows = 0;
    for (int in = 0; in < a.n(); ++in) {
        for (int y0 = 0; y0 + kWin <= a.h(); ++y0) {
            for (int x0 = 0; x0 + kWin <= a.w(); ++x0) {
                double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
                for (int i = 0; i < kWin; ++i) {
                    const T* ra = a.row(in, 0, y0 + i) + x0;
                    const T* rb = b.row(in, 0, y0 + i) + x0;
                    const double* wr = win.data() + static_cast<size_t>(i) * kWin;
                    for (int j = 0; j < kWin; ++j) {
                        const double av = ra[j], bv = rb[j];
                        ma += wr[j] * av;
                        mb += wr[j] * bv;
                        saa += wr[j] * av * av;
                        sbb += wr[j] * bv * bv;
                        sab += wr[j] * av * bv;
                    }
                }
                const double va = saa - ma * ma;
                const double vb = sbb - mb * mb;
                const double cab = sab - ma * mb;
                const double score = ((2.0 * ma * mb + kC1) * (2.0 * cab + kC2)) /
                                     ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
                total += score;
                ++windows;
            }
        }
    }
    return total / static_cast<double>(windows);
}

// Mean Huber loss: 0.5 r^2 for |r| <= delta, else delta(|r| - delta/2).
template <typename T>
double huber_loss(const TensorT<T>& pred, const TensorT<T>& target, double delta = 1.0) {
    if (!pred.same_shape(target)) {
        throw ShapeError("huber_loss: shape mismatch " + pred.shape().str() + " vs " +
                         target.shape().str());
    }
    if (!(delta > 0.0)) throw ParamError("huber_loss: delta must be > 0");
    double acc = 0.0;
    for (int64_t i = 0; i < pred.size(); ++i) {
        const double r = static_cast<double>(pred[i]) - target[i];
        const double a = std::abs(r);
        acc += a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
    }
    return acc / static_cast<double>(pred.size());
}

// Crops `border` pixels from every side (the crop-by-scale metric convention).
template <typename T>
TensorT<T> crop_border(const TensorT<T>& x, int border) {
    if (border == 0) return x;
    if (border < 0 || x.h() <= 2 * border || x.w() <= 2 * border) {
        throw ParamError("crop_border: border " + std::to_string(border) + " too large for " +
                         x.shape().str());
    }
    TensorT<T> out(x.n(), x.c(), x.h() - 2 * border, x.w() - 2 * border);
    for (int in = 0; in < x.n(); ++in) {
        for (int ic = 0; ic < x.c(); ++ic) {
            for (int iy = 0; iy < out.h(); ++iy) {
                std::copy_n(x.row(in, ic, iy + border) + border, out.w(), out.row(in, ic, iy));
            }
        }
    }
    return out;
}

// Per-image metric record plus the aggregate for a dataset run.
struct EvalRecord {
    std::string image_id;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::vector<EvalRecord> records;
    int skipped = 0;

    double mean_psnr() const {
        double s = 0.0;
        for (const auto& r : records) s += r.psnr_db;
        return records.empty() ? 0.0 : s / static_cast<double>(records.size());
    }
    double mean_ssim() const {
        double s = 0.0;
        for (const auto& r : records) s += r.ssim;
        return records.empty() ? 0.0 : s / static_cast<double>(records.size());
    }
};

// CSV: header `image,psnr_db,ssim`, one row per image, final `mean` row.
void write_eval_csv(const EvalReport& report, const std::string& path);

}  // namespace wmx2
