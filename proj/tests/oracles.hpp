#pragma once

// Independent reference implementations used as test oracles. These are
// deliberately written as straight-line, per-element code with none of the
// layout tricks of the library kernels, so they only share the mathematical
// definitions with the code under test.

#include <cmath>
#include <vector>

#include "wmx2/model.hpp"

namespace oracle {

using wmx2::Rng;
using wmx2::Shape;
template <typename T>
using TensorT = wmx2::TensorT<T>;

// Plain gather-form cross-correlation with zero padding, double accumulation.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, int stride,
                  int padding) {
    const int oh = (x.h() + 2 * padding - w.h()) / stride + 1;
    const int ow = (x.w() + 2 * padding - w.w()) / stride + 1;
    TensorT<T> out(x.n(), w.n(), oh, ow);
    for (int in = 0; in < x.n(); ++in) {
        for (int oc = 0; oc < w.n(); ++oc) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = b[oc];
                    for (int ic = 0; ic < x.c(); ++ic) {
                        for (int ky = 0; ky < w.h(); ++ky) {
                            for (int kx = 0; kx < w.w(); ++kx) {
                                const int iy = oy * stride + ky - padding;
                                const int ix = ox * stride + kx - padding;
                                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                                acc += static_cast<double>(w.at(oc, ic, ky, kx)) * x.at(in, ic, iy, ix);
                            }
                        }
                    }
                    out.at(in, oc, oy, ox) = static_cast<T>(acc);
                }
            }
        }
    }
    return out;
}

// Maclaurin series for erf, accurate to ~1e-15 for |z| <= 3.
inline double erf_series(double z) {
    double term = z;
    double sum = z;
    for (int n = 1; n < 60; ++n) {
        term *= -z * z / n;
        sum += term / (2 * n + 1);
    }
    return sum * 2.0 / std::sqrt(M_PI);
}

inline double gelu(double x) { return x * 0.5 * (1.0 + erf_series(x / std::sqrt(2.0))); }

// Two-pass per-channel statistics over (n, h, w).
template <typename T>
void batch_stats(const TensorT<T>& x, std::vector<double>& mean, std::vector<double>& var) {
    mean.assign(static_cast<size_t>(x.c()), 0.0);
    var.assign(static_cast<size_t>(x.c()), 0.0);
    const int64_t cnt = static_cast<int64_t>(x.n()) * x.h() * x.w();
    for (int ic = 0; ic < x.c(); ++ic) {
        double m = 0.0;
        for (int in = 0; in < x.n(); ++in) {
            for (int iy = 0; iy < x.h(); ++iy) {
                for (int ix = 0; ix < x.w(); ++ix) m += x.at(in, ic, iy, ix);
            }
        }
        m /= static_cast<double>(cnt);
        double v = 0.0;
        for (int in = 0; in < x.n(); ++in) {
            for (int iy = 0; iy < x.h(); ++iy) {
                for (int ix = 0; ix < x.w(); ++ix) {
                    const double d = x.at(in, ic, iy, ix) - m;
                    v += d * d;
                }
            }
        }
        mean[static_cast<size_t>(ic)] = m;
        var[static_cast<size_t>(ic)] = v / static_cast<double>(cnt);
    }
}

template <typename T>
TensorT<T> batch_norm_train(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                            double epsilon) {
    std::vector<double> mean, var;
    batch_stats(x, mean, var);
    TensorT<T> out(x.shape());
    for (int in = 0; in < x.n(); ++in) {
        for (int ic = 0; ic < x.c(); ++ic) {
            for (int iy = 0; iy < x.h(); ++iy) {
                for (int ix = 0; ix < x.w(); ++ix) {
                    const double xhat = (x.at(in, ic, iy, ix) - mean[static_cast<size_t>(ic)]) /
                                        std::sqrt(var[static_cast<size_t>(ic)] + epsilon);
                    out.at(in, ic, iy, ix) = static_cast<T>(xhat * gamma[ic] + beta[ic]);
                }
            }
        }
    }
    return out;
}

inline double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

// Direct (non-separable) per-pixel kernel-weighted sum with half-pixel
// centers and clamped edges.
template <typename T>
TensorT<T> resize_bicubic(const TensorT<T>& x, int out_h, int out_w) {
    TensorT<T> out(x.n(), x.c(), out_h, out_w);
    const double sy = static_cast<double>(x.h()) / out_h;
    const double sx = static_cast<double>(x.w()) / out_w;
    for (int in = 0; in < x.n(); ++in) {
        for (int ic = 0; ic < x.c(); ++ic) {
            for (int oy = 0; oy < out_h; ++oy) {
                for (int ox = 0; ox < out_w; ++ox) {
                    const double src_y = (oy + 0.5) * sy - 0.5;
                    const double src_x = (ox + 0.5) * sx - 0.5;
                    const int y0 = static_cast<int>(std::floor(src_y));
                    const int x0 = static_cast<int>(std::floor(src_x));
                    double acc = 0.0;
                    for (int dy = -1; dy <= 2; ++dy) {
                        for (int dx = -1; dx <= 2; ++dx) {
                            const int iy = std::clamp(y0 + dy, 0, x.h() - 1);
                            const int ix = std::clamp(x0 + dx, 0, x.w() - 1);
                            acc += cubic_kernel(src_y - (y0 + dy)) * cubic_kernel(src_x - (x0 + dx)) *
                                   x.at(in, ic, iy, ix);
                        }
                    }
                    out.at(in, ic, oy, ox) = static_cast<T>(acc);
                }
            }
        }
    }
    return out;
}

// Orthonormal Haar analysis straight from the 2x2 filter matrix.
template <typename T>
TensorT<T> dwt2_haar(const TensorT<T>& x) {
    static const double kFilters[4][4] = {
        {0.5, 0.5, 0.5, 0.5},     // aa
        {0.5, 0.5, -0.5, -0.5},   // ad
        {0.5, -0.5, 0.5, -0.5},   // da
        {0.5, -0.5, -0.5, 0.5},   // dd
    };
    TensorT<T> out(x.n(), 4 * x.c(), x.h() / 2, x.w() / 2);
    for (int in = 0; in < x.n(); ++in) {
        for (int band = 0; band < 4; ++band) {
            for (int ic = 0; ic < x.c(); ++ic) {
                for (int oy = 0; oy < x.h() / 2; ++oy) {
                    for (int ox = 0; ox < x.w() / 2; ++ox) {
                        const double patch[4] = {
                            static_cast<double>(x.at(in, ic, 2 * oy, 2 * ox)),
                            static_cast<double>(x.at(in, ic, 2 * oy, 2 * ox + 1)),
                            static_cast<double>(x.at(in, ic, 2 * oy + 1, 2 * ox)),
                            static_cast<double>(x.at(in, ic, 2 * oy + 1, 2 * ox + 1)),
                        };
                        double acc = 0.0;
                        for (int k = 0; k < 4; ++k) acc += kFilters[band][k] * patch[k];
                        out.at(in, band * x.c() + ic, oy, ox) = static_cast<T>(acc);
                    }
                }
            }
        }
    }
    return out;
}

// PixelShuffle via the index formula only.
template <typename T>
TensorT<T> pixel_shuffle(const TensorT<T>& x, int r) {
    TensorT<T> out(x.n(), x.c() / (r * r), x.h() * r, x.w() * r);
    for (int in = 0; in < out.n(); ++in) {
        for (int k = 0; k < out.c(); ++k) {
            for (int oy = 0; oy < out.h(); ++oy) {
                for (int ox = 0; ox < out.w(); ++ox) {
                    const int i = oy / r, di = oy % r;
                    const int j = ox / r, dj = ox % r;
                    out.at(in, k, oy, ox) = x.at(in, k * r * r + di * r + dj, i, j);
                }
            }
        }
    }
    return out;
}

inline int reflect_index(int i, int dim) { return i < dim ? i : std::max(0, 2 * dim - 2 - i); }

// Straight-line reference of the token-mixing block: reduce conv, reflect pad
// to even, Haar analysis, two-layer inverse-bottleneck MLP with GELU (and an
// optional dropout mask drawn in storage order), PixelShuffle, expand conv,
// training-mode batch norm, crop, residual add.
template <typename T>
TensorT<T> block_reference(const TensorT<T>& x_in, const wmx2::BlockParamsT<T>& p, double dropout_rate,
                           bool training, uint64_t dropout_seed) {
    const int h = x_in.h(), w = x_in.w();
    TensorT<T> x0 = oracle::conv2d(x_in, p.reduce.weight, p.reduce.bias, 1, 0);

    const int ph = x0.h() % 2, pw = x0.w() % 2;
    if (ph || pw) {
        TensorT<T> padded(x0.n(), x0.c(), x0.h() + ph, x0.w() + pw);
        for (int in = 0; in < x0.n(); ++in) {
            for (int ic = 0; ic < x0.c(); ++ic) {
                for (int iy = 0; iy < padded.h(); ++iy) {
                    for (int ix = 0; ix < padded.w(); ++ix) {
                        padded.at(in, ic, iy, ix) =
                            x0.at(in, ic, reflect_index(iy, x0.h()), reflect_index(ix, x0.w()));
                    }
                }
            }
        }
        x0 = padded;
    }
    TensorT<T> mixed = oracle::dwt2_haar(x0);

    TensorT<T> hidden = oracle::conv2d(mixed, p.mlp1.weight, p.mlp1.bias, 1, 0);
    for (int64_t i = 0; i < hidden.size(); ++i) hidden[i] = static_cast<T>(gelu(hidden[i]));
    if (training && dropout_rate > 0.0) {
        Rng rng(dropout_seed);
        const T scale = static_cast<T>(1.0 / (1.0 - dropout_rate));
        for (int64_t i = 0; i < hidden.size(); ++i) {
            hidden[i] = rng.uniform() >= dropout_rate ? hidden[i] * scale : T(0);
        }
    }
    TensorT<T> mlp_out = oracle::conv2d(hidden, p.mlp2.weight, p.mlp2.bias, 1, 0);

    TensorT<T> shuffled = oracle::pixel_shuffle(mlp_out, 2);
    TensorT<T> expanded = oracle::conv2d(shuffled, p.expand.weight, p.expand.bias, 1, 0);

    TensorT<T> normed;
    if (training) {
        normed = oracle::batch_norm_train(expanded, p.bn.gamma, p.bn.beta, static_cast<double>(p.bn.epsilon));
    } else {
        normed = TensorT<T>(expanded.shape());
        for (int in = 0; in < expanded.n(); ++in) {
            for (int ic = 0; ic < expanded.c(); ++ic) {
                const double inv = 1.0 / std::sqrt(static_cast<double>(p.bn.running_var[ic]) +
                                                   static_cast<double>(p.bn.epsilon));
                for (int iy = 0; iy < expanded.h(); ++iy) {
                    for (int ix = 0; ix < expanded.w(); ++ix) {
                        normed.at(in, ic, iy, ix) = static_cast<T>(
                            (expanded.at(in, ic, iy, ix) - p.bn.running_mean[ic]) * inv * p.bn.gamma[ic] +
                            p.bn.beta[ic]);
                    }
                }
            }
        }
    }

    TensorT<T> out(x_in.shape());
    for (int in = 0; in < out.n(); ++in) {
        for (int ic = 0; ic < out.c(); ++ic) {
            for (int iy = 0; iy < h; ++iy) {
                for (int ix = 0; ix < w; ++ix) {
                    out.at(in, ic, iy, ix) = normed.at(in, ic, iy, ix) + x_in.at(in, ic, iy, ix);
                }
            }
        }
    }
    return out;
}

// Mean PSNR by scalar loop.
template <typename T>
double psnr(const TensorT<T>& a, const TensorT<T>& b, double peak) {
    double se = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        se += d * d;
    }
    return 10.0 * std::log10(peak * peak * a.size() / se);
}

// Sliding-window SSIM accumulating central moments directly (a different
// algebraic route than the library's E[xy] - mu*nu form).
template <typename T>
double ssim(const TensorT<T>& a, const TensorT<T>& b) {
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    double win[kWin][kWin];
    double wsum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        for (int j = 0; j < kWin; ++j) {
            win[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / (2 * kSigma * kSigma));
            wsum += win[i][j];
        }
    }
    for (auto& row : win) {
        for (auto& v : row) v /= wsum;
    }
    double total = 0.0;
    int64_t count = 0;
    for (int in = 0; in < a.n(); ++in) {
        for (int y0 = 0; y0 + kWin <= a.h(); ++y0) {
            for (int x0 = 0; x0 + kWin <= a.w(); ++x0) {
                double ma = 0.0, mb = 0.0;
                for (int i = 0; i < kWin; ++i) {
                    for (int j = 0; j < kWin; ++j) {
                        ma += win[i][j] * a.at(in, 0, y0 + i, x0 + j);
                        mb += win[i][j] * b.at(in, 0, y0 + i, x0 + j);
                    }
                }
                double va = 0.0, vb = 0.0, cab = 0.0;
                for (int i = 0; i < kWin; ++i) {
                    for (int j = 0; j < kWin; ++j) {
                        const double da = a.at(in, 0, y0 + i, x0 + j) - ma;
                        const double db = b.at(in, 0, y0 + i, x0 + j) - mb;
                        va += win[i][j] * da * da;
                        vb += win[i][j] * db * db;
                        cab += win[i][j] * da * db;
                    }
                }
                const double c1 = 0.0001, c2 = 0.0009;
                total += ((2 * ma * mb + c1) * (2 * cab + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace oracle
