#pragma once

#include "wmx2/tensor.hpp"

// Lossless 2D Haar transform (the token mixer), its inverse, and the
// PixelShuffle/PixelUnshuffle permutations.

namespace wmx2 {

// Channel order of the concatenated sub-bands. Each group is c channels wide.
enum class Subband : int { kAA = 0, kAD = 1, kDA = 2, kDD = 3 };

// Orthonormal single-level 2D Haar DWT. For each 2x2 patch [[a,b],[c,d]] per
// channel: aa=(a+b+c+d)/2, ad=(a+b-c-d)/2, da=(a-b+c-d)/2, dd=(a-b-c+d)/2.
// Output (n, 4c, h/2, w/2), sub-bands concatenated in (aa, ad, da, dd) order.
template <typename T>
TensorT<T> dwt2_haar(const TensorT<T>& x) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0) {
        throw ShapeError("dwt2_haar: spatial dims must be even, got " + x.shape().str());
    }
    const int oh = x.h() / 2, ow = x.w() / 2, c = x.c();
    TensorT<T> out(x.n(), 4 * c, oh, ow);
    for (int in = 0; in < x.n(); ++in) {
        for (int ic = 0; ic < c; ++ic) {
            T* aa = out.row(in, static_cast<int>(Subband::kAA) * c + ic, 0);
            T* ad = out.row(in, static_cast<int>(Subband::kAD) * c + ic, 0);
            T* da = out.row(in, static_cast<int>(Subband::kDA) * c + ic, 0);
            T* dd = out.row(in, static_cast<int>(Subband::kDD) * c + ic, 0);
            for (int oy = 0; oy < oh; ++oy) {
                const T* top = x.row(in, ic, 2 * oy);
                const T* bot = x.row(in, ic, 2 * oy + 1);
                for (int ox = 0; ox < ow; ++ox) {
                    const T a = top[2 * ox], b = top[2 * ox + 1];
                    const T cc = bot[2 * ox], d = bot[2 * ox + 1];
                    const int64_t o = static_cast<int64_t>(oy) * ow + ox;
                    aa[o] = (a + b + cc + d) * T(0.5);
                    ad[o] = (a + b - cc - d) * T(0.5);
                    da[o] = (a - b + cc - d) * T(0.5);
                    dd[o] = (a - b - cc + d) * T(0.5);
                }
            }
        }
    }
    return out;
}

// Exact inverse of dwt2_haar: (n, c, h, w) -> (n, c/4, 2h, 2w). Because the
// transform is orthonormal this is also its adjoint.
template <typename T>
TensorT<T> idwt2_haar(const TensorT<T>& y) {
    if (y.c() % 4 != 0) {
        throw ShapeError("idwt2_haar: channel count must be divisible by 4, got " + y.shape().str());
    }
    const int c = y.c() / 4;
    TensorT<T> out(y.n(), c, 2 * y.h(), 2 * y.w());
    for (int in = 0; in < y.n(); ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const T* aa = y.row(in, static_cast<int>(Subband::kAA) * c + ic, 0);
            const T* ad = y.row(in, static_cast<int>(Subband::kAD) * c + ic, 0);
            const T* da = y.row(in, static_cast<int>(Subband::kDA) * c + ic, 0);
            const T* dd = y.row(in, static_cast<int>(Subband::kDD) * c + ic, 0);
            for (int iy = 0; iy < y.h(); ++iy) {
                T* top = out.row(in, ic, 2 * iy);
                T* bot = out.row(in, ic, 2 * iy + 1);
                for (int ix = 0; ix < y.w(); ++ix) {
                    const int64_t o = static_cast<int64_t>(iy) * y.w() + ix;
                    top[2 * ix] = (aa[o] + ad[o] + da[o] + dd[o]) * T(0.5);
                    top[2 * ix + 1] = (aa[o] + ad[o] - da[o] - dd[o]) * T(0.5);
                    bot[2 * ix] = (aa[o] - ad[o] + da[o] - dd[o]) * T(0.5);
                    bot[2 * ix + 1] = (aa[o] - ad[o] - da[o] + dd[o]) * T(0.5);
                }
            }
        }
    }
    return out;
}

// out[n][k][r*i+di][r*j+dj] = in[n][k*r^2 + di*r + dj][i][j]
template <typename T>
TensorT<T> pixel_shuffle(const TensorT<T>& x, int r) {
    if (r < 1) throw ParamError("pixel_shuffle: factor must be >= 1");
    if (r == 1) return x;
    if (x.c() % (r * r) != 0) {
        throw ShapeError("pixel_shuffle: channels " + std::to_string(x.c()) +
                         " not divisible by r^2 = " + std::to_string(r * r));
    }
    TensorT<T> out(x.n(), x.c() / (r * r), r * x.h(), r * x.w());
    for (int in = 0; in < x.n(); ++in) {
        for (int oc = 0; oc < out.c(); ++oc) {
            for (int di = 0; di < r; ++di) {
                for (int dj = 0; dj < r; ++dj) {
                    const int ic = oc * r * r + di * r + dj;
                    for (int iy = 0; iy < x.h(); ++iy) {
                        const T* src = x.row(in, ic, iy);
                        T* dst = out.row(in, oc, r * iy + di) + dj;
                        for (int ix = 0; ix < x.w(); ++ix) {
                            dst[static_cast<int64_t>(ix) * r] = src[ix];
                        }
                    }
                }
            }
        }
    }
    return out;
}

// Exact inverse of pixel_shuffle.
template <typename T>
TensorT<T> pixel_unshuffle(const TensorT<T>& x, int r) {
    if (r < 1) throw ParamError("pixel_unshuffle: factor must be >= 1");
    if (r == 1) return x;
    if (x.h() % r != 0 || x.w() % r != 0) {
        throw ShapeError("pixel_unshuffle: spatial dims " + x.shape().str() +
                         " not divisible by r = " + std::to_string(r));
    }
    TensorT<T> out(x.n(), x.c() * r * r, x.h() / r, x.w() / r);
    for (int in = 0; in < x.n(); ++in) {
        for (int ic = 0; ic < x.c(); ++ic) {
            for (int di = 0; di < r; ++di) {
                for (int dj = 0; dj < r; ++dj) {
                    const int oc = ic * r * r + di * r + dj;
                    for (int oy = 0; oy < out.h(); ++oy) {
                        const T* src = x.row(in, ic, r * oy + di) + dj;
                        T* dst = out.row(in, oc, oy);
                        for (int ox = 0; ox < out.w(); ++ox) {
                            dst[ox] = src[static_cast<int64_t>(ox) * r];
                        }
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace wmx2
