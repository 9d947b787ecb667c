#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "recognet/tensor.hpp"

namespace recognet {

namespace detail {

inline int div_ceil(int a, int b) { return a > 0 ? (a + b - 1) / b : -((-a) / b); }
inline int div_floor(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Geometry shared by the three convolution kernels. `h,w` is the dense side
// (the conv input), `oh,ow` the strided side (the conv output).
struct ConvGeom {
    int n, cin, h, w;
    int cout, kh, kw;
    int stride, pad, dil;
    int oh, ow;
};

// Valid output range along one axis for a fixed kernel tap.
inline void tap_range(int k, int in_extent, int out_extent, int stride, int pad, int dil,
                      int& lo, int& hi) {
    lo = std::max(0, div_ceil(pad - k * dil, stride));
    hi = std::min(out_extent - 1, div_floor(in_extent - 1 + pad - k * dil, stride));
}

// y[n,co,oh,ow] += sum_{ci,kh,kw} x[n,ci,ih,iw] * w[co,ci,kh,kw]
template <typename T>
void conv_forward_accum(const T* x, const T* w, T* y, const ConvGeom& g) {
    const int64_t x_plane = int64_t(g.h) * g.w;
    const int64_t y_plane = int64_t(g.oh) * g.ow;
    for (int n = 0; n < g.n; ++n) {
        for (int co = 0; co < g.cout; ++co) {
            T* y_nc = y + (int64_t(n) * g.cout + co) * y_plane;
            for (int ci = 0; ci < g.cin; ++ci) {
                const T* x_nc = x + (int64_t(n) * g.cin + ci) * x_plane;
                const T* w_cc = w + (int64_t(co) * g.cin + ci) * g.kh * g.kw;
                for (int kh = 0; kh < g.kh; ++kh) {
                    int oh_lo, oh_hi;
                    tap_range(kh, g.h, g.oh, g.stride, g.pad, g.dil, oh_lo, oh_hi);
                    for (int kw = 0; kw < g.kw; ++kw) {
                        const T wv = w_cc[kh * g.kw + kw];
                        int ow_lo, ow_hi;
                        tap_range(kw, g.w, g.ow, g.stride, g.pad, g.dil, ow_lo, ow_hi);
                        const int iw_off = kw * g.dil - g.pad;
                        for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                            const T* xrow = x_nc + int64_t(oh * g.stride - g.pad + kh * g.dil) * g.w;
                            T* yrow = y_nc + int64_t(oh) * g.ow;
                            if (g.stride == 1) {
                                const T* xp = xrow + iw_off;
                                for (int ow = ow_lo; ow <= ow_hi; ++ow) yrow[ow] += wv * xp[ow];
                            } else {
                                for (int ow = ow_lo; ow <= ow_hi; ++ow)
                                    yrow[ow] += wv * xrow[ow * g.stride + iw_off];
                            }
                        }
                    }
                }
            }
        }
    }
}

// gx[n,ci,ih,iw] += sum_{co,kh,kw} gy[n,co,oh,ow] * w[co,ci,kh,kw]
template <typename T>
void conv_input_grad_accum(const T* gy, const T* w, T* gx, const ConvGeom& g) {
    const int64_t x_plane = int64_t(g.h) * g.w;
    const int64_t y_plane = int64_t(g.oh) * g.ow;
    for (int n = 0; n < g.n; ++n) {
        for (int co = 0; co < g.cout; ++co) {
            const T* gy_nc = gy + (int64_t(n) * g.cout + co) * y_plane;
            for (int ci = 0; ci < g.cin; ++ci) {
                T* gx_nc = gx + (int64_t(n) * g.cin + ci) * x_plane;
                const T* w_cc = w + (int64_t(co) * g.cin + ci) * g.kh * g.kw;
                for (int kh = 0; kh < g.kh; ++kh) {
                    int oh_lo, oh_hi;
                    tap_range(kh, g.h, g.oh, g.stride, g.pad, g.dil, oh_lo, oh_hi);
                    for (int kw = 0; kw < g.kw; ++kw) {
                        const T wv = w_cc[kh * g.kw + kw];
                        int ow_lo, ow_hi;
                        tap_range(kw, g.w, g.ow, g.stride, g.pad, g.dil, ow_lo, ow_hi);
                        const int iw_off = kw * g.dil - g.pad;
                        for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                            T* gxrow = gx_nc + int64_t(oh * g.stride - g.pad + kh * g.dil) * g.w;
                            const T* gyrow = gy_nc + int64_t(oh) * g.ow;
                            if (g.stride == 1) {
                                T* gp = gxrow + iw_off;
                                for (int ow = ow_lo; ow <= ow_hi; ++ow) gp[ow] += wv * gyrow[ow];
                            } else {
                                for (int ow = ow_lo; ow <= ow_hi; ++ow)
                                    gxrow[ow * g.stride + iw_off] += wv * gyrow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

// gw[co,ci,kh,kw] += sum_{n,oh,ow} gy[n,co,oh,ow] * x[n,ci,ih,iw]
template <typename T>
void conv_weight_grad_accum(const T* x, const T* gy, T* gw, const ConvGeom& g) {
    const int64_t x_plane = int64_t(g.h) * g.w;
    const int64_t y_plane = int64_t(g.oh) * g.ow;
    for (int n = 0; n < g.n; ++n) {
        for (int co = 0; co < g.cout; ++co) {
            const T* gy_nc = gy + (int64_t(n) * g.cout + co) * y_plane;
            for (int ci = 0; ci < g.cin; ++ci) {
                const T* x_nc = x + (int64_t(n) * g.cin + ci) * x_plane;
                T* gw_cc = gw + (int64_t(co) * g.cin + ci) * g.kh * g.kw;
                for (int kh = 0; kh < g.kh; ++kh) {
                    int oh_lo, oh_hi;
                    tap_range(kh, g.h, g.oh, g.stride, g.pad, g.dil, oh_lo, oh_hi);
                    for (int kw = 0; kw < g.kw; ++kw) {
                        int ow_lo, ow_hi;
                        tap_range(kw, g.w, g.ow, g.stride, g.pad, g.dil, ow_lo, ow_hi);
                        const int iw_off = kw * g.dil - g.pad;
                        T acc = T(0);
                        for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                            const T* xrow = x_nc + int64_t(oh * g.stride - g.pad + kh * g.dil) * g.w;
                            const T* gyrow = gy_nc + int64_t(oh) * g.ow;
                            if (g.stride == 1) {
                                const T* xp = xrow + iw_off;
                                for (int ow = ow_lo; ow <= ow_hi; ++ow) acc += gyrow[ow] * xp[ow];
                            } else {
                                for (int ow = ow_lo; ow <= ow_hi; ++ow)
                                    acc += gyrow[ow] * xrow[ow * g.stride + iw_off];
                            }
                        }
                        gw_cc[kh * g.kw + kw] += acc;
                    }
                }
            }
        }
    }
}

inline void require_rank4(const Shape& s, const char* op, const char* what) {
    if (s.size() != 4)
        throw std::invalid_argument(std::string(op) + ": " + what + " must be 4-D, got " +
                                    shape_str(s));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: cross-correlation over [N,Cin,H,W] with weight [Cout,Cin,kH,kW].

template <typename T>
Tensor<T> conv2d(Tensor<T> input, Tensor<T> weight, Tensor<T> bias, int stride = 1,
                 int padding = 0, int dilation = 1) {
    detail::require_rank4(input.shape(), "conv2d", "input");
    detail::require_rank4(weight.shape(), "conv2d", "weight");
    if (stride < 1 || padding < 0 || dilation < 1)
        throw std::invalid_argument("conv2d: stride/padding/dilation out of range");
    const Shape& is = input.shape();
    const Shape& ws = weight.shape();
    if (is[1] != ws[1])
        throw std::invalid_argument("conv2d: input channels " + std::to_string(is[1]) +
                                    " do not match weight input channels " + std::to_string(ws[1]));
    if (bias.defined() && (bias.rank() != 1 || bias.extent(0) != ws[0]))
        throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) +
                                    " does not match output channels " + std::to_string(ws[0]));

    detail::ConvGeom g{is[0], is[1], is[2], is[3], ws[0], ws[2], ws[3],
                       stride,  padding, dilation, 0,     0};
    g.oh = (g.h + 2 * padding - dilation * (g.kh - 1) - 1) / stride + 1;
    g.ow = (g.w + 2 * padding - dilation * (g.kw - 1) - 1) / stride + 1;
    if (g.h + 2 * padding < dilation * (g.kh - 1) + 1 || g.w + 2 * padding < dilation * (g.kw - 1) + 1 ||
        g.oh < 1 || g.ow < 1)
        throw std::invalid_argument("conv2d: non-positive output extent for input " + shape_str(is) +
                                    ", kernel " + shape_str(ws) + ", stride " + std::to_string(stride) +
                                    ", padding " + std::to_string(padding) + ", dilation " +
                                    std::to_string(dilation));

    std::vector<Tensor<T>> parents{input, weight};
    if (bias.defined()) parents.push_back(bias);
    Tensor<T> out = Tensor<T>::make_result(
        {g.n, g.cout, g.oh, g.ow}, std::move(parents),
        [input, weight, bias, g](detail::TensorNode<T>& self) mutable {
            if (input.requires_grad())
                detail::conv_input_grad_accum(self.grad.data(), weight.data().data(),
                                              input.grad().data(), g);
            if (weight.requires_grad())
                detail::conv_weight_grad_accum(input.data().data(), self.grad.data(),
                                               weight.grad().data(), g);
            if (bias.defined() && bias.requires_grad()) {
                auto& gb = bias.grad();
                const int64_t plane = int64_t(g.oh) * g.ow;
                for (int n = 0; n < g.n; ++n)
                    for (int co = 0; co < g.cout; ++co) {
                        const T* gy = self.grad.data() + (int64_t(n) * g.cout + co) * plane;
                        T acc = T(0);
                        for (int64_t i = 0; i < plane; ++i) acc += gy[i];
                        gb[co] += acc;
                    }
            }
        });

    auto& y = out.data();
    if (bias.defined()) {
        const int64_t plane = int64_t(g.oh) * g.ow;
        for (int n = 0; n < g.n; ++n)
            for (int co = 0; co < g.cout; ++co)
                std::fill_n(y.data() + (int64_t(n) * g.cout + co) * plane, plane, bias.data()[co]);
    }
    detail::conv_forward_accum(input.data().data(), weight.data().data(), y.data(), g);
    return out;
}

template <typename T>
Tensor<T> conv2d(Tensor<T> input, Tensor<T> weight, int stride = 1, int padding = 0,
                 int dilation = 1) {
    return conv2d(input, weight, Tensor<T>{}, stride, padding, dilation);
}

// ---------------------------------------------------------------------------
// conv_transpose2d: exact adjoint of conv2d as a linear map. Weight layout is
// [Cin, Cout, kH, kW], so <conv2d(x,w), y> == <x, conv_transpose2d(y,w)>
// holds with the same weight tensor.

template <typename T>
Tensor<T> conv_transpose2d(Tensor<T> input, Tensor<T> weight, Tensor<T> bias, int stride = 1,
                           int padding = 0) {
    detail::require_rank4(input.shape(), "conv_transpose2d", "input");
    detail::require_rank4(weight.shape(), "conv_transpose2d", "weight");
    if (stride < 1 || padding < 0)
        throw std::invalid_argument("conv_transpose2d: stride/padding out of range");
    const Shape& is = input.shape();
    const Shape& ws = weight.shape();
    if (is[1] != ws[0])
        throw std::invalid_argument("conv_transpose2d: input channels " + std::to_string(is[1]) +
                                    " do not match weight leading channels " + std::to_string(ws[0]));
    const int out_h = (is[2] - 1) * stride - 2 * padding + ws[2];
    const int out_w = (is[3] - 1) * stride - 2 * padding + ws[3];
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("conv_transpose2d: non-positive output extent " +
                                    std::to_string(out_h) + "x" + std::to_string(out_w));
    if (bias.defined() && (bias.rank() != 1 || bias.extent(0) != ws[1]))
        throw std::invalid_argument("conv_transpose2d: bias shape " + shape_str(bias.shape()) +
                                    " does not match output channels " + std::to_string(ws[1]));

    // Geometry of the conv this op is the transpose of: dense side = our
    // output, strided side = our input.
    detail::ConvGeom g{is[0], ws[1], out_h, out_w, ws[0], ws[2], ws[3],
                       stride, padding, 1,    is[2], is[3]};

    std::vector<Tensor<T>> parents{input, weight};
    if (bias.defined()) parents.push_back(bias);
    Tensor<T> out = Tensor<T>::make_result(
        {is[0], ws[1], out_h, out_w}, std::move(parents),
        [input, weight, bias, g](detail::TensorNode<T>& self) mutable {
            if (input.requires_grad())
                detail::conv_forward_accum(self.grad.data(), weight.data().data(),
                                           input.grad().data(), g);
            if (weight.requires_grad())
                detail::conv_weight_grad_accum(self.grad.data(), input.data().data(),
                                               weight.grad().data(), g);
            if (bias.defined() && bias.requires_grad()) {
                auto& gb = bias.grad();
                const int64_t plane = int64_t(g.h) * g.w;
                for (int n = 0; n < g.n; ++n)
                    for (int c = 0; c < g.cin; ++c) {
                        const T* gy = self.grad.data() + (int64_t(n) * g.cin + c) * plane;
                        T acc = T(0);
                        for (int64_t i = 0; i < plane; ++i) acc += gy[i];
                        gb[c] += acc;
                    }
            }
        });

    auto& y = out.data();
    if (bias.defined()) {
        const int64_t plane = int64_t(out_h) * out_w;
        for (int n = 0; n < is[0]; ++n)
            for (int c = 0; c < ws[1]; ++c)
                std::fill_n(y.data() + (int64_t(n) * ws[1] + c) * plane, plane, bias.data()[c]);
    }
    detail::conv_input_grad_accum(input.data().data(), weight.data().data(), y.data(), g);
    return out;
}

template <typename T>
Tensor<T> conv_transpose2d(Tensor<T> input, Tensor<T> weight, int stride = 1,
                           int padding = 0) {
    return conv_transpose2d(input, weight, Tensor<T>{}, stride, padding);
}

// ---------------------------------------------------------------------------
// bilinear_resize: half-pixel (align-corners-false) interpolation. Exact
// identity when the size is unchanged.

namespace detail {

template <typename T>
struct ResizeAxis {
    std::vector<int> i0, i1;
    std::vector<T> w1;
};

template <typename T>
ResizeAxis<T> resize_axis(int in_extent, int out_extent) {
    ResizeAxis<T> a;
    a.i0.resize(out_extent);
    a.i1.resize(out_extent);
    a.w1.resize(out_extent);
    const T scale = static_cast<T>(in_extent) / static_cast<T>(out_extent);
    for (int o = 0; o < out_extent; ++o) {
        T src = (static_cast<T>(o) + T(0.5)) * scale - T(0.5);
        if (src < T(0)) src = T(0);
        int i0 = static_cast<int>(src);
        if (i0 > in_extent - 1) i0 = in_extent - 1;
        const int i1 = std::min(i0 + 1, in_extent - 1);
        a.i0[o] = i0;
        a.i1[o] = i1;
        a.w1[o] = src - static_cast<T>(i0);
    }
    return a;
}

}  // namespace detail

template <typename T>
Tensor<T> bilinear_resize(Tensor<T> input, int out_h, int out_w) {
    detail::require_rank4(input.shape(), "bilinear_resize", "input");
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("bilinear_resize: target extents must be >= 1");
    const Shape& is = input.shape();
    const int n = is[0], c = is[1], h = is[2], w = is[3];
    const auto ah = detail::resize_axis<T>(h, out_h);
    const auto aw = detail::resize_axis<T>(w, out_w);

    Tensor<T> out = Tensor<T>::make_result(
        {n, c, out_h, out_w}, {input}, [input, ah, aw, n, c, h, w, out_h, out_w](detail::TensorNode<T>& self) mutable {
            if (!input.requires_grad()) return;
            auto& gx = input.grad();
            const int64_t in_plane = int64_t(h) * w;
            const int64_t out_plane = int64_t(out_h) * out_w;
            for (int64_t nc = 0; nc < int64_t(n) * c; ++nc) {
                T* gxp = gx.data() + nc * in_plane;
                const T* gyp = self.grad.data() + nc * out_plane;
                for (int oh = 0; oh < out_h; ++oh) {
                    const T wh1 = ah.w1[oh], wh0 = T(1) - wh1;
                    const int h0 = ah.i0[oh], h1 = ah.i1[oh];
                    for (int ow = 0; ow < out_w; ++ow) {
                        const T ww1 = aw.w1[ow], ww0 = T(1) - ww1;
                        const T gy = gyp[int64_t(oh) * out_w + ow];
                        gxp[int64_t(h0) * w + aw.i0[ow]] += gy * wh0 * ww0;
                        gxp[int64_t(h0) * w + aw.i1[ow]] += gy * wh0 * ww1;
                        gxp[int64_t(h1) * w + aw.i0[ow]] += gy * wh1 * ww0;
                        gxp[int64_t(h1) * w + aw.i1[ow]] += gy * wh1 * ww1;
                    }
                }
            }
        });

    auto& y = out.data();
    const auto& x = input.data();
    const int64_t in_plane = int64_t(h) * w;
    const int64_t out_plane = int64_t(out_h) * out_w;
    for (int64_t nc = 0; nc < int64_t(n) * c; ++nc) {
        const T* xp = x.data() + nc * in_plane;
        T* yp = y.data() + nc * out_plane;
        for (int oh = 0; oh < out_h; ++oh) {
            const T wh1 = ah.w1[oh], wh0 = T(1) - wh1;
            const int h0 = ah.i0[oh], h1 = ah.i1[oh];
            for (int ow = 0; ow < out_w; ++ow) {
                const T ww1 = aw.w1[ow], ww0 = T(1) - ww1;
                yp[int64_t(oh) * out_w + ow] = wh0 * (ww0 * xp[int64_t(h0) * w + aw.i0[ow]] +
                                                      ww1 * xp[int64_t(h0) * w + aw.i1[ow]]) +
                                               wh1 * (ww0 * xp[int64_t(h1) * w + aw.i0[ow]] +
                                                      ww1 * xp[int64_t(h1) * w + aw.i1[ow]]);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// global_avg_pool: [N,C,H,W] -> [N,C,1,1]

template <typename T>
Tensor<T> global_avg_pool(Tensor<T> input) {
    detail::require_rank4(input.shape(), "global_avg_pool", "input");
    const Shape& is = input.shape();
    const int64_t plane = int64_t(is[2]) * is[3];
    const T inv = T(1) / static_cast<T>(plane);
    Tensor<T> out = Tensor<T>::make_result(
        {is[0], is[1], 1, 1}, {input}, [input, plane, inv](detail::TensorNode<T>& self) mutable {
            if (!input.requires_grad()) return;
            auto& gx = input.grad();
            for (size_t nc = 0; nc < self.grad.size(); ++nc) {
                const T g = self.grad[nc] * inv;
                T* gp = gx.data() + int64_t(nc) * plane;
                for (int64_t i = 0; i < plane; ++i) gp[i] += g;
            }
        });
    const auto& x = input.data();
    auto& y = out.data();
    for (size_t nc = 0; nc < y.size(); ++nc) {
        const T* xp = x.data() + int64_t(nc) * plane;
        T acc = T(0);
        for (int64_t i = 0; i < plane; ++i) acc += xp[i];
        y[nc] = acc * inv;
    }
    return out;
}

// ---------------------------------------------------------------------------
// channel_norm: per-sample, per-channel spatial normalization with a learned
// affine. Stands in where batch statistics would leak across the slice/time
// axis.

template <typename T>
Tensor<T> channel_norm(Tensor<T> input, Tensor<T> gamma, Tensor<T> beta, T eps = T(1e-5)) {
    detail::require_rank4(input.shape(), "channel_norm", "input");
    const Shape& is = input.shape();
    if (gamma.rank() != 1 || gamma.extent(0) != is[1] || beta.rank() != 1 || beta.extent(0) != is[1])
        throw std::invalid_argument("channel_norm: affine shapes " + shape_str(gamma.shape()) + "/" +
                                    shape_str(beta.shape()) + " do not match channels " +
                                    std::to_string(is[1]));
    const int n = is[0], c = is[1];
    const int64_t plane = int64_t(is[2]) * is[3];
    const T inv_plane = T(1) / static_cast<T>(plane);

    std::vector<T> xhat(input.data().size());
    std::vector<T> invstd(size_t(n) * c);
    const auto& x = input.data();
    for (int64_t nc = 0; nc < int64_t(n) * c; ++nc) {
        const T* xp = x.data() + nc * plane;
        T mu = T(0);
        for (int64_t i = 0; i < plane; ++i) mu += xp[i];
        mu *= inv_plane;
        T var = T(0);
        for (int64_t i = 0; i < plane; ++i) {
            const T d = xp[i] - mu;
            var += d * d;
        }
        var *= inv_plane;
        const T inv = T(1) / std::sqrt(var + eps);
        invstd[nc] = inv;
        T* hp = xhat.data() + nc * plane;
        for (int64_t i = 0; i < plane; ++i) hp[i] = (xp[i] - mu) * inv;
    }

    Tensor<T> out = Tensor<T>::make_result(
        is, {input, gamma, beta},
        [input, gamma, beta, xhat, invstd, n, c, plane, inv_plane](detail::TensorNode<T>& self) mutable {
            for (int64_t nc = 0; nc < int64_t(n) * c; ++nc) {
                const int ch = static_cast<int>(nc % c);
                const T* hp = xhat.data() + nc * plane;
                const T* gp = self.grad.data() + nc * plane;
                T sum_g = T(0), sum_gh = T(0);
                for (int64_t i = 0; i < plane; ++i) {
                    sum_g += gp[i];
                    sum_gh += gp[i] * hp[i];
                }
                if (gamma.requires_grad()) gamma.grad()[ch] += sum_gh;
                if (beta.requires_grad()) beta.grad()[ch] += sum_g;
                if (input.requires_grad()) {
                    const T k = gamma.data()[ch] * invstd[nc];
                    const T mg = sum_g * inv_plane;
                    const T mgh = sum_gh * inv_plane;
                    T* gx = input.grad().data() + nc * plane;
                    for (int64_t i = 0; i < plane; ++i) gx[i] += k * (gp[i] - mg - hp[i] * mgh);
                }
            }
        });

    auto& y = out.data();
    for (int64_t nc = 0; nc < int64_t(n) * c; ++nc) {
        const int ch = static_cast<int>(nc % c);
        const T gm = gamma.data()[ch], bt = beta.data()[ch];
        const T* hp = xhat.data() + nc * plane;
        T* yp = y.data() + nc * plane;
        for (int64_t i = 0; i < plane; ++i) yp[i] = gm * hp[i] + bt;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weighted binary cross-entropy on logits, computed in logit space for
// stability. Sums over slices (and channels), averages over pixels.

namespace detail {
template <typename T>
T softplus(T t) {
    const T m = t > T(0) ? t : T(0);
    return m + std::log1p(std::exp(-std::abs(t)));
}
}  // namespace detail

template <typename T>
Tensor<T> bce_with_logits(Tensor<T> logits, Tensor<T> targets, T pos_weight = T(1)) {
    detail::require_rank4(logits.shape(), "bce_with_logits", "logits");
    if (logits.shape() != targets.shape())
        throw std::invalid_argument("bce_with_logits: logits " + shape_str(logits.shape()) +
                                    " vs targets " + shape_str(targets.shape()));
    if (!(pos_weight > T(0)))
        throw std::invalid_argument("bce_with_logits: pos_weight must be > 0");
    for (T v : targets.data())
        if (v != T(0) && v != T(1))
            throw std::invalid_argument("bce_with_logits: non-binary target value " +
                                        std::to_string(static_cast<double>(v)));

    const Shape& s = logits.shape();
    const T inv_px = T(1) / static_cast<T>(int64_t(s[2]) * s[3]);
    Tensor<T> out = Tensor<T>::make_result(
        {1}, {logits, targets}, [logits, targets, pos_weight, inv_px](detail::TensorNode<T>& self) mutable {
            if (!logits.requires_grad()) return;
            auto& gz = logits.grad();
            const auto& z = logits.data();
            const auto& y = targets.data();
            const T g = self.grad[0] * inv_px;
            for (size_t i = 0; i < gz.size(); ++i) {
                T sig;
                if (z[i] >= T(0))
                    sig = T(1) / (T(1) + std::exp(-z[i]));
                else {
                    const T e = std::exp(z[i]);
                    sig = e / (T(1) + e);
                }
                gz[i] += g * ((T(1) - y[i]) * sig - pos_weight * y[i] * (T(1) - sig));
            }
        });

    const auto& z = logits.data();
    const auto& y = targets.data();
    T acc = T(0);
    for (size_t i = 0; i < z.size(); ++i)
        acc += pos_weight * y[i] * detail::softplus(-z[i]) + (T(1) - y[i]) * detail::softplus(z[i]);
    out.data()[0] = acc * inv_px;
    return out;
}

}  // namespace recognet
