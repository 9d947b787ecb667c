#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "recognet/ops.hpp"
#include "recognet/rng.hpp"
#include "recognet/volume.hpp"

namespace recognet {

// Hook for non-fatal pipeline diagnostics (constant volumes etc.).
using WarnFn = std::function<void(const std::string&)>;
inline void ignore_warnings(const std::string&) {}

// ---------------------------------------------------------------------------
// Plain (non-differentiable) slice resampling

inline Volume resample_volume(const Volume& v, int out_h, int out_w) {
    if (v.height == out_h && v.width == out_w) return v;
    Volume out;
    out.slices = v.slices;
    out.height = out_h;
    out.width = out_w;
    out.spacing = v.spacing;
    out.has_spacing = v.has_spacing;
    out.case_id = v.case_id;
    out.voxels.resize(static_cast<size_t>(out.numel()));
    const auto ah = detail::resize_axis<float>(v.height, out_h);
    const auto aw = detail::resize_axis<float>(v.width, out_w);
    for (int s = 0; s < v.slices; ++s) {
        const float* src = v.slice(s);
        float* dst = out.slice(s);
        for (int oh = 0; oh < out_h; ++oh) {
            const float wh1 = ah.w1[oh], wh0 = 1.0f - wh1;
            const int h0 = ah.i0[oh], h1 = ah.i1[oh];
            for (int ow = 0; ow < out_w; ++ow) {
                const float ww1 = aw.w1[ow], ww0 = 1.0f - ww1;
                dst[int64_t(oh) * out_w + ow] =
                    wh0 * (ww0 * src[int64_t(h0) * v.width + aw.i0[ow]] +
                           ww1 * src[int64_t(h0) * v.width + aw.i1[ow]]) +
                    wh1 * (ww0 * src[int64_t(h1) * v.width + aw.i0[ow]] +
                           ww1 * src[int64_t(h1) * v.width + aw.i1[ow]]);
            }
        }
    }
    return out;
}

// Nearest-neighbor resampling keeps masks binary.
inline MaskVolume resample_mask(const MaskVolume& m, int out_h, int out_w) {
    if (m.height == out_h && m.width == out_w) return m;
    MaskVolume out;
    out.slices = m.slices;
    out.height = out_h;
    out.width = out_w;
    out.case_id = m.case_id;
    out.voxels.resize(static_cast<size_t>(out.numel()));
    auto nearest = [](int o, int in_extent, int out_extent) {
        const double src = (o + 0.5) * static_cast<double>(in_extent) / out_extent;
        int i = static_cast<int>(src);
        if (i > in_extent - 1) i = in_extent - 1;
        return i;
    };
    std::vector<int> ys(out_h), xs(out_w);
    for (int oh = 0; oh < out_h; ++oh) ys[oh] = nearest(oh, m.height, out_h);
    for (int ow = 0; ow < out_w; ++ow) xs[ow] = nearest(ow, m.width, out_w);
    for (int s = 0; s < m.slices; ++s) {
        const uint8_t* src = m.slice(s);
        uint8_t* dst = out.slice(s);
        for (int oh = 0; oh < out_h; ++oh)
            for (int ow = 0; ow < out_w; ++ow)
                dst[int64_t(oh) * out_w + ow] = src[int64_t(ys[oh]) * m.width + xs[ow]];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Histogram equalization: plain CDF remap over `bins` levels. Input values
// must already lie in [0,1]; output stays in [0,1] and is monotone
// non-decreasing in the input intensity.

inline void histogram_equalize_slice(float* px, int64_t count, int bins = 256) {
    std::vector<int64_t> hist(bins, 0);
    auto bin_of = [bins](float x) {
        int b = static_cast<int>(x * bins);
        if (b < 0) b = 0;
        if (b > bins - 1) b = bins - 1;
        return b;
    };
    for (int64_t i = 0; i < count; ++i) ++hist[bin_of(px[i])];
    std::vector<float> cdf(bins);
    int64_t acc = 0;
    for (int b = 0; b < bins; ++b) {
        acc += hist[b];
        cdf[b] = static_cast<float>(acc) / static_cast<float>(count);
    }
    for (int64_t i = 0; i < count; ++i) px[i] = cdf[bin_of(px[i])];
}

inline Volume histogram_equalize(const Volume& v, int bins = 256) {
    Volume out = v;
    const int64_t plane = int64_t(v.height) * v.width;
    for (int s = 0; s < v.slices; ++s) histogram_equalize_slice(out.slice(s), plane, bins);
    return out;
}

// ---------------------------------------------------------------------------
// Full pipeline: per-slice bilinear resample to target size, volume-level
// min-max scaling to [0,1], then per-slice histogram equalization.

inline Volume preprocess(const Volume& v, int target_size = 224, const WarnFn& warn = ignore_warnings) {
    if (v.slices < 1) throw DataError("preprocess: empty volume");
    Volume out = resample_volume(v, target_size, target_size);
    float lo = out.voxels[0], hi = out.voxels[0];
    for (float x : out.voxels) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi > lo) {
        const float inv = 1.0f / (hi - lo);
        for (auto& x : out.voxels) x = (x - lo) * inv;
    } else {
        warn("preprocess: constant volume " + v.case_id + ", intensities mapped to 0");
        for (auto& x : out.voxels) x = 0.0f;
    }
    return histogram_equalize(out);
}

inline MaskVolume preprocess_mask(const MaskVolume& m, int target_size = 224) {
    return resample_mask(m, target_size, target_size);
}

// ---------------------------------------------------------------------------
// Training subsequence sampling: uniformly random window of `length`
// consecutive slices; the whole sequence when it is shorter.

inline std::pair<Volume, MaskVolume> sample_subsequence(const Volume& v, const MaskVolume& m,
                                                        int length, Rng& rng) {
    require_same_dims(m, v);
    if (length < 1) throw std::invalid_argument("sample_subsequence: length must be >= 1");
    if (v.slices <= length) return {v, m};
    const int start = rng.below_int(v.slices - length + 1);
    const int64_t plane = int64_t(v.height) * v.width;
    Volume sv;
    sv.slices = length;
    sv.height = v.height;
    sv.width = v.width;
    sv.spacing = v.spacing;
    sv.has_spacing = v.has_spacing;
    sv.case_id = v.case_id;
    sv.voxels.assign(v.voxels.begin() + start * plane, v.voxels.begin() + (start + length) * plane);
    MaskVolume sm;
    sm.slices = length;
    sm.height = m.height;
    sm.width = m.width;
    sm.case_id = m.case_id;
    sm.voxels.assign(m.voxels.begin() + start * plane, m.voxels.begin() + (start + length) * plane);
    return {sv, sm};
}

// ---------------------------------------------------------------------------
// Contrast corruption: first half untouched (bit-identical), every slice of
// the second half rescaled around its own mean so brightness is preserved,
// then clamped to [0,1].

inline Volume corrupt_contrast(const Volume& v, float factor = 0.8f) {
    if (!(factor > 0.0f && factor <= 1.0f))
        throw std::invalid_argument("corrupt_contrast: factor must lie in (0,1]");
    Volume out = v;
    if (factor == 1.0f) return out;
    const int64_t plane = int64_t(v.height) * v.width;
    for (int s = v.slices / 2; s < v.slices; ++s) {
        float* px = out.slice(s);
        double mean = 0.0;
        for (int64_t i = 0; i < plane; ++i) mean += px[i];
        mean /= static_cast<double>(plane);
        const float mu = static_cast<float>(mean);
        for (int64_t i = 0; i < plane; ++i) {
            float x = mu + factor * (px[i] - mu);
            if (x < 0.0f) x = 0.0f;
            if (x > 1.0f) x = 1.0f;
            px[i] = x;
        }
    }
    return out;
}

}  // namespace recognet
