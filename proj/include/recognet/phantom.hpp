#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "recognet/rng.hpp"
#include "recognet/volume.hpp"

namespace recognet {

// Synthetic prostate-like test volume: one ellipsoidal blob of elevated
// intensity over a smoothly varying background, plus additive noise. The
// blob's cross-section grows toward the middle slices and shrinks toward the
// ends, giving the characteristic rise-and-fall size profile.
struct PhantomSpec {
    uint64_t seed = 0;
    int height = 64;
    int width = 64;
    int min_slices = 12;
    int max_slices = 12;
    // Fractional ranges relative to the respective dimension.
    float center_lo = 0.42f, center_hi = 0.58f;
    float axis_z_lo = 0.30f, axis_z_hi = 0.44f;
    float axis_xy_lo = 0.18f, axis_xy_hi = 0.30f;
    float background = 0.20f;
    float texture = 0.15f;
    float contrast = 0.50f;
    float noise = 0.03f;
};

inline std::pair<Volume, MaskVolume> generate_phantom(const PhantomSpec& spec) {
    if (spec.height < 1 || spec.width < 1 || spec.min_slices < 1 || spec.max_slices < spec.min_slices)
        throw std::invalid_argument("generate_phantom: bad dimensions");
    if (spec.noise < 0.0f) throw std::invalid_argument("generate_phantom: noise must be >= 0");

    Rng rng(spec.seed);
    const int s = spec.min_slices + rng.below_int(spec.max_slices - spec.min_slices + 1);
    const int h = spec.height, w = spec.width;

    const double cz = rng.uniform(spec.center_lo, spec.center_hi) * (s - 1);
    const double cy = rng.uniform(spec.center_lo, spec.center_hi) * (h - 1);
    const double cx = rng.uniform(spec.center_lo, spec.center_hi) * (w - 1);
    const double az = rng.uniform(spec.axis_z_lo, spec.axis_z_hi) * s;
    const double ay = rng.uniform(spec.axis_xy_lo, spec.axis_xy_hi) * h;
    const double ax = rng.uniform(spec.axis_xy_lo, spec.axis_xy_hi) * w;
    if (!(az > 0.0) || !(ay > 0.0) || !(ax > 0.0))
        throw std::invalid_argument("generate_phantom: degenerate ellipsoid axis (zero extent)");

    // Low-order polynomial background texture; coefficients in [-1,1].
    double coef[6];
    for (auto& c : coef) c = rng.uniform(-1.0, 1.0);

    Volume vol;
    vol.slices = s;
    vol.height = h;
    vol.width = w;
    vol.voxels.resize(static_cast<size_t>(vol.numel()));
    MaskVolume mask;
    mask.slices = s;
    mask.height = h;
    mask.width = w;
    mask.voxels.resize(static_cast<size_t>(mask.numel()));

    int64_t i = 0;
    for (int z = 0; z < s; ++z) {
        const double dz = (z - cz) / az;
        const double zn = s > 1 ? static_cast<double>(z) / (s - 1) - 0.5 : 0.0;
        for (int y = 0; y < h; ++y) {
            const double dy = (y - cy) / ay;
            const double yn = h > 1 ? static_cast<double>(y) / (h - 1) - 0.5 : 0.0;
            for (int x = 0; x < w; ++x, ++i) {
                const double dx = (x - cx) / ax;
                const double xn = w > 1 ? static_cast<double>(x) / (w - 1) - 0.5 : 0.0;
                const bool inside = dz * dz + dy * dy + dx * dx <= 1.0;
                const double tex = coef[0] * yn + coef[1] * xn + coef[2] * yn * xn +
                                   coef[3] * (yn * yn - 0.25) + coef[4] * (xn * xn - 0.25) +
                                   coef[5] * zn;
                double val = spec.background + spec.texture * tex + (inside ? spec.contrast : 0.0);
                if (spec.noise > 0.0f) val += spec.noise * rng.gaussian();
                vol.voxels[i] = static_cast<float>(val);
                mask.voxels[i] = inside ? 1 : 0;
            }
        }
    }
    return {std::move(vol), std::move(mask)};
}

}  // namespace recognet
