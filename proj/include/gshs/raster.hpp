#pragma once

#include <optional>
#include <vector>

#include "gshs/types.hpp"

namespace gshs {

// Screen-space footprint of one projected Gaussian.
struct Splat2D {
    Vec2 mean2d = Vec2::Zero();       // pixels
    Mat2 cov2d = Mat2::Identity();    // pixels^2, includes the low-pass term
    double depth = 0.0;               // camera-space z
    Vec3 color = Vec3::Zero();        // sigmoid(color_logit), in [0,1]
    double opacity = 0.0;             // sigmoid(opacity_logit)
    int source_index = -1;            // index into the projected GaussianSet
};

// EWA projection: cov2d = J W Sigma W^T J^T + 0.3 I. Returns nullopt when the
// Gaussian is behind the near plane or its 99%-extent circle misses the frame.
std::optional<Splat2D> project_gaussian(const RawGaussian& g, const Camera& cam);

// Alpha-blend of every non-culled Gaussian at every pixel, front to back in
// depth order; no tiling, no radius truncation, no early termination. Per-pair
// contributions with alpha below 1e-30 are skipped (they cannot move a [0,1]
// channel by a representable amount). This is the oracle renderer.
// Throws SingularCovariance.
Image render_reference(const GaussianSet& set, const Camera& cam);

// Tile-binned renderer (16x16 tiles, single global depth sort, per-splat
// radius truncation, per-tile termination at transmittance < 1e-4). Matches
// render_reference within 1e-3 per channel.
Image render_tiled(const GaussianSet& set, const Camera& cam);

// Analytic reverse of the tiled forward pass: gradients of a scalar loss
// w.r.t. every raw parameter of every input Gaussian, given per-pixel image
// gradients. The forward state is recomputed (replayed), not cached.
GaussianSetGrads render_backward(const GaussianSet& set, const Camera& cam,
                                 const Image& dL_dImage);

// Transmittance after each blended splat at one pixel, using the reference
// pipeline; diagnostic for the blending invariants.
std::vector<double> transmittance_profile(const GaussianSet& set, const Camera& cam, int px,
                                          int py);

}  // namespace gshs
