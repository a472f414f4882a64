#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gshs/rng.hpp"
#include "gshs/types.hpp"

namespace gshs {

// Hierarchy shape: level l holds r^l * N Gaussians, l in [0, L).
struct HierarchyConfig {
    int levels = 5;          // L
    int base_count = 256;    // N
    int upsample_ratio = 4;  // r
    double delta_s = 0.0;    // fixed per-level log-scale decrement, < 0
    int image_width = 256;   // only used to derive delta_s
    int image_height = 256;

    std::size_t level_count(int level) const;
    std::size_t total_count() const;  // N * (r^L - 1) / (r - 1)

    // Fills delta_s from the resolution rule and validates the fields.
    // Throws InvalidConfig on violation (including delta_s >= 0).
    static HierarchyConfig make(int levels, int base_count, int upsample_ratio,
                                int image_width, int image_height);
};

// delta_s = -log(sqrt(H*W) / (L * sqrt(N))). Throws InvalidConfig when the
// result is not negative.
double delta_s(int height, int width, int levels, int base_count);

// Raw residual parameters for one level: one set parameterizing the rendered
// Gaussians (G-hat) and one parameterizing the anchors (A-hat). At level 0
// the anchor set is realized directly instead of densified.
struct ResidualArrays {
    std::vector<Vec3> mu_hat_raw;   // pre-tanh
    std::vector<Vec3> s_hat_raw;    // pre-(-softplus)
    std::vector<Vec4> q_hat;
    std::vector<double> alpha_hat;
    std::vector<Vec3> c_hat;

    std::size_t size() const { return mu_hat_raw.size(); }
    void resize(std::size_t n);
};

struct LevelResiduals {
    ResidualArrays gaussians;  // G-hat
    ResidualArrays anchors;    // A-hat
};

// Activated residual for one Gaussian: mu_hat in (-1,1)^3, s_hat < 0,
// the rest passed through raw.
struct ActivatedResidual {
    Vec3 mu_hat = Vec3::Zero();
    Vec3 s_hat = Vec3::Zero();
    Vec4 q_hat = Vec4::Zero();
    double alpha_hat = 0.0;
    Vec3 c_hat = Vec3::Zero();
};

ActivatedResidual activate_residual(const Vec3& mu_hat_raw, const Vec3& s_hat_raw,
                                    const Vec4& q_hat, double alpha_hat, const Vec3& c_hat);

// Applies the activations to a whole level (tanh on positions, -softplus on
// scale residuals; quaternion/opacity/color residuals pass through).
LevelResiduals activate_residuals(const LevelResiduals& raw);

// Child = parent advanced by one level:
//   mu    = parent.mu + R(parent.quat) diag(exp(parent.log_scale)) res.mu_hat
//   ls    = parent.log_scale + res.s_hat + delta_s
//   other = parent.<param> + residual (raw space)
RawGaussian densify(const RawGaussian& parent, const ActivatedResidual& res, double delta_s);

struct Scene {
    HierarchyConfig config;
    std::vector<GaussianSet> levels;   // G^l, rendered
    std::vector<GaussianSet> anchors;  // A^l, regularization only
    std::optional<GaussianSet> background;

    // All rendered Gaussians: every level concatenated in level order,
    // background (if any) appended last. Anchors never appear.
    GaussianSet render_list() const;
    std::size_t hierarchy_count() const;
};

// Builds level l from the previous level's anchors; residuals are raw.
// Child j descends from anchor i = j / r. Throws ShapeMismatch.
std::pair<GaussianSet, GaussianSet> build_level(const GaussianSet& anchors_prev,
                                                const LevelResiduals& residuals,
                                                const HierarchyConfig& cfg);

// Realizes the whole hierarchy from raw residuals. Level-0 anchors are the
// activated A-hat^0 taken directly (position = tanh(raw), log-scale =
// -softplus(raw)); everything else cascades through densify.
Scene build_scene(const std::vector<LevelResiduals>& all_residuals, const HierarchyConfig& cfg);

// Level-0 anchors realize opacity 0.1, scale e^{-1/sqrt(N)}, identity
// quaternion and positions uniform in [-0.5, 0.5]^3 (raw, pre-tanh); all
// other raws ~ N(0, sigma_init).
std::vector<LevelResiduals> init_residuals(const HierarchyConfig& cfg, std::uint64_t seed,
                                           double sigma_init = 0.02);

// Positions projected radially onto the sphere of the given radius.
// Throws DegeneratePosition when a raw position has norm <= 1e-8.
GaussianSet build_background(const std::vector<Vec3>& raw_positions,
                             const std::vector<Vec3>& log_scale, const std::vector<Vec4>& quat,
                             const std::vector<double>& opacity_logit,
                             const std::vector<Vec3>& color_logit, double radius = 3.0);

// Random background shell (default 10,000 Gaussians on the radius-3 sphere).
GaussianSet random_background(Rng& rng, std::size_t count = 10000, double radius = 3.0);

// Every rendered Gaussian's log_scale reduced by ln(1/factor); positions,
// colors, opacities and anchors untouched.
Scene shrink_scales(const Scene& scene, double factor);

// ---- invariants -----------------------------------------------------------

struct InvariantReport {
    bool ok = true;
    std::string detail;  // first violation, "level l child j: ..."
};

// Checks locality (inverted local offset componentwise in (-1,1)) and strict
// scale monotonicity (child < parent + delta_s) for every parent/child pair
// at levels >= 1, plus the level-0 anchor position bound.
InvariantReport check_scene_invariants(const Scene& scene);

// ---- gradient chaining ------------------------------------------------------

struct ResidualGradArrays {
    std::vector<Vec3> mu_hat_raw;
    std::vector<Vec3> s_hat_raw;
    std::vector<Vec4> q_hat;
    std::vector<double> alpha_hat;
    std::vector<Vec3> c_hat;

    void resize_zero(std::size_t n);
};

struct LevelResidualGrads {
    ResidualGradArrays gaussians;
    ResidualGradArrays anchors;
};

// Chains gradients w.r.t. the realized rendered Gaussians (flat array in
// render-list order, hierarchy part only) back to every raw residual.
// Anchors receive gradients only through their children.
std::vector<LevelResidualGrads> backprop_to_residuals(const Scene& scene,
                                                      const std::vector<LevelResiduals>& raws,
                                                      const GaussianSetGrads& render_grads);

}  // namespace gshs
