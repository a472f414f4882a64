#include "gshs/hierarchy.hpp"

#include <cmath>

#include "gshs/core.hpp"

namespace gshs {

std::size_t HierarchyConfig::level_count(int level) const {
    std::size_t n = base_count;
    for (int l = 0; l < level; ++l) n *= upsample_ratio;
    return n;
}

std::size_t HierarchyConfig::total_count() const {
    std::size_t total = 0;
    for (int l = 0; l < levels; ++l) total += level_count(l);
    return total;
}

HierarchyConfig HierarchyConfig::make(int levels, int base_count, int upsample_ratio,
                                      int image_width, int image_height) {
    if (levels < 1 || base_count < 1 || upsample_ratio < 1) {
        throw InvalidConfig("levels, base_count, upsample_ratio must all be >= 1");
    }
    HierarchyConfig cfg;
    cfg.levels = levels;
    cfg.base_count = base_count;
    cfg.upsample_ratio = upsample_ratio;
    cfg.image_width = image_width;
    cfg.image_height = image_height;
    cfg.delta_s = gshs::delta_s(image_height, image_width, levels, base_count);
    return cfg;
}

double delta_s(int height, int width, int levels, int base_count) {
    if (height <= 0 || width <= 0 || levels <= 0 || base_count <= 0) {
        throw InvalidConfig("delta_s arguments must be positive");
    }
    const double v = -std::log(std::sqrt(static_cast<double>(height) * width) /
                               (levels * std::sqrt(static_cast<double>(base_count))));
    if (v >= 0.0) {
        throw InvalidConfig("delta_s = " + std::to_string(v) +
                            " is not negative; increase resolution or reduce L*sqrt(N)");
    }
    return v;
}

void ResidualArrays::resize(std::size_t n) {
    mu_hat_raw.resize(n, Vec3::Zero());
    s_hat_raw.resize(n, Vec3::Zero());
    q_hat.resize(n, Vec4::Zero());
    alpha_hat.resize(n, 0.0);
    c_hat.resize(n, Vec3::Zero());
}

ActivatedResidual activate_residual(const Vec3& mu_hat_raw, const Vec3& s_hat_raw,
                                    const Vec4& q_hat, double alpha_hat, const Vec3& c_hat) {
    ActivatedResidual res;
    res.mu_hat = mu_hat_raw.array().tanh();
    res.s_hat = Vec3(-softplus(s_hat_raw.x()), -softplus(s_hat_raw.y()),
                     -softplus(s_hat_raw.z()));
    res.q_hat = q_hat;
    res.alpha_hat = alpha_hat;
    res.c_hat = c_hat;
    return res;
}

LevelResiduals activate_residuals(const LevelResiduals& raw) {
    LevelResiduals out = raw;
    auto activate = [](ResidualArrays& a) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            a.mu_hat_raw[i] = a.mu_hat_raw[i].array().tanh();
            a.s_hat_raw[i] = Vec3(-softplus(a.s_hat_raw[i].x()), -softplus(a.s_hat_raw[i].y()),
                                  -softplus(a.s_hat_raw[i].z()));
        }
    };
    activate(out.gaussians);
    activate(out.anchors);
    return out;
}

RawGaussian densify(const RawGaussian& parent, const ActivatedResidual& res, double delta_s) {
    const Mat3 r = quat_to_rotation(normalize_quaternion(parent.quat));
    const Vec3 s = parent.log_scale.array().exp();

    RawGaussian child;
    child.mu = parent.mu + r * (s.cwiseProduct(res.mu_hat));
    child.log_scale = parent.log_scale + res.s_hat + Vec3::Constant(delta_s);
    child.quat = parent.quat + res.q_hat;
    child.opacity_logit = parent.opacity_logit + res.alpha_hat;
    child.color_logit = parent.color_logit + res.c_hat;
    return child;
}

GaussianSet Scene::render_list() const {
    GaussianSet all;
    for (const auto& level : levels) all.append(level);
    if (background) all.append(*background);
    return all;
}

std::size_t Scene::hierarchy_count() const {
    std::size_t total = 0;
    for (const auto& level : levels) total += level.size();
    return total;
}

std::pair<GaussianSet, GaussianSet> build_level(const GaussianSet& anchors_prev,
                                                const LevelResiduals& residuals,
                                                const HierarchyConfig& cfg) {
    const std::size_t r = cfg.upsample_ratio;
    const std::size_t n_children = anchors_prev.size() * r;
    if (residuals.gaussians.size() != n_children || residuals.anchors.size() != n_children) {
        throw ShapeMismatch("level residual count " + std::to_string(residuals.gaussians.size()) +
                            " != r * parent count " + std::to_string(n_children));
    }

    GaussianSet gaussians, anchors;
    gaussians.resize(n_children);
    anchors.resize(n_children);
    for (std::size_t j = 0; j < n_children; ++j) {
        const std::size_t i = j / r;
        const RawGaussian parent = anchors_prev.get(i);
        const auto& g = residuals.gaussians;
        const auto& a = residuals.anchors;
        gaussians.set(j, densify(parent,
                                 activate_residual(g.mu_hat_raw[j], g.s_hat_raw[j], g.q_hat[j],
                                                   g.alpha_hat[j], g.c_hat[j]),
                                 cfg.delta_s));
        anchors.set(j, densify(parent,
                               activate_residual(a.mu_hat_raw[j], a.s_hat_raw[j], a.q_hat[j],
                                                 a.alpha_hat[j], a.c_hat[j]),
                               cfg.delta_s));
    }
    return {std::move(gaussians), std::move(anchors)};
}

// Level-0 anchors are the activated A-hat^0 interpreted as absolute
// parameters: position tanh-clamped to (-1,1)^3, log-scale = -softplus(raw).
static GaussianSet realize_level0_anchors(const ResidualArrays& a) {
    GaussianSet out;
    out.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        RawGaussian g;
        g.mu = a.mu_hat_raw[i].array().tanh();
        g.log_scale = Vec3(-softplus(a.s_hat_raw[i].x()), -softplus(a.s_hat_raw[i].y()),
                           -softplus(a.s_hat_raw[i].z()));
        g.quat = a.q_hat[i];
        g.opacity_logit = a.alpha_hat[i];
        g.color_logit = a.c_hat[i];
        out.set(i, g);
    }
    return out;
}

Scene build_scene(const std::vector<LevelResiduals>& all_residuals, const HierarchyConfig& cfg) {
    if (cfg.delta_s >= 0.0) throw InvalidConfig("delta_s must be negative");
    if (all_residuals.size() != static_cast<std::size_t>(cfg.levels)) {
        throw ShapeMismatch("expected " + std::to_string(cfg.levels) + " residual levels, got " +
                            std::to_string(all_residuals.size()));
    }
    for (int l = 0; l < cfg.levels; ++l) {
        if (all_residuals[l].gaussians.size() != cfg.level_count(l) ||
            all_residuals[l].anchors.size() != cfg.level_count(l)) {
            throw ShapeMismatch("level " + std::to_string(l) + " residual count != r^l * N");
        }
    }

    Scene scene;
    scene.config = cfg;
    scene.levels.resize(cfg.levels);
    scene.anchors.resize(cfg.levels);

    scene.anchors[0] = realize_level0_anchors(all_residuals[0].anchors);
    {
        const auto& g = all_residuals[0].gaussians;
        scene.levels[0].resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            scene.levels[0].set(
                i, densify(scene.anchors[0].get(i),
                           activate_residual(g.mu_hat_raw[i], g.s_hat_raw[i], g.q_hat[i],
                                             g.alpha_hat[i], g.c_hat[i]),
                           cfg.delta_s));
        }
    }
    for (int l = 1; l < cfg.levels; ++l) {
        auto [gaussians, anchors] = build_level(scene.anchors[l - 1], all_residuals[l], cfg);
        scene.levels[l] = std::move(gaussians);
        scene.anchors[l] = std::move(anchors);
    }
    return scene;
}

std::vector<LevelResiduals> init_residuals(const HierarchyConfig& cfg, std::uint64_t seed,
                                           double sigma_init) {
    Rng rng(seed);
    std::vector<LevelResiduals> out(cfg.levels);

    auto fill_normal = [&](ResidualArrays& a, std::size_t n) {
        a.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < 3; ++k) a.mu_hat_raw[i](k) = rng.normal(0.0, sigma_init);
            for (int k = 0; k < 3; ++k) a.s_hat_raw[i](k) = rng.normal(0.0, sigma_init);
            for (int k = 0; k < 4; ++k) a.q_hat[i](k) = rng.normal(0.0, sigma_init);
            a.alpha_hat[i] = rng.normal(0.0, sigma_init);
            for (int k = 0; k < 3; ++k) a.c_hat[i](k) = rng.normal(0.0, sigma_init);
        }
    };

    // Level-0 anchors: realized opacity 0.1, scale e^{-1/sqrt(N)}, identity
    // rotation, positions uniform in [-0.5, 0.5]^3 before the tanh clamp.
    {
        const std::size_t n = cfg.level_count(0);
        auto& a = out[0].anchors;
        a.resize(n);
        const double s_raw = softplus_inverse(1.0 / std::sqrt(static_cast<double>(cfg.base_count)));
        const double alpha_raw = logit(0.1);
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < 3; ++k) a.mu_hat_raw[i](k) = rng.uniform(-0.5, 0.5);
            a.s_hat_raw[i] = Vec3::Constant(s_raw);
            a.q_hat[i] = Vec4(1, 0, 0, 0);
            a.alpha_hat[i] = alpha_raw;
            for (int k = 0; k < 3; ++k) a.c_hat[i](k) = rng.normal(0.0, sigma_init);
        }
        fill_normal(out[0].gaussians, n);
    }
    for (int l = 1; l < cfg.levels; ++l) {
        const std::size_t n = cfg.level_count(l);
        fill_normal(out[l].gaussians, n);
        fill_normal(out[l].anchors, n);
    }
    return out;
}

GaussianSet build_background(const std::vector<Vec3>& raw_positions,
                             const std::vector<Vec3>& log_scale, const std::vector<Vec4>& quat,
                             const std::vector<double>& opacity_logit,
                             const std::vector<Vec3>& color_logit, double radius) {
    const std::size_t n = raw_positions.size();
    if (log_scale.size() != n || quat.size() != n || opacity_logit.size() != n ||
        color_logit.size() != n) {
        throw ShapeMismatch("background parameter arrays must all have equal length");
    }
    GaussianSet out;
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double norm = raw_positions[i].norm();
        if (norm <= 1e-8) {
            throw DegeneratePosition("background position " + std::to_string(i) +
                                     " has norm <= 1e-8");
        }
        out.mu[i] = raw_positions[i] * (radius / norm);
        out.log_scale[i] = log_scale[i];
        out.quat[i] = quat[i];
        out.opacity_logit[i] = opacity_logit[i];
        out.color_logit[i] = color_logit[i];
    }
    return out;
}

GaussianSet random_background(Rng& rng, std::size_t count, double radius) {
    std::vector<Vec3> pos(count), ls(count), col(count);
    std::vector<Vec4> quat(count, Vec4(1, 0, 0, 0));
    std::vector<double> op(count);
    for (std::size_t i = 0; i < count; ++i) {
        Vec3 p;
        do {
            p = Vec3(rng.normal(), rng.normal(), rng.normal());
        } while (p.norm() <= 1e-8);
        pos[i] = p;
        ls[i] = Vec3::Constant(std::log(0.08) + 0.3 * rng.normal());
        op[i] = logit(0.3);
        col[i] = Vec3(rng.normal(), rng.normal(), rng.normal());
    }
    return build_background(pos, ls, quat, op, col, radius);
}

Scene shrink_scales(const Scene& scene, double factor) {
    if (!(factor > 0.0)) throw InvalidConfig("shrink factor must be > 0");
    Scene out = scene;
    const double shift = std::log(factor);
    for (auto& level : out.levels)
        for (auto& ls : level.log_scale) ls.array() += shift;
    if (out.background)
        for (auto& ls : out.background->log_scale) ls.array() += shift;
    return out;
}

InvariantReport check_scene_invariants(const Scene& scene) {
    InvariantReport report;
    auto fail = [&](const std::string& msg) {
        report.ok = false;
        if (report.detail.empty()) report.detail = msg;
    };

    const std::size_t n_anchor0 = scene.anchors.empty() ? 0 : scene.anchors[0].size();
    for (std::size_t i = 0; i < n_anchor0; ++i) {
        const Vec3& mu = scene.anchors[0].mu[i];
        if (mu.cwiseAbs().maxCoeff() > 1.0) {
            fail("level 0 anchor " + std::to_string(i) + ": position outside [-1,1]^3");
            return report;
        }
    }

    const std::size_t r = scene.config.upsample_ratio;
    for (int l = 1; l < static_cast<int>(scene.levels.size()); ++l) {
        const GaussianSet& parents = scene.anchors[l - 1];
        for (const GaussianSet* children : {&scene.levels[l], &scene.anchors[l]}) {
            const bool is_anchor = children == &scene.anchors[l];
            for (std::size_t j = 0; j < children->size(); ++j) {
                const std::size_t i = j / r;
                const RawGaussian p = parents.get(i);
                const Mat3 rot = quat_to_rotation(normalize_quaternion(p.quat));
                const Vec3 s_inv = (-p.log_scale).array().exp();
                const Vec3 local = s_inv.cwiseProduct(rot.transpose() * (children->mu[j] - p.mu));
                const std::string kind = is_anchor ? "anchor" : "gaussian";
                if (!(local.cwiseAbs().maxCoeff() < 1.0)) {
                    fail("level " + std::to_string(l) + " " + kind + " " + std::to_string(j) +
                         ": locality offset " + std::to_string(local.cwiseAbs().maxCoeff()) +
                         " not in (-1,1)");
                    return report;
                }
                const Vec3 bound = p.log_scale + Vec3::Constant(scene.config.delta_s);
                if (!((children->log_scale[j].array() < bound.array()).all())) {
                    fail("level " + std::to_string(l) + " " + kind + " " + std::to_string(j) +
                         ": scale not strictly below parent + delta_s");
                    return report;
                }
            }
        }
    }
    return report;
}

void ResidualGradArrays::resize_zero(std::size_t n) {
    mu_hat_raw.assign(n, Vec3::Zero());
    s_hat_raw.assign(n, Vec3::Zero());
    q_hat.assign(n, Vec4::Zero());
    alpha_hat.assign(n, 0.0);
    c_hat.assign(n, Vec3::Zero());
}

namespace {

struct ParamGrad {
    Vec3 mu = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 quat = Vec4::Zero();
    double opacity_logit = 0.0;
    Vec3 color_logit = Vec3::Zero();
};

// Reverse of densify: splits a child-parameter gradient into parent-parameter
// and activated-residual contributions.
void densify_backward(const RawGaussian& parent, const Vec3& mu_hat, const ParamGrad& g_child,
                      ParamGrad& g_parent, ActivatedResidual& g_res) {
    const Mat3 rot = quat_to_rotation(normalize_quaternion(parent.quat));
    const Vec3 s = parent.log_scale.array().exp();

    // position: child.mu = parent.mu + R * (s .* mu_hat)
    g_parent.mu += g_child.mu;
    const Vec3 rt_g = rot.transpose() * g_child.mu;
    g_res.mu_hat = s.cwiseProduct(rt_g);
    g_parent.log_scale += s.cwiseProduct(mu_hat).cwiseProduct(rt_g);
    const Mat3 d_rot = g_child.mu * (s.cwiseProduct(mu_hat)).transpose();
    g_parent.quat += rotation_backward(parent.quat, d_rot);

    // remaining parameters are plain sums
    g_parent.log_scale += g_child.log_scale;
    g_res.s_hat = g_child.log_scale;
    g_parent.quat += g_child.quat;
    g_res.q_hat = g_child.quat;
    g_parent.opacity_logit += g_child.opacity_logit;
    g_res.alpha_hat = g_child.opacity_logit;
    g_parent.color_logit += g_child.color_logit;
    g_res.c_hat = g_child.color_logit;
}

// Activated-residual gradient -> raw-residual gradient.
void residual_activation_backward(const ResidualArrays& raw, std::size_t j,
                                  const ActivatedResidual& g_act, ResidualGradArrays& g_raw) {
    const Vec3 th = raw.mu_hat_raw[j].array().tanh();
    g_raw.mu_hat_raw[j] += (Vec3::Ones() - th.cwiseProduct(th)).cwiseProduct(g_act.mu_hat);
    for (int k = 0; k < 3; ++k) {
        g_raw.s_hat_raw[j](k) += -sigmoid(raw.s_hat_raw[j](k)) * g_act.s_hat(k);
    }
    g_raw.q_hat[j] += g_act.q_hat;
    g_raw.alpha_hat[j] += g_act.alpha_hat;
    g_raw.c_hat[j] += g_act.c_hat;
}

}  // namespace

std::vector<LevelResidualGrads> backprop_to_residuals(const Scene& scene,
                                                      const std::vector<LevelResiduals>& raws,
                                                      const GaussianSetGrads& render_grads) {
    const HierarchyConfig& cfg = scene.config;
    if (render_grads.size() != scene.hierarchy_count()) {
        throw ShapeMismatch("render gradient count != hierarchy render list size");
    }
    if (raws.size() != scene.levels.size()) {
        throw ShapeMismatch("residual level count != scene level count");
    }

    std::vector<LevelResidualGrads> out(cfg.levels);
    for (int l = 0; l < cfg.levels; ++l) {
        out[l].gaussians.resize_zero(cfg.level_count(l));
        out[l].anchors.resize_zero(cfg.level_count(l));
    }

    // Per-level gradients w.r.t. realized anchor parameters, filled finest-first.
    std::vector<std::vector<ParamGrad>> anchor_grads(cfg.levels);
    for (int l = 0; l < cfg.levels; ++l) anchor_grads[l].resize(cfg.level_count(l));

    // Split the flat render gradient by level.
    std::vector<std::size_t> level_offset(cfg.levels);
    {
        std::size_t off = 0;
        for (int l = 0; l < cfg.levels; ++l) {
            level_offset[l] = off;
            off += cfg.level_count(l);
        }
    }
    auto child_grad = [&](int level, std::size_t j) {
        const std::size_t idx = level_offset[level] + j;
        ParamGrad g;
        g.mu = render_grads.mu[idx];
        g.log_scale = render_grads.log_scale[idx];
        g.quat = render_grads.quat[idx];
        g.opacity_logit = render_grads.opacity_logit[idx];
        g.color_logit = render_grads.color_logit[idx];
        return g;
    };

    const std::size_t r = cfg.upsample_ratio;
    for (int l = cfg.levels - 1; l >= 1; --l) {
        const GaussianSet& parents = scene.anchors[l - 1];
        for (std::size_t j = 0; j < cfg.level_count(l); ++j) {
            const std::size_t i = j / r;
            const RawGaussian parent = parents.get(i);

            // rendered child G^l_j
            {
                const auto& a = raws[l].gaussians;
                const Vec3 mu_hat = a.mu_hat_raw[j].array().tanh();
                ActivatedResidual g_res;
                densify_backward(parent, mu_hat, child_grad(l, j), anchor_grads[l - 1][i],
                                 g_res);
                residual_activation_backward(a, j, g_res, out[l].gaussians);
            }
            // anchor child A^l_j (gradient accumulated from finer levels)
            {
                const auto& a = raws[l].anchors;
                const Vec3 mu_hat = a.mu_hat_raw[j].array().tanh();
                ActivatedResidual g_res;
                densify_backward(parent, mu_hat, anchor_grads[l][j], anchor_grads[l - 1][i],
                                 g_res);
                residual_activation_backward(a, j, g_res, out[l].anchors);
            }
        }
    }

    // Level 0: rendered G^0 densified from A^0, then A^0 realized from raw.
    for (std::size_t j = 0; j < cfg.level_count(0); ++j) {
        const RawGaussian parent = scene.anchors[0].get(j);
        const auto& a = raws[0].gaussians;
        const Vec3 mu_hat = a.mu_hat_raw[j].array().tanh();
        ActivatedResidual g_res;
        densify_backward(parent, mu_hat, child_grad(0, j), anchor_grads[0][j], g_res);
        residual_activation_backward(a, j, g_res, out[0].gaussians);
    }
    for (std::size_t j = 0; j < cfg.level_count(0); ++j) {
        const auto& a = raws[0].anchors;
        const ParamGrad& g = anchor_grads[0][j];
        const Vec3 th = a.mu_hat_raw[j].array().tanh();
        out[0].anchors.mu_hat_raw[j] +=
            (Vec3::Ones() - th.cwiseProduct(th)).cwiseProduct(g.mu);
        for (int k = 0; k < 3; ++k) {
            out[0].anchors.s_hat_raw[j](k) += -sigmoid(a.s_hat_raw[j](k)) * g.log_scale(k);
        }
        out[0].anchors.q_hat[j] += g.quat;
        out[0].anchors.alpha_hat[j] += g.opacity_logit;
        out[0].anchors.c_hat[j] += g.color_logit;
    }
    return out;
}

}  // namespace gshs
