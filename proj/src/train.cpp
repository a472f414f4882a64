#include "gshs/train.hpp"

#include <chrono>
#include <cmath>

#include "gshs/core.hpp"
#include "gshs/parallel.hpp"
#include "gshs/raster.hpp"
#include "gshs/rng.hpp"

namespace gshs {

namespace {

Scene wrap_flat_scene(GaussianSet set, int resolution) {
    Scene scene;
    scene.config.levels = 1;
    scene.config.base_count = static_cast<int>(set.size());
    scene.config.upsample_ratio = 1;
    scene.config.delta_s = -1.0;
    scene.config.image_width = resolution;
    scene.config.image_height = resolution;
    scene.anchors.push_back(set);
    scene.levels.push_back(std::move(set));
    return scene;
}

GaussianSet make_blob_cluster(Rng& rng) {
    GaussianSet set;
    const std::size_t n = 40;
    set.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 p(rng.normal(), rng.normal(), rng.normal());
        set.mu[i] = p * (0.5 * std::cbrt(rng.uniform()) / std::max(p.norm(), 1e-9));
        set.log_scale[i] = Vec3(std::log(0.12) + 0.35 * rng.normal(),
                                std::log(0.12) + 0.35 * rng.normal(),
                                std::log(0.12) + 0.35 * rng.normal());
        Vec4 q(1.0 + rng.normal(), rng.normal(), rng.normal(), rng.normal());
        set.quat[i] = q;
        set.opacity_logit[i] = logit(0.7) + 0.3 * rng.normal();
        set.color_logit[i] = Vec3(1.2 * rng.normal(), 1.2 * rng.normal(), 1.2 * rng.normal());
    }
    return set;
}

GaussianSet make_two_tone_sphere(Rng& rng) {
    GaussianSet set;
    const std::size_t n = 120;
    set.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 dir(rng.normal(), rng.normal(), rng.normal());
        dir /= std::max(dir.norm(), 1e-9);
        set.mu[i] = 0.6 * dir;
        set.log_scale[i] = Vec3::Constant(std::log(0.09));
        set.quat[i] = Vec4(1, 0, 0, 0);
        set.opacity_logit[i] = logit(0.8);
        set.color_logit[i] = dir.x() > 0.0 ? Vec3(2.0, -1.5, -1.5) : Vec3(-1.5, -1.0, 2.0);
    }
    return set;
}

GaussianSet make_checker_card(Rng& rng) {
    GaussianSet set;
    const int grid = 8;
    set.resize(static_cast<std::size_t>(grid) * grid);
    std::size_t i = 0;
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx, ++i) {
            const double step = 1.2 / grid;
            set.mu[i] = Vec3(-0.6 + step * (gx + 0.5), -0.6 + step * (gy + 0.5),
                             0.01 * rng.normal());
            set.log_scale[i] = Vec3(std::log(0.085), std::log(0.085), std::log(0.012));
            set.quat[i] = Vec4(1, 0, 0, 0);
            set.opacity_logit[i] = logit(0.9);
            set.color_logit[i] = (gx + gy) % 2 == 0 ? Vec3(2.5, 2.5, 2.5)
                                                    : Vec3(2.5, -2.5, -2.5);
        }
    }
    return set;
}

}  // namespace

SyntheticTarget make_synthetic_target(const std::string& spec_name, std::uint64_t seed,
                                      int camera_count, int resolution) {
    Rng rng(seed);
    GaussianSet set;
    if (spec_name == "blob-cluster") set = make_blob_cluster(rng);
    else if (spec_name == "two-tone-sphere") set = make_two_tone_sphere(rng);
    else if (spec_name == "checker-card") set = make_checker_card(rng);
    else throw UnknownSpec("unknown synthetic spec '" + spec_name + "'");

    SyntheticTarget target;
    target.ground_truth = wrap_flat_scene(std::move(set), resolution);
    for (int v = 0; v < camera_count; ++v) {
        const double yaw = 2.0 * M_PI * v / camera_count;
        const double pitch = 0.3 * std::sin(2.0 * M_PI * v / camera_count);
        target.cameras.push_back(orbit_camera(yaw, pitch, 2.7, resolution, resolution));
    }
    const GaussianSet render = target.ground_truth.render_list();
    target.images.reserve(camera_count);
    for (const Camera& cam : target.cameras) {
        target.images.push_back(render_reference(render, cam));
    }
    return target;
}

double psnr(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) {
        throw ShapeMismatch("psnr image dimensions differ");
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = a.rgb[i] - b.rgb[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.rgb.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

// Momentum state mirroring the residual arrays.
struct Velocity {
    std::vector<LevelResidualGrads> v;

    explicit Velocity(const HierarchyConfig& cfg) {
        v.resize(cfg.levels);
        for (int l = 0; l < cfg.levels; ++l) {
            v[l].gaussians.resize_zero(cfg.level_count(l));
            v[l].anchors.resize_zero(cfg.level_count(l));
        }
    }
};

constexpr double kMomentum = 0.9;

void sgd_update(ResidualArrays& p, ResidualGradArrays& vel, const ResidualGradArrays& g,
                const FitConfig& cfg) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        vel.mu_hat_raw[i] = kMomentum * vel.mu_hat_raw[i] + g.mu_hat_raw[i];
        p.mu_hat_raw[i] -= cfg.lr_position * vel.mu_hat_raw[i];
        vel.s_hat_raw[i] = kMomentum * vel.s_hat_raw[i] + g.s_hat_raw[i];
        p.s_hat_raw[i] -= cfg.lr_scale * vel.s_hat_raw[i];
        vel.q_hat[i] = kMomentum * vel.q_hat[i] + g.q_hat[i];
        p.q_hat[i] -= cfg.lr_rotation * vel.q_hat[i];
        vel.alpha_hat[i] = kMomentum * vel.alpha_hat[i] + g.alpha_hat[i];
        p.alpha_hat[i] -= cfg.lr_opacity * vel.alpha_hat[i];
        vel.c_hat[i] = kMomentum * vel.c_hat[i] + g.c_hat[i];
        p.c_hat[i] -= cfg.lr_color * vel.c_hat[i];
    }
}

struct LossEval {
    double loss = 0.0;
    double mean_mse = 0.0;
    std::vector<LevelResidualGrads> grads;
};

LossEval evaluate(const std::vector<LevelResiduals>& raws, const Scene& scene,
                  const std::vector<Image>& targets, const std::vector<Camera>& cameras,
                  const FitConfig& cfg, bool with_grads) {
    const std::size_t n_views = targets.size();
    const GaussianSet render = scene.render_list();
    const double denom = static_cast<double>(n_views) * targets[0].rgb.size();

    std::vector<double> view_mse(n_views, 0.0);
    std::vector<GaussianSetGrads> view_grads(with_grads ? n_views : 0);
    parallel_for(n_views, [&](std::size_t v) {
        const Image img = render_tiled(render, cameras[v]);
        double mse = 0.0;
        Image dimg(img.width, img.height);
        for (std::size_t i = 0; i < img.rgb.size(); ++i) {
            const double d = img.rgb[i] - targets[v].rgb[i];
            mse += d * d;
            dimg.rgb[i] = cfg.mse_weight * 2.0 * d / denom;
        }
        view_mse[v] = mse / static_cast<double>(img.rgb.size());
        if (with_grads) {
            view_grads[v] = render_backward(render, cameras[v], dimg);
        }
    });

    LossEval out;
    for (double m : view_mse) out.mean_mse += m;
    out.mean_mse /= static_cast<double>(n_views);

    // anchor regularizers on the realized level-0 anchor positions
    const std::vector<Vec3>& anchor0 = scene.anchors[0].mu;
    const std::size_t n0 = anchor0.size();
    const int k = std::min<int>(cfg.weights.knn_k, static_cast<int>(n0) - 1);
    const double l_center = loss_center(anchor0);
    const double l_knn = (k >= 1) ? loss_knn(anchor0, k) : 0.0;
    out.loss = cfg.mse_weight * out.mean_mse + cfg.weights.lambda_center * l_center +
               cfg.weights.lambda_knn * l_knn;

    if (with_grads) {
        GaussianSetGrads render_total;
        render_total.resize_zero(render.size());
        for (const auto& g : view_grads) render_total.accumulate(g);

        out.grads = backprop_to_residuals(scene, raws, render_total);

        const auto reg = anchor_regularizer_grads(
            anchor0, std::max(k, 1),
            cfg.weights.lambda_center, (k >= 1) ? cfg.weights.lambda_knn : 0.0);
        for (std::size_t j = 0; j < n0; ++j) {
            const Vec3 th = raws[0].anchors.mu_hat_raw[j].array().tanh();
            out.grads[0].anchors.mu_hat_raw[j] +=
                (Vec3::Ones() - th.cwiseProduct(th)).cwiseProduct(reg[j]);
        }
    }
    return out;
}

}  // namespace

FitReport fit(const std::vector<Image>& targets, const std::vector<Camera>& cameras,
              const FitConfig& cfg, const FitCallback& callback) {
    if (targets.empty() || targets.size() != cameras.size()) {
        throw ShapeMismatch("need one camera per target image");
    }
    for (std::size_t v = 0; v < targets.size(); ++v) {
        if (targets[v].width != targets[0].width || targets[v].height != targets[0].height ||
            targets[v].width != cameras[v].width || targets[v].height != cameras[v].height) {
            throw ShapeMismatch("target image / camera resolutions are inconsistent");
        }
    }
    if (cfg.iterations < 0) throw InvalidConfig("iterations must be >= 0");

    const auto t_start = std::chrono::steady_clock::now();
    std::vector<LevelResiduals> raws = init_residuals(cfg.hierarchy, cfg.seed);
    Velocity vel(cfg.hierarchy);

    FitReport report;
    report.loss_curve.reserve(cfg.iterations);
    report.psnr_curve.reserve(cfg.iterations);

    auto check_invariants = [&](const Scene& scene) {
        if (!report.invariants_ok) return;
        const InvariantReport inv = check_scene_invariants(scene);
        if (!inv.ok) {
            report.invariants_ok = false;
            report.invariant_failure = inv.detail;
        }
    };

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const Scene scene = build_scene(raws, cfg.hierarchy);
        LossEval eval = evaluate(raws, scene, targets, cameras, cfg, /*with_grads=*/true);
        if (!std::isfinite(eval.loss)) {
            throw DivergedLoss("loss is not finite at iteration " + std::to_string(iter));
        }
        const double psnr_db =
            eval.mean_mse > 0.0 ? std::min(99.0, 10.0 * std::log10(1.0 / eval.mean_mse)) : 99.0;
        report.loss_curve.push_back(eval.loss);
        report.psnr_curve.push_back(psnr_db);
        if (callback) callback(iter, eval.loss, psnr_db);
        if (iter % cfg.checkpoint_every == 0) check_invariants(scene);

        for (int l = 0; l < cfg.hierarchy.levels; ++l) {
            sgd_update(raws[l].gaussians, vel.v[l].gaussians, eval.grads[l].gaussians, cfg);
            sgd_update(raws[l].anchors, vel.v[l].anchors, eval.grads[l].anchors, cfg);
        }
    }

    report.final_scene = build_scene(raws, cfg.hierarchy);
    check_invariants(report.final_scene);
    {
        const LossEval eval =
            evaluate(raws, report.final_scene, targets, cameras, cfg, /*with_grads=*/false);
        report.final_loss = eval.loss;
        const GaussianSet render = report.final_scene.render_list();
        report.final_psnr_per_view.resize(targets.size());
        for (std::size_t v = 0; v < targets.size(); ++v) {
            report.final_psnr_per_view[v] = psnr(render_tiled(render, cameras[v]), targets[v]);
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

}  // namespace gshs
