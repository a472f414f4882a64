#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gshs/core.hpp"
#include "gshs/hierarchy.hpp"
#include "gshs/raster.hpp"
#include "gshs/rng.hpp"

using namespace gshs;

namespace {

std::vector<LevelResiduals> random_residuals(const HierarchyConfig& cfg, Rng& rng, double sigma) {
    auto raws = init_residuals(cfg, rng.next_u64(), 0.0);
    auto perturb = [&](ResidualArrays& a) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            for (int k = 0; k < 3; ++k) a.mu_hat_raw[i](k) += rng.normal(0, sigma);
            for (int k = 0; k < 3; ++k) a.s_hat_raw[i](k) += rng.normal(0, sigma);
            for (int k = 0; k < 4; ++k) a.q_hat[i](k) += rng.normal(0, sigma);
            a.alpha_hat[i] += rng.normal(0, sigma);
            for (int k = 0; k < 3; ++k) a.c_hat[i](k) += rng.normal(0, sigma);
        }
    };
    for (auto& level : raws) {
        perturb(level.gaussians);
        perturb(level.anchors);
    }
    return raws;
}

}  // namespace

TEST_CASE("delta_s reproduces the resolution rule") {
    CHECK(delta_s(256, 256, 5, 256) == doctest::Approx(-std::log(3.2)).epsilon(1e-12));
    CHECK(delta_s(512, 512, 6, 256) == doctest::Approx(-std::log(512.0 / 96.0)).epsilon(1e-12));
    CHECK_THROWS_AS(delta_s(16, 16, 5, 256), InvalidConfig);
}

TEST_CASE("activate_residuals") {
    LevelResiduals raw;
    raw.gaussians.resize(3);
    raw.anchors.resize(3);
    raw.gaussians.s_hat_raw[1] = Vec3::Constant(20.0);
    raw.gaussians.mu_hat_raw[2] = Vec3(5, -5, 0);

    const LevelResiduals act = activate_residuals(raw);
    CHECK(act.gaussians.mu_hat_raw[0] == Vec3::Zero());
    CHECK(act.gaussians.s_hat_raw[0] == Vec3::Constant(-std::log(2.0)));
    CHECK(act.gaussians.s_hat_raw[1](0) == doctest::Approx(-20.0).epsilon(1e-9));
    CHECK(act.gaussians.mu_hat_raw[2](0) == doctest::Approx(std::tanh(5.0)));
    CHECK(act.gaussians.mu_hat_raw[2](1) < 0.0);
}

TEST_CASE("densify zero residuals keep the parent frame") {
    RawGaussian parent;
    parent.mu = Vec3(0.2, -0.4, 0.1);
    parent.log_scale = Vec3(-0.3, 0.2, 0.0);
    parent.quat = Vec4(0.9, 0.1, -0.2, 0.3);
    parent.opacity_logit = -1.1;
    parent.color_logit = Vec3(0.5, -0.5, 0.25);

    const double ds = -1.2;
    const ActivatedResidual res = activate_residual(Vec3::Zero(), Vec3::Zero(), Vec4::Zero(),
                                                    0.0, Vec3::Zero());
    const RawGaussian child = densify(parent, res, ds);
    CHECK(child.mu == parent.mu);
    CHECK((child.log_scale - (parent.log_scale + Vec3::Constant(-std::log(2.0) + ds))).norm() <
          1e-14);
    CHECK(child.quat == parent.quat);
    CHECK(child.opacity_logit == parent.opacity_logit);
    CHECK(child.color_logit == parent.color_logit);
}

TEST_CASE("densify position follows R S mu_hat") {
    // parent at origin, identity rotation, unit scale
    RawGaussian parent;
    ActivatedResidual res;
    res.mu_hat = Vec3(1, 0, 0);
    res.s_hat = Vec3::Constant(-0.1);
    CHECK((densify(parent, res, -0.5).mu - Vec3(1, 0, 0)).norm() < 1e-15);

    // parent rotated 90 degrees about z with scale (2,1,1): offset = R S (1,0,0) = (0,2,0)
    const double c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
    parent.mu = Vec3(0.3, 0.1, -0.2);
    parent.quat = Vec4(c, 0, 0, s);
    parent.log_scale = Vec3(std::log(2.0), 0, 0);
    const Vec3 expect = parent.mu + Vec3(0, 2, 0);
    CHECK((densify(parent, res, -0.5).mu - expect).norm() < 1e-12);
}

TEST_CASE("build_level parent mapping and counts") {
    HierarchyConfig cfg = HierarchyConfig::make(2, 2, 4, 256, 256);
    CHECK(2 * 4 == static_cast<int>(cfg.level_count(1)));

    GaussianSet anchors;
    anchors.resize(2);
    anchors.mu[0] = Vec3(-0.5, 0, 0);
    anchors.mu[1] = Vec3(0.5, 0, 0);
    anchors.log_scale[0] = Vec3::Constant(-1.0);
    anchors.log_scale[1] = Vec3::Constant(-1.0);

    LevelResiduals res;
    res.gaussians.resize(8);
    res.anchors.resize(8);

    auto [g, a] = build_level(anchors, res, cfg);
    CHECK(g.size() == 8);
    CHECK(a.size() == 8);
    // zero A-hat position residuals: anchor children coincide with parents
    for (std::size_t j = 0; j < 8; ++j) {
        CHECK((a.mu[j] - anchors.mu[j / 4]).norm() < 1e-15);
        CHECK((g.mu[j] - anchors.mu[j / 4]).norm() < 1e-15);
    }

    // child 7 has parent 1 (floor(7/4))
    LevelResiduals res2 = res;
    res2.gaussians.mu_hat_raw[7] = Vec3(30, 0, 0);  // tanh -> ~1
    auto [g2, a2] = build_level(anchors, res2, cfg);
    const double offset = std::exp(-1.0);
    CHECK((g2.mu[7] - (anchors.mu[1] + Vec3(offset * std::tanh(30.0), 0, 0))).norm() < 1e-12);

    res.gaussians.resize(7);
    CHECK_THROWS_AS(build_level(anchors, res, cfg), ShapeMismatch);
}

TEST_CASE("build_scene counts for the default configurations") {
    {
        const HierarchyConfig cfg = HierarchyConfig::make(5, 256, 4, 256, 256);
        const Scene scene = build_scene(init_residuals(cfg, 0), cfg);
        CHECK(scene.hierarchy_count() == 87296);
        CHECK(scene.render_list().size() == 87296);
    }
    {
        const HierarchyConfig cfg = HierarchyConfig::make(6, 256, 4, 512, 512);
        const Scene scene = build_scene(init_residuals(cfg, 0), cfg);
        CHECK(scene.hierarchy_count() == 349440);
    }
    {
        // degenerate single-parent chain
        HierarchyConfig cfg;
        cfg.levels = 3;
        cfg.base_count = 1;
        cfg.upsample_ratio = 1;
        cfg.delta_s = -0.7;
        const Scene scene = build_scene(init_residuals(cfg, 1), cfg);
        CHECK(scene.hierarchy_count() == 3);
    }
}

TEST_CASE("count identity N (r^L - 1) / (r - 1)") {
    for (int l = 1; l <= 5; ++l) {
        for (int r : {2, 3, 4}) {
            HierarchyConfig cfg;
            cfg.levels = l;
            cfg.base_count = 7;
            cfg.upsample_ratio = r;
            std::size_t expect = 7ull *
                                 ((static_cast<std::size_t>(std::pow(r, l)) - 1) / (r - 1));
            CHECK(cfg.total_count() == expect);
        }
    }
}

TEST_CASE("init_residuals realizes the documented biases") {
    const HierarchyConfig cfg = HierarchyConfig::make(3, 256, 4, 256, 256);
    const Scene scene = build_scene(init_residuals(cfg, 42), cfg);

    for (std::size_t i = 0; i < scene.anchors[0].size(); ++i) {
        CHECK(scene.anchors[0].log_scale[i](0) == doctest::Approx(-0.0625).epsilon(1e-12));
        CHECK(sigmoid(scene.anchors[0].opacity_logit[i]) == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(scene.anchors[0].quat[i](0) == 1.0);
        CHECK(scene.anchors[0].mu[i].cwiseAbs().maxCoeff() < std::tanh(0.5) + 1e-12);
    }
}

TEST_CASE("init_residuals sigma 0 collapses children onto parents") {
    const HierarchyConfig cfg = HierarchyConfig::make(3, 16, 4, 256, 256);
    const Scene scene = build_scene(init_residuals(cfg, 9, 0.0), cfg);
    const double step = -std::log(2.0) + cfg.delta_s;
    for (int l = 0; l < 3; ++l) {
        // levels 0 and 1 are both densified straight from the level-0 anchors
        const int steps = std::max(1, l);
        for (std::size_t j = 0; j < scene.levels[l].size(); ++j) {
            const std::size_t ancestor = l == 0 ? j : j / static_cast<std::size_t>(std::pow(4, l));
            CHECK((scene.levels[l].mu[j] - scene.anchors[0].mu[ancestor]).norm() < 1e-12);
            CHECK(scene.levels[l].log_scale[j](0) ==
                  doctest::Approx(-1.0 / 4.0 + steps * step).epsilon(1e-9));
            CHECK(sigmoid(scene.levels[l].opacity_logit[j]) == doctest::Approx(0.1));
        }
    }
}

TEST_CASE("scene invariants hold on random residuals") {
    Rng rng(100);
    for (int trial = 0; trial < 10; ++trial) {
        const HierarchyConfig cfg = HierarchyConfig::make(4, 8, 4, 256, 256);
        const auto raws = random_residuals(cfg, rng, trial % 2 == 0 ? 0.1 : 0.6);
        const Scene scene = build_scene(raws, cfg);
        const InvariantReport rep = check_scene_invariants(scene);
        CHECK(rep.ok);
        if (!rep.ok) MESSAGE(rep.detail);

        // locality inversion recovers tanh(raw) for rendered children
        const std::size_t r = cfg.upsample_ratio;
        for (int l = 1; l < cfg.levels; ++l) {
            for (std::size_t j = 0; j < scene.levels[l].size(); j += 7) {
                const RawGaussian p = scene.anchors[l - 1].get(j / r);
                const Mat3 rot = quat_to_rotation(normalize_quaternion(p.quat));
                const Vec3 s_inv = (-p.log_scale).array().exp();
                const Vec3 local =
                    s_inv.cwiseProduct(rot.transpose() * (scene.levels[l].mu[j] - p.mu));
                const Vec3 expect = raws[l].gaussians.mu_hat_raw[j].array().tanh();
                CHECK((local - expect).cwiseAbs().maxCoeff() < 1e-8);
            }
        }
    }
}

TEST_CASE("strict scale monotonicity") {
    Rng rng(200);
    const HierarchyConfig cfg = HierarchyConfig::make(4, 4, 4, 256, 256);
    const auto raws = random_residuals(cfg, rng, 0.4);
    const Scene scene = build_scene(raws, cfg);
    const std::size_t r = cfg.upsample_ratio;
    for (int l = 1; l < cfg.levels; ++l) {
        for (std::size_t j = 0; j < scene.levels[l].size(); ++j) {
            const Vec3 bound = scene.anchors[l - 1].log_scale[j / r].array() + cfg.delta_s;
            CHECK((scene.levels[l].log_scale[j].array() < bound.array()).all());
            CHECK((scene.anchors[l].log_scale[j].array() < bound.array()).all());
        }
    }
}

TEST_CASE("render list is invariant to leaf anchor residuals") {
    const HierarchyConfig cfg = HierarchyConfig::make(3, 4, 2, 256, 256);
    Rng rng(300);
    auto raws = random_residuals(cfg, rng, 0.3);
    const Scene base = build_scene(raws, cfg);

    auto& leaf = raws[cfg.levels - 1].anchors;
    for (std::size_t i = 0; i < leaf.size(); ++i) {
        leaf.mu_hat_raw[i] += Vec3(1, -2, 3);
        leaf.alpha_hat[i] += 5.0;
        leaf.q_hat[i] += Vec4(0.1, 0.2, 0.3, 0.4);
    }
    const Scene moved = build_scene(raws, cfg);
    const GaussianSet a = base.render_list(), b = moved.render_list();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.mu[i] == b.mu[i]);
        CHECK(a.opacity_logit[i] == b.opacity_logit[i]);
    }
}

TEST_CASE("build_background normalizes onto the sphere") {
    std::vector<Vec3> raw = {Vec3(6, 0, 0), Vec3(1, 1, 1)};
    std::vector<Vec3> ls(2, Vec3::Zero()), col(2, Vec3::Zero());
    std::vector<Vec4> quat(2, Vec4(1, 0, 0, 0));
    std::vector<double> op(2, 0.0);
    const GaussianSet bg = build_background(raw, ls, quat, op, col, 3.0);
    CHECK((bg.mu[0] - Vec3(3, 0, 0)).norm() < 1e-12);
    CHECK((bg.mu[1] - 3.0 * Vec3(1, 1, 1) / std::sqrt(3.0)).norm() < 1e-12);

    raw[0] = Vec3::Zero();
    CHECK_THROWS_AS(build_background(raw, ls, quat, op, col, 3.0), DegeneratePosition);

    Rng rng(14);
    const GaussianSet shell = random_background(rng, 500);
    for (std::size_t i = 0; i < shell.size(); ++i) {
        CHECK(std::abs(shell.mu[i].norm() - 3.0) < 1e-6);
    }

    Rng rng2(14);
    CHECK(random_background(rng2).size() == 10000);
}

TEST_CASE("shrink_scales") {
    const HierarchyConfig cfg = HierarchyConfig::make(2, 4, 2, 256, 256);
    Rng rng(15);
    const Scene scene = build_scene(random_residuals(cfg, rng, 0.2), cfg);

    const Scene same = shrink_scales(scene, 1.0);
    CHECK(same.levels[0].log_scale[0] == scene.levels[0].log_scale[0]);

    const Scene half = shrink_scales(scene, 0.5);
    CHECK(std::exp(half.levels[1].log_scale[2](1)) ==
          doctest::Approx(0.5 * std::exp(scene.levels[1].log_scale[2](1))));
    CHECK(half.levels[1].mu[2] == scene.levels[1].mu[2]);

    const Scene twice = shrink_scales(shrink_scales(scene, 0.25), 0.25);
    const Scene once = shrink_scales(scene, 0.0625);
    CHECK(twice.levels[0].log_scale[1](0) ==
          doctest::Approx(once.levels[0].log_scale[1](0)).epsilon(1e-12));
}

TEST_CASE("backprop_to_residuals matches finite differences through a render") {
    const HierarchyConfig cfg = HierarchyConfig::make(2, 2, 2, 256, 256);
    Rng rng(400);
    auto raws = random_residuals(cfg, rng, 0.3);
    // moderate opacities and scales keep the render well-conditioned
    for (auto& level : raws) {
        for (auto& a : level.gaussians.alpha_hat) a = rng.uniform(-1.0, 0.5);
        for (auto& a : level.anchors.alpha_hat) a = rng.uniform(-1.0, 0.5);
    }
    raws[0].anchors.s_hat_raw.assign(2, Vec3::Constant(softplus_inverse(1.2)));

    const Camera cam = orbit_camera(0.2, -0.1, 2.7, 24, 24);

    auto loss_of = [&](const std::vector<LevelResiduals>& r) {
        const Scene scene = build_scene(r, cfg);
        const Image img = render_tiled(scene.render_list(), cam);
        double loss = 0.0;
        for (double v : img.rgb) loss += v * v;
        return loss;
    };

    // analytic gradients
    const Scene scene = build_scene(raws, cfg);
    const GaussianSet render = scene.render_list();
    const Image img = render_tiled(render, cam);
    Image dimg(cam.width, cam.height);
    for (std::size_t i = 0; i < img.rgb.size(); ++i) dimg.rgb[i] = 2.0 * img.rgb[i];
    const GaussianSetGrads render_grads = render_backward(render, cam, dimg);
    const auto grads = backprop_to_residuals(scene, raws, render_grads);

    const double h = 1e-5;
    auto check_fd = [&](double* slot, double analytic) {
        const double keep = *slot;
        *slot = keep + h;
        const double hi = loss_of(raws);
        *slot = keep - h;
        const double lo = loss_of(raws);
        *slot = keep;
        const double fd = (hi - lo) / (2 * h);
        CHECK(analytic == doctest::Approx(fd).epsilon(5e-3));
    };

    for (int l = 0; l < cfg.levels; ++l) {
        for (std::size_t j = 0; j < raws[l].gaussians.size(); ++j) {
            check_fd(&raws[l].gaussians.mu_hat_raw[j](0), grads[l].gaussians.mu_hat_raw[j](0));
            check_fd(&raws[l].gaussians.s_hat_raw[j](1), grads[l].gaussians.s_hat_raw[j](1));
            check_fd(&raws[l].gaussians.q_hat[j](2), grads[l].gaussians.q_hat[j](2));
            check_fd(&raws[l].gaussians.alpha_hat[j], grads[l].gaussians.alpha_hat[j]);
            check_fd(&raws[l].gaussians.c_hat[j](0), grads[l].gaussians.c_hat[j](0));
            check_fd(&raws[l].anchors.mu_hat_raw[j](1), grads[l].anchors.mu_hat_raw[j](1));
            check_fd(&raws[l].anchors.s_hat_raw[j](0), grads[l].anchors.s_hat_raw[j](0));
            check_fd(&raws[l].anchors.q_hat[j](1), grads[l].anchors.q_hat[j](1));
        }
    }

    // gradients reach level-0 residuals whenever leaves are visible
    double level0_norm = 0.0;
    for (std::size_t j = 0; j < grads[0].anchors.mu_hat_raw.size(); ++j) {
        level0_norm += grads[0].anchors.mu_hat_raw[j].norm();
    }
    CHECK(level0_norm > 0.0);
}
