#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gshs/losses.hpp"
#include "gshs/rng.hpp"

using namespace gshs;

namespace {

// independent O(N^2) oracle for the knn regularizer
double brute_force_knn_loss(const std::vector<Vec3>& pts, int k) {
    const std::size_t n = pts.size();
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<std::pair<double, std::size_t>> d;
        for (std::size_t i = 0; i < n; ++i)
            if (i != j) d.emplace_back((pts[i] - pts[j]).norm(), i);
        std::sort(d.begin(), d.end());
        Vec3 acc = Vec3::Zero();
        for (int m = 0; m < k; ++m) acc += pts[j] - pts[d[m].second];
        total += acc.squaredNorm();
    }
    return total / (static_cast<double>(n) * k);
}

std::vector<Vec3> random_points(Rng& rng, std::size_t n, double scale) {
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = Vec3(rng.normal(), rng.normal(), rng.normal()) * scale;
    return pts;
}

PoseEmbeddingBatch batch_from(const Eigen::MatrixXd& m, PoseEmbeddingBatch::Source src) {
    return PoseEmbeddingBatch{m, src};
}

}  // namespace

TEST_CASE("loss_center closed forms") {
    CHECK(loss_center({Vec3::Zero(), Vec3::Zero()}) == 0.0);
    CHECK(loss_center({Vec3(0.3, -1, 2), Vec3(-0.3, 1, -2)}) == doctest::Approx(0.0));
    CHECK(loss_center({Vec3(1, 0, 0), Vec3(1, 0, 0)}) == doctest::Approx(2.0));
}

TEST_CASE("loss_center translation equivariance") {
    Rng rng(2);
    const auto pts = random_points(rng, 20, 0.7);
    const Vec3 t(0.25, -0.5, 1.0);
    std::vector<Vec3> moved = pts;
    Vec3 sum = Vec3::Zero();
    for (auto& p : moved) p += t;
    for (const auto& p : pts) sum += p;
    const double expect = (sum + 20.0 * t).squaredNorm() / 20.0;
    CHECK(loss_center(moved) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("knn_indices on colinear and degenerate points") {
    const std::vector<Vec3> colinear = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0)};
    const auto nn = knn_indices(colinear, 1);
    CHECK(nn[0] == std::vector<std::size_t>{1});
    CHECK(nn[1] == std::vector<std::size_t>{0});
    CHECK(nn[2] == std::vector<std::size_t>{1});

    const std::vector<Vec3> coincident = {Vec3(1, 1, 1), Vec3(1, 1, 1)};
    const auto cc = knn_indices(coincident, 1);
    CHECK(cc[0] == std::vector<std::size_t>{1});
    CHECK(cc[1] == std::vector<std::size_t>{0});

    CHECK_THROWS_AS(knn_indices(coincident, 2), InvalidK);
    CHECK_THROWS_AS(knn_indices(coincident, 0), InvalidK);
}

TEST_CASE("loss_knn closed forms and brute-force oracle") {
    CHECK(loss_knn({Vec3(1, 2, 3), Vec3(1, 2, 3), Vec3(1, 2, 3)}, 1) == 0.0);

    // two points distance d apart, K=1 -> d^2
    const double d = 1.7;
    CHECK(loss_knn({Vec3(0, 0, 0), Vec3(d, 0, 0)}, 1) == doctest::Approx(d * d));

    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 5 + static_cast<std::size_t>(rng.uniform() * 20);
        const int k = 1 + static_cast<int>(rng.uniform() * 3);
        const auto pts = random_points(rng, n, 1.0);
        CHECK(loss_knn(pts, k) == doctest::Approx(brute_force_knn_loss(pts, k)).epsilon(1e-10));
    }
}

TEST_CASE("loss_knn exact translation invariance") {
    // power-of-two coordinates and shift keep the arithmetic exact
    std::vector<Vec3> pts = {Vec3(0.25, 0.5, -1.0), Vec3(1.5, -0.75, 2.0), Vec3(-2.0, 0.125, 0.5),
                             Vec3(4.0, 1.0, -0.25)};
    std::vector<Vec3> moved = pts;
    for (auto& p : moved) p += Vec3(2.0, -4.0, 8.0);
    CHECK(loss_knn(pts, 2) == loss_knn(moved, 2));
}

TEST_CASE("anchor_regularizer_grads match finite differences") {
    Rng rng(6);
    const auto pts = random_points(rng, 12, 0.8);
    const double lc = 0.7, lk = 1.3;
    const int k = 3;
    const auto grads = anchor_regularizer_grads(pts, k, lc, lk);

    auto f = [&](const std::vector<Vec3>& p) {
        return lc * loss_center(p) + lk * loss_knn(p, k);
    };
    const double h = 1e-6;
    for (std::size_t j = 0; j < pts.size(); ++j) {
        for (int c = 0; c < 3; ++c) {
            auto hi = pts, lo = pts;
            hi[j](c) += h;
            lo[j](c) -= h;
            const double fd = (f(hi) - f(lo)) / (2 * h);
            CHECK(grads[j](c) == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("loss_pose_contrastive closed forms") {
    Eigen::MatrixXd one(1, 4);
    one << 1, 2, 3, 4;
    CHECK(loss_pose_contrastive(batch_from(one, PoseEmbeddingBatch::Source::Image),
                                batch_from(one, PoseEmbeddingBatch::Source::Camera),
                                0.5) == doctest::Approx(0.0));

    Eigen::MatrixXd same = Eigen::MatrixXd::Ones(4, 8);
    CHECK(loss_pose_contrastive(batch_from(same, PoseEmbeddingBatch::Source::Image),
                                batch_from(same, PoseEmbeddingBatch::Source::Camera),
                                0.1) == doctest::Approx(std::log(4.0)).epsilon(1e-9));

    // B=2 with sim(pos)=1, sim(neg)=-1 at tau=1
    Eigen::MatrixXd img(2, 2), cam(2, 2);
    img << 1, 0, -1, 0;
    cam << 1, 0, -1, 0;
    const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0)));
    CHECK(loss_pose_contrastive(batch_from(img, PoseEmbeddingBatch::Source::Image),
                                batch_from(cam, PoseEmbeddingBatch::Source::Camera),
                                1.0) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("loss_pose_contrastive scale invariance and errors") {
    Rng rng(8);
    Eigen::MatrixXd img(3, 6), cam(3, 6);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 6; ++j) {
            img(i, j) = rng.normal();
            cam(i, j) = rng.normal();
        }
    const double base = loss_pose_contrastive(batch_from(img, PoseEmbeddingBatch::Source::Image),
                                              batch_from(cam, PoseEmbeddingBatch::Source::Camera),
                                              0.1);
    Eigen::MatrixXd img_scaled = img;
    img_scaled.row(1) *= 37.0;
    Eigen::MatrixXd cam_scaled = cam;
    cam_scaled.row(2) *= 0.004;
    CHECK(loss_pose_contrastive(batch_from(img_scaled, PoseEmbeddingBatch::Source::Image),
                                batch_from(cam_scaled, PoseEmbeddingBatch::Source::Camera),
                                0.1) == doctest::Approx(base).epsilon(1e-9));

    Eigen::MatrixXd zero = img;
    zero.row(0).setZero();
    CHECK_THROWS_AS(
        loss_pose_contrastive(batch_from(zero, PoseEmbeddingBatch::Source::Image),
                              batch_from(cam, PoseEmbeddingBatch::Source::Camera), 0.1),
        ZeroNormEmbedding);

    Eigen::MatrixXd wrong(2, 6);
    wrong.setOnes();
    CHECK_THROWS_AS(
        loss_pose_contrastive(batch_from(img, PoseEmbeddingBatch::Source::Image),
                              batch_from(wrong, PoseEmbeddingBatch::Source::Camera), 0.1),
        ShapeMismatch);
}

TEST_CASE("adversarial losses") {
    CHECK(adv_d_loss({0.0}, {0.0}, 0.0, 0.0) == doctest::Approx(2.0 * std::log(2.0)));
    CHECK(adv_d_loss({50.0}, {-50.0}, 0.0, 0.0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(adv_d_loss({0.0}, {0.0}, 0.5, 1.0) ==
          doctest::Approx(2.0 * std::log(2.0) + 0.5));
    CHECK(std::isfinite(adv_d_loss({1e4}, {-1e4}, 0.0, 1.0)));

    CHECK(adv_g_loss({0.0}) == doctest::Approx(std::log(2.0)));
    CHECK(adv_g_loss({50.0}) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(adv_g_loss({-50.0}) == doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("discriminator and generator gradients oppose on fake logits") {
    const double h = 1e-6;
    for (double t : {-2.0, -0.5, 0.0, 0.7, 3.0}) {
        const double gd =
            (adv_d_loss({}, {t + h}, 0, 0) - adv_d_loss({}, {t - h}, 0, 0)) / (2 * h);
        const double gg = (adv_g_loss({t + h}) - adv_g_loss({t - h})) / (2 * h);
        CHECK(gd > 0.0);
        CHECK(gg < 0.0);
    }
}

TEST_CASE("total_loss weighted sum") {
    LossWeights w;  // defaults: lambda_pose=1, lambda_center=1, lambda_knn=10
    CHECK(total_loss({0, 0, 0, 0}, w) == 0.0);
    CHECK(total_loss({1, 1, 1, 1}, w) == doctest::Approx(13.0));
    CHECK(total_loss({1, 0, 0, 0}, w) == doctest::Approx(1.0));
}
