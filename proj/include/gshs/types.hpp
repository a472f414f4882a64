#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "gshs/errors.hpp"

namespace gshs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

// One Gaussian in raw (pre-activation) parameter space. Scale is realized
// as exp(log_scale), opacity/color as sigmoid of the logits; the quaternion
// is stored unnormalized and normalized at realization.
struct RawGaussian {
    Vec3 mu = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 quat = Vec4(1, 0, 0, 0);  // (w, x, y, z)
    double opacity_logit = 0.0;
    Vec3 color_logit = Vec3::Zero();
};

// Flat per-parameter arrays for one set of Gaussians (one hierarchy level,
// a background shell, or an assembled render list).
struct GaussianSet {
    std::vector<Vec3> mu;
    std::vector<Vec3> log_scale;
    std::vector<Vec4> quat;
    std::vector<double> opacity_logit;
    std::vector<Vec3> color_logit;

    std::size_t size() const { return mu.size(); }

    void resize(std::size_t n) {
        mu.resize(n, Vec3::Zero());
        log_scale.resize(n, Vec3::Zero());
        quat.resize(n, Vec4(1, 0, 0, 0));
        opacity_logit.resize(n, 0.0);
        color_logit.resize(n, Vec3::Zero());
    }

    RawGaussian get(std::size_t i) const {
        return {mu[i], log_scale[i], quat[i], opacity_logit[i], color_logit[i]};
    }

    void set(std::size_t i, const RawGaussian& g) {
        mu[i] = g.mu;
        log_scale[i] = g.log_scale;
        quat[i] = g.quat;
        opacity_logit[i] = g.opacity_logit;
        color_logit[i] = g.color_logit;
    }

    void append(const GaussianSet& other) {
        mu.insert(mu.end(), other.mu.begin(), other.mu.end());
        log_scale.insert(log_scale.end(), other.log_scale.begin(), other.log_scale.end());
        quat.insert(quat.end(), other.quat.begin(), other.quat.end());
        opacity_logit.insert(opacity_logit.end(), other.opacity_logit.begin(),
                             other.opacity_logit.end());
        color_logit.insert(color_logit.end(), other.color_logit.begin(),
                           other.color_logit.end());
    }
};

// Gradients of a scalar loss w.r.t. every raw parameter of a GaussianSet.
struct GaussianSetGrads {
    std::vector<Vec3> mu;
    std::vector<Vec3> log_scale;
    std::vector<Vec4> quat;
    std::vector<double> opacity_logit;
    std::vector<Vec3> color_logit;

    std::size_t size() const { return mu.size(); }

    void resize_zero(std::size_t n) {
        mu.assign(n, Vec3::Zero());
        log_scale.assign(n, Vec3::Zero());
        quat.assign(n, Vec4::Zero());
        opacity_logit.assign(n, 0.0);
        color_logit.assign(n, Vec3::Zero());
    }

    void accumulate(const GaussianSetGrads& other) {
        for (std::size_t i = 0; i < size(); ++i) {
            mu[i] += other.mu[i];
            log_scale[i] += other.log_scale[i];
            quat[i] += other.quat[i];
            opacity_logit[i] += other.opacity_logit[i];
            color_logit[i] += other.color_logit[i];
        }
    }
};

// Pinhole camera: p_cam = rotation * p_world + translation,
// pixel = focal * (x/z, y/z) + principal_point.
struct Camera {
    Mat3 rotation = Mat3::Identity();  // world -> camera
    Vec3 translation = Vec3::Zero();
    Vec2 focal = Vec2(1, 1);             // pixels
    Vec2 principal_point = Vec2(0, 0);   // pixels
    int width = 0;
    int height = 0;
    double near_plane = 0.01;
};

// Row-major float RGB buffer, values nominally in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> rgb;  // 3 * width * height, row-major, top-left origin

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(3) * w * h, 0.0) {}

    double* pixel(int x, int y) { return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
    const double* pixel(int x, int y) const {
        return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
    }
};

}  // namespace gshs
