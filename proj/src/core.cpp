#include "gshs/core.hpp"

#include <cmath>

namespace gshs {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double softplus(double x) {
    // max(x, 0) + log1p(exp(-|x|)) never overflows
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }

Vec3 sigmoid(const Vec3& v) { return Vec3(sigmoid(v.x()), sigmoid(v.y()), sigmoid(v.z())); }

Vec4 normalize_quaternion(const Vec4& q) {
    const double n = q.norm();
    if (n <= 1e-8) {
        throw DegenerateQuaternion("quaternion norm " + std::to_string(n) + " <= 1e-8");
    }
    Vec4 u = q / n;
    if (u(0) < 0.0) u = -u;
    return u;
}

Mat3 quat_to_rotation(const Vec4& q) {
    const double w = q(0), x = q(1), y = q(2), z = q(3);
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Mat3 build_covariance(const Vec3& log_scale, const Vec4& q) {
    const Mat3 r = quat_to_rotation(normalize_quaternion(q));
    const Vec3 s = log_scale.array().exp();
    const Mat3 m = r * s.asDiagonal();
    return m * m.transpose();
}

Vec4 rotation_backward(const Vec4& q_raw, const Mat3& dL_dR) {
    const double n = q_raw.norm();
    Vec4 qn = q_raw / n;
    const double sign = qn(0) < 0.0 ? -1.0 : 1.0;
    const Vec4 u = sign * qn;  // the quaternion actually used in the forward pass
    const double w = u(0), x = u(1), y = u(2), z = u(3);
    const Mat3& g = dL_dR;

    // t_k = sum_ij dL/dR_ij * dR_ij/du_k
    Vec4 t;
    t(0) = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) +
                  x * g(2, 1));
    t(1) = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) +
                  z * g(2, 0) + w * g(2, 1) - 2.0 * x * g(2, 2));
    t(2) = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                  w * g(2, 0) + z * g(2, 1) - 2.0 * y * g(2, 2));
    t(3) = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) -
                  2.0 * z * g(1, 1) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1));

    // chain through u = sign * q/|q|
    return (sign / n) * (t - u * u.dot(t));
}

void covariance_backward(const Vec3& log_scale, const Vec4& q_raw, const Mat3& dL_dSigma,
                         Vec3& dL_dlog_scale, Vec4& dL_dquat) {
    const Mat3 r = quat_to_rotation(normalize_quaternion(q_raw));
    const Vec3 s = log_scale.array().exp();
    const Mat3 m = r * s.asDiagonal();
    const Mat3 dm = (dL_dSigma + dL_dSigma.transpose()) * m;

    Mat3 dr;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) dr(i, j) = dm(i, j) * s(j);
    for (int j = 0; j < 3; ++j) {
        dL_dlog_scale(j) = s(j) * r.col(j).dot(dm.col(j));
    }
    dL_dquat = rotation_backward(q_raw, dr);
}

std::pair<Vec3, double> world_to_camera(const Vec3& p, const Camera& cam) {
    const Vec3 pc = cam.rotation * p + cam.translation;
    return {pc, pc.z()};
}

Vec2 project_point(const Vec3& p_cam, const Camera& cam) {
    const double z = p_cam.z();
    if (z < cam.near_plane) {
        throw BehindCamera("z " + std::to_string(z) + " < near plane " +
                           std::to_string(cam.near_plane));
    }
    return Vec2(cam.focal.x() * p_cam.x() / z + cam.principal_point.x(),
                cam.focal.y() * p_cam.y() / z + cam.principal_point.y());
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& p_cam, const Camera& cam) {
    const double z = p_cam.z();
    if (z < cam.near_plane) {
        throw BehindCamera("z " + std::to_string(z) + " < near plane " +
                           std::to_string(cam.near_plane));
    }
    const double fx = cam.focal.x(), fy = cam.focal.y();
    Eigen::Matrix<double, 2, 3> j;
    j << fx / z, 0, -fx * p_cam.x() / (z * z),
        0, fy / z, -fy * p_cam.y() / (z * z);
    return j;
}

Camera orbit_camera(double yaw, double pitch, double radius, int width, int height,
                    double focal) {
    // Camera position on the orbit sphere, looking at the origin with +y up.
    const Vec3 pos(radius * std::sin(yaw) * std::cos(pitch),
                   radius * std::sin(pitch),
                   radius * std::cos(yaw) * std::cos(pitch));
    const Vec3 forward = (-pos).normalized();  // camera z axis points at origin
    Vec3 up(0, 1, 0);
    Vec3 right = forward.cross(up).normalized();
    up = right.cross(forward);

    Camera cam;
    // rows are the camera axes: x right, y down (image convention), z forward
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = (-up).transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * pos;
    const double f = focal > 0 ? focal : 1.08 * width;
    cam.focal = Vec2(f, f);
    cam.principal_point = Vec2(width / 2.0, height / 2.0);
    cam.width = width;
    cam.height = height;
    cam.near_plane = 0.01;
    return cam;
}

std::vector<std::pair<double, double>> orbit_angles(int n) {
    std::vector<std::pair<double, double>> out;
    out.reserve(std::max(n, 0));
    for (int i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.5 : static_cast<double>(i) / (n - 1);
        out.emplace_back(-0.4 + 0.8 * t, -0.4 + 0.5 * t);
    }
    return out;
}

}  // namespace gshs
