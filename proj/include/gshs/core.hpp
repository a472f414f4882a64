#pragma once

#include <utility>

#include "gshs/types.hpp"

namespace gshs {

// ---- scalar activations ----------------------------------------------------

double sigmoid(double x);
double logit(double p);              // inverse of sigmoid, p in (0, 1)
double softplus(double x);           // log(1 + e^x), overflow-safe for |x| <= 1e4
double softplus_inverse(double y);   // y > 0

Vec3 sigmoid(const Vec3& v);

// ---- quaternions and covariance ---------------------------------------------

// Returns q/|q| with the sign flipped so that w >= 0.
// Throws DegenerateQuaternion if |q| <= 1e-8.
Vec4 normalize_quaternion(const Vec4& q);

// Rotation matrix of a unit quaternion (w, x, y, z).
Mat3 quat_to_rotation(const Vec4& q);

// Sigma = R S S^T R^T with S = diag(exp(log_scale)); q may be unnormalized.
Mat3 build_covariance(const Vec3& log_scale, const Vec4& q);

// Gradient of a scalar loss w.r.t. the raw quaternion, given the gradient
// w.r.t. R = quat_to_rotation(normalize_quaternion(q_raw)).
Vec4 rotation_backward(const Vec4& q_raw, const Mat3& dL_dR);

// Gradient w.r.t. (log_scale, raw quaternion) given dL/dSigma for
// Sigma = build_covariance(log_scale, q_raw).
void covariance_backward(const Vec3& log_scale, const Vec4& q_raw, const Mat3& dL_dSigma,
                         Vec3& dL_dlog_scale, Vec4& dL_dquat);

// ---- camera ------------------------------------------------------------------

// Returns (camera-space point, depth). Depth is camera-space z.
std::pair<Vec3, double> world_to_camera(const Vec3& p, const Camera& cam);

// Pinhole projection of a camera-space point. Throws BehindCamera if
// p_cam.z < cam.near_plane.
Vec2 project_point(const Vec3& p_cam, const Camera& cam);

// 2x3 Jacobian of project_point at p_cam. Throws BehindCamera like above.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& p_cam, const Camera& cam);

// ---- camera factories ----------------------------------------------------------

// Camera on a radius-`radius` orbit looking at the origin. Yaw rotates about
// the world y axis, pitch tilts above (+) or below (-) the equator. Focal
// length defaults to 1.08 * width so the [-1,1]^3 cube spans roughly 80% of
// the frame at radius 2.7.
Camera orbit_camera(double yaw, double pitch, double radius, int width, int height,
                    double focal = -1.0);

// Yaw/pitch pairs for n orbit views: yaw swept over [-0.4, 0.4] rad and pitch
// over [-0.4, 0.1] rad, endpoints inclusive (midpoints for n == 1).
std::vector<std::pair<double, double>> orbit_angles(int n);

}  // namespace gshs
