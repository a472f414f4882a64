#include "gshs/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gshs/core.hpp"
#include "gshs/parallel.hpp"

namespace gshs {

namespace {

constexpr int kTileSize = 16;
constexpr double kLowPass = 0.3;          // px^2 added to the cov2d diagonal
constexpr double kAlphaClamp = 0.999;
constexpr double kTermination = 1e-4;     // per-tile transmittance cutoff
constexpr double kAlphaTiny = 1e-14;      // binning radius cutoff
constexpr double kExpUnderflowQ = 1600.0; // exp(-q/2) is exactly 0 beyond this
constexpr double kAlphaNoise = 1e-30;     // reference skips contributions below this
const double kExtent99 = std::sqrt(2.0 * std::log(100.0));

double max_eigenvalue_2x2(const Mat2& c) {
    const double mid = 0.5 * (c(0, 0) + c(1, 1));
    const double disc = std::sqrt(0.25 * (c(0, 0) - c(1, 1)) * (c(0, 0) - c(1, 1)) +
                                  c(0, 1) * c(0, 1));
    return mid + disc;
}

// Depth-sorted SoA view of the projected scene; the hot loops read these
// arrays instead of Splat2D records.
struct ProjectedScene {
    std::vector<double> mx, my;         // 2D means
    std::vector<double> ia, ib, ic;     // inverse cov2d (conic)
    std::vector<double> opacity;
    std::vector<double> cr, cg, cb;
    std::vector<double> radius;         // blend radius in pixels
    std::vector<double> q_noise;        // Mahalanobis bound where alpha < kAlphaNoise
    std::vector<Mat2> cov2d;
    std::vector<double> depth;
    std::vector<int> source;            // original Gaussian index
    std::size_t size() const { return mx.size(); }
};

ProjectedScene project_all(const GaussianSet& set, const Camera& cam) {
    std::vector<Splat2D> splats;
    splats.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        auto s = project_gaussian(set.get(i), cam);
        if (s) {
            s->source_index = static_cast<int>(i);
            splats.push_back(*s);
        }
    }
    std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.source_index < b.source_index;
    });

    ProjectedScene out;
    const std::size_t n = splats.size();
    out.mx.resize(n);
    out.my.resize(n);
    out.ia.resize(n);
    out.ib.resize(n);
    out.ic.resize(n);
    out.opacity.resize(n);
    out.cr.resize(n);
    out.cg.resize(n);
    out.cb.resize(n);
    out.radius.resize(n);
    out.q_noise.resize(n);
    out.cov2d.resize(n);
    out.depth.resize(n);
    out.source.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const Splat2D& s = splats[j];
        const double det = s.cov2d(0, 0) * s.cov2d(1, 1) - s.cov2d(0, 1) * s.cov2d(0, 1);
        if (det <= 1e-12) {
            throw SingularCovariance("projected covariance determinant " + std::to_string(det) +
                                     " <= 1e-12");
        }
        out.mx[j] = s.mean2d.x();
        out.my[j] = s.mean2d.y();
        out.ia[j] = s.cov2d(1, 1) / det;
        out.ib[j] = -s.cov2d(0, 1) / det;
        out.ic[j] = s.cov2d(0, 0) / det;
        out.opacity[j] = s.opacity;
        out.cr[j] = s.color.x();
        out.cg[j] = s.color.y();
        out.cb[j] = s.color.z();
        const double lmax = max_eigenvalue_2x2(s.cov2d);
        out.radius[j] = s.opacity > kAlphaTiny
                            ? std::sqrt(2.0 * lmax * (std::log(s.opacity) - std::log(kAlphaTiny)))
                            : 0.0;
        out.q_noise[j] = std::min(
            kExpUnderflowQ, 2.0 * (std::log(s.opacity) - std::log(kAlphaNoise)));
        out.cov2d[j] = s.cov2d;
        out.depth[j] = s.depth;
        out.source[j] = s.source_index;
    }
    return out;
}

// Per-tile lists of projected-splat indices, ascending (i.e. depth order).
struct TileBins {
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> lists;
};

TileBins bin_splats(const ProjectedScene& p, int width, int height) {
    TileBins bins;
    bins.tiles_x = (width + kTileSize - 1) / kTileSize;
    bins.tiles_y = (height + kTileSize - 1) / kTileSize;
    bins.lists.resize(static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y);
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double r = p.radius[j];
        if (r <= 0.0) continue;
        const int x0 = std::clamp(static_cast<int>(std::floor((p.mx[j] - r) / kTileSize)), 0,
                                  bins.tiles_x - 1);
        const int x1 = std::clamp(static_cast<int>(std::floor((p.mx[j] + r) / kTileSize)), 0,
                                  bins.tiles_x - 1);
        const int y0 = std::clamp(static_cast<int>(std::floor((p.my[j] - r) / kTileSize)), 0,
                                  bins.tiles_y - 1);
        const int y1 = std::clamp(static_cast<int>(std::floor((p.my[j] + r) / kTileSize)), 0,
                                  bins.tiles_y - 1);
        if (p.mx[j] + r < 0.0 || p.mx[j] - r > width || p.my[j] + r < 0.0 || p.my[j] - r > height)
            continue;
        for (int ty = y0; ty <= y1; ++ty)
            for (int tx = x0; tx <= x1; ++tx)
                bins.lists[static_cast<std::size_t>(ty) * bins.tiles_x + tx].push_back(
                    static_cast<std::uint32_t>(j));
    }
    return bins;
}

}  // namespace

std::optional<Splat2D> project_gaussian(const RawGaussian& g, const Camera& cam) {
    const auto [p_cam, depth] = world_to_camera(g.mu, cam);
    if (depth < cam.near_plane) return std::nullopt;

    const Eigen::Matrix<double, 2, 3> j = projection_jacobian(p_cam, cam);
    const Mat3 sigma = build_covariance(g.log_scale, g.quat);
    const Eigen::Matrix<double, 2, 3> t = j * cam.rotation;
    Mat2 cov2d = t * sigma * t.transpose();
    cov2d(0, 0) += kLowPass;
    cov2d(1, 1) += kLowPass;

    Splat2D s;
    s.mean2d = project_point(p_cam, cam);
    s.cov2d = cov2d;
    s.depth = depth;
    s.color = sigmoid(g.color_logit);
    s.opacity = sigmoid(g.opacity_logit);

    const double r99 = kExtent99 * std::sqrt(max_eigenvalue_2x2(cov2d));
    if (s.mean2d.x() + r99 < 0.0 || s.mean2d.x() - r99 > cam.width || s.mean2d.y() + r99 < 0.0 ||
        s.mean2d.y() - r99 > cam.height) {
        return std::nullopt;
    }
    return s;
}

Image render_reference(const GaussianSet& set, const Camera& cam) {
    const ProjectedScene p = project_all(set, cam);
    Image img(cam.width, cam.height);
    const std::size_t n = p.size();
    if (n == 0) return img;

    parallel_chunks(cam.height, std::size_t(64), [&](std::size_t, std::size_t y0, std::size_t y1) {
        for (std::size_t y = y0; y < y1; ++y) {
            const double py = static_cast<double>(y) + 0.5;
            double* row = img.rgb.data() + 3 * y * cam.width;
            for (int x = 0; x < cam.width; ++x) {
                const double px = static_cast<double>(x) + 0.5;
                double trans = 1.0;
                double r = 0.0, g = 0.0, b = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double dx = px - p.mx[j];
                    const double dy = py - p.my[j];
                    const double q = p.ia[j] * dx * dx + 2.0 * p.ib[j] * dx * dy +
                                     p.ic[j] * dy * dy;
                    if (q >= p.q_noise[j]) continue;  // alpha below 1e-30, pure noise
                    const double alpha =
                        std::min(kAlphaClamp, p.opacity[j] * std::exp(-0.5 * q));
                    r += p.cr[j] * alpha * trans;
                    g += p.cg[j] * alpha * trans;
                    b += p.cb[j] * alpha * trans;
                    trans *= 1.0 - alpha;
                }
                row[3 * x + 0] = r;
                row[3 * x + 1] = g;
                row[3 * x + 2] = b;
            }
        }
    });
    return img;
}

Image render_tiled(const GaussianSet& set, const Camera& cam) {
    const ProjectedScene p = project_all(set, cam);
    Image img(cam.width, cam.height);
    if (p.size() == 0) return img;
    const TileBins bins = bin_splats(p, cam.width, cam.height);
    const std::size_t n_tiles = bins.lists.size();

    parallel_chunks(n_tiles, n_tiles, [&](std::size_t tile, std::size_t, std::size_t) {
        const auto& list = bins.lists[tile];
        if (list.empty()) return;
        const int tx = static_cast<int>(tile) % bins.tiles_x;
        const int ty = static_cast<int>(tile) / bins.tiles_x;
        const int x_end = std::min(cam.width, (tx + 1) * kTileSize);
        const int y_end = std::min(cam.height, (ty + 1) * kTileSize);
        for (int y = ty * kTileSize; y < y_end; ++y) {
            const double py = y + 0.5;
            double* row = img.rgb.data() + 3 * static_cast<std::size_t>(y) * cam.width;
            for (int x = tx * kTileSize; x < x_end; ++x) {
                const double px = x + 0.5;
                double trans = 1.0;
                double r = 0.0, g = 0.0, b = 0.0;
                for (std::uint32_t j : list) {
                    const double dx = px - p.mx[j];
                    const double dy = py - p.my[j];
                    const double q = p.ia[j] * dx * dx + 2.0 * p.ib[j] * dx * dy +
                                     p.ic[j] * dy * dy;
                    if (q >= kExpUnderflowQ) continue;
                    const double alpha =
                        std::min(kAlphaClamp, p.opacity[j] * std::exp(-0.5 * q));
                    r += p.cr[j] * alpha * trans;
                    g += p.cg[j] * alpha * trans;
                    b += p.cb[j] * alpha * trans;
                    trans *= 1.0 - alpha;
                    if (trans < kTermination) break;
                }
                row[3 * x + 0] = r;
                row[3 * x + 1] = g;
                row[3 * x + 2] = b;
            }
        }
    });
    return img;
}

namespace {

// Per-splat screen-space gradients accumulated by one chunk of tiles.
struct SplatGrads {
    std::vector<Vec2> mean2d;
    std::vector<Mat2> conic;  // gradient w.r.t. the inverse covariance
    std::vector<Vec3> color;
    std::vector<double> opacity;

    void resize_zero(std::size_t n) {
        mean2d.assign(n, Vec2::Zero());
        conic.assign(n, Mat2::Zero());
        color.assign(n, Vec3::Zero());
        opacity.assign(n, 0.0);
    }

    void accumulate(const SplatGrads& o) {
        for (std::size_t i = 0; i < mean2d.size(); ++i) {
            mean2d[i] += o.mean2d[i];
            conic[i] += o.conic[i];
            color[i] += o.color[i];
            opacity[i] += o.opacity[i];
        }
    }
};

struct BlendRecord {
    std::uint32_t splat;
    double alpha;
    double gauss;  // exp(-q/2)
    double dx, dy;
    double trans;  // transmittance in front of this splat
};

}  // namespace

GaussianSetGrads render_backward(const GaussianSet& set, const Camera& cam,
                                 const Image& dL_dImage) {
    if (dL_dImage.width != cam.width || dL_dImage.height != cam.height) {
        throw ShapeMismatch("image gradient dimensions mismatch camera resolution");
    }
    GaussianSetGrads grads;
    grads.resize_zero(set.size());

    const ProjectedScene p = project_all(set, cam);
    if (p.size() == 0) return grads;
    const TileBins bins = bin_splats(p, cam.width, cam.height);
    const std::size_t n_tiles = bins.lists.size();

    // Fixed chunk count; chunks merged in index order below, so the result is
    // bit-reproducible regardless of thread count.
    std::vector<SplatGrads> chunk_grads(kReductionChunks);
    for (auto& c : chunk_grads) c.resize_zero(p.size());
    parallel_chunks(n_tiles, kReductionChunks,
                    [&](std::size_t chunk, std::size_t t0, std::size_t t1) {
        SplatGrads& local = chunk_grads[chunk];
        std::vector<BlendRecord> stack;
        for (std::size_t tile = t0; tile < t1; ++tile) {
            const auto& list = bins.lists[tile];
            if (list.empty()) continue;
            const int tx = static_cast<int>(tile) % bins.tiles_x;
            const int ty = static_cast<int>(tile) / bins.tiles_x;
            const int x_end = std::min(cam.width, (tx + 1) * kTileSize);
            const int y_end = std::min(cam.height, (ty + 1) * kTileSize);
            for (int y = ty * kTileSize; y < y_end; ++y) {
                const double py = y + 0.5;
                for (int x = tx * kTileSize; x < x_end; ++x) {
                    const double px = x + 0.5;

                    // forward replay
                    stack.clear();
                    double trans = 1.0;
                    for (std::uint32_t j : list) {
                        const double dx = px - p.mx[j];
                        const double dy = py - p.my[j];
                        const double q = p.ia[j] * dx * dx + 2.0 * p.ib[j] * dx * dy +
                                         p.ic[j] * dy * dy;
                        if (q >= kExpUnderflowQ) continue;
                        const double gauss = std::exp(-0.5 * q);
                        const double alpha = std::min(kAlphaClamp, p.opacity[j] * gauss);
                        stack.push_back({j, alpha, gauss, dx, dy, trans});
                        trans *= 1.0 - alpha;
                        if (trans < kTermination) break;
                    }
                    if (stack.empty()) continue;

                    const double* w = dL_dImage.pixel(x, y);

                    // backward sweep, rear to front; rear holds
                    // sum_{k > s} c_k alpha_k T_k, the color blended in
                    // behind the current splat
                    double rear_r = 0.0, rear_g = 0.0, rear_b = 0.0;
                    for (std::size_t s = stack.size(); s-- > 0;) {
                        const BlendRecord& rec = stack[s];
                        const std::uint32_t j = rec.splat;
                        const double at = rec.alpha * rec.trans;
                        local.color[j] += Vec3(w[0], w[1], w[2]) * at;

                        const double d_alpha =
                            w[0] * (p.cr[j] * rec.trans - rear_r / (1.0 - rec.alpha)) +
                            w[1] * (p.cg[j] * rec.trans - rear_g / (1.0 - rec.alpha)) +
                            w[2] * (p.cb[j] * rec.trans - rear_b / (1.0 - rec.alpha));
                        rear_r += p.cr[j] * at;
                        rear_g += p.cg[j] * at;
                        rear_b += p.cb[j] * at;
                        if (rec.alpha < kAlphaClamp) {
                            local.opacity[j] += rec.gauss * d_alpha;
                            const double d_gauss = p.opacity[j] * d_alpha;
                            const double d_q = -0.5 * rec.gauss * d_gauss;
                            const double gx = 2.0 * (p.ia[j] * rec.dx + p.ib[j] * rec.dy);
                            const double gy = 2.0 * (p.ib[j] * rec.dx + p.ic[j] * rec.dy);
                            local.mean2d[j] += Vec2(-d_q * gx, -d_q * gy);
                            Mat2 dq_conic;
                            dq_conic << rec.dx * rec.dx, rec.dx * rec.dy, rec.dx * rec.dy,
                                rec.dy * rec.dy;
                            local.conic[j] += d_q * dq_conic;
                        }
                    }
                }
            }
        }
    });

    SplatGrads total;
    total.resize_zero(p.size());
    for (const auto& c : chunk_grads) total.accumulate(c);

    // Chain screen-space gradients to the raw 3D parameters.
    parallel_for(p.size(), [&](std::size_t j) {
        const int src = p.source[j];
        const RawGaussian g = set.get(src);
        const auto [p_cam, depth] = world_to_camera(g.mu, cam);
        (void)depth;
        const Eigen::Matrix<double, 2, 3> jac = projection_jacobian(p_cam, cam);
        const Eigen::Matrix<double, 2, 3> t = jac * cam.rotation;
        const Mat3 sigma = build_covariance(g.log_scale, g.quat);

        // color / opacity logits through the sigmoid
        const Vec3 col = sigmoid(g.color_logit);
        grads.color_logit[src] = total.color[j].cwiseProduct(col.cwiseProduct(Vec3::Ones() - col));
        const double op = p.opacity[j];
        grads.opacity_logit[src] = total.opacity[j] * op * (1.0 - op);

        // conic -> cov2d: Lambda = C^{-1}, dL/dC = -Lambda dL/dLambda Lambda
        Mat2 conic;
        conic << p.ia[j], p.ib[j], p.ib[j], p.ic[j];
        const Mat2 d_cov = -conic * total.conic[j] * conic;

        // cov2d = T Sigma T^T + lowpass
        const Mat3 d_sigma = t.transpose() * d_cov * t;
        Vec3 d_ls;
        Vec4 d_quat;
        covariance_backward(g.log_scale, g.quat, d_sigma, d_ls, d_quat);
        grads.log_scale[src] = d_ls;
        grads.quat[src] = d_quat;

        // mean2d and the Jacobian's dependence on the camera-space position
        const Eigen::Matrix<double, 2, 3> d_t = (d_cov + d_cov.transpose()) * t * sigma;
        const Eigen::Matrix<double, 2, 3> d_jac = d_t * cam.rotation.transpose();
        const double fx = cam.focal.x(), fy = cam.focal.y();
        const double z = p_cam.z(), z2 = z * z, z3 = z2 * z;
        Vec3 d_pcam = jac.transpose() * total.mean2d[j];
        d_pcam.x() += -fx / z2 * d_jac(0, 2);
        d_pcam.y() += -fy / z2 * d_jac(1, 2);
        d_pcam.z() += -fx / z2 * d_jac(0, 0) - fy / z2 * d_jac(1, 1) +
                      2.0 * fx * p_cam.x() / z3 * d_jac(0, 2) +
                      2.0 * fy * p_cam.y() / z3 * d_jac(1, 2);
        grads.mu[src] = cam.rotation.transpose() * d_pcam;
    });
    return grads;
}

std::vector<double> transmittance_profile(const GaussianSet& set, const Camera& cam, int px,
                                          int py) {
    const ProjectedScene p = project_all(set, cam);
    std::vector<double> profile;
    const double fx = px + 0.5, fy = py + 0.5;
    double trans = 1.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double dx = fx - p.mx[j];
        const double dy = fy - p.my[j];
        const double q = p.ia[j] * dx * dx + 2.0 * p.ib[j] * dx * dy + p.ic[j] * dy * dy;
        if (q >= p.q_noise[j]) continue;
        const double alpha = std::min(kAlphaClamp, p.opacity[j] * std::exp(-0.5 * q));
        trans *= 1.0 - alpha;
        profile.push_back(trans);
    }
    return profile;
}

}  // namespace gshs
