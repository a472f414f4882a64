#include "gshs/losses.hpp"

#include <algorithm>
#include <cmath>

#include "gshs/core.hpp"

namespace gshs {

double loss_center(const std::vector<Vec3>& anchor_positions) {
    Vec3 sum = Vec3::Zero();
    for (const auto& p : anchor_positions) sum += p;
    return sum.squaredNorm() / static_cast<double>(anchor_positions.size());
}

std::vector<std::vector<std::size_t>> knn_indices(const std::vector<Vec3>& positions, int k) {
    const std::size_t n = positions.size();
    if (k < 1 || static_cast<std::size_t>(k) >= n) {
        throw InvalidK("k = " + std::to_string(k) + " must satisfy 1 <= k < N = " +
                       std::to_string(n));
    }
    std::vector<std::vector<std::size_t>> out(n);
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
        dist.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (i == j) continue;
            dist.emplace_back((positions[i] - positions[j]).squaredNorm(), i);
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        out[j].reserve(k);
        for (int m = 0; m < k; ++m) out[j].push_back(dist[m].second);
    }
    return out;
}

double loss_knn(const std::vector<Vec3>& anchor_positions, int k) {
    const auto neighbors = knn_indices(anchor_positions, k);
    const std::size_t n = anchor_positions.size();
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        Vec3 diff_sum = Vec3::Zero();
        for (std::size_t idx : neighbors[j]) diff_sum += anchor_positions[j] - anchor_positions[idx];
        total += diff_sum.squaredNorm();
    }
    return total / (static_cast<double>(n) * k);
}

std::vector<Vec3> anchor_regularizer_grads(const std::vector<Vec3>& positions, int k,
                                           double lambda_center, double lambda_knn) {
    const std::size_t n = positions.size();
    std::vector<Vec3> grads(n, Vec3::Zero());

    if (lambda_center != 0.0) {
        Vec3 sum = Vec3::Zero();
        for (const auto& p : positions) sum += p;
        const Vec3 g = (2.0 * lambda_center / static_cast<double>(n)) * sum;
        for (auto& out : grads) out += g;
    }
    if (lambda_knn != 0.0 && n > 1) {
        const int kk = std::min<int>(k, static_cast<int>(n) - 1);
        const auto neighbors = knn_indices(positions, kk);
        const double scale = 2.0 * lambda_knn / (static_cast<double>(n) * kk);
        for (std::size_t j = 0; j < n; ++j) {
            Vec3 diff_sum = Vec3::Zero();
            for (std::size_t idx : neighbors[j]) diff_sum += positions[j] - positions[idx];
            grads[j] += scale * kk * diff_sum;
            for (std::size_t idx : neighbors[j]) grads[idx] -= scale * diff_sum;
        }
    }
    return grads;
}

double loss_pose_contrastive(const PoseEmbeddingBatch& p_img, const PoseEmbeddingBatch& p_cam,
                             double tau) {
    const auto b = p_img.embeddings.rows();
    const auto d = p_img.embeddings.cols();
    if (p_cam.embeddings.rows() != b || p_cam.embeddings.cols() != d) {
        throw ShapeMismatch("pose embedding batches must have matching shapes");
    }
    if (b < 1) throw ShapeMismatch("batch size must be >= 1");
    if (!(tau > 0.0)) throw InvalidConfig("tau must be > 0");

    Eigen::VectorXd img_norm(b), cam_norm(b);
    for (Eigen::Index i = 0; i < b; ++i) {
        img_norm(i) = p_img.embeddings.row(i).norm();
        cam_norm(i) = p_cam.embeddings.row(i).norm();
        if (img_norm(i) <= 1e-12 || cam_norm(i) <= 1e-12) {
            throw ZeroNormEmbedding("embedding " + std::to_string(i) + " has zero norm");
        }
    }

    double total = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        Eigen::VectorXd logits(b);
        for (Eigen::Index j = 0; j < b; ++j) {
            const double sim =
                p_img.embeddings.row(i).dot(p_cam.embeddings.row(j)) / (img_norm(i) * cam_norm(j));
            logits(j) = sim / tau;
        }
        const double m = logits.maxCoeff();
        const double lse = m + std::log((logits.array() - m).exp().sum());
        total += lse - logits(i);
    }
    return total / static_cast<double>(b);
}

double adv_d_loss(const std::vector<double>& real_logits, const std::vector<double>& fake_logits,
                  double r1_grad_sq_norm, double lambda) {
    double fake_term = 0.0, real_term = 0.0;
    for (double t : fake_logits) fake_term += softplus(t);
    for (double t : real_logits) real_term += softplus(-t);
    if (!fake_logits.empty()) fake_term /= static_cast<double>(fake_logits.size());
    if (!real_logits.empty()) real_term /= static_cast<double>(real_logits.size());
    return fake_term + real_term + lambda * r1_grad_sq_norm;
}

double adv_g_loss(const std::vector<double>& fake_logits) {
    double total = 0.0;
    for (double t : fake_logits) total += softplus(-t);
    if (!fake_logits.empty()) total /= static_cast<double>(fake_logits.size());
    return total;
}

double total_loss(const LossComponents& c, const LossWeights& w) {
    return c.adv + w.lambda_pose * c.pose + w.lambda_center * c.center + w.lambda_knn * c.knn;
}

}  // namespace gshs
