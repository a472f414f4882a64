#pragma once

#include <vector>

#include "gshs/types.hpp"

namespace gshs {

struct LossWeights {
    double lambda_adv = 1.0;     // R1 regularization strength
    double lambda_pose = 1.0;
    double lambda_center = 1.0;
    double lambda_knn = 10.0;
    double tau = 0.1;            // contrastive temperature
    int knn_k = 4;
};

// Batch of pose embeddings, rows are samples. Source tag records whether the
// embeddings came from images (p_I) or camera parameters (p_theta).
struct PoseEmbeddingBatch {
    Eigen::MatrixXd embeddings;  // B x d
    enum class Source { Image, Camera } source = Source::Image;
};

// (1/N) * || sum_j mu_j ||^2
double loss_center(const std::vector<Vec3>& anchor_positions);

// For each point, indices of its k nearest neighbors (self excluded),
// Euclidean distance, ties broken by lower index. Throws InvalidK unless
// 1 <= k < N.
std::vector<std::vector<std::size_t>> knn_indices(const std::vector<Vec3>& positions, int k);

// (1/(NK)) * sum_j || sum_k (mu_j - knn_k(mu_j)) ||^2 -- the inner sum runs
// over the K neighbor differences before the norm is taken.
double loss_knn(const std::vector<Vec3>& anchor_positions, int k);

// Gradient of lambda_c * loss_center + lambda_k * loss_knn w.r.t. positions
// (neighbor assignments treated as constant).
std::vector<Vec3> anchor_regularizer_grads(const std::vector<Vec3>& positions, int k,
                                           double lambda_center, double lambda_knn);

// InfoNCE over cosine similarities with positives on the diagonal,
// image -> camera direction, averaged over the batch. Throws ShapeMismatch /
// ZeroNormEmbedding.
double loss_pose_contrastive(const PoseEmbeddingBatch& p_img, const PoseEmbeddingBatch& p_cam,
                             double tau);

// Non-saturating discriminator loss: mean softplus(fake) + mean softplus(-real)
// + lambda * r1_grad_sq_norm. The R1 term is a precomputed squared gradient
// norm supplied by the caller.
double adv_d_loss(const std::vector<double>& real_logits, const std::vector<double>& fake_logits,
                  double r1_grad_sq_norm, double lambda);

// Generator side: mean softplus(-fake).
double adv_g_loss(const std::vector<double>& fake_logits);

struct LossComponents {
    double adv = 0.0;
    double pose = 0.0;
    double center = 0.0;
    double knn = 0.0;
};

// adv + lambda_pose * pose + lambda_center * center + lambda_knn * knn
double total_loss(const LossComponents& components, const LossWeights& weights);

}  // namespace gshs
