#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gshs/hierarchy.hpp"
#include "gshs/losses.hpp"
#include "gshs/types.hpp"

namespace gshs {

// Step-size defaults are calibrated against the mean-normalized image loss,
// whose raw-parameter gradients are orders of magnitude below the
// regularizer gradients; see the per-group values below.
struct FitConfig {
    int iterations = 2000;
    double lr_position = 1e-2;
    double lr_scale = 5.0;
    double lr_rotation = 1.0;
    double lr_opacity = 20.0;
    double lr_color = 20.0;
    int camera_count = 8;
    HierarchyConfig hierarchy;
    LossWeights weights;
    std::uint64_t seed = 0;
    double mse_weight = 1.0;   // image-loss weight; 0 fits the regularizers alone
    int checkpoint_every = 100;
};

struct FitReport {
    std::vector<double> loss_curve;       // one entry per iteration, pre-update
    std::vector<double> psnr_curve;       // dB, from the same renders
    std::vector<double> final_psnr_per_view;
    double final_loss = 0.0;
    double wall_seconds = 0.0;
    bool invariants_ok = true;
    std::string invariant_failure;
    Scene final_scene;
};

struct SyntheticTarget {
    Scene ground_truth;
    std::vector<Camera> cameras;
    std::vector<Image> images;
};

// Hand-constructed scenes (20-200 Gaussians) rendered by render_reference
// from camera_count poses on a radius-2.7 orbit. Names: blob-cluster,
// two-tone-sphere, checker-card. Throws UnknownSpec.
SyntheticTarget make_synthetic_target(const std::string& spec_name, std::uint64_t seed,
                                      int camera_count = 8, int resolution = 64);

// 10*log10(1/MSE) for images in [0,1]; capped at 99 dB. Throws ShapeMismatch.
double psnr(const Image& a, const Image& b);

using FitCallback =
    std::function<void(int iteration, double loss, double psnr_db)>;

// Fits hierarchical residuals to the target views by SGD with momentum 0.9
// through the tiled rasterizer; loss is mse_weight * MSE + lambda_center *
// L_center + lambda_knn * L_knn on the level-0 anchors. Throws DivergedLoss
// on NaN/Inf.
FitReport fit(const std::vector<Image>& targets, const std::vector<Camera>& cameras,
              const FitConfig& cfg, const FitCallback& callback = nullptr);

}  // namespace gshs
