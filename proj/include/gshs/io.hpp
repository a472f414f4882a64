#pragma once

#include <string>

#include "gshs/hierarchy.hpp"
#include "gshs/losses.hpp"
#include "gshs/train.hpp"
#include "gshs/types.hpp"

namespace gshs {

// Scene file layout (all integers and floats little-endian):
//   magic "GSHS" | version u16 | L u32 | N u32 | r u32 | delta_s f32 | flags u32
//   then per level l = 0..L-1, for Gaussians then anchors:
//     mu f32[3n] | log_scale f32[3n] | quat f32[4n] | opacity_logit f32[n] |
//     color_logit f32[3n]                       with n = r^l * N
//   if flags bit 0: background count u32 followed by the same five arrays.
// In-memory doubles are narrowed to f32 with round-to-nearest on write.
inline constexpr std::uint16_t kSceneFileVersion = 1;

void write_scene(const Scene& scene, const std::string& path);
Scene read_scene(const std::string& path);

// PPM P6, 8-bit channels, byte = round(clamp(v,0,1) * 255), half away from
// zero; row-major, top-left origin.
void write_image_ppm(const Image& img, const std::string& path);
Image read_image_ppm(const std::string& path);

// PNG encoding of the same quantized 8-bit buffer.
void write_image_png(const Image& img, const std::string& path);

struct AppConfig {
    HierarchyConfig hierarchy;
    FitConfig fit;
    LossWeights weights;
};

// key = value lines, '#' comments, unknown keys rejected, missing keys take
// the documented defaults (N=256, r=4, L=5, 256x256, lambda_knn=10, ...).
AppConfig read_config(const std::string& path);
AppConfig parse_config_text(const std::string& text);

}  // namespace gshs
