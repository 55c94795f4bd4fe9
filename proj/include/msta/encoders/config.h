#pragma once

#include <cstdint>
#include <string>

#include "msta/numerics/ops.h"

namespace msta {

// Shapes of the frozen dual-encoder backbone.
struct ModelConfig {
  std::string preset = "tiny";
  std::int64_t layers = 4;
  std::int64_t vision_width = 64;
  std::int64_t text_width = 48;
  std::int64_t joint_width = 32;
  std::int64_t frames = 4;
  std::int64_t height = 16;
  std::int64_t width = 16;
  std::int64_t patch = 8;
  std::int64_t vision_heads = 4;
  std::int64_t text_heads = 4;
  std::int64_t vocab = 64;
  std::int64_t max_tokens = 16;
  std::int64_t mlp_ratio = 4;
  // Init scale of the per-frame positional table. Zero, as when an image
  // model is inflated to video: the frozen backbone is then blind to order.
  double temporal_position_std = 0.0;
  std::uint64_t seed = 0;

  // "tiny", "tiny12" (twelve narrow layers for layer-range sweeps) or
  // "vitb16-shape" (ViT-B/16 widths and depth).
  static ModelConfig preset_named(const std::string& name);

  void validate() const;

  std::int64_t grid_height() const { return height / patch; }
  std::int64_t grid_width() const { return width / patch; }
  std::int64_t patches_per_frame() const { return grid_height() * grid_width(); }
  std::int64_t vision_tokens() const { return 1 + frames * patches_per_frame(); }
  std::int64_t patch_dim() const { return patch * patch * 3; }
};

}  // namespace msta
