#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "msta/encoders/config.h"
#include "msta/encoders/layout.h"
#include "msta/encoders/tokenizer.h"

namespace msta {

enum class Tower { kVision, kText };

struct GridShape {
  std::int64_t frames = 0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::int64_t cells() const { return rows * cols; }
};

// Class token c_i at row 0, then frame-major patch tokens x_i.
struct VisionState {
  Var tokens;
  GridShape grid;
  std::int64_t layer = 0;
};

struct TextState {
  Var tokens;  // [eot_index + 1, d_t]
  std::int64_t eot_index = 0;
  std::int64_t layer = 0;
};

struct AdapterContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;
  GridShape grid;
};

// Extension points a transformer block offers to parameter-efficient
// modules. Layers are 1-based. Undefined return values mean "no change".
class AdapterHooks {
 public:
  virtual ~AdapterHooks() = default;

  // Unscaled output of an adapter running in parallel with the whole block;
  // the block adds scale() times this value to its own output.
  virtual Var parallel(Tower, std::int64_t /*layer*/, const Var& /*block_input*/,
                       const AdapterContext&) const {
    return {};
  }
  virtual double scale() const { return 0.0; }

  // Additive corrections to the attention query / value projections, given
  // the normalised block input.
  virtual Var query_delta(Tower, std::int64_t, const Var&, const AdapterContext&) const { return {}; }
  virtual Var value_delta(Tower, std::int64_t, const Var&, const AdapterContext&) const { return {}; }

  // Additive correction to the MLP sublayer given its (un-normalised) input.
  virtual Var mlp_delta(Tower, std::int64_t, const Var&, const AdapterContext&) const { return {}; }

  virtual ParameterList parameters() const = 0;
};

struct ForwardOptions {
  bool use_adapters = true;
  bool training = false;
  std::mt19937_64* rng = nullptr;
  // Replaces the adapter scale with a scalar variable (for derivatives in λ).
  Var scale_override;
  // Called with the token matrix after every block.
  std::function<void(Tower, std::int64_t layer, const Var& tokens)> observer;
};

// The frozen vision-language backbone: a spatio-temporal ViT over video
// patches and a causal text transformer, each projected to the joint space.
class DualEncoder {
 public:
  explicit DualEncoder(ModelConfig config);

  static ParameterLayout backbone_layout(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }

  VisionState patch_embed(const Tensor& video) const;
  TextState text_embed(std::span<const std::int64_t> ids) const;
  VisionState vision_block(const VisionState& state, const ForwardOptions& options = {}) const;
  TextState text_block(const TextState& state, const ForwardOptions& options = {}) const;
  Var project_vision(const VisionState& state) const;
  Var project_text(const TextState& state) const;

  Var encode_video(const Tensor& video, const ForwardOptions& options = {}) const;
  Var encode_text(std::span<const std::int64_t> ids, const ForwardOptions& options = {}) const;
  Var encode_text(const std::string& text, const ForwardOptions& options = {}) const;
  std::vector<std::int64_t> tokenize(const std::string& text) const;

  void freeze_backbone();
  void attach_adapters(std::shared_ptr<AdapterHooks> adapters);
  const std::shared_ptr<AdapterHooks>& adapters() const { return adapters_; }

  const ParameterList& backbone_parameters() const { return backbone_; }
  // Backbone followed by adapter parameters.
  ParameterList parameters() const;
  ParameterList trainable_parameters() const;
  const Parameter& parameter(const std::string& name) const;

 private:
  struct BlockWeights {
    Var ln1_gamma, ln1_beta, q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
    Var ln2_gamma, ln2_beta, fc1_w, fc1_b, fc2_w, fc2_b;
  };

  BlockWeights block_weights(const std::string& prefix) const;
  Var run_block(Tower tower, std::int64_t layer, const Var& x, const AttentionMask& mask,
                const GridShape& grid, const ForwardOptions& options) const;
  const Var& p(const std::string& name) const;

  ModelConfig config_;
  Tokenizer tokenizer_;
  ParameterList backbone_;
  std::map<std::string, ParameterPtr> by_name_;
  std::vector<BlockWeights> vision_blocks_;
  std::vector<BlockWeights> text_blocks_;
  std::shared_ptr<AdapterHooks> adapters_;
};

}  // namespace msta
