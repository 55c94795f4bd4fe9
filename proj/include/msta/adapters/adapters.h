#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "msta/encoders/model.h"

namespace msta {

enum class AdapterKind { kMsta, kLora, kAdaptFormer };

// Structural variants of the multi-modal adapter used by the ablations.
enum class MstaVariant {
  kFull,
  kVisionOnly,     // no text adapters; the shared layer serves vision alone
  kTextOnly,       // no vision adapters; the shared layer serves text alone
  kNoSharedLayer,  // separate square bottleneck maps per modality
  kSpatialOnly,    // vision side without the temporal up-projection
};

std::string adapter_kind_name(AdapterKind kind);
AdapterKind parse_adapter_kind(const std::string& name);
std::string msta_variant_name(MstaVariant variant);
MstaVariant parse_msta_variant(const std::string& name);

struct AdapterConfig {
  AdapterKind kind = AdapterKind::kMsta;
  MstaVariant variant = MstaVariant::kFull;
  std::int64_t first_layer = 1;  // k
  std::int64_t last_layer = 0;   // 0 means the final layer
  std::int64_t dims = 256;       // r
  double lambda = 0.005;
  std::int64_t temporal_kernel = 3;
  double dropout = 0.1;
  Activation activation = Activation::kGelu;
  // LoRA update scale / AdaptFormer branch scale.
  double baseline_scale = 0.1;
  std::uint64_t seed = 0;

  std::int64_t resolved_last(std::int64_t layers) const { return last_layer == 0 ? layers : last_layer; }
  void validate(std::int64_t layers) const;
};

// One layer of the multi-modal spatio-temporal adapter. `vision_shared` and
// `text_shared` point at the same Parameter unless the variant separates them.
struct MstaLayer {
  std::int64_t layer = 0;
  ParameterPtr vision_down_w, vision_down_b;
  ParameterPtr text_down_w, text_down_b;
  ParameterPtr vision_shared_w, vision_shared_b;
  ParameterPtr text_shared_w, text_shared_b;
  ParameterPtr spatial_up_w, spatial_up_b;
  ParameterPtr temporal_up_w, temporal_up_b;  // [kt, r, d_v]
  ParameterPtr text_up_w, text_up_b;
  double dropout = 0.0;
  Activation activation = Activation::kGelu;

  bool has_vision() const { return vision_down_w != nullptr; }
  bool has_text() const { return text_down_w != nullptr; }
  bool has_temporal() const { return temporal_up_w != nullptr; }
  ParameterList parameters() const;
};

// tokens[1 + T*Hp*Wp, d_v] -> [1 + T*Hp*Wp, d_v]. The class token receives the
// spatial path only.
Var msta_vision_forward(const MstaLayer& layer, const Var& tokens, const GridShape& grid,
                        const AdapterContext& ctx = {});
// tokens[n, d_t] -> [n, d_t], n = end-of-text index + 1
Var msta_text_forward(const MstaLayer& layer, const Var& tokens, const AdapterContext& ctx = {});

class AdapterSet : public AdapterHooks {
 public:
  explicit AdapterSet(AdapterConfig config) : config_(std::move(config)) {}
  const AdapterConfig& config() const { return config_; }
  double scale() const override { return config_.lambda; }
  ParameterList parameters() const override { return params_; }

 protected:
  AdapterConfig config_;
  ParameterList params_;
};

class MstaAdapters : public AdapterSet {
 public:
  MstaAdapters(const ModelConfig& model, AdapterConfig config);
  Var parallel(Tower tower, std::int64_t layer, const Var& input, const AdapterContext& ctx) const override;
  const MstaLayer* layer(std::int64_t index) const;
  MstaLayer* mutable_layer(std::int64_t index);

 private:
  std::map<std::int64_t, MstaLayer> layers_;
};

// Rank-r updates of the attention query and value projections, both towers.
class LoraAdapters : public AdapterSet {
 public:
  LoraAdapters(const ModelConfig& model, AdapterConfig config);
  double scale() const override { return 0.0; }
  Var query_delta(Tower tower, std::int64_t layer, const Var& h, const AdapterContext& ctx) const override;
  Var value_delta(Tower tower, std::int64_t layer, const Var& h, const AdapterContext& ctx) const override;

 private:
  Var delta(const std::string& key, const Var& h) const;
  std::map<std::string, std::pair<ParameterPtr, ParameterPtr>> factors_;
};

// Parallel bottleneck beside the MLP sublayer of the vision tower.
class AdaptFormerAdapters : public AdapterSet {
 public:
  AdaptFormerAdapters(const ModelConfig& model, AdapterConfig config);
  double scale() const override { return 0.0; }
  Var mlp_delta(Tower tower, std::int64_t layer, const Var& x, const AdapterContext& ctx) const override;

 private:
  struct Branch {
    ParameterPtr down_w, down_b, up_w, up_b;
  };
  std::map<std::int64_t, Branch> branches_;
};

ParameterLayout adapter_layout(const ModelConfig& model, const AdapterConfig& config);

// Attaches adapters to layers k..last of both towers, freezes every backbone
// parameter and registers the adapter parameters as trainable.
std::shared_ptr<AdapterSet> inject(DualEncoder& model, const AdapterConfig& config);

}  // namespace msta
