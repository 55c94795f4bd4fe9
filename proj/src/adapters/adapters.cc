#include "msta/adapters/adapters.h"

#include "msta/error.h"

namespace msta {
namespace {

std::string layer_prefix(const char* kind, std::int64_t layer) {
  return std::string(kind) + "." + std::to_string(layer);
}

void add_linear(ParameterLayout& layout, const std::string& name, Shape shape, InitKind weight_init) {
  const std::int64_t out = shape.back();
  layout.push_back({name + ".weight", std::move(shape), weight_init, 0.0, true});
  layout.push_back({name + ".bias", {out}, InitKind::kZeros, 0.0, true});
}

}  // namespace

std::string adapter_kind_name(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::kMsta: return "msta";
    case AdapterKind::kLora: return "lora";
    case AdapterKind::kAdaptFormer: return "adaptformer";
  }
  return "msta";
}

AdapterKind parse_adapter_kind(const std::string& name) {
  if (name == "msta") return AdapterKind::kMsta;
  if (name == "lora") return AdapterKind::kLora;
  if (name == "adaptformer") return AdapterKind::kAdaptFormer;
  raise(ErrorKind::kConfig, "unknown adapter kind '" + name + "'");
}

std::string msta_variant_name(MstaVariant v) {
  switch (v) {
    case MstaVariant::kFull: return "full";
    case MstaVariant::kVisionOnly: return "vision-only";
    case MstaVariant::kTextOnly: return "text-only";
    case MstaVariant::kNoSharedLayer: return "no-shared";
    case MstaVariant::kSpatialOnly: return "spatial-only";
  }
  return "full";
}

MstaVariant parse_msta_variant(const std::string& name) {
  for (auto v : {MstaVariant::kFull, MstaVariant::kVisionOnly, MstaVariant::kTextOnly,
                 MstaVariant::kNoSharedLayer, MstaVariant::kSpatialOnly}) {
    if (msta_variant_name(v) == name) return v;
  }
  raise(ErrorKind::kConfig, "unknown adapter variant '" + name + "'");
}

void AdapterConfig::validate(std::int64_t layers) const {
  auto fail = [](const std::string& m) { raise(ErrorKind::kConfig, m); };
  if (first_layer < 1 || first_layer > layers + 1) {
    fail("adapter start layer k=" + std::to_string(first_layer) + " outside [1, " +
         std::to_string(layers + 1) + "]");
  }
  if (last_layer != 0 && (last_layer < first_layer || last_layer > layers)) {
    fail("adapter layer range " + std::to_string(first_layer) + "-" + std::to_string(last_layer) +
         " invalid for " + std::to_string(layers) + " layers");
  }
  if (dims < 1) fail("adapter dims must be >= 1");
  if (lambda < 0) fail("lambda must be >= 0");
  if (dropout < 0 || dropout >= 1) fail("dropout must be in [0, 1)");
  if (temporal_kernel < 1 || temporal_kernel % 2 == 0) {
    fail("temporal kernel must be odd, got " + std::to_string(temporal_kernel));
  }
}

ParameterLayout adapter_layout(const ModelConfig& model, const AdapterConfig& config) {
  config.validate(model.layers);
  ParameterLayout layout;
  const std::int64_t r = config.dims;
  const std::int64_t dv = model.vision_width;
  const std::int64_t dt = model.text_width;
  const std::int64_t last = config.resolved_last(model.layers);
  for (std::int64_t j = config.first_layer; j <= last; ++j) {
    switch (config.kind) {
      case AdapterKind::kMsta: {
        const std::string pre = layer_prefix("msta", j);
        const bool vision = config.variant != MstaVariant::kTextOnly;
        const bool text = config.variant != MstaVariant::kVisionOnly;
        if (vision) add_linear(layout, pre + ".vision_down", {dv, r}, InitKind::kKaiming);
        if (text) add_linear(layout, pre + ".text_down", {dt, r}, InitKind::kKaiming);
        if (config.variant == MstaVariant::kNoSharedLayer) {
          add_linear(layout, pre + ".vision_shared", {r, r}, InitKind::kKaiming);
          add_linear(layout, pre + ".text_shared", {r, r}, InitKind::kKaiming);
        } else {
          add_linear(layout, pre + ".shared", {r, r}, InitKind::kKaiming);
        }
        if (vision) {
          add_linear(layout, pre + ".spatial_up", {r, dv}, InitKind::kKaiming);
          if (config.variant != MstaVariant::kSpatialOnly) {
            add_linear(layout, pre + ".temporal_up", {config.temporal_kernel, r, dv}, InitKind::kKaiming);
          }
        }
        if (text) add_linear(layout, pre + ".text_up", {r, dt}, InitKind::kKaiming);
        break;
      }
      case AdapterKind::kLora: {
        const std::string pre = layer_prefix("lora", j);
        for (auto [tower, d] : {std::pair{"vision", dv}, std::pair{"text", dt}}) {
          for (const char* proj : {"q", "v"}) {
            const std::string base = pre + "." + tower + "." + proj;
            layout.push_back({base + ".down", {d, r}, InitKind::kKaiming, 0.0, true});
            layout.push_back({base + ".up", {r, d}, InitKind::kZeros, 0.0, true});
          }
        }
        break;
      }
      case AdapterKind::kAdaptFormer: {
        const std::string pre = layer_prefix("adaptformer", j);
        add_linear(layout, pre + ".down", {dv, r}, InitKind::kKaiming);
        add_linear(layout, pre + ".up", {r, dv}, InitKind::kZeros);
        break;
      }
    }
  }
  return layout;
}

ParameterList MstaLayer::parameters() const {
  ParameterList out;
  for (const auto& p : {vision_down_w, vision_down_b, text_down_w, text_down_b, vision_shared_w,
                        vision_shared_b, text_shared_w, text_shared_b, spatial_up_w, spatial_up_b,
                        temporal_up_w, temporal_up_b, text_up_w, text_up_b}) {
    if (!p) continue;
    bool seen = false;
    for (const auto& q : out) seen = seen || q == p;
    if (!seen) out.push_back(p);
  }
  return out;
}

Var msta_vision_forward(const MstaLayer& layer, const Var& tokens, const GridShape& grid,
                        const AdapterContext& ctx) {
  if (!layer.has_vision()) raise(ErrorKind::kState, "adapter layer has no vision branch");
  const std::int64_t n = tokens.shape()[0];
  if (n != 1 + grid.frames * grid.cells()) {
    raise(ErrorKind::kDimension, "vision adapter: " + std::to_string(n) +
                                     " tokens inconsistent with grid " + std::to_string(grid.frames) +
                                     "x" + std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
  }
  Var h = activation(linear(tokens, layer.vision_down_w->var(), layer.vision_down_b->var()), layer.activation);
  h = activation(linear(h, layer.vision_shared_w->var(), layer.vision_shared_b->var()), layer.activation);
  if (ctx.training && layer.dropout > 0 && ctx.rng) h = dropout(h, layer.dropout, *ctx.rng);
  Var out = linear(h, layer.spatial_up_w->var(), layer.spatial_up_b->var());
  if (!layer.has_temporal()) return out;

  const std::int64_t r = h.shape()[1];
  const std::int64_t width = out.shape()[1];
  Var cells = reshape(slice_rows(h, 1, n - 1), {grid.frames, grid.rows, grid.cols, r});
  Var temporal = conv3d_temporal(cells, layer.temporal_up_w->var(), layer.temporal_up_b->var());
  Var class_row(Tensor(Shape{1, width}, tokens.value().dtype()));
  return add(out, concat_rows({class_row, reshape(temporal, {n - 1, width})}));
}

Var msta_text_forward(const MstaLayer& layer, const Var& tokens, const AdapterContext& ctx) {
  if (!layer.has_text()) raise(ErrorKind::kState, "adapter layer has no text branch");
  Var h = activation(linear(tokens, layer.text_down_w->var(), layer.text_down_b->var()), layer.activation);
  h = activation(linear(h, layer.text_shared_w->var(), layer.text_shared_b->var()), layer.activation);
  if (ctx.training && layer.dropout > 0 && ctx.rng) h = dropout(h, layer.dropout, *ctx.rng);
  return linear(h, layer.text_up_w->var(), layer.text_up_b->var());
}

MstaAdapters::MstaAdapters(const ModelConfig& model, AdapterConfig config)
    : AdapterSet(std::move(config)) {
  params_ = materialize(adapter_layout(model, config_), config_.seed);
  std::map<std::string, ParameterPtr> by_name;
  for (const auto& p : params_) by_name[p->name()] = p;
  auto find = [&](const std::string& name) -> ParameterPtr {
    auto it = by_name.find(name);
    return it == by_name.end() ? nullptr : it->second;
  };
  const std::int64_t last = config_.resolved_last(model.layers);
  for (std::int64_t j = config_.first_layer; j <= last; ++j) {
    const std::string pre = layer_prefix("msta", j);
    MstaLayer l;
    l.layer = j;
    l.dropout = config_.dropout;
    l.activation = config_.activation;
    l.vision_down_w = find(pre + ".vision_down.weight");
    l.vision_down_b = find(pre + ".vision_down.bias");
    l.text_down_w = find(pre + ".text_down.weight");
    l.text_down_b = find(pre + ".text_down.bias");
    if (config_.variant == MstaVariant::kNoSharedLayer) {
      l.vision_shared_w = find(pre + ".vision_shared.weight");
      l.vision_shared_b = find(pre + ".vision_shared.bias");
      l.text_shared_w = find(pre + ".text_shared.weight");
      l.text_shared_b = find(pre + ".text_shared.bias");
    } else {
      l.vision_shared_w = l.text_shared_w = find(pre + ".shared.weight");
      l.vision_shared_b = l.text_shared_b = find(pre + ".shared.bias");
    }
    l.spatial_up_w = find(pre + ".spatial_up.weight");
    l.spatial_up_b = find(pre + ".spatial_up.bias");
    l.temporal_up_w = find(pre + ".temporal_up.weight");
    l.temporal_up_b = find(pre + ".temporal_up.bias");
    l.text_up_w = find(pre + ".text_up.weight");
    l.text_up_b = find(pre + ".text_up.bias");
    layers_.emplace(j, std::move(l));
  }
}

const MstaLayer* MstaAdapters::layer(std::int64_t index) const {
  auto it = layers_.find(index);
  return it == layers_.end() ? nullptr : &it->second;
}

MstaLayer* MstaAdapters::mutable_layer(std::int64_t index) {
  auto it = layers_.find(index);
  return it == layers_.end() ? nullptr : &it->second;
}

Var MstaAdapters::parallel(Tower tower, std::int64_t index, const Var& input,
                           const AdapterContext& ctx) const {
  const MstaLayer* l = layer(index);
  if (!l) return {};
  if (tower == Tower::kVision) {
    return l->has_vision() ? msta_vision_forward(*l, input, ctx.grid, ctx) : Var();
  }
  return l->has_text() ? msta_text_forward(*l, input, ctx) : Var();
}

LoraAdapters::LoraAdapters(const ModelConfig& model, AdapterConfig config)
    : AdapterSet(std::move(config)) {
  params_ = materialize(adapter_layout(model, config_), config_.seed);
  for (std::size_t i = 0; i + 1 < params_.size(); i += 2) {
    const std::string& name = params_[i]->name();
    factors_[name.substr(0, name.size() - std::string(".down").size())] = {params_[i], params_[i + 1]};
  }
}

Var LoraAdapters::delta(const std::string& key, const Var& h) const {
  auto it = factors_.find(key);
  if (it == factors_.end()) return {};
  return msta::scale(linear(linear(h, it->second.first->var()), it->second.second->var()),
                     config_.baseline_scale);
}

Var LoraAdapters::query_delta(Tower tower, std::int64_t layer, const Var& h, const AdapterContext&) const {
  return delta(layer_prefix("lora", layer) + (tower == Tower::kVision ? ".vision.q" : ".text.q"), h);
}

Var LoraAdapters::value_delta(Tower tower, std::int64_t layer, const Var& h, const AdapterContext&) const {
  return delta(layer_prefix("lora", layer) + (tower == Tower::kVision ? ".vision.v" : ".text.v"), h);
}

AdaptFormerAdapters::AdaptFormerAdapters(const ModelConfig& model, AdapterConfig config)
    : AdapterSet(std::move(config)) {
  params_ = materialize(adapter_layout(model, config_), config_.seed);
  for (std::size_t i = 0; i + 3 < params_.size(); i += 4) {
    const std::string& name = params_[i]->name();
    const std::int64_t layer = std::stoll(name.substr(std::string("adaptformer.").size()));
    branches_[layer] = Branch{params_[i], params_[i + 1], params_[i + 2], params_[i + 3]};
  }
}

Var AdaptFormerAdapters::mlp_delta(Tower tower, std::int64_t layer, const Var& x,
                                   const AdapterContext& ctx) const {
  if (tower != Tower::kVision) return {};
  auto it = branches_.find(layer);
  if (it == branches_.end()) return {};
  const Branch& b = it->second;
  Var h = relu(linear(x, b.down_w->var(), b.down_b->var()));
  if (ctx.training && config_.dropout > 0 && ctx.rng) h = dropout(h, config_.dropout, *ctx.rng);
  return msta::scale(linear(h, b.up_w->var(), b.up_b->var()), config_.baseline_scale);
}

std::shared_ptr<AdapterSet> inject(DualEncoder& model, const AdapterConfig& config) {
  config.validate(model.config().layers);
  std::shared_ptr<AdapterSet> set;
  switch (config.kind) {
    case AdapterKind::kMsta: set = std::make_shared<MstaAdapters>(model.config(), config); break;
    case AdapterKind::kLora: set = std::make_shared<LoraAdapters>(model.config(), config); break;
    case AdapterKind::kAdaptFormer: set = std::make_shared<AdaptFormerAdapters>(model.config(), config); break;
  }
  model.freeze_backbone();
  for (const auto& p : set->parameters()) p->set_trainable(true);
  model.attach_adapters(set);
  return set;
}

}  // namespace msta
