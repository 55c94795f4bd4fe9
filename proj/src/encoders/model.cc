#include "msta/encoders/model.h"

#include <numeric>

#include "msta/error.h"

namespace msta {
namespace {

constexpr double kEmbeddingStd = 1.0;
constexpr double kPositionStd = 0.5;

void add_block_layout(ParameterLayout& layout, const std::string& prefix, std::int64_t width,
                      std::int64_t mlp_ratio) {
  auto add = [&](const std::string& name, Shape shape, InitKind init) {
    layout.push_back({prefix + name, std::move(shape), init, 0.0, true});
  };
  add(".ln1.gamma", {width}, InitKind::kOnes);
  add(".ln1.beta", {width}, InitKind::kZeros);
  for (const char* proj : {".attn.q", ".attn.k", ".attn.v", ".attn.out"}) {
    add(std::string(proj) + ".weight", {width, width}, InitKind::kKaiming);
    add(std::string(proj) + ".bias", {width}, InitKind::kZeros);
  }
  add(".ln2.gamma", {width}, InitKind::kOnes);
  add(".ln2.beta", {width}, InitKind::kZeros);
  add(".mlp.fc1.weight", {width, width * mlp_ratio}, InitKind::kKaiming);
  add(".mlp.fc1.bias", {width * mlp_ratio}, InitKind::kZeros);
  add(".mlp.fc2.weight", {width * mlp_ratio, width}, InitKind::kKaiming);
  add(".mlp.fc2.bias", {width}, InitKind::kZeros);
}

std::string block_prefix(Tower tower, std::int64_t index) {
  return std::string(tower == Tower::kVision ? "vision" : "text") + ".blocks." +
         std::to_string(index);
}

}  // namespace

ParameterLayout DualEncoder::backbone_layout(const ModelConfig& c) {
  ParameterLayout layout;
  layout.push_back({"vision.patch_embed.weight", {c.patch_dim(), c.vision_width}, InitKind::kKaiming});
  layout.push_back({"vision.class_token", {c.vision_width}, InitKind::kNormal, kEmbeddingStd});
  layout.push_back({"vision.pos_spatial", {c.patches_per_frame(), c.vision_width}, InitKind::kNormal,
                    kPositionStd});
  layout.push_back({"vision.pos_temporal", {c.frames, c.vision_width}, InitKind::kNormal, c.temporal_position_std});
  for (std::int64_t i = 0; i < c.layers; ++i) {
    add_block_layout(layout, block_prefix(Tower::kVision, i), c.vision_width, c.mlp_ratio);
  }
  layout.push_back({"vision.proj", {c.vision_width, c.joint_width}, InitKind::kKaiming});
  layout.push_back({"text.token_embedding", {c.vocab, c.text_width}, InitKind::kNormal, kEmbeddingStd});
  layout.push_back({"text.pos", {c.max_tokens, c.text_width}, InitKind::kNormal, kPositionStd});
  for (std::int64_t i = 0; i < c.layers; ++i) {
    add_block_layout(layout, block_prefix(Tower::kText, i), c.text_width, c.mlp_ratio);
  }
  layout.push_back({"text.proj", {c.text_width, c.joint_width}, InitKind::kKaiming});
  return layout;
}

DualEncoder::DualEncoder(ModelConfig config)
    : config_(std::move(config)), tokenizer_(config_.vocab) {
  config_.validate();
  backbone_ = materialize(backbone_layout(config_), config_.seed);
  for (const auto& p : backbone_) by_name_[p->name()] = p;
  for (std::int64_t i = 0; i < config_.layers; ++i) {
    vision_blocks_.push_back(block_weights(block_prefix(Tower::kVision, i)));
    text_blocks_.push_back(block_weights(block_prefix(Tower::kText, i)));
  }
}

const Var& DualEncoder::p(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) raise(ErrorKind::kState, "no backbone parameter named " + name);
  return it->second->var();
}

const Parameter& DualEncoder::parameter(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it != by_name_.end()) return *it->second;
  if (adapters_) {
    for (const auto& a : adapters_->parameters()) {
      if (a->name() == name) return *a;
    }
  }
  raise(ErrorKind::kState, "no parameter named " + name);
}

DualEncoder::BlockWeights DualEncoder::block_weights(const std::string& prefix) const {
  return BlockWeights{
      p(prefix + ".ln1.gamma"),        p(prefix + ".ln1.beta"),
      p(prefix + ".attn.q.weight"),    p(prefix + ".attn.q.bias"),
      p(prefix + ".attn.k.weight"),    p(prefix + ".attn.k.bias"),
      p(prefix + ".attn.v.weight"),    p(prefix + ".attn.v.bias"),
      p(prefix + ".attn.out.weight"),  p(prefix + ".attn.out.bias"),
      p(prefix + ".ln2.gamma"),        p(prefix + ".ln2.beta"),
      p(prefix + ".mlp.fc1.weight"),   p(prefix + ".mlp.fc1.bias"),
      p(prefix + ".mlp.fc2.weight"),   p(prefix + ".mlp.fc2.bias"),
  };
}

VisionState DualEncoder::patch_embed(const Tensor& video) const {
  const auto& c = config_;
  const Shape expected{c.frames, c.height, c.width, 3};
  if (video.shape() != expected) {
    raise(ErrorKind::kConfig, "video shape " + shape_string(video.shape()) +
                                  " does not match model input " + shape_string(expected));
  }
  const GridShape grid{c.frames, c.grid_height(), c.grid_width()};
  const std::int64_t n = c.frames * grid.cells();
  const std::int64_t pd = c.patch_dim();
  Tensor patches(Shape{n, pd}, default_dtype());
  std::int64_t row_index = 0;
  for (std::int64_t t = 0; t < c.frames; ++t) {
    for (std::int64_t gy = 0; gy < grid.rows; ++gy) {
      for (std::int64_t gx = 0; gx < grid.cols; ++gx, ++row_index) {
        std::int64_t k = 0;
        for (std::int64_t py = 0; py < c.patch; ++py) {
          for (std::int64_t px = 0; px < c.patch; ++px) {
            const std::int64_t y = gy * c.patch + py;
            const std::int64_t x = gx * c.patch + px;
            for (std::int64_t ch = 0; ch < 3; ++ch, ++k) {
              patches.set(row_index * pd + k, video.at(((t * c.height + y) * c.width + x) * 3 + ch));
            }
          }
        }
      }
    }
  }
  std::vector<std::int64_t> spatial_ids(static_cast<std::size_t>(n));
  std::vector<std::int64_t> temporal_ids(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    spatial_ids[static_cast<std::size_t>(i)] = i % grid.cells();
    temporal_ids[static_cast<std::size_t>(i)] = i / grid.cells();
  }
  Var x = linear(Var(std::move(patches)), p("vision.patch_embed.weight"));
  x = add(x, embedding(p("vision.pos_spatial"), spatial_ids));
  x = add(x, embedding(p("vision.pos_temporal"), temporal_ids));
  Var cls = reshape(p("vision.class_token"), {1, c.vision_width});
  return VisionState{concat_rows({cls, x}), grid, 0};
}

TextState DualEncoder::text_embed(std::span<const std::int64_t> ids) const {
  const auto& c = config_;
  if (static_cast<std::int64_t>(ids.size()) + 1 > c.max_tokens) {
    raise(ErrorKind::kDimension, "text of " + std::to_string(ids.size()) +
                                     " tokens plus end-of-text exceeds max_tokens " +
                                     std::to_string(c.max_tokens));
  }
  // Rows past end-of-text are never attended to (causal mask) and never read,
  // so the sequence stops there instead of carrying padding.
  std::vector<std::int64_t> seq(ids.begin(), ids.end());
  seq.push_back(Tokenizer::kEot);
  const auto eot = static_cast<std::int64_t>(ids.size());
  Var x = add(embedding(p("text.token_embedding"), seq), slice_rows(p("text.pos"), 0, eot + 1));
  return TextState{x, eot, 0};
}

Var DualEncoder::run_block(Tower tower, std::int64_t layer, const Var& x, const AttentionMask& mask,
                           const GridShape& grid, const ForwardOptions& options) const {
  const auto& w = (tower == Tower::kVision ? vision_blocks_ : text_blocks_)[layer - 1];
  const std::int64_t heads = tower == Tower::kVision ? config_.vision_heads : config_.text_heads;
  const AdapterHooks* hooks = options.use_adapters ? adapters_.get() : nullptr;
  AdapterContext ctx{options.training, options.rng, grid};

  Var h = layer_norm(x, w.ln1_gamma, w.ln1_beta);
  Var q = linear(h, w.q_w, w.q_b);
  Var k = linear(h, w.k_w, w.k_b);
  Var v = linear(h, w.v_w, w.v_b);
  if (hooks) {
    if (Var dq = hooks->query_delta(tower, layer, h, ctx); dq.defined()) q = add(q, dq);
    if (Var dv = hooks->value_delta(tower, layer, h, ctx); dv.defined()) v = add(v, dv);
  }
  Var mid = add(x, linear(attention(q, k, v, heads, mask), w.o_w, w.o_b));
  Var m = linear(gelu(linear(layer_norm(mid, w.ln2_gamma, w.ln2_beta), w.fc1_w, w.fc1_b)),
                 w.fc2_w, w.fc2_b);
  if (hooks) {
    if (Var dm = hooks->mlp_delta(tower, layer, mid, ctx); dm.defined()) m = add(m, dm);
  }
  Var out = add(mid, m);
  if (hooks) {
    if (Var a = hooks->parallel(tower, layer, x, ctx); a.defined()) {
      out = add(out, options.scale_override.defined() ? scale_by(a, options.scale_override)
                                                      : scale(a, hooks->scale()));
    }
  }
  if (options.observer) options.observer(tower, layer, out);
  return out;
}

VisionState DualEncoder::vision_block(const VisionState& state, const ForwardOptions& options) const {
  if (state.layer >= config_.layers) raise(ErrorKind::kState, "vision state already at final layer");
  const std::int64_t layer = state.layer + 1;
  Var out = run_block(Tower::kVision, layer, state.tokens, AttentionMask{}, state.grid, options);
  return VisionState{out, state.grid, layer};
}

TextState DualEncoder::text_block(const TextState& state, const ForwardOptions& options) const {
  if (state.layer >= config_.layers) raise(ErrorKind::kState, "text state already at final layer");
  const std::int64_t layer = state.layer + 1;
  AttentionMask mask{true, state.eot_index + 1};
  Var out = run_block(Tower::kText, layer, state.tokens, mask, GridShape{}, options);
  return TextState{out, state.eot_index, layer};
}

Var DualEncoder::project_vision(const VisionState& state) const {
  if (state.layer != config_.layers) {
    raise(ErrorKind::kState, "project_vision called at layer " + std::to_string(state.layer) +
                                 " of " + std::to_string(config_.layers));
  }
  return linear(row(state.tokens, 0), p("vision.proj"));
}

Var DualEncoder::project_text(const TextState& state) const {
  if (state.layer != config_.layers) {
    raise(ErrorKind::kState, "project_text called at layer " + std::to_string(state.layer) +
                                 " of " + std::to_string(config_.layers));
  }
  return linear(row(state.tokens, state.eot_index), p("text.proj"));
}

Var DualEncoder::encode_video(const Tensor& video, const ForwardOptions& options) const {
  VisionState s = patch_embed(video);
  while (s.layer < config_.layers) s = vision_block(s, options);
  return project_vision(s);
}

Var DualEncoder::encode_text(std::span<const std::int64_t> ids, const ForwardOptions& options) const {
  TextState s = text_embed(ids);
  while (s.layer < config_.layers) s = text_block(s, options);
  return project_text(s);
}

std::vector<std::int64_t> DualEncoder::tokenize(const std::string& text) const {
  return tokenizer_.encode(text, config_.max_tokens);
}

Var DualEncoder::encode_text(const std::string& text, const ForwardOptions& options) const {
  return encode_text(tokenize(text), options);
}

void DualEncoder::freeze_backbone() {
  for (auto& p : backbone_) p->set_trainable(false);
}

void DualEncoder::attach_adapters(std::shared_ptr<AdapterHooks> adapters) {
  adapters_ = std::move(adapters);
}

ParameterList DualEncoder::parameters() const {
  ParameterList all = backbone_;
  if (adapters_) {
    auto extra = adapters_->parameters();
    all.insert(all.end(), extra.begin(), extra.end());
  }
  return all;
}

ParameterList DualEncoder::trainable_parameters() const {
  ParameterList out;
  for (const auto& p : parameters()) {
    if (p->trainable()) out.push_back(p);
  }
  return out;
}

}  // namespace msta
