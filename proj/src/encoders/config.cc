#include "msta/encoders/config.h"

#include "msta/error.h"

namespace msta {

ModelConfig ModelConfig::preset_named(const std::string& name) {
  ModelConfig c;
  c.preset = name;
  if (name == "tiny") return c;
  if (name == "tiny12") {
    c.layers = 12;
    c.vision_width = 32;
    c.text_width = 32;
    c.vision_heads = 2;
    c.text_heads = 2;
    return c;
  }
  if (name == "vitb16-shape") {
    c.layers = 12;
    c.vision_width = 768;
    c.text_width = 512;
    c.joint_width = 512;
    c.frames = 8;
    c.height = 224;
    c.width = 224;
    c.patch = 16;
    c.vision_heads = 12;
    c.text_heads = 8;
    c.vocab = 49408;
    c.max_tokens = 77;
    return c;
  }
  raise(ErrorKind::kConfig, "unknown model preset '" + name + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { raise(ErrorKind::kConfig, m); };
  if (layers < 1) fail("layers must be >= 1");
  if (vision_width < 1 || text_width < 1 || joint_width < 1) fail("widths must be positive");
  if (frames < 1 || height < 1 || width < 1 || patch < 1) fail("video dimensions must be positive");
  if (height % patch != 0 || width % patch != 0) {
    fail("frame size " + std::to_string(height) + "x" + std::to_string(width) +
         " not divisible by patch " + std::to_string(patch));
  }
  if (vision_heads < 1 || vision_width % vision_heads != 0) {
    fail("vision width " + std::to_string(vision_width) + " not divisible by " +
         std::to_string(vision_heads) + " heads");
  }
  if (text_heads < 1 || text_width % text_heads != 0) {
    fail("text width " + std::to_string(text_width) + " not divisible by " +
         std::to_string(text_heads) + " heads");
  }
  if (max_tokens < 1) fail("max_tokens must be >= 1");
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
  if (!(temporal_position_std >= 0.0)) fail("temporal_position_std must be non-negative");
}

}  // namespace msta
