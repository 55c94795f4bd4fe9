#include "msta/training/checkpoint.h"

#include <sstream>

#include "msta/error.h"
#include "msta/util/binary_io.h"

namespace msta {
namespace {

constexpr char kMagic[4] = {'M', 'S', 'T', 'A'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kTagF32 = 1;
constexpr std::uint8_t kTagF64 = 2;

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

Checkpoint capture_checkpoint(const DualEncoder& model, std::string config_json, std::int64_t step,
                              const std::mt19937_64& rng) {
  Checkpoint c;
  c.config_json = std::move(config_json);
  c.step = step;
  std::ostringstream state;
  state << rng;
  c.rng_state = state.str();
  for (const auto& p : model.parameters()) c.tensors.push_back({p->name(), p->value(), p->trainable()});
  return c;
}

void restore_checkpoint(const Checkpoint& checkpoint, DualEncoder& model) {
  for (const auto& p : model.parameters()) {
    const NamedTensor* t = checkpoint.find(p->name());
    if (t == nullptr) raise(ErrorKind::kFormat, "checkpoint lacks tensor " + p->name());
    if (t->value.shape() != p->shape()) {
      raise(ErrorKind::kDimension, "tensor " + p->name() + ": checkpoint shape " + shape_string(t->value.shape()) +
                                       " but model expects " + shape_string(p->shape()));
    }
    const_cast<Parameter&>(*p).mutable_value() = t->value.cast(p->value().dtype());
  }
}

std::mt19937_64 restore_rng(const Checkpoint& checkpoint) {
  std::mt19937_64 rng;
  std::istringstream in(checkpoint.rng_state);
  in >> rng;
  if (!in) raise(ErrorKind::kFormat, "checkpoint RNG state is malformed");
  return rng;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.str(c.config_json);
  w.u64(static_cast<std::uint64_t>(c.step));
  w.str(c.rng_state);
  w.u64(c.tensors.size());
  for (const auto& t : c.tensors) {
    w.str(t.name);
    w.u8(t.trainable ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.shape()) w.u64(static_cast<std::uint64_t>(d));
    if (t.value.dtype() == DType::kF32) {
      w.u8(kTagF32);
      for (float v : t.value.data<float>()) w.f32(v);
    } else {
      w.u8(kTagF64);
      for (double v : t.value.data<double>()) w.f64(v);
    }
  }
  return w.buffer();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  ByteReader r(bytes);
  if (r.raw(4) != std::string_view(kMagic, 4)) raise(ErrorKind::kFormat, "not a checkpoint (bad magic)");
  if (const auto v = r.u32(); v != kVersion) raise(ErrorKind::kFormat, "unsupported checkpoint version " + std::to_string(v));
  Checkpoint c;
  c.config_json = r.str();
  c.step = static_cast<std::int64_t>(r.u64());
  c.rng_state = r.str();
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str();
    t.trainable = r.u8() != 0;
    const std::uint32_t rank = r.u32();
    if (rank > 8) raise(ErrorKind::kFormat, "tensor " + t.name + ": implausible rank");
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<std::int64_t>(r.u64()));
    const std::uint8_t tag = r.u8();
    const std::int64_t n = shape_numel(shape);
    const std::size_t width = tag == kTagF32 ? 4 : tag == kTagF64 ? 8 : 0;
    if (width == 0) raise(ErrorKind::kFormat, "tensor " + t.name + ": unknown dtype tag");
    if (static_cast<std::uint64_t>(n) * width > r.remaining()) raise(ErrorKind::kFormat, "truncated tensor " + t.name);
    t.value = Tensor(shape, tag == kTagF32 ? DType::kF32 : DType::kF64);
    if (tag == kTagF32) {
      for (auto& v : t.value.data<float>()) v = r.f32();
    } else {
      for (auto& v : t.value.data<double>()) v = r.f64();
    }
    c.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) raise(ErrorKind::kFormat, "trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path.string(), serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path.string())); }

}  // namespace msta
