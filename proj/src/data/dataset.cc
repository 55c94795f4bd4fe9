#include "msta/data/dataset.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <set>

#include <json.hpp>

#include "msta/encoders/layout.h"
#include "msta/error.h"
#include "msta/util/binary_io.h"

namespace msta {
namespace {

constexpr char kMagic[4] = {'M', 'S', 'T', 'D'};
constexpr std::uint32_t kVersion = 1;

struct Style {
  double colour[3];
  double background[3];
  int texture = 0;  // 0 plain, 1 striped, 2 dotted
  double radius = 0.2;
  double x0 = 0.5, y0 = 0.2, x1 = 0.5, y1 = 0.8;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Hue wheel spaced by unit index so different units look different.
Style make_style(std::mt19937_64& rng, std::int64_t unit, std::int64_t units, bool vertical) {
  Style s;
  const double hue = (static_cast<double>(unit) + uniform(rng, -0.15, 0.15)) / static_cast<double>(std::max<std::int64_t>(units, 1));
  for (int ch = 0; ch < 3; ++ch) {
    const double phase = hue + static_cast<double>(ch) / 3.0;
    s.colour[ch] = 0.55 + 0.45 * std::cos(2.0 * M_PI * phase);
    s.background[ch] = uniform(rng, 0.05, 0.3);
  }
  s.texture = static_cast<int>(unit % 3);
  s.radius = uniform(rng, 0.16, 0.24);
  if (vertical) {
    s.x0 = s.x1 = uniform(rng, 0.35, 0.65);
    s.y0 = 0.2;
    s.y1 = 0.8;
  } else {
    s.x0 = uniform(rng, 0.25, 0.75);
    s.y0 = uniform(rng, 0.25, 0.75);
    s.x1 = uniform(rng, 0.25, 0.75);
    s.y1 = uniform(rng, 0.25, 0.75);
  }
  return s;
}

Tensor render(const Style& style, std::mt19937_64& rng, std::int64_t frames, std::int64_t size, double noise) {
  const double dx0 = uniform(rng, -0.06, 0.06), dy0 = uniform(rng, -0.05, 0.05);
  const double dx1 = uniform(rng, -0.06, 0.06), dy1 = uniform(rng, -0.05, 0.05);
  const double radius = style.radius * uniform(rng, 0.9, 1.1);
  const double gain = uniform(rng, 0.9, 1.1);
  std::normal_distribution<double> gauss(0.0, noise);

  Tensor video({frames, size, size, 3}, DType::kF32);
  auto out = video.data<float>();
  std::size_t k = 0;
  for (std::int64_t t = 0; t < frames; ++t) {
    const double a = frames > 1 ? static_cast<double>(t) / static_cast<double>(frames - 1) : 0.0;
    const double cx = (style.x0 + dx0) + a * ((style.x1 + dx1) - (style.x0 + dx0));
    const double cy = (style.y0 + dy0) + a * ((style.y1 + dy1) - (style.y0 + dy0));
    for (std::int64_t i = 0; i < size; ++i) {
      const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(size);
      for (std::int64_t j = 0; j < size; ++j) {
        const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(size);
        const double d = std::hypot(x - cx, y - cy);
        const double mask = 1.0 / (1.0 + std::exp((d - radius) / 0.03));
        double tex = 1.0;
        if (style.texture == 1) {
          tex = std::fmod(std::floor((x - cx + 1.0) * static_cast<double>(size) / 2.0), 2.0) == 0.0 ? 1.0 : 0.45;
        } else if (style.texture == 2) {
          tex = 0.7 + 0.3 * std::cos(6.0 * M_PI * (x - cx)) * std::cos(6.0 * M_PI * (y - cy));
        }
        for (int ch = 0; ch < 3; ++ch) {
          const double v = style.background[ch] * (1.0 - mask) + gain * style.colour[ch] * tex * mask + gauss(rng);
          out[k++] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return video;
}

Tensor reverse_frames(const Tensor& video) {
  const std::int64_t frames = video.dim(0);
  const std::int64_t per_frame = video.numel() / frames;
  Tensor out(video.shape(), DType::kF32);
  auto src = video.data<float>();
  auto dst = out.data<float>();
  for (std::int64_t t = 0; t < frames; ++t) {
    std::copy_n(src.begin() + (frames - 1 - t) * per_frame, per_frame, dst.begin() + t * per_frame);
  }
  return out;
}

std::string class_name(std::int64_t index, const std::string& tag) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "class_%02lld_%s", static_cast<long long>(index), tag.c_str());
  return buf;
}

// Frame-averaged pixels with a per-pixel sort, so the average does not
// depend on frame order even in floating point.
std::vector<double> frame_average(const Tensor& video) {
  const std::int64_t frames = video.dim(0);
  const std::int64_t per_frame = video.numel() / frames;
  std::vector<double> out(static_cast<std::size_t>(per_frame));
  std::vector<double> column(static_cast<std::size_t>(frames));
  for (std::int64_t p = 0; p < per_frame; ++p) {
    for (std::int64_t t = 0; t < frames; ++t) column[t] = video.at(t * per_frame + p);
    std::sort(column.begin(), column.end());
    double acc = 0.0;
    for (double v : column) acc += v;
    out[p] = acc / static_cast<double>(frames);
  }
  return out;
}

}  // namespace

bool DatasetManifest::is_pair_class(std::int64_t c) const {
  return std::any_of(temporal_pairs.begin(), temporal_pairs.end(),
                     [&](const auto& p) { return p.first == c || p.second == c; });
}

std::int64_t DatasetManifest::class_index(const std::string& name) const {
  auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) raise(ErrorKind::kConfig, "unknown class " + name);
  return it - classes.begin();
}

void DataGenConfig::validate() const {
  if (classes < 2) raise(ErrorKind::kConfig, "need at least 2 classes");
  if (per_class < 2) raise(ErrorKind::kConfig, "need at least 2 samples per class");
  if (frames < 1 || size < 2) raise(ErrorKind::kConfig, "invalid video dimensions");
  if (temporal_pair_fraction < 0.0 || temporal_pair_fraction > 1.0) {
    raise(ErrorKind::kConfig, "temporal pair fraction must lie in [0, 1]");
  }
  if (temporal_pair_fraction > 0.0 && classes % 2 != 0) {
    raise(ErrorKind::kConfig, "class count must be even when temporal pairs are requested");
  }
  if (!(noise >= 0.0)) raise(ErrorKind::kConfig, "noise must be non-negative");
  if (test_fraction <= 0.0 || val_fraction < 0.0 || test_fraction + val_fraction >= 1.0) {
    raise(ErrorKind::kConfig, "split fractions must leave room for training samples");
  }
  if (base_fraction <= 0.0 || base_fraction >= 1.0) raise(ErrorKind::kConfig, "base fraction must lie in (0, 1)");
  if (class_offset < 0) raise(ErrorKind::kConfig, "class offset must be non-negative");
}

Dataset::Dataset(DatasetManifest manifest, std::vector<VideoSample> samples)
    : manifest_(std::move(manifest)), samples_(std::move(samples)) {
  std::uint64_t max_id = 0;
  for (const auto& s : samples_) max_id = std::max(max_id, s.id);
  index_.assign(samples_.empty() ? 0 : max_id + 1, std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (index_[samples_[i].id] != std::numeric_limits<std::size_t>::max()) {
      raise(ErrorKind::kFormat, "duplicate sample id " + std::to_string(samples_[i].id));
    }
    index_[samples_[i].id] = i;
  }
}

const VideoSample& Dataset::sample(std::uint64_t id) const {
  if (id >= index_.size() || index_[id] == std::numeric_limits<std::size_t>::max()) {
    raise(ErrorKind::kIndex, "no sample with id " + std::to_string(id));
  }
  return samples_[index_[id]];
}

std::vector<const VideoSample*> Dataset::select(const std::vector<std::uint64_t>& ids) const {
  std::vector<const VideoSample*> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(&sample(id));
  return out;
}

Dataset generate_dataset(const DataGenConfig& config) {
  config.validate();
  const std::int64_t pairs = static_cast<std::int64_t>(std::floor(config.temporal_pair_fraction * config.classes / 2.0));
  const std::int64_t singles = config.classes - 2 * pairs;
  const std::int64_t units = pairs + singles;

  DatasetManifest m;
  m.name = config.name;
  m.seed = config.seed;
  m.frames = config.frames;
  m.height = m.width = config.size;
  m.per_class = config.per_class;
  for (std::int64_t p = 0; p < pairs; ++p) {
    m.classes.push_back(class_name(config.class_offset + 2 * p, "fwd"));
    m.classes.push_back(class_name(config.class_offset + 2 * p + 1, "rev"));
    m.temporal_pairs.emplace_back(2 * p, 2 * p + 1);
  }
  for (std::int64_t s = 0; s < singles; ++s) m.classes.push_back(class_name(config.class_offset + 2 * pairs + s, "obj"));

  const std::int64_t n_test = std::max<std::int64_t>(1, std::llround(config.test_fraction * config.per_class));
  const std::int64_t n_val = std::llround(config.val_fraction * config.per_class);
  const std::int64_t n_train = config.per_class - n_test - n_val;
  if (n_train < 1) raise(ErrorKind::kConfig, "no training samples left after the test/val split");

  std::vector<VideoSample> samples;
  samples.reserve(static_cast<std::size_t>(config.classes * config.per_class));
  auto add = [&](std::int64_t label, std::int64_t j, Tensor video) {
    const auto id = static_cast<std::uint64_t>(label * config.per_class + j);
    (j < n_train ? m.train_ids : j < n_train + n_val ? m.val_ids : m.test_ids).push_back(id);
    samples.push_back({id, label, std::move(video)});
  };
  // The offset shifts appearance too, so offset datasets share no patterns.
  const std::int64_t hue_shift = config.class_offset;
  for (std::int64_t u = 0; u < units; ++u) {
    const bool pair = u < pairs;
    std::mt19937_64 style_rng(seed_for(config.seed, "style:" + std::to_string(u + hue_shift)));
    const Style style = make_style(style_rng, u, units, pair);
    const std::int64_t label = pair ? 2 * u : 2 * pairs + (u - pairs);
    std::vector<Tensor> videos;
    for (std::int64_t j = 0; j < config.per_class; ++j) {
      std::mt19937_64 rng(seed_for(config.seed, "sample:" + std::to_string(label) + ":" + std::to_string(j)));
      videos.push_back(render(style, rng, config.frames, config.size, config.noise));
    }
    for (std::int64_t j = 0; j < config.per_class; ++j) add(label, j, videos[j]);
    if (pair) {
      for (std::int64_t j = 0; j < config.per_class; ++j) add(label + 1, j, reverse_frames(videos[j]));
    }
  }
  std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (auto* ids : {&m.train_ids, &m.val_ids, &m.test_ids}) std::sort(ids->begin(), ids->end());

  auto [base, novel] = base_novel_split(m, config.base_fraction, config.seed);
  m.base_classes = std::move(base);
  m.novel_classes = std::move(novel);

  Dataset ds(std::move(m), std::move(samples));
  if (pairs > 0) {
    const double oracle = frame_average_oracle(ds);
    ds.mutable_manifest().oracle_pair_accuracy = oracle;
    if (oracle > 0.55) {
      raise(ErrorKind::kDegenerate, "frame-averaged oracle separates temporal pairs (" + std::to_string(oracle) + ")");
    }
  } else {
    ds.mutable_manifest().oracle_pair_accuracy = std::numeric_limits<double>::quiet_NaN();
  }
  return ds;
}

double frame_average_oracle(const Dataset& dataset) {
  const auto& m = dataset.manifest();
  if (m.temporal_pairs.empty()) raise(ErrorKind::kConfig, "dataset has no temporal pairs");
  std::map<std::int64_t, std::vector<double>> centroid;
  std::map<std::int64_t, std::int64_t> count;
  for (const auto* s : dataset.select(m.train_ids)) {
    if (!m.is_pair_class(s->label)) continue;
    auto f = frame_average(s->video);
    auto& c = centroid[s->label];
    if (c.empty()) c.assign(f.size(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) c[i] += f[i];
    ++count[s->label];
  }
  for (auto& [label, c] : centroid) {
    for (double& v : c) v /= static_cast<double>(count[label]);
  }
  auto distance = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return d;
  };
  double credit = 0.0;
  std::int64_t total = 0;
  for (const auto* s : dataset.select(m.test_ids)) {
    for (const auto& [fwd, rev] : m.temporal_pairs) {
      if (s->label != fwd && s->label != rev) continue;
      auto f = frame_average(s->video);
      const double df = distance(f, centroid.at(fwd)), dr = distance(f, centroid.at(rev));
      const std::int64_t other = s->label == fwd ? rev : fwd;
      const double d_own = s->label == fwd ? df : dr, d_other = other == fwd ? df : dr;
      credit += d_own < d_other ? 1.0 : (d_own == d_other ? 0.5 : 0.0);
      ++total;
    }
  }
  return total == 0 ? 0.5 : credit / static_cast<double>(total);
}

void write_samples(const std::filesystem::path& path, const std::vector<VideoSample>& samples,
                   std::int64_t class_count) {
  ByteWriter w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(samples.size()));
  w.u32(static_cast<std::uint32_t>(class_count));
  const Shape shape = samples.empty() ? Shape{0, 0, 0, 3} : samples.front().video.shape();
  for (int i = 0; i < 3; ++i) w.u32(static_cast<std::uint32_t>(shape[i]));
  for (const auto& s : samples) {
    if (s.video.shape() != shape) raise(ErrorKind::kDimension, "samples must share one video shape");
    w.u64(s.id);
    w.u32(static_cast<std::uint32_t>(s.label));
    const Tensor f = s.video.dtype() == DType::kF32 ? s.video : s.video.cast(DType::kF32);
    for (float v : f.data<float>()) w.f32(v);
  }
  write_file(path.string(), w.buffer());
}

std::vector<VideoSample> read_samples(const std::filesystem::path& path) {
  const std::string bytes = read_file(path.string());
  ByteReader r(bytes);
  if (r.raw(4) != std::string_view(kMagic, 4)) raise(ErrorKind::kFormat, path.string() + ": bad magic");
  if (const auto v = r.u32(); v != kVersion) {
    raise(ErrorKind::kFormat, path.string() + ": unsupported version " + std::to_string(v));
  }
  const std::uint32_t count = r.u32();
  const std::uint32_t classes = r.u32();
  const std::int64_t t = r.u32(), h = r.u32(), w = r.u32();
  const std::int64_t n = t * h * w * 3;
  std::vector<VideoSample> samples;
  samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    VideoSample s;
    s.id = r.u64();
    s.label = r.u32();
    if (s.label >= classes) raise(ErrorKind::kFormat, path.string() + ": label out of range");
    s.video = Tensor({t, h, w, 3}, DType::kF32);
    auto out = s.video.data<float>();
    for (std::int64_t k = 0; k < n; ++k) out[k] = r.f32();
    samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) raise(ErrorKind::kFormat, path.string() + ": trailing bytes");
  return samples;
}

std::string manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "msta-manifest";
  j["version"] = 1;
  j["name"] = m.name;
  j["seed"] = m.seed;
  j["frames"] = m.frames;
  j["height"] = m.height;
  j["width"] = m.width;
  j["per_class"] = m.per_class;
  j["data_file"] = m.data_file;
  j["classes"] = m.classes;
  j["temporal_pairs"] = nlohmann::json::array();
  for (const auto& [a, b] : m.temporal_pairs) j["temporal_pairs"].push_back({a, b});
  j["base_classes"] = m.base_classes;
  j["novel_classes"] = m.novel_classes;
  j["splits"] = {{"train", m.train_ids}, {"val", m.val_ids}, {"test", m.test_ids}};
  if (std::isnan(m.oracle_pair_accuracy)) {
    j["oracle_pair_accuracy"] = nullptr;
  } else {
    j["oracle_pair_accuracy"] = m.oracle_pair_accuracy;
  }
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  DatasetManifest m;
  try {
    auto j = nlohmann::json::parse(text);
    if (j.at("format") != "msta-manifest" || j.at("version") != 1) raise(ErrorKind::kFormat, "not a version 1 manifest");
    m.name = j.at("name");
    m.seed = j.at("seed");
    m.frames = j.at("frames");
    m.height = j.at("height");
    m.width = j.at("width");
    m.per_class = j.at("per_class");
    m.data_file = j.at("data_file");
    m.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& p : j.at("temporal_pairs")) m.temporal_pairs.emplace_back(p.at(0), p.at(1));
    m.base_classes = j.at("base_classes").get<std::vector<std::int64_t>>();
    m.novel_classes = j.at("novel_classes").get<std::vector<std::int64_t>>();
    m.train_ids = j.at("splits").at("train").get<std::vector<std::uint64_t>>();
    m.val_ids = j.at("splits").at("val").get<std::vector<std::uint64_t>>();
    m.test_ids = j.at("splits").at("test").get<std::vector<std::uint64_t>>();
    const auto& oracle = j.at("oracle_pair_accuracy");
    m.oracle_pair_accuracy = oracle.is_null() ? std::numeric_limits<double>::quiet_NaN() : oracle.get<double>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::kFormat, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_samples(dir / dataset.manifest().data_file, dataset.samples(), dataset.manifest().class_count());
  write_file((dir / "manifest.json").string(), manifest_to_json(dataset.manifest()));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  DatasetManifest m = manifest_from_json(read_file((dir / "manifest.json").string()));
  auto samples = read_samples(dir / m.data_file);
  for (const auto& s : samples) {
    if (s.video.dim(0) != m.frames || s.video.dim(1) != m.height || s.video.dim(2) != m.width) {
      raise(ErrorKind::kFormat, "sample shape disagrees with manifest");
    }
  }
  return Dataset(std::move(m), std::move(samples));
}

std::vector<std::uint64_t> few_shot_subset(const DatasetManifest& manifest, std::int64_t k, std::uint64_t seed) {
  if (k < 1) raise(ErrorKind::kConfig, "shots must be positive");
  std::map<std::int64_t, std::vector<std::uint64_t>> by_class;
  for (auto id : manifest.train_ids) by_class[static_cast<std::int64_t>(id) / manifest.per_class].push_back(id);
  std::vector<std::uint64_t> out;
  for (auto& [label, ids] : by_class) {
    if (k > static_cast<std::int64_t>(ids.size())) {
      raise(ErrorKind::kConfig, std::to_string(k) + " shots requested but class " + manifest.classes[label] +
                                    " has " + std::to_string(ids.size()) + " training samples");
    }
    std::mt19937_64 rng(seed_for(seed, "shots:" + std::to_string(label)));
    std::shuffle(ids.begin(), ids.end(), rng);
    out.insert(out.end(), ids.begin(), ids.begin() + k);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> base_novel_split(const DatasetManifest& manifest,
                                                                                 double base_fraction,
                                                                                 std::uint64_t seed) {
  if (base_fraction <= 0.0 || base_fraction >= 1.0) raise(ErrorKind::kConfig, "base fraction must lie in (0, 1)");
  std::vector<std::vector<std::int64_t>> units;
  std::set<std::int64_t> paired;
  for (const auto& [a, b] : manifest.temporal_pairs) {
    units.push_back({a, b});
    paired.insert(a);
    paired.insert(b);
  }
  for (std::int64_t c = 0; c < manifest.class_count(); ++c) {
    if (!paired.count(c)) units.push_back({c});
  }
  std::mt19937_64 rng(seed_for(seed, "base-novel"));
  std::shuffle(units.begin(), units.end(), rng);
  const auto target = static_cast<std::size_t>(std::llround(base_fraction * static_cast<double>(manifest.class_count())));
  std::vector<std::int64_t> base, novel;
  for (const auto& u : units) {
    auto& side = (base.size() + u.size() <= target || base.empty()) ? base : novel;
    side.insert(side.end(), u.begin(), u.end());
  }
  if (novel.empty()) {
    novel.insert(novel.end(), base.end() - static_cast<std::ptrdiff_t>(units.back().size()), base.end());
    base.resize(base.size() - units.back().size());
  }
  std::sort(base.begin(), base.end());
  std::sort(novel.begin(), novel.end());
  return {base, novel};
}

Tensor augment(const Tensor& video, std::uint64_t seed, const AugmentConfig& config) {
  if (video.rank() != 4 || video.dim(3) != 3) raise(ErrorKind::kDimension, "augment expects [T, H, W, 3]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Every draw happens unconditionally so each seed follows one fixed path.
  const bool crop = unit(rng) < config.crop_p;
  const double area = config.min_crop_scale + unit(rng) * (1.0 - config.min_crop_scale);
  const double oy = unit(rng), ox = unit(rng);
  const bool flip = unit(rng) < config.flip_p;
  const bool jitter = unit(rng) < config.jitter_p;
  double gain[3], offset[3];
  for (int c = 0; c < 3; ++c) {
    gain[c] = 1.0 + config.jitter_strength * (2.0 * unit(rng) - 1.0);
    offset[c] = 0.5 * config.jitter_strength * (2.0 * unit(rng) - 1.0);
  }
  const bool gray = unit(rng) < config.grayscale_p;

  const std::int64_t T = video.dim(0), H = video.dim(1), W = video.dim(2);
  const double side = crop ? std::sqrt(area) : 1.0;
  const double ch = side * static_cast<double>(H), cw = side * static_cast<double>(W);
  const double y0 = oy * (static_cast<double>(H) - ch), x0 = ox * (static_cast<double>(W) - cw);

  Tensor out(video.shape(), video.dtype());
  auto pixel = [&](std::int64_t t, std::int64_t y, std::int64_t x, int c) {
    return video.at(((t * H + y) * W + x) * 3 + c);
  };
  for (std::int64_t t = 0; t < T; ++t) {
    for (std::int64_t i = 0; i < H; ++i) {
      for (std::int64_t j = 0; j < W; ++j) {
        double rgb[3];
        const std::int64_t jj = flip ? W - 1 - j : j;
        if (crop) {
          const double sy = std::clamp(y0 + (static_cast<double>(i) + 0.5) * ch / H - 0.5, 0.0, H - 1.0);
          const double sx = std::clamp(x0 + (static_cast<double>(jj) + 0.5) * cw / W - 0.5, 0.0, W - 1.0);
          const auto yl = static_cast<std::int64_t>(std::floor(sy)), xl = static_cast<std::int64_t>(std::floor(sx));
          const std::int64_t yh = std::min(yl + 1, H - 1), xh = std::min(xl + 1, W - 1);
          const double fy = sy - yl, fx = sx - xl;
          for (int c = 0; c < 3; ++c) {
            rgb[c] = (1 - fy) * ((1 - fx) * pixel(t, yl, xl, c) + fx * pixel(t, yl, xh, c)) +
                     fy * ((1 - fx) * pixel(t, yh, xl, c) + fx * pixel(t, yh, xh, c));
          }
        } else {
          for (int c = 0; c < 3; ++c) rgb[c] = pixel(t, i, jj, c);
        }
        if (jitter) {
          for (int c = 0; c < 3; ++c) rgb[c] = rgb[c] * gain[c] + offset[c];
        }
        if (gray) {
          const double g = (rgb[0] + rgb[1] + rgb[2]) / 3.0;
          rgb[0] = rgb[1] = rgb[2] = g;
        }
        for (int c = 0; c < 3; ++c) {
          out.set(((t * H + i) * W + j) * 3 + c, (crop || jitter || gray) ? std::clamp(rgb[c], 0.0, 1.0) : rgb[c]);
        }
      }
    }
  }
  return out;
}

Tensor temporal_crop(const Tensor& video, std::int64_t start, std::int64_t frames) {
  if (start < 0 || frames < 1 || start + frames > video.dim(0)) {
    raise(ErrorKind::kDimension, "temporal crop [" + std::to_string(start) + ", " + std::to_string(start + frames) +
                                     ") outside clip of " + std::to_string(video.dim(0)) + " frames");
  }
  Shape shape = video.shape();
  shape[0] = frames;
  const std::int64_t per_frame = video.numel() / video.dim(0);
  return dispatch_dtype(video.dtype(), [&]<class T>() {
    Tensor out(shape, video.dtype());
    auto src = video.data<T>();
    std::copy_n(src.begin() + start * per_frame, frames * per_frame, out.data<T>().begin());
    return out;
  });
}

std::vector<std::int64_t> view_starts(std::int64_t total_frames, std::int64_t frames, std::int64_t views) {
  if (frames > total_frames) {
    raise(ErrorKind::kDimension, "model needs " + std::to_string(frames) + " frames, clip has " +
                                     std::to_string(total_frames));
  }
  if (views < 1) raise(ErrorKind::kConfig, "views must be positive");
  const std::int64_t span = total_frames - frames;
  if (views == 1) return {span / 2};
  std::vector<std::int64_t> out;
  for (std::int64_t i = 0; i < views; ++i) {
    out.push_back(std::llround(static_cast<double>(i * span) / static_cast<double>(views - 1)));
  }
  return out;
}

}  // namespace msta
