#include "msta/training/config.h"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <functional>
#include <map>

#include "msta/error.h"

namespace msta {
namespace {

std::string activation_name(Activation a) { return a == Activation::kRelu ? "relu" : "gelu"; }

Activation parse_activation(const std::string& s) {
  if (s == "gelu") return Activation::kGelu;
  if (s == "relu") return Activation::kRelu;
  raise(ErrorKind::kUsage, "unknown activation " + s);
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    auto out = std::stoll(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  raise(ErrorKind::kUsage, key + ": expected an integer, got '" + v + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    auto out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  raise(ErrorKind::kUsage, key + ": expected a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  raise(ErrorKind::kUsage, key + ": expected true or false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run.task", [](RunConfig& c, auto&, auto& v) { c.task = v; }},
      {"run.seed", [](RunConfig& c, auto& k, auto& v) { c.set_seed(static_cast<std::uint64_t>(to_int(k, v))); }},
      {"model.preset",
       [](RunConfig& c, auto&, auto& v) {
         const auto seed = c.model.seed;
         c.model = ModelConfig::preset_named(v);
         c.model.seed = seed;
       }},
      {"model.layers", [](RunConfig& c, auto& k, auto& v) { c.model.layers = to_int(k, v); }},
      {"model.vision_width", [](RunConfig& c, auto& k, auto& v) { c.model.vision_width = to_int(k, v); }},
      {"model.text_width", [](RunConfig& c, auto& k, auto& v) { c.model.text_width = to_int(k, v); }},
      {"model.joint_width", [](RunConfig& c, auto& k, auto& v) { c.model.joint_width = to_int(k, v); }},
      {"model.frames", [](RunConfig& c, auto& k, auto& v) { c.model.frames = to_int(k, v); }},
      {"model.height", [](RunConfig& c, auto& k, auto& v) { c.model.height = to_int(k, v); }},
      {"model.width", [](RunConfig& c, auto& k, auto& v) { c.model.width = to_int(k, v); }},
      {"model.patch", [](RunConfig& c, auto& k, auto& v) { c.model.patch = to_int(k, v); }},
      {"model.vision_heads", [](RunConfig& c, auto& k, auto& v) { c.model.vision_heads = to_int(k, v); }},
      {"model.text_heads", [](RunConfig& c, auto& k, auto& v) { c.model.text_heads = to_int(k, v); }},
      {"model.vocab", [](RunConfig& c, auto& k, auto& v) { c.model.vocab = to_int(k, v); }},
      {"model.max_tokens", [](RunConfig& c, auto& k, auto& v) { c.model.max_tokens = to_int(k, v); }},
      {"model.mlp_ratio", [](RunConfig& c, auto& k, auto& v) { c.model.mlp_ratio = to_int(k, v); }},
      {"model.temporal_position_std",
       [](RunConfig& c, auto& k, auto& v) { c.model.temporal_position_std = to_double(k, v); }},
      {"adapter.kind", [](RunConfig& c, auto&, auto& v) { c.adapter.kind = parse_adapter_kind(v); }},
      {"adapter.variant", [](RunConfig& c, auto&, auto& v) { c.adapter.variant = parse_msta_variant(v); }},
      {"adapter.layers",
       [](RunConfig& c, auto&, auto& v) {
         auto [a, b] = parse_layer_range(v);
         c.adapter.first_layer = a;
         c.adapter.last_layer = b;
       }},
      {"adapter.dims", [](RunConfig& c, auto& k, auto& v) { c.adapter.dims = to_int(k, v); }},
      {"adapter.lambda", [](RunConfig& c, auto& k, auto& v) { c.adapter.lambda = to_double(k, v); }},
      {"adapter.temporal_kernel", [](RunConfig& c, auto& k, auto& v) { c.adapter.temporal_kernel = to_int(k, v); }},
      {"adapter.dropout", [](RunConfig& c, auto& k, auto& v) { c.adapter.dropout = to_double(k, v); }},
      {"adapter.activation", [](RunConfig& c, auto&, auto& v) { c.adapter.activation = parse_activation(v); }},
      {"adapter.baseline_scale", [](RunConfig& c, auto& k, auto& v) { c.adapter.baseline_scale = to_double(k, v); }},
      {"train.batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = to_int(k, v); }},
      {"train.lr", [](RunConfig& c, auto& k, auto& v) { c.train.lr = to_double(k, v); }},
      {"train.epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = to_int(k, v); }},
      {"train.warmup_epochs", [](RunConfig& c, auto& k, auto& v) { c.train.warmup_epochs = to_int(k, v); }},
      {"train.weight_decay", [](RunConfig& c, auto& k, auto& v) { c.train.weight_decay = to_double(k, v); }},
      {"train.beta1", [](RunConfig& c, auto& k, auto& v) { c.train.beta1 = to_double(k, v); }},
      {"train.beta2", [](RunConfig& c, auto& k, auto& v) { c.train.beta2 = to_double(k, v); }},
      {"train.clip_norm", [](RunConfig& c, auto& k, auto& v) { c.train.clip_norm = to_double(k, v); }},
      {"train.augment", [](RunConfig& c, auto& k, auto& v) { c.train.augment = to_bool(k, v); }},
      {"train.checkpoint_every", [](RunConfig& c, auto& k, auto& v) { c.train.checkpoint_every = to_int(k, v); }},
      {"loss.alpha", [](RunConfig& c, auto& k, auto& v) { c.loss.alpha = to_double(k, v); }},
      {"loss.temperature", [](RunConfig& c, auto& k, auto& v) { c.loss.temperature = to_double(k, v); }},
      {"data.classes", [](RunConfig& c, auto& k, auto& v) { c.data.classes = to_int(k, v); }},
      {"data.per_class", [](RunConfig& c, auto& k, auto& v) { c.data.per_class = to_int(k, v); }},
      {"data.frames", [](RunConfig& c, auto& k, auto& v) { c.data.frames = to_int(k, v); }},
      {"data.size", [](RunConfig& c, auto& k, auto& v) { c.data.size = to_int(k, v); }},
      {"data.temporal_pairs", [](RunConfig& c, auto& k, auto& v) { c.data.temporal_pair_fraction = to_double(k, v); }},
      {"data.noise", [](RunConfig& c, auto& k, auto& v) { c.data.noise = to_double(k, v); }},
      {"data.test_fraction", [](RunConfig& c, auto& k, auto& v) { c.data.test_fraction = to_double(k, v); }},
      {"data.val_fraction", [](RunConfig& c, auto& k, auto& v) { c.data.val_fraction = to_double(k, v); }},
      {"data.base_fraction", [](RunConfig& c, auto& k, auto& v) { c.data.base_fraction = to_double(k, v); }},
      {"data.class_offset", [](RunConfig& c, auto& k, auto& v) { c.data.class_offset = to_int(k, v); }},
      {"descriptions.n", [](RunConfig& c, auto& k, auto& v) { c.n_desc = to_int(k, v); }},
      {"descriptions.provider", [](RunConfig& c, auto&, auto& v) { c.provider = v; }},
      {"descriptions.endpoint", [](RunConfig& c, auto&, auto& v) { c.external.endpoint = v; }},
      {"descriptions.model", [](RunConfig& c, auto&, auto& v) { c.external.model = v; }},
      {"descriptions.api_key_env", [](RunConfig& c, auto&, auto& v) { c.external.api_key_env = v; }},
      {"eval.views", [](RunConfig& c, auto& k, auto& v) { c.eval_views = to_int(k, v); }},
      {"eval.shots",
       [](RunConfig& c, auto& k, auto& v) {
         c.shots.clear();
         std::size_t start = 0;
         while (start <= v.size()) {
           const auto end = v.find(',', start);
           c.shots.push_back(to_int(k, v.substr(start, end == std::string::npos ? std::string::npos : end - start)));
           if (end == std::string::npos) break;
           start = end + 1;
         }
       }},
  };
  return table;
}

RunConfig base_preset(const std::string& model_preset) {
  RunConfig c;
  c.model = ModelConfig::preset_named(model_preset);
  c.adapter.dims = 256;
  c.adapter.lambda = 0.005;
  c.adapter.dropout = 0.1;
  // Full epoch count; smaller batches and a larger step suit the tiny data.
  c.train.epochs = 11;
  c.data.per_class = 16;
  c.train.batch_size = 4;
  c.train.lr = 1e-2;
  // Clips as long as the model window: a random crop of a longer clip can
  // cut off the part of the trajectory that tells a pair apart.
  c.data.frames = c.model.frames;
  c.data.size = c.model.height;
  return c;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) raise(ErrorKind::kConfig, "batch size must be positive");
  if (!(lr > 0.0)) raise(ErrorKind::kConfig, "learning rate must be positive");
  if (epochs < 0 || warmup_epochs < 0) raise(ErrorKind::kConfig, "epoch counts must be non-negative");
  if (epochs > 0 && warmup_epochs > epochs) raise(ErrorKind::kConfig, "warmup longer than training");
  if (weight_decay < 0.0) raise(ErrorKind::kConfig, "weight decay must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) raise(ErrorKind::kConfig, "betas must lie in [0, 1)");
  if (clip_norm < 0.0) raise(ErrorKind::kConfig, "clip norm must be non-negative");
}

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  model.seed = value;
  adapter.seed = value;
  train.seed = value;
  data.seed = value;
}

void RunConfig::validate() const {
  model.validate();
  adapter.validate(model.layers);
  train.validate();
  loss.validate();
  data.validate();
  if (n_desc < 1) raise(ErrorKind::kConfig, "description count must be at least 1");
  if (eval_views < 1) raise(ErrorKind::kConfig, "views must be positive");
  if (data.frames < model.frames) raise(ErrorKind::kConfig, "dataset clips are shorter than the model window");
  if (data.size != model.height || data.size != model.width) {
    raise(ErrorKind::kConfig, "dataset frame size must match the model input size");
  }
  if (provider != "stub" && provider != "external") raise(ErrorKind::kConfig, "provider must be stub or external");
  static const std::vector<std::string> tasks{"base-to-novel", "few-shot", "zero-shot", "fully-supervised"};
  if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) raise(ErrorKind::kConfig, "unknown task " + task);
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["preset"] = preset;
  j["task"] = task;
  j["seed"] = seed;
  j["model"] = {{"preset", model.preset},         {"layers", model.layers},
                {"vision_width", model.vision_width}, {"text_width", model.text_width},
                {"joint_width", model.joint_width},   {"frames", model.frames},
                {"height", model.height},             {"width", model.width},
                {"patch", model.patch},               {"vision_heads", model.vision_heads},
                {"text_heads", model.text_heads},     {"vocab", model.vocab},
                {"max_tokens", model.max_tokens},     {"mlp_ratio", model.mlp_ratio},
                {"temporal_position_std", model.temporal_position_std},
                {"seed", model.seed}};
  j["adapter"] = {{"kind", adapter_kind_name(adapter.kind)},
                  {"variant", msta_variant_name(adapter.variant)},
                  {"first_layer", adapter.first_layer},
                  {"last_layer", adapter.resolved_last(model.layers)},
                  {"dims", adapter.dims},
                  {"lambda", adapter.lambda},
                  {"temporal_kernel", adapter.temporal_kernel},
                  {"dropout", adapter.dropout},
                  {"activation", activation_name(adapter.activation)},
                  {"baseline_scale", adapter.baseline_scale},
                  {"seed", adapter.seed}};
  j["train"] = {{"batch_size", train.batch_size},   {"lr", train.lr},
                {"epochs", train.epochs},           {"warmup_epochs", train.warmup_epochs},
                {"weight_decay", train.weight_decay}, {"beta1", train.beta1},
                {"beta2", train.beta2},             {"clip_norm", train.clip_norm},
                {"augment", train.augment},         {"checkpoint_every", train.checkpoint_every},
                {"seed", train.seed}};
  j["loss"] = {{"alpha", loss.alpha}, {"temperature", loss.temperature}};
  j["data"] = {{"name", data.name},
               {"seed", data.seed},
               {"classes", data.classes},
               {"per_class", data.per_class},
               {"frames", data.frames},
               {"size", data.size},
               {"temporal_pairs", data.temporal_pair_fraction},
               {"noise", data.noise},
               {"test_fraction", data.test_fraction},
               {"val_fraction", data.val_fraction},
               {"base_fraction", data.base_fraction},
               {"class_offset", data.class_offset}};
  j["descriptions"] = {{"n", n_desc},
                       {"provider", provider},
                       {"endpoint", external.endpoint},
                       {"model", external.model},
                       {"api_key_env", external.api_key_env}};
  j["eval"] = {{"views", eval_views}, {"shots", shots}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.preset = j.at("preset");
    c.task = j.at("task");
    c.seed = j.at("seed");
    const auto& m = j.at("model");
    c.model.preset = m.at("preset");
    c.model.layers = m.at("layers");
    c.model.vision_width = m.at("vision_width");
    c.model.text_width = m.at("text_width");
    c.model.joint_width = m.at("joint_width");
    c.model.frames = m.at("frames");
    c.model.height = m.at("height");
    c.model.width = m.at("width");
    c.model.patch = m.at("patch");
    c.model.vision_heads = m.at("vision_heads");
    c.model.text_heads = m.at("text_heads");
    c.model.vocab = m.at("vocab");
    c.model.max_tokens = m.at("max_tokens");
    c.model.mlp_ratio = m.at("mlp_ratio");
    c.model.temporal_position_std = m.at("temporal_position_std");
    c.model.seed = m.at("seed");
    const auto& a = j.at("adapter");
    c.adapter.kind = parse_adapter_kind(a.at("kind"));
    c.adapter.variant = parse_msta_variant(a.at("variant"));
    c.adapter.first_layer = a.at("first_layer");
    c.adapter.last_layer = a.at("last_layer");
    c.adapter.dims = a.at("dims");
    c.adapter.lambda = a.at("lambda");
    c.adapter.temporal_kernel = a.at("temporal_kernel");
    c.adapter.dropout = a.at("dropout");
    c.adapter.activation = parse_activation(a.at("activation"));
    c.adapter.baseline_scale = a.at("baseline_scale");
    c.adapter.seed = a.at("seed");
    const auto& t = j.at("train");
    c.train.batch_size = t.at("batch_size");
    c.train.lr = t.at("lr");
    c.train.epochs = t.at("epochs");
    c.train.warmup_epochs = t.at("warmup_epochs");
    c.train.weight_decay = t.at("weight_decay");
    c.train.beta1 = t.at("beta1");
    c.train.beta2 = t.at("beta2");
    c.train.clip_norm = t.at("clip_norm");
    c.train.augment = t.at("augment");
    c.train.checkpoint_every = t.at("checkpoint_every");
    c.train.seed = t.at("seed");
    c.loss.alpha = j.at("loss").at("alpha");
    c.loss.temperature = j.at("loss").at("temperature");
    const auto& d = j.at("data");
    c.data.name = d.at("name");
    c.data.seed = d.at("seed");
    c.data.classes = d.at("classes");
    c.data.per_class = d.at("per_class");
    c.data.frames = d.at("frames");
    c.data.size = d.at("size");
    c.data.temporal_pair_fraction = d.at("temporal_pairs");
    c.data.noise = d.at("noise");
    c.data.test_fraction = d.at("test_fraction");
    c.data.val_fraction = d.at("val_fraction");
    c.data.base_fraction = d.at("base_fraction");
    c.data.class_offset = d.at("class_offset");
    const auto& s = j.at("descriptions");
    c.n_desc = s.at("n");
    c.provider = s.at("provider");
    c.external.endpoint = s.at("endpoint");
    c.external.model = s.at("model");
    c.external.api_key_env = s.at("api_key_env");
    c.eval_views = j.at("eval").at("views");
    c.shots = j.at("eval").at("shots").get<std::vector<std::int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::kFormat, std::string("malformed run configuration: ") + e.what());
  }
  return c;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : to_json().dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> preset_names() {
  return {"tiny", "tiny12", "base2novel-tiny", "fewshot-tiny", "zeroshot-tiny", "supervised-tiny", "vitb16-shape"};
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  if (name == "tiny" || name == "base2novel-tiny") {
    c = base_preset("tiny");
    c.task = "base-to-novel";
  } else if (name == "supervised-tiny") {
    c = base_preset("tiny");
    c.task = "fully-supervised";
    c.adapter.dims = 128;
    c.adapter.lambda = 0.001;
    c.train.lr = 8e-3;
    c.train.batch_size = 16;
    c.train.epochs = 10;
  } else if (name == "tiny12") {
    c = base_preset("tiny12");
  } else if (name == "fewshot-tiny") {
    c = base_preset("tiny12");
    c.task = "few-shot";
    c.adapter.dims = 128;
    c.adapter.first_layer = 8;
    c.adapter.last_layer = 12;
    c.train.epochs = 20;
    // 18 training clips per class, so K=16 is reachable.
    c.data.per_class = 24;
  } else if (name == "zeroshot-tiny") {
    c = base_preset("tiny");
    c.task = "zero-shot";
    c.adapter.dims = 128;
    c.adapter.lambda = 0.001;
    c.train.lr = 8e-3;
    c.train.batch_size = 16;
    c.train.epochs = 10;
  } else if (name == "vitb16-shape") {
    c = base_preset("vitb16-shape");
    c.adapter.dims = 128;
  } else {
    raise(ErrorKind::kUsage, "unknown preset " + name);
  }
  c.preset = name;
  return c;
}

void apply_setting(RunConfig& config, const std::string& section, const std::string& key, const std::string& value) {
  const std::string full = section + "." + key;
  auto it = setters().find(full);
  if (it == setters().end()) raise(ErrorKind::kUsage, "unknown configuration key " + full);
  it->second(config, full, value);
}

void apply_ini(RunConfig& config, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) raise(ErrorKind::kIo, "config file not found: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    raise(ErrorKind::kUsage, std::string("cannot parse config: ") + e.what());
  }
  // A preset named in [run] resets everything before the remaining keys apply.
  if (auto preset = tree.get_optional<std::string>("run.preset")) {
    const auto seed = config.seed;
    config = preset_config(*preset);
    config.set_seed(seed);
  }
  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) {
      raise(ErrorKind::kUsage, "key outside a section: " + section);
    }
    for (const auto& [key, value] : entries) {
      if (section == "run" && key == "preset") continue;
      apply_setting(config, section, key, value.data());
    }
  }
}

std::pair<std::int64_t, std::int64_t> parse_layer_range(const std::string& text) {
  const auto dash = text.find('-');
  if (dash == std::string::npos) {
    const auto l = to_int("layers", text);
    return {l, l};
  }
  return {to_int("layers", text.substr(0, dash)), to_int("layers", text.substr(dash + 1))};
}

}  // namespace msta
