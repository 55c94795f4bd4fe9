#include "msta/descriptions/descriptions.h"

#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "msta/encoders/layout.h"
#include "msta/error.h"

namespace msta {
namespace {

const std::regex& prompt_pattern() {
  static const std::regex re(
      R"(^Please give me (\d+) sentences describing the (visual appearance|temporally decoupled steps) of the action (.+)\.$)");
  return re;
}

// Direction word for the class tag used by the synthetic datasets.
std::string motion_word(const std::string& class_name) {
  auto ends_with = [&](const std::string& s) {
    return class_name.size() >= s.size() && class_name.compare(class_name.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with("_fwd")) return "forward";
  if (ends_with("_rev")) return "reverse";
  return "still";
}

std::string pick(std::mt19937_64& rng, const std::vector<std::string>& options) {
  return options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
}

std::string substitute(std::string text, const std::string& key, const std::string& value) {
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
  return text;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// Drops "1.", "2)", "-" and "*" list markers.
std::string strip_marker(const std::string& line) {
  static const std::regex marker(R"(^\s*(?:\d+[.)]|[-*•])\s*)");
  return one_line(std::regex_replace(line, marker, "", std::regex_constants::format_first_only));
}

}  // namespace

PromptPair build_prompts(const std::string& class_name, std::int64_t n) {
  if (class_name.empty()) raise(ErrorKind::kConfig, "class name must not be empty");
  const std::string count = std::to_string(n);
  return {"Please give me " + count + " sentences describing the visual appearance of the action " +
              class_name + ".",
          "Please give me " + count + " sentences describing the temporally decoupled steps of the action " +
              class_name + "."};
}

std::string template_sentence(const std::string& class_name) { return "a video of " + class_name + "."; }

std::vector<std::string> StubProvider::complete(const std::string& prompt) {
  std::smatch m;
  if (!std::regex_match(prompt, m, prompt_pattern())) {
    raise(ErrorKind::kFormat, "stub provider does not recognise prompt: " + prompt);
  }
  const std::int64_t n = std::stoll(m[1].str());
  const bool spatio = m[2].str() == "visual appearance";
  const std::string cls = m[3].str();
  std::mt19937_64 rng(seed_for(seed_, (spatio ? "spatio:" : "temporal:") + cls));

  static const std::vector<std::string> spatio_templates{
      "a {colour} {texture} shape of {cls} on a plain background",
      "a {size} blob of {cls} in the video",
      "the {cls} video shows a {colour} blob",
      "a {texture} {colour} shape in a video of {cls}",
  };
  static const std::vector<std::string> temporal_templates{
      "first the blob of {cls} starts at the {edge} then it moves {dir}",
      "the {cls} blob moves {dir} step by step",
      "step 1 the blob of {cls} starts then it moves {dir} and ends",
      "the video of {cls} shows a {dir} step then a {dir} step",
  };
  static const std::vector<std::string> colours{"red", "green", "blue", "yellow"};
  static const std::vector<std::string> textures{"striped", "plain", "dotted"};
  static const std::vector<std::string> sizes{"small", "large"};
  static const std::vector<std::string> edges{"top", "bottom"};

  std::vector<std::string> out;
  for (std::int64_t i = 0; i < n; ++i) {
    std::string s = pick(rng, spatio ? spatio_templates : temporal_templates);
    s = substitute(s, "{colour}", pick(rng, colours));
    s = substitute(s, "{texture}", pick(rng, textures));
    s = substitute(s, "{size}", pick(rng, sizes));
    s = substitute(s, "{edge}", pick(rng, edges));
    s = substitute(s, "{dir}", motion_word(cls));
    out.push_back(substitute(s, "{cls}", cls) + ".");
  }
  return out;
}

ExternalProvider::ExternalProvider(ExternalProviderConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) raise(ErrorKind::kConfig, "external provider needs an endpoint");
}

std::vector<std::string> ExternalProvider::complete(const std::string& prompt) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url)) {
    raise(ErrorKind::kConfig, "malformed endpoint: " + config_.endpoint);
  }
  const std::string path = m[2].matched ? m[2].str() : "/";

  httplib::Client client(m[1].str());
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  nlohmann::json body = {{"model", config_.model},
                         {"messages", {{{"role", "user"}, {"content", prompt}}}},
                         {"temperature", 0}};
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) raise(ErrorKind::kTransport, "request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) raise(ErrorKind::kTransport, "HTTP status " + std::to_string(res->status));

  std::string content;
  try {
    content = nlohmann::json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::kTransport, std::string("unexpected response body: ") + e.what());
  }
  std::vector<std::string> lines;
  std::istringstream in(content);
  for (std::string line; std::getline(in, line);) {
    if (auto s = strip_marker(line); !s.empty()) lines.push_back(s);
  }
  return lines;
}

std::vector<ClassDescriptionSet> generate_descriptions(DescriptionProvider& provider,
                                                       const std::vector<std::string>& classes,
                                                       std::int64_t n) {
  if (n < 1) raise(ErrorKind::kConfig, "description count must be at least 1");
  std::vector<ClassDescriptionSet> sets;
  for (const auto& cls : classes) {
    const PromptPair prompts = build_prompts(cls, n);
    ClassDescriptionSet set{cls, {}, {}};
    auto ask = [&](const std::string& prompt, const char* kind) {
      std::vector<std::string> lines;
      try {
        lines = provider.complete(prompt);
      } catch (const Error& e) {
        raise(e.kind(), "class " + cls + ": " + e.what());
      }
      for (auto& l : lines) l = one_line(l);
      if (static_cast<std::int64_t>(lines.size()) != n) {
        raise(ErrorKind::kFormat, "class " + cls + ": expected " + std::to_string(n) + " " + kind +
                                      " sentences, provider returned " + std::to_string(lines.size()));
      }
      for (const auto& l : lines) {
        if (l.empty()) raise(ErrorKind::kFormat, "class " + cls + ": empty " + kind + " sentence");
      }
      return lines;
    };
    set.spatio = ask(prompts.spatio, "spatio");
    set.temporal = ask(prompts.temporal, "temporal");
    sets.push_back(std::move(set));
  }
  return sets;
}

std::vector<ClassDescriptionSet> generate_cached(DescriptionProvider& provider,
                                                 const std::vector<std::string>& classes,
                                                 std::int64_t n, const std::filesystem::path& store) {
  if (std::filesystem::exists(store)) {
    auto cached = load_descriptions(store);
    bool usable = cached.size() == classes.size();
    for (std::size_t i = 0; usable && i < cached.size(); ++i) {
      usable = cached[i].class_name == classes[i] && static_cast<std::int64_t>(cached[i].spatio.size()) == n;
    }
    if (usable) return cached;
  }
  auto sets = generate_descriptions(provider, classes, n);
  save_descriptions(store, sets);
  return sets;
}

std::string format_descriptions(const std::vector<ClassDescriptionSet>& sets) {
  std::ostringstream out;
  for (const auto& s : sets) {
    out << "# class: " << s.class_name << '\n';
    for (const auto& l : s.spatio) out << "S: " << l << '\n';
    for (const auto& l : s.temporal) out << "T: " << l << '\n';
  }
  return out.str();
}

std::vector<ClassDescriptionSet> parse_descriptions(const std::string& text) {
  std::vector<ClassDescriptionSet> sets;
  std::istringstream in(text);
  std::int64_t line_no = 0;
  auto check = [&](const ClassDescriptionSet& s) {
    if (s.spatio.empty() || s.spatio.size() != s.temporal.size()) {
      raise(ErrorKind::kFormat, "class " + s.class_name + " needs equal, nonzero S: and T: counts");
    }
  };
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# class: ", 0) == 0) {
      if (!sets.empty()) check(sets.back());
      sets.push_back({line.substr(9), {}, {}});
    } else if (sets.empty()) {
      raise(ErrorKind::kFormat, "line " + std::to_string(line_no) + ": sentence before any class header");
    } else if (line.rfind("S: ", 0) == 0) {
      sets.back().spatio.push_back(line.substr(3));
    } else if (line.rfind("T: ", 0) == 0) {
      sets.back().temporal.push_back(line.substr(3));
    } else {
      raise(ErrorKind::kFormat, "line " + std::to_string(line_no) + ": unrecognised record: " + line);
    }
  }
  if (!sets.empty()) check(sets.back());
  return sets;
}

void save_descriptions(const std::filesystem::path& path, const std::vector<ClassDescriptionSet>& sets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::kIo, "cannot write " + path.string());
  out << format_descriptions(sets);
}

std::vector<ClassDescriptionSet> load_descriptions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_descriptions(buf.str());
}

DescriptionEmbeddings embed_descriptions(const DualEncoder& model, const ClassDescriptionSet& set,
                                         std::int64_t class_index) {
  if (set.spatio.empty() || set.temporal.empty()) {
    raise(ErrorKind::kState, "class " + set.class_name + " has no descriptions to embed");
  }
  ForwardOptions frozen;
  frozen.use_adapters = false;
  auto mean_feature = [&](const std::vector<std::string>& sentences) {
    std::vector<Var> features;
    for (const auto& s : sentences) features.push_back(Var(model.encode_text(s, frozen).value()));
    return mean_of(features).value();
  };
  return {class_index, mean_feature(set.spatio), mean_feature(set.temporal)};
}

DescriptionBank::DescriptionBank(const DualEncoder& model, const std::vector<ClassDescriptionSet>& sets,
                                 const std::vector<std::string>& classes) {
  std::map<std::string, const ClassDescriptionSet*> by_name;
  for (const auto& s : sets) by_name[s.class_name] = &s;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    auto it = by_name.find(classes[c]);
    if (it == by_name.end()) raise(ErrorKind::kConfig, "no descriptions for class " + classes[c]);
    insert(embed_descriptions(model, *it->second, static_cast<std::int64_t>(c)));
  }
}

void DescriptionBank::insert(DescriptionEmbeddings embeddings) {
  const auto c = embeddings.class_index;
  entries_[c] = std::move(embeddings);
}

const DescriptionEmbeddings& DescriptionBank::at(std::int64_t class_index) const {
  auto it = entries_.find(class_index);
  if (it == entries_.end()) {
    raise(ErrorKind::kConfig, "missing description embeddings for class " + std::to_string(class_index));
  }
  return it->second;
}

}  // namespace msta
