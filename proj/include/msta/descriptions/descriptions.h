#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "msta/encoders/model.h"

namespace msta {

// N appearance sentences and N step-by-step sentences for one class.
struct ClassDescriptionSet {
  std::string class_name;
  std::vector<std::string> spatio;
  std::vector<std::string> temporal;

  bool operator==(const ClassDescriptionSet&) const = default;
};

struct PromptPair {
  std::string spatio;
  std::string temporal;
};

PromptPair build_prompts(const std::string& class_name, std::int64_t n);

// The classification template fed to the trainable text branch.
std::string template_sentence(const std::string& class_name);

// Source of description sentences. `complete` receives one prompt and returns
// its sentences, one per element.
class DescriptionProvider {
 public:
  virtual ~DescriptionProvider() = default;
  virtual std::vector<std::string> complete(const std::string& prompt) = 0;
  virtual std::string name() const = 0;
};

// Offline, deterministic sentences keyed by class name and seed. The class
// name is embedded in every sentence so a toy text encoder can tell classes
// apart.
class StubProvider : public DescriptionProvider {
 public:
  explicit StubProvider(std::uint64_t seed = 0) : seed_(seed) {}
  std::vector<std::string> complete(const std::string& prompt) override;
  std::string name() const override { return "stub"; }

 private:
  std::uint64_t seed_;
};

struct ExternalProviderConfig {
  std::string endpoint;  // e.g. http://localhost:8080/v1/chat/completions
  std::string model;
  std::string api_key_env = "MSTA_LLM_API_KEY";
  int timeout_seconds = 60;
};

// Chat-completion style JSON over HTTP. The reply's message content is split
// into lines, with list numbering and bullets removed.
class ExternalProvider : public DescriptionProvider {
 public:
  explicit ExternalProvider(ExternalProviderConfig config);
  std::vector<std::string> complete(const std::string& prompt) override;
  std::string name() const override { return "external"; }

 private:
  ExternalProviderConfig config_;
};

std::vector<ClassDescriptionSet> generate_descriptions(DescriptionProvider& provider,
                                                       const std::vector<std::string>& classes,
                                                       std::int64_t n);

// Loads `store` when it already holds exactly these classes with n sentences
// each; otherwise generates and writes it.
std::vector<ClassDescriptionSet> generate_cached(DescriptionProvider& provider,
                                                 const std::vector<std::string>& classes,
                                                 std::int64_t n, const std::filesystem::path& store);

std::string format_descriptions(const std::vector<ClassDescriptionSet>& sets);
std::vector<ClassDescriptionSet> parse_descriptions(const std::string& text);
void save_descriptions(const std::filesystem::path& path, const std::vector<ClassDescriptionSet>& sets);
std::vector<ClassDescriptionSet> load_descriptions(const std::filesystem::path& path);

struct DescriptionEmbeddings {
  std::int64_t class_index = 0;
  Tensor spatio;    // D_s, mean frozen-branch feature of the spatio sentences
  Tensor temporal;  // D_t
};

// Mean raw joint-space features through the frozen text branch (adapters off).
DescriptionEmbeddings embed_descriptions(const DualEncoder& model, const ClassDescriptionSet& set,
                                         std::int64_t class_index);

class DescriptionBank {
 public:
  DescriptionBank() = default;
  // Matches sets to `classes` by name; every class must have a set.
  DescriptionBank(const DualEncoder& model, const std::vector<ClassDescriptionSet>& sets,
                  const std::vector<std::string>& classes);

  void insert(DescriptionEmbeddings embeddings);
  bool contains(std::int64_t class_index) const { return entries_.count(class_index) > 0; }
  const DescriptionEmbeddings& at(std::int64_t class_index) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::int64_t, DescriptionEmbeddings> entries_;
};

}  // namespace msta
