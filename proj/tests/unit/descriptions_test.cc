#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "msta/adapters/adapters.h"
#include "msta/descriptions/descriptions.h"
#include "msta/error.h"

namespace msta {
namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.layers = 2;
  c.vision_width = 8;
  c.text_width = 8;
  c.joint_width = 4;
  c.vision_heads = 2;
  c.text_heads = 2;
  c.max_tokens = 16;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("msta_desc_" + std::to_string(::getpid()) + "_" + name);
}

TEST(Prompts, TemplatesAreVerbatim) {
  auto p = build_prompts("jump", 2);
  EXPECT_EQ(p.spatio, "Please give me 2 sentences describing the visual appearance of the action jump.");
  EXPECT_EQ(p.temporal, "Please give me 2 sentences describing the temporally decoupled steps of the action jump.");
  EXPECT_NE(build_prompts("jump", 1).spatio.find("give me 1 sentences"), std::string::npos);
  EXPECT_THROW(build_prompts("", 2), Error);
  EXPECT_EQ(template_sentence("class_03_fwd"), "a video of class_03_fwd.");
}

TEST(StubProvider, DeterministicCountsAndClassToken) {
  StubProvider stub(7);
  auto a = generate_descriptions(stub, {"class_03_fwd", "class_04_rev"}, 2);
  auto b = generate_descriptions(stub, {"class_03_fwd", "class_04_rev"}, 2);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 2u);
  for (const auto& set : a) {
    EXPECT_EQ(set.spatio.size(), 2u);
    EXPECT_EQ(set.temporal.size(), 2u);
    for (const auto& s : set.spatio) EXPECT_NE(s.find(set.class_name), std::string::npos) << s;
  }
  for (const auto& s : a[1].temporal) EXPECT_NE(s.find("reverse"), std::string::npos) << s;
}

TEST(DescriptionStore, RoundTripAndByteIdenticalRegeneration) {
  StubProvider stub(1);
  auto sets = generate_descriptions(stub, {"class_00_fwd", "class_01_rev", "jump"}, 3);
  auto p1 = temp_path("a.txt"), p2 = temp_path("b.txt");
  save_descriptions(p1, sets);
  save_descriptions(p2, generate_descriptions(stub, {"class_00_fwd", "class_01_rev", "jump"}, 3));
  EXPECT_EQ(load_descriptions(p1), sets);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {}), b2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(b1, b2);
  EXPECT_EQ(b1.rfind("# class: class_00_fwd\nS: ", 0), 0u);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST(DescriptionStore, RejectsMalformedText) {
  EXPECT_THROW(parse_descriptions("S: orphan\n"), Error);
  EXPECT_THROW(parse_descriptions("# class: a\nS: x\n"), Error);
  EXPECT_THROW(parse_descriptions("# class: a\nQ: x\n"), Error);
  EXPECT_EQ(parse_descriptions("# class: a\r\nS: x\r\nT: y\r\n").at(0).temporal.at(0), "y");
}

TEST(DescriptionStore, CachedGenerationReusesStore) {
  StubProvider stub(2);
  auto path = temp_path("cache.txt");
  std::filesystem::remove(path);
  auto first = generate_cached(stub, {"class_00_fwd"}, 2, path);
  ClassDescriptionSet edited = first[0];
  edited.spatio[0] = "hand edited sentence";
  save_descriptions(path, {edited});
  EXPECT_EQ(generate_cached(stub, {"class_00_fwd"}, 2, path)[0], edited);
  EXPECT_EQ(generate_cached(stub, {"class_00_fwd"}, 3, path)[0].spatio.size(), 3u);
  std::filesystem::remove(path);
}

class FixedProvider : public DescriptionProvider {
 public:
  explicit FixedProvider(std::vector<std::string> lines) : lines_(std::move(lines)) {}
  std::vector<std::string> complete(const std::string&) override { return lines_; }
  std::string name() const override { return "fixed"; }

 private:
  std::vector<std::string> lines_;
};

TEST(Generate, CountMismatchIsAnError) {
  FixedProvider short_reply({"only one"});
  try {
    generate_descriptions(short_reply, {"wave"}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
    EXPECT_NE(std::string(e.what()).find("wave"), std::string::npos);
  }
}

// A local chat-completion endpoint standing in for the language model.
class LocalEndpoint {
 public:
  explicit LocalEndpoint(std::string reply) {
    server_.Post("/v1/chat/completions", [reply](const httplib::Request& req, httplib::Response& res) {
      auto body = nlohmann::json::parse(req.body);
      const std::string prompt = body["messages"][0]["content"];
      nlohmann::json out = {{"choices", {{{"message", {{"role", "assistant"}, {"content", reply + "\n(" + prompt + ")"}}}}}}};
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalEndpoint() {
    server_.stop();
    thread_.join();
  }
  int port() const { return port_; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(ExternalProvider, ParsesNumberedReply) {
  LocalEndpoint endpoint("1. A person crouches.\n\n2) The person leaps upward.");
  ExternalProvider provider({"http://127.0.0.1:" + std::to_string(endpoint.port()) + "/v1/chat/completions", "m"});
  auto lines = provider.complete("q");
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "A person crouches.");
  EXPECT_EQ(lines[1], "The person leaps upward.");
  EXPECT_EQ(lines[2], "(q)");
}

TEST(ExternalProvider, UnreachableEndpointIsTransportErrorNamingClass) {
  ExternalProviderConfig config{"http://127.0.0.1:1/v1/chat/completions", "m"};
  config.timeout_seconds = 2;
  ExternalProvider provider(config);
  try {
    generate_descriptions(provider, {"class_09_obj"}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTransport);
    EXPECT_NE(std::string(e.what()).find("class_09_obj"), std::string::npos);
  }
}

TEST(EmbedDescriptions, MeanOfFrozenFeatures) {
  DualEncoder model(small_model());
  ForwardOptions frozen;
  frozen.use_adapters = false;
  const std::string s1 = "a red blob of class_01_fwd", s2 = "the blob moves forward";
  Tensor f1 = model.encode_text(s1, frozen).value(), f2 = model.encode_text(s2, frozen).value();

  auto one = embed_descriptions(model, {"c", {s1}, {s2}}, 0);
  EXPECT_TRUE(one.spatio.bit_equal(f1));
  EXPECT_TRUE(one.temporal.bit_equal(f2));

  auto dup = embed_descriptions(model, {"c", {s1, s1}, {s2, s2}}, 0);
  for (std::int64_t i = 0; i < f1.numel(); ++i) EXPECT_FLOAT_EQ(dup.spatio.at(i), f1.at(i));

  auto two = embed_descriptions(model, {"c", {s1, s2}, {s2, s1}}, 3);
  EXPECT_EQ(two.class_index, 3);
  for (std::int64_t i = 0; i < f1.numel(); ++i) {
    EXPECT_NEAR(two.spatio.at(i), 0.5 * (f1.at(i) + f2.at(i)), 1e-6);
  }
  EXPECT_THROW(embed_descriptions(model, {"c", {}, {}}, 0), Error);
}

TEST(EmbedDescriptions, UnaffectedByAdaptersAndTraining) {
  ModelConfig c = small_model();
  DualEncoder model(c);
  StubProvider stub;
  auto sets = generate_descriptions(stub, {"class_00_fwd", "class_01_rev"}, 2);
  DescriptionBank before(model, sets, {"class_00_fwd", "class_01_rev"});
  AdapterConfig ac;
  ac.dims = 4;
  ac.lambda = 0.5;
  auto adapters = inject(model, ac);
  for (const auto& p : adapters->parameters()) p->mutable_value().fill(0.3);
  DescriptionBank after(model, sets, {"class_00_fwd", "class_01_rev"});
  EXPECT_TRUE(before.at(1).temporal.bit_equal(after.at(1).temporal));
  EXPECT_THROW(after.at(2), Error);
  EXPECT_THROW(DescriptionBank(model, sets, {"class_00_fwd", "missing"}), Error);
}

}  // namespace
}  // namespace msta
