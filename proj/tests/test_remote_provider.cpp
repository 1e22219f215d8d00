#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <thread>

#include "occmap/remote_provider.hpp"

using namespace occmap;
using namespace occmap::embedding;

namespace {

// Local stand-in for an embeddings endpoint. Each request pops the next
// scripted status; 200 responses embed every input with the local hasher.
class FakeEndpoint {
 public:
  FakeEndpoint() {
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      ++requests;
      last_auth = req.get_header_value("Authorization");
      last_api_key = req.get_header_value("api-key");
      const int status = script.empty() ? 200 : script.front();
      if (!script.empty()) script.pop_front();
      res.status = status;
      if (status == 400) {
        res.set_content(R"({"error":{"message":"This model's maximum context length is 8192 tokens"}})",
                        "application/json");
        return;
      }
      if (status != 200) return;
      const auto body = nlohmann::json::parse(req.body);
      model = body["model"].get<std::string>();
      nlohmann::json out;
      out["data"] = nlohmann::json::array();
      const auto& input = body["input"];
      batch_sizes.push_back(input.size());
      // Reverse order to exercise index-based reassembly.
      for (std::size_t i = input.size(); i-- > 0;) {
        const auto v = local_embed(input[i].get<std::string>(), 64);
        nlohmann::json e;
        e["index"] = i;
        e["embedding"] = nlohmann::json::array();
        for (float x : v.values()) e["embedding"].push_back(x * 3.0);  // not unit length on purpose
        out["data"].push_back(e);
      }
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  RemoteConfig config() const {
    RemoteConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/embeddings";
    c.model = "test-model";
    c.dimension = 64;
    c.max_batch_size = 4;
    c.initial_backoff = std::chrono::milliseconds(100);
    c.timeout = std::chrono::seconds(5);
    return c;
  }

  std::deque<int> script;
  int requests = 0;
  std::vector<std::size_t> batch_sizes;
  std::string last_auth, last_api_key, model;

 private:
  httplib::Server server_;
  std::mutex mu_;
  int port_ = 0;
  std::thread thread_;
};

struct KeyEnv {
  KeyEnv() { ::setenv("OCCMAP_API_KEY", "sk-test", 1); }
  ~KeyEnv() { ::unsetenv("OCCMAP_API_KEY"); }
};

}  // namespace

TEST(RemoteProviderTest, EmbedsBatchInInputOrder) {
  KeyEnv env;
  FakeEndpoint server;
  RemoteProvider p(server.config());
  const std::vector<std::string> texts = {"cloud engineer", "pastry chef", "data scientist"};
  const auto vs = p.embed_batch(texts);
  ASSERT_EQ(vs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(vs[i].is_unit());
    EXPECT_EQ(vs[i].provider_tag(), "remote:test-model/d64");
    const auto expected = local_embed(texts[i], 64);
    for (std::size_t j = 0; j < 64; ++j) EXPECT_NEAR(vs[i].values()[j], expected.values()[j], 1e-6);
  }
  EXPECT_EQ(server.last_auth, "Bearer sk-test");
  EXPECT_EQ(server.model, "test-model");
}

TEST(RemoteProviderTest, ApiKeyHeaderStyle) {
  KeyEnv env;
  FakeEndpoint server;
  auto cfg = server.config();
  cfg.auth = AuthStyle::ApiKeyHeader;
  RemoteProvider p(cfg);
  p.embed_batch(std::vector<std::string>{"x"});
  EXPECT_EQ(server.last_api_key, "sk-test");
  EXPECT_EQ(server.last_auth, "");
}

TEST(RemoteProviderTest, MissingKeyIsUnavailable) {
  ::unsetenv("OCCMAP_API_KEY");
  FakeEndpoint server;
  RemoteProvider p(server.config());
  try {
    p.embed_batch(std::vector<std::string>{"x"});
    FAIL();
  } catch (const EmbeddingError& e) {
    EXPECT_EQ(e.code(), EmbeddingErrc::ProviderUnavailable);
  }
  EXPECT_EQ(server.requests, 0);
}

TEST(RemoteProviderTest, RetriesTransientErrorsWithExponentialBackoff) {
  KeyEnv env;
  FakeEndpoint server;
  server.script = {503, 429, 500};
  std::vector<long> sleeps;
  RemoteProvider p(server.config(), [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  const auto vs = p.embed_batch(std::vector<std::string>{"x"});
  EXPECT_EQ(vs.size(), 1u);
  EXPECT_EQ(server.requests, 4);
  EXPECT_EQ(sleeps, (std::vector<long>{100, 200, 400}));
}

TEST(RemoteProviderTest, GivesUpAfterFiveAttempts) {
  KeyEnv env;
  FakeEndpoint server;
  server.script = {500, 500, 500, 500, 500, 500, 500};
  std::vector<long> sleeps;
  RemoteProvider p(server.config(), [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  try {
    p.embed_batch(std::vector<std::string>{"x"});
    FAIL();
  } catch (const EmbeddingError& e) {
    EXPECT_EQ(e.code(), EmbeddingErrc::ProviderUnavailable);
  }
  EXPECT_EQ(server.requests, 5);
  EXPECT_EQ(sleeps.size(), 4u);
}

TEST(RemoteProviderTest, ConnectionRefusedIsUnavailable) {
  KeyEnv env;
  RemoteConfig cfg;
  {
    FakeEndpoint server;
    cfg = server.config();
  }
  int sleeps = 0;
  RemoteProvider p(cfg, [&](std::chrono::milliseconds) { ++sleeps; });
  EXPECT_THROW(p.embed_batch(std::vector<std::string>{"x"}), EmbeddingError);
  EXPECT_EQ(sleeps, 4);
}

TEST(RemoteProviderTest, ContextLengthErrorTriggersTighterRetry) {
  KeyEnv env;
  FakeEndpoint server;
  server.script = {400};
  RemoteProvider p(server.config());
  std::vector<std::string> logged;
  EmbedOptions opts;
  opts.log = [&](const std::string& s) { logged.push_back(s); };
  const auto v = embed_text("cloud platform engineer role", p, opts);
  EXPECT_TRUE(v.is_unit());
  EXPECT_EQ(server.requests, 2);
  EXPECT_EQ(logged.size(), 1u);
}

TEST(RemoteProviderTest, BatchesUpToProviderLimit) {
  KeyEnv env;
  FakeEndpoint server;
  RemoteProvider p(server.config());
  std::vector<EmbedItem> items;
  for (int i = 0; i < 10; ++i) items.push_back({"p" + std::to_string(i), "text number " + std::to_string(i)});
  std::size_t got = 0;
  const auto stats = embed_items(items, p, nullptr, {}, [&](const std::string&, const EmbeddingVector&) { ++got; },
                                 nullptr);
  EXPECT_EQ(got, 10u);
  EXPECT_EQ(stats.provider_texts, 10u);
  EXPECT_EQ(server.batch_sizes, (std::vector<std::size_t>{4, 4, 2}));
}
