#include <cstdlib>
#include <mutex>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "ragtune/chat_client.hpp"
#include "ragtune/pipeline.hpp"
#include "ragtune/service.hpp"
#include "ragtune/version.hpp"
#include "support.hpp"

using namespace ragtune;
using json = nlohmann::json;
using testing::error_code_of;

namespace {

// Minimal chat-completions and embeddings backend on an ephemeral port.
class FakeBackend {
 public:
  FakeBackend() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = json::parse(req.body);
      res.status = status_;
      res.set_content(reply_, "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"data":[{"embedding":[3.0, 4.0]}]})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeBackend() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  void respond(int status, std::string body) {
    std::lock_guard lock(mu_);
    status_ = status;
    reply_ = std::move(body);
  }
  void respond_content(const std::string& content) {
    respond(200, json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump());
  }
  std::string last_auth() {
    std::lock_guard lock(mu_);
    return last_auth_;
  }
  json last_body() {
    std::lock_guard lock(mu_);
    return last_body_;
  }

 private:
  httplib::Server server_;
  int port_ = -1;
  std::thread thread_;
  std::mutex mu_;
  int status_ = 200;
  std::string reply_;
  std::string last_auth_;
  json last_body_;
};

ChatEndpoint endpoint_for(const FakeBackend& fake, const std::string& env) {
  ChatEndpoint e;
  e.base_url = fake.base_url();
  e.model = "test-model";
  e.api_key_env = env;
  e.timeout_seconds = 5;
  return e;
}

class RunningService {
 public:
  explicit RunningService(ServiceState state) : service_(std::move(state)) {
    port_ = service_.bind_any_port("127.0.0.1");
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { service_.listen_after_bind(); });
    service_.wait_until_ready();
  }
  ~RunningService() {
    service_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  RagService service_;
  int port_ = -1;
  std::thread thread_;
};

class FailingGenerator : public GeneratorClient {
 public:
  std::string complete(const PromptBundle&, const DecodingParams&) override { throw std::runtime_error("down"); }
};

ServiceState make_state(std::unique_ptr<GeneratorClient> gen) {
  ServiceState s;
  s.corpus = testing::small_corpus(6);
  s.model = init_model(1u << 12, 16, 2);
  s.index = build_index(s.model, s.corpus);
  s.generator = std::move(gen);
  return s;
}

}  // namespace

TEST_CASE("base url splitting") {
  CHECK(split_base_url("https://api.example.com/v1") == std::pair<std::string, std::string>{"https://api.example.com", "/v1"});
  CHECK(split_base_url("http://127.0.0.1:8080") == std::pair<std::string, std::string>{"http://127.0.0.1:8080", ""});
  CHECK(split_base_url("http://h:1/a/b/") == std::pair<std::string, std::string>{"http://h:1", "/a/b"});
  CHECK(error_code_of([] { split_base_url("api.example.com/v1"); }) == Errc::InvalidArgument);
}

TEST_CASE("chat client request and reply") {
  FakeBackend fake;
  ::setenv("RAGTUNE_TEST_KEY_A", "sekret-123", 1);
  HttpChatClient client(endpoint_for(fake, "RAGTUNE_TEST_KEY_A"));
  fake.respond_content("1. first\n2. second");
  DecodingParams d;
  d.temperature = 0.2;
  d.max_output_tokens = 64;
  CHECK(client.complete("sys", "user text", d) == "1. first\n2. second");
  CHECK(fake.last_auth() == "Bearer sekret-123");
  const auto body = fake.last_body();
  CHECK(body["model"] == "test-model");
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][0]["content"] == "sys");
  CHECK(body["messages"][1]["role"] == "user");
  CHECK(body["messages"][1]["content"] == "user text");
  CHECK(body["temperature"].get<double>() == doctest::Approx(0.2));
  CHECK(body["max_tokens"] == 64);

  ::unsetenv("RAGTUNE_TEST_KEY_A");
  client.complete("s", "u", d);
  CHECK(fake.last_auth().empty());

  fake.respond(500, R"({"error":"overloaded"})");
  CHECK(error_code_of([&] { client.complete("s", "u", d); }) == Errc::ClientError);
  fake.respond(200, "not json");
  CHECK(error_code_of([&] { client.complete("s", "u", d); }) == Errc::ClientError);
  fake.respond(200, R"({"choices":[]})");
  CHECK(error_code_of([&] { client.complete("s", "u", d); }) == Errc::ClientError);
}

TEST_CASE("transport failure is a client error") {
  int port;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  ChatEndpoint e;
  e.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  e.timeout_seconds = 2;
  HttpChatClient client(e);
  CHECK(error_code_of([&] { client.complete("s", "u", {}); }) == Errc::ClientError);
}

TEST_CASE("query generation over http") {
  FakeBackend fake;
  fake.respond_content("1. alpha\n2. beta\n3. gamma");
  HttpChatClient client(endpoint_for(fake, "RAGTUNE_TEST_KEY_UNSET"));
  const auto corpus = testing::small_corpus(2);
  GenerationOptions opts;
  opts.max_concurrency = 3;
  const auto r = generate_queries(corpus, {QueryType::Keyword, QueryType::WebSearch}, client, opts);
  CHECK(r.queries.size() == 12);
  CHECK(r.failures.empty());
}

TEST_CASE("embedding client normalizes") {
  FakeBackend fake;
  HttpEmbeddingClient client(endpoint_for(fake, "RAGTUNE_TEST_KEY_UNSET"));
  const auto v = client.embed("anything");
  REQUIRE(v.size() == 2);
  CHECK(v[0] == doctest::Approx(0.6));
  CHECK(v[1] == doctest::Approx(0.8));
}

TEST_CASE("service endpoints") {
  auto state = make_state(std::make_unique<EchoGeneratorClient>());
  const auto corpus = state.corpus;
  const auto fingerprint = state.model.fingerprint();
  const auto checksum = state.index.checksum();
  RunningService svc(std::move(state));
  auto cli = svc.client();

  const auto health = cli.Get("/v1/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  const auto h = json::parse(health->body);
  CHECK(h["status"] == "ok");
  CHECK(h["version"] == std::string(kVersion));
  CHECK(h["documents"] == 6);
  CHECK(h["model_fingerprint"] == h["index_model_fingerprint"]);
  CHECK(h["model_fingerprint"] == hex64(fingerprint));
  CHECK(h["index_checksum"] == hex64(checksum));

  const auto ok = cli.Post("/v1/query", json{{"query", corpus[2].answer}, {"k", 2}}.dump(), "application/json");
  REQUIRE(ok);
  CHECK(ok->status == 200);
  const auto body = json::parse(ok->body);
  CHECK(body["answer"] == corpus[2].answer);
  REQUIRE(body["contexts"].size() == 2);
  CHECK(body["contexts"][0]["doc_id"] == corpus[2].id);
  CHECK(body["contexts"][0]["text"] == corpus[2].answer);
  CHECK(body["contexts"][0]["score"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(body["latency_ms"].get<std::int64_t>() >= 0);

  const auto dflt = cli.Post("/v1/query", R"({"query":"patent fee"})", "application/json");
  REQUIRE(dflt);
  CHECK(json::parse(dflt->body)["contexts"].size() == 3);

  for (const char* bad : {"not json", R"({"k":2})", R"({"query":7})", R"({"query":"x","k":0})",
                          R"({"query":"x","k":"3"})", R"({"query":"x","k":1000})", "[1,2]"}) {
    const auto r = cli.Post("/v1/query", bad, "application/json");
    REQUIRE(r);
    INFO(bad);
    CHECK(r->status == 400);
    CHECK(json::parse(r->body).contains("error"));
  }
  const auto degenerate = cli.Post("/v1/query", R"({"query":"?!"})", "application/json");
  REQUIRE(degenerate);
  CHECK(degenerate->status == 422);

  const auto missing = cli.Get("/v1/nothing");
  REQUIRE(missing);
  CHECK(missing->status == 404);
}

TEST_CASE("service reports generator failures with contexts") {
  RunningService svc(make_state(std::make_unique<FailingGenerator>()));
  auto cli = svc.client();
  const auto r = cli.Post("/v1/query", R"({"query":"patent fee","k":2})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 502);
  const auto body = json::parse(r->body);
  CHECK(body.contains("error"));
  CHECK(body["contexts"].size() == 2);
}

TEST_CASE("service refuses a mismatched index") {
  auto state = make_state(std::make_unique<EchoGeneratorClient>());
  state.model = init_model(1u << 12, 16, 3);
  CHECK(error_code_of([&] { RagService s(std::move(state)); }) == Errc::FingerprintMismatch);
}
