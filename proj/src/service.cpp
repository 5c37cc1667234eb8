#include "ragtune/service.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cstdio>

#include "httplib.h"
#include "json.hpp"
#include "ragtune/error.hpp"
#include "ragtune/pipeline.hpp"
#include "ragtune/version.hpp"

namespace ragtune {

using json = nlohmann::json;

struct RagService::Impl {
  ServiceState state;
  std::string index_checksum;
  httplib::Server server;

  json contexts(const RankedList& hits, std::size_t k) const {
    json out = json::array();
    for (std::size_t i = 0; i < std::min(k, hits.hits.size()); ++i) {
      const auto& h = hits.hits[i];
      out.push_back({{"doc_id", h.doc_id}, {"score", h.score}, {"text", state.corpus.at(h.doc_id).answer}});
    }
    return out;
  }

  void reply(httplib::Response& res, int status, const json& body) const {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void health(const httplib::Request&, httplib::Response& res) const {
    reply(res, 200,
          {{"status", "ok"},
           {"version", kVersion},
           {"model_fingerprint", hex64(state.model.fingerprint())},
           {"index_model_fingerprint", hex64(state.index.model_fingerprint)},
           {"index_checksum", index_checksum},
           {"documents", state.index.size()}});
  }

  void query(const httplib::Request& req, httplib::Response& res) const {
    const auto started = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started)
          .count();
    };
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return reply(res, 400, {{"error", "body is not valid JSON"}});
    }
    if (!body.is_object() || !body.contains("query") || !body["query"].is_string())
      return reply(res, 400, {{"error", "body must be an object with a string \"query\""}});
    std::size_t k = state.rag.k;
    if (body.contains("k")) {
      if (!body["k"].is_number_integer() || body["k"].get<long long>() < 1 ||
          body["k"].get<long long>() > static_cast<long long>(state.max_k))
        return reply(res, 400, {{"error", fmt::format("\"k\" must be an integer in [1, {}]", state.max_k)}});
      k = body["k"].get<std::size_t>();
    }
    const auto q = body["query"].get<std::string>();

    const auto hits = search(state.index, state.model, q, k);
    if (hits.degenerate)
      return reply(res, 422, {{"error", "query has no usable features"}, {"contexts", json::array()}});

    std::vector<ContextDoc> docs;
    for (const auto& h : hits.hits) docs.push_back({h.doc_id, state.corpus.at(h.doc_id).answer});
    PromptBundle prompt;
    try {
      prompt = assemble_prompt(q, docs, state.rag.max_input_tokens);
    } catch (const Error& e) {
      return reply(res, 400, {{"error", e.what()}});
    }
    try {
      const auto text = state.generator->complete(prompt, state.rag.decoding);
      reply(res, 200, {{"answer", text}, {"contexts", contexts(hits, k)}, {"latency_ms", elapsed()}});
    } catch (const std::exception& e) {
      reply(res, 502,
            {{"error", std::string("generator failed: ") + e.what()},
             {"contexts", contexts(hits, k)},
             {"latency_ms", elapsed()}});
    }
  }
};

RagService::RagService(ServiceState state) : impl_(std::make_unique<Impl>()) {
  if (state.model.fingerprint() != state.index.model_fingerprint)
    throw Error(Errc::FingerprintMismatch, hex64(state.model.fingerprint()),
                "index was built with model " + hex64(state.index.model_fingerprint));
  if (!state.generator) state.generator = std::make_unique<EchoGeneratorClient>();
  impl_->index_checksum = hex64(state.index.checksum());
  impl_->state = std::move(state);

  auto* impl = impl_.get();
  impl->server.Get("/v1/health", [impl](const httplib::Request& req, httplib::Response& res) { impl->health(req, res); });
  impl->server.Post("/v1/query", [impl](const httplib::Request& req, httplib::Response& res) { impl->query(req, res); });
  impl->server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(json{{"error", what}}.dump(), "application/json");
  });
  // Each request is handled and logged on one worker thread.
  static thread_local std::chrono::steady_clock::time_point request_start;
  impl->server.set_pre_routing_handler([](const httplib::Request&, httplib::Response&) {
    request_start = std::chrono::steady_clock::now();
    return httplib::Server::HandlerResponse::Unhandled;
  });
  impl->server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - request_start).count();
    std::fprintf(stderr, "%s %s -> %d (%.1f ms)\n", req.method.c_str(), req.path.c_str(), res.status, ms);
  });
}

RagService::~RagService() { stop(); }

int RagService::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool RagService::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }
bool RagService::listen_after_bind() { return impl_->server.listen_after_bind(); }
void RagService::stop() {
  if (impl_) impl_->server.stop();
}
void RagService::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace ragtune
