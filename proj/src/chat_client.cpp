#include "ragtune/chat_client.hpp"

#include <cmath>
#include <cstdlib>

#include "httplib.h"
#include "json.hpp"
#include "ragtune/error.hpp"

namespace ragtune {

using json = nlohmann::json;

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(Errc::InvalidArgument, base_url, "base URL needs a scheme");
  const auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string path = base_url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {base_url.substr(0, path_start), path};
}

namespace {

json post_json(const std::string& origin, const std::string& path, const ChatEndpoint& endpoint,
               const json& body) {
  httplib::Client client(origin);
  client.set_connection_timeout(endpoint.timeout_seconds);
  client.set_read_timeout(endpoint.timeout_seconds);
  httplib::Headers headers;
  if (const char* key = std::getenv(endpoint.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw Error(Errc::ClientError, origin + path, "transport: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw Error(Errc::ClientError, origin + path,
                "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error(Errc::ClientError, origin + path, std::string("unparseable body: ") + e.what());
  }
}

}  // namespace

HttpChatClient::HttpChatClient(ChatEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  std::tie(origin_, path_prefix_) = split_base_url(endpoint_.base_url);
}

std::string HttpChatClient::complete(const std::string& system_prompt, const std::string& user_prompt,
                                     const DecodingParams& decoding) {
  json messages = json::array();
  if (!system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", system_prompt}});
  messages.push_back({{"role", "user"}, {"content", user_prompt}});
  const json body = {{"model", endpoint_.model},
                     {"messages", messages},
                     {"temperature", decoding.temperature},
                     {"max_tokens", decoding.max_output_tokens}};

  const json reply = post_json(origin_, path_prefix_ + "/chat/completions", endpoint_, body);
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::ClientError, endpoint_.base_url, std::string("unexpected reply shape: ") + e.what());
  }
}

HttpEmbeddingClient::HttpEmbeddingClient(ChatEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  std::tie(origin_, path_prefix_) = split_base_url(endpoint_.base_url);
}

std::vector<double> HttpEmbeddingClient::embed(const std::string& text) {
  const json body = {{"model", endpoint_.model}, {"input", text}};
  const json reply = post_json(origin_, path_prefix_ + "/embeddings", endpoint_, body);
  std::vector<double> v;
  try {
    v = reply.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(Errc::ClientError, endpoint_.base_url, std::string("unexpected reply shape: ") + e.what());
  }
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 > 0.0)
    for (double& x : v) x /= std::sqrt(norm2);
  return v;
}

}  // namespace ragtune
