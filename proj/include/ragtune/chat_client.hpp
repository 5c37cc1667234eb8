#pragma once

#include <string>
#include <vector>

#include "ragtune/querygen.hpp"

namespace ragtune {

/// Where a chat-completions-style service lives. The credential is read from
/// the environment variable named by api_key_env at call time; it is never
/// stored in configs or manifests.
struct ChatEndpoint {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4";
  std::string api_key_env = "RAGTUNE_API_KEY";
  int timeout_seconds = 60;
};

/// POST {base_url}/chat/completions with
///   {"model", "messages":[{"role":"system",...},{"role":"user",...}],
///    "temperature", "max_tokens"}
/// and returns choices[0].message.content. Non-2xx responses, transport
/// failures and malformed bodies throw Error(ClientError).
class HttpChatClient : public GenerationClient {
 public:
  explicit HttpChatClient(ChatEndpoint endpoint);

  std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                       const DecodingParams& decoding) override;

  const ChatEndpoint& endpoint() const noexcept { return endpoint_; }

 private:
  ChatEndpoint endpoint_;
  std::string origin_;
  std::string path_prefix_;
};

/// Optional hook for pretrained embedding services: POST {base_url}/embeddings
/// with {"model", "input"} and reads data[0].embedding. Returned vectors are
/// L2-normalized like the built-in embedder.
class HttpEmbeddingClient {
 public:
  explicit HttpEmbeddingClient(ChatEndpoint endpoint);
  std::vector<double> embed(const std::string& text);

 private:
  ChatEndpoint endpoint_;
  std::string origin_;
  std::string path_prefix_;
};

/// Splits "https://host:port/v1" into ("https://host:port", "/v1").
std::pair<std::string, std::string> split_base_url(const std::string& base_url);

}  // namespace ragtune
