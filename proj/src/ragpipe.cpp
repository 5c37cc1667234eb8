#include "ragtune/ragpipe.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <thread>

namespace ragtune {

namespace {

constexpr std::string_view kSystemPrompt =
    "You are an expert in the field of intellectual property who is good at answering questions based on given "
    "documents. Please answer the questions based on the given documents.";

std::string user_text(std::string_view query, std::span<const ContextDoc> docs, std::size_t n) {
  std::string s = "Question: ";
  s += query;
  s += "\nContext: ";
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += "\n\n";
    s += docs[i].text;
  }
  return s;
}

}  // namespace

std::string_view rag_system_prompt() noexcept { return kSystemPrompt; }

std::size_t prompt_token_count(std::string_view system_text, std::string_view user_text) {
  return tokenize(system_text).size() + tokenize(user_text).size();
}

PromptBundle assemble_prompt(std::string_view query, std::span<const ContextDoc> docs,
                             std::size_t max_input_tokens) {
  PromptBundle b;
  b.system_text = std::string(kSystemPrompt);
  std::size_t n = docs.size();
  for (;;) {
    b.user_text = user_text(query, docs, n);
    b.token_count = prompt_token_count(b.system_text, b.user_text);
    if (b.token_count <= max_input_tokens) break;
    if (n == 0)
      throw Error(Errc::QueryAloneExceedsCap, std::to_string(b.token_count),
                  "prompt without context exceeds " + std::to_string(max_input_tokens) + " tokens");
    --n;
  }
  b.truncated = n < docs.size();
  for (std::size_t i = 0; i < n; ++i) {
    b.included_doc_ids.push_back(docs[i].doc_id);
    b.included_contexts.push_back(docs[i].text);
  }
  return b;
}

std::string EchoGeneratorClient::complete(const PromptBundle& prompt, const DecodingParams&) {
  return prompt.included_contexts.empty() ? std::string() : prompt.included_contexts.front();
}

std::string ChatGeneratorClient::complete(const PromptBundle& prompt, const DecodingParams& decoding) {
  return chat_.complete(prompt.system_text, prompt.user_text, decoding);
}

GeneratorFailure::GeneratorFailure(PromptBundle prompt, RankedList hits, const std::string& cause)
    : Error(Errc::GeneratorError, hits.query_id, cause), prompt_(std::move(prompt)), hits_(std::move(hits)) {}

namespace {

PromptBundle prompt_for(std::string_view query, const RankedList& hits, const Corpus& corpus, std::size_t k,
                        std::size_t max_input_tokens) {
  std::vector<ContextDoc> docs;
  for (std::size_t i = 0; i < std::min(k, hits.hits.size()); ++i) {
    const auto& id = hits.hits[i].doc_id;
    docs.push_back({id, corpus.at(id).answer});
  }
  return assemble_prompt(query, docs, max_input_tokens);
}

std::string call_generator(GeneratorClient& generator, const PromptBundle& prompt, const RankedList& hits,
                           const DecodingParams& decoding) {
  try {
    return generator.complete(prompt, decoding);
  } catch (const std::exception& e) {
    throw GeneratorFailure(prompt, hits, e.what());
  }
}

}  // namespace

RagAnswer answer(std::string_view query, const VectorIndex& index, const EmbeddingModel& model,
                 const Corpus& corpus, GeneratorClient& generator, const RagOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  RagAnswer out;
  out.query = std::string(query);
  out.hits = search(index, model, query, options.k);
  out.prompt = prompt_for(query, out.hits, corpus, options.k, options.max_input_tokens);
  out.answer_text = call_generator(generator, out.prompt, out.hits, options.decoding);
  out.latency_ms = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count());
  return out;
}

EndToEndReport evaluate_end2end(std::span<const EvalQuery> queries, const Corpus& corpus, const VectorIndex& index,
                                const EmbeddingModel& model, GeneratorClient& generator,
                                const EndToEndOptions& options) {
  if (queries.empty()) throw Error(Errc::EmptyEvalSet, "eval_queries");
  std::vector<RankedList> ranked;
  std::vector<PromptBundle> prompts;
  ranked.reserve(queries.size());
  for (const auto& q : queries) {
    ranked.push_back(search(index, model, q.query_text, kFullDepth, q.query_id));
    prompts.push_back(prompt_for(q.query_text, ranked.back(), corpus, options.rag.k, options.rag.max_input_tokens));
  }

  std::vector<std::string> outputs(queries.size());
  std::vector<std::exception_ptr> errors(queries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < queries.size();) {
      try {
        outputs[i] = call_generator(generator, prompts[i], ranked[i], options.rag.decoding);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.max_concurrency, 1, queries.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  EndToEndReport report;
  report.retrieval = retrieval_report(ranked, RelevanceJudgments::from_eval_queries(queries), options.k_set);
  std::map<std::string, std::string> references;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    report.predictions[queries[i].query_id] = std::move(outputs[i]);
    references[queries[i].query_id] = corpus.at(queries[i].positive_answer_id).answer;
  }
  report.generation = evaluate_generation(report.predictions, references, model, options.metrics);
  return report;
}

}  // namespace ragtune
