// Command-line entry point: one subcommand per pipeline stage plus the
// end-to-end pipeline, ablation harness and HTTP service.

#include <fmt/format.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ragtune/augment.hpp"
#include "ragtune/chat_client.hpp"
#include "ragtune/corpus.hpp"
#include "ragtune/embedder.hpp"
#include "ragtune/error.hpp"
#include "ragtune/metrics.hpp"
#include "ragtune/pipeline.hpp"
#include "ragtune/querygen.hpp"
#include "ragtune/ragpipe.hpp"
#include "ragtune/records.hpp"
#include "ragtune/retriever.hpp"
#include "ragtune/service.hpp"
#include "ragtune/synthetic_corpus.hpp"
#include "ragtune/trainer.hpp"
#include "ragtune/version.hpp"

using namespace ragtune;
using json = nlohmann::json;

namespace {

std::vector<std::size_t> parse_k_set(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');) {
    try {
      const long long v = std::stoll(part);
      if (v < 1) throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, s, "k list must be positive integers separated by commas");
    }
  }
  if (out.empty()) throw Error(Errc::InvalidArgument, s, "empty k list");
  return out;
}

std::set<QueryType> parse_types(const std::string& s) {
  std::set<QueryType> out;
  if (s == "all") return {kAllQueryTypes.begin(), kAllQueryTypes.end()};
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');) out.insert(parse_query_type(part));
  return out;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, path, "cannot open for writing");
  out << text;
}

void print_hits(const RankedList& list, const Corpus* corpus) {
  if (list.degenerate) {
    std::cout << "query has no usable features\n";
    return;
  }
  for (std::size_t i = 0; i < list.hits.size(); ++i) {
    const auto& h = list.hits[i];
    std::cout << fmt::format("{:>3}  {:<16} {:.6f}", i + 1, h.doc_id, h.score);
    if (corpus) std::cout << "  " << corpus->at(h.doc_id).question;
    std::cout << '\n';
  }
}

/// Sets a dotted path inside a config JSON document from "key=value"; the
/// value is parsed as JSON when possible, otherwise taken as a string.
void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error(Errc::InvalidArgument, assignment, "expected key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &doc;
  std::stringstream ss(key);
  std::vector<std::string> parts;
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
}

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::string corpus, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, k_per_type, n_neg, holdout;
  std::optional<double> lr, tau;
  std::optional<std::string> generator, query_source, k_set;

  void add(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file (see docs/config.md)");
    app->add_option("--set", sets, "Override any config key, e.g. --set train.batch_size=16");
    app->add_option("--corpus", corpus, "Corpus JSONL file");
    app->add_option("--out-dir", out_dir, "Output directory");
    app->add_option("--seed", seed, "Run seed");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--tau", tau, "Contrastive temperature");
    app->add_option("--k-per-type", k_per_type, "Generated queries per (pair, type)");
    app->add_option("--n-neg", n_neg, "Explicit negatives per triple");
    app->add_option("--holdout", holdout, "Held-out queries per QA pair");
    app->add_option("--k", k_set, "Cutoffs for the @k metrics, e.g. 1,3");
    app->add_option("--generator", generator, "echo or chat");
    app->add_option("--query-source", query_source, "synthetic or llm");
  }

  PipelineConfig resolve() const {
    json doc = json::parse(PipelineConfig{}.to_json());
    if (!config_path.empty()) doc = json::parse(load_pipeline_config(config_path).to_json());
    if (!corpus.empty()) doc["corpus_path"] = corpus;
    if (!out_dir.empty()) doc["output_dir"] = out_dir;
    if (seed) doc["seed"] = *seed;
    if (epochs) doc["train"]["epochs"] = *epochs;
    if (lr) doc["train"]["learning_rate"] = *lr;
    if (tau) doc["train"]["tau"] = *tau;
    if (k_per_type) doc["k_per_type"] = *k_per_type;
    if (n_neg) doc["n_neg"] = *n_neg;
    if (holdout) doc["holdout_per_pair"] = *holdout;
    if (k_set) doc["k_set"] = parse_k_set(*k_set);
    if (generator) doc["generator"] = *generator;
    if (query_source) doc["query_source"] = *query_source;
    for (const auto& s : sets) apply_override(doc, s);
    return PipelineConfig::from_json(doc.dump());
  }
};

RagService* g_service = nullptr;

void handle_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval fine-tuning and RAG evaluation toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // ingest
  std::string corpus_path, out_path;
  double split_fraction = 0.0;
  std::uint64_t seed = 42;
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and optionally split it");
  ingest->add_option("--corpus", corpus_path, "Corpus JSONL file")->required();
  ingest->add_option("--out", out_path, "Write the validated corpus here");
  ingest->add_option("--split", split_fraction, "Held-out fraction; writes <out>.train/.test");
  ingest->add_option("--seed", seed, "Split seed");

  // synth-corpus
  std::size_t synth_n = 200;
  std::uint64_t synth_seed = 20240501;
  auto* synth = app.add_subcommand("synth-corpus", "Write the synthetic IP FAQ corpus");
  synth->add_option("--out", out_path, "Output JSONL")->required();
  synth->add_option("--n", synth_n, "Number of QA pairs");
  synth->add_option("--seed", synth_seed, "Generator seed");

  // genqueries
  std::string types_arg = "all", source = "synthetic", language = "english";
  int k_per_type = 3;
  std::size_t concurrency = 4;
  ChatEndpoint endpoint;
  DecodingParams decoding;
  auto add_endpoint = [&](CLI::App* cmd) {
    cmd->add_option("--base-url", endpoint.base_url, "Chat-completions base URL");
    cmd->add_option("--model-name", endpoint.model, "Remote model name");
    cmd->add_option("--api-key-env", endpoint.api_key_env, "Environment variable holding the API key");
    cmd->add_option("--timeout", endpoint.timeout_seconds, "Request timeout in seconds");
    cmd->add_option("--temperature", decoding.temperature, "Sampling temperature");
    cmd->add_option("--max-tokens", decoding.max_output_tokens, "Maximum output tokens");
  };
  auto* genq = app.add_subcommand("genqueries", "Generate query variants for every QA pair");
  genq->add_option("--corpus", corpus_path, "Corpus JSONL file")->required();
  genq->add_option("--out", out_path, "Output JSONL")->required();
  genq->add_option("--types", types_arg, "Comma-separated query types or 'all'");
  genq->add_option("--k-per-type,--k", k_per_type, "Queries per (pair, type)");
  genq->add_option("--source,--client", source, "synthetic (rule-based) or llm")->check(CLI::IsMember({"synthetic", "llm"}));
  genq->add_option("--language", language, "Prompt language for llm")->check(CLI::IsMember({"english", "chinese"}));
  genq->add_option("--concurrency", concurrency, "Maximum in-flight requests");
  genq->add_option("--seed", seed, "Seed for the synthetic source");
  add_endpoint(genq);

  // mine
  std::string queries_path, triples_path;
  int n_neg = 1;
  auto* mine = app.add_subcommand("mine", "Build training triples with sampled negatives");
  mine->add_option("--corpus", corpus_path, "Corpus JSONL file")->required();
  mine->add_option("--queries", queries_path, "Generated queries JSONL")->required();
  mine->add_option("--out", out_path, "Triples JSONL")->required();
  mine->add_option("--n-neg", n_neg, "Negatives per triple");
  mine->add_option("--seed", seed, "Sampling seed");

  // partition
  std::string eval_out;
  int holdout = 2;
  auto* part = app.add_subcommand("partition", "Hold out generated queries per QA pair for evaluation");
  part->add_option("--triples", triples_path, "Triples JSONL")->required();
  part->add_option("--out-train", out_path, "Training triples JSONL")->required();
  part->add_option("--out-eval", eval_out, "Evaluation queries JSONL")->required();
  part->add_option("--holdout", holdout, "Queries withheld per pair");
  part->add_option("--seed", seed, "Selection seed");

  // init-model
  std::uint32_t feat_dim = EmbeddingModel::kDefaultFeatDim, emb_dim = EmbeddingModel::kDefaultEmbDim;
  std::uint64_t hash_seed = 0;
  auto* initm = app.add_subcommand("init-model", "Write a freshly initialized embedding model");
  initm->add_option("--out", out_path, "Model file")->required();
  initm->add_option("--feat-dim", feat_dim, "Hashed feature space size");
  initm->add_option("--emb-dim", emb_dim, "Embedding size");
  initm->add_option("--seed", seed, "Initialization seed");
  initm->add_option("--hash-seed", hash_seed, "Feature hash seed");

  // train
  std::string model_in, model_out, log_path;
  TrainConfig tc;
  std::string optimizer = "adam";
  bool no_inbatch = false;
  auto* trn = app.add_subcommand("train", "Fine-tune the embedding model on triples");
  trn->add_option("--triples", triples_path, "Training triples JSONL")->required();
  trn->add_option("--corpus", corpus_path, "Corpus the triples refer to")->required();
  trn->add_option("--model-in", model_in, "Starting model")->required();
  trn->add_option("--model-out", model_out, "Trained model")->required();
  trn->add_option("--log", log_path, "Training log JSONL");
  trn->add_option("--epochs", tc.epochs, "Epochs");
  trn->add_option("--batch-size", tc.batch_size, "Batch size");
  trn->add_option("--lr", tc.learning_rate, "Learning rate");
  trn->add_option("--tau", tc.tau, "Temperature");
  trn->add_option("--optimizer", optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}));
  trn->add_flag("--no-inbatch", no_inbatch, "Disable in-batch negatives");
  trn->add_option("--seed", tc.seed, "Shuffle seed");

  // index
  std::string model_path, index_path;
  auto* idx = app.add_subcommand("index", "Embed every answer into a vector index");
  idx->add_option("--model", model_path, "Model file")->required();
  idx->add_option("--corpus", corpus_path, "Corpus JSONL file")->required();
  idx->add_option("--out", out_path, "Index file")->required();

  // search
  std::string query;
  std::size_t k = 3;
  auto* srch = app.add_subcommand("search", "Dense top-k search");
  srch->add_option("--model", model_path, "Model file")->required();
  srch->add_option("--index", index_path, "Index file")->required();
  srch->add_option("--corpus", corpus_path, "Corpus, to show questions next to hits");
  srch->add_option("--query", query, "Query text")->required();
  srch->add_option("--k", k, "Number of hits")->check(CLI::PositiveNumber);

  // bm25
  double k1 = Bm25Index::kDefaultK1, b = Bm25Index::kDefaultB;
  std::string eval_path, k_arg = "1,3";
  auto* bm = app.add_subcommand("bm25", "Okapi BM25 search or evaluation");
  bm->add_option("--corpus", corpus_path, "Corpus JSONL file")->required();
  bm->add_option("--k1", k1, "Term frequency saturation");
  bm->add_option("--b", b, "Length normalization");
  bm->add_option("--query", query, "Query text");
  bm->add_option("--k", k, "Number of hits")->check(CLI::PositiveNumber);
  bm->add_option("--eval-queries", eval_path, "Evaluate on these queries instead of searching");
  bm->add_option("--k-set", k_arg, "Cutoffs for evaluation, e.g. 1,3");

  // eval-retrieval
  auto* evr = app.add_subcommand("eval-retrieval", "Hit@k, MRR, Precision@k and NDCG@k on evaluation queries");
  evr->add_option("--model", model_path, "Model file")->required();
  evr->add_option("--index", index_path, "Index file")->required();
  std::string original_corpus;
  auto* evr_queries = evr->add_option("--eval-queries", eval_path, "Evaluation queries JSONL");
  auto* evr_original =
      evr->add_option("--original-questions", original_corpus, "Evaluate on the questions of this corpus instead");
  evr_queries->excludes(evr_original);
  evr->add_option("--k", k_arg, "Cutoffs, e.g. 1,3");
  evr->add_option("--out", out_path, "Report JSONL (table goes to stdout)");

  // eval-generation
  std::string predictions_path, references_path, rouge1_mode = "recall";
  TextMetricOptions text_opts;
  auto* evg = app.add_subcommand("eval-generation", "ROUGE, BLEU and token-embedding F1 of predictions");
  evg->add_option("--predictions", predictions_path, "JSONL of {\"id\",\"text\"}")->required();
  evg->add_option("--references", references_path, "JSONL of {\"id\",\"text\"}")->required();
  evg->add_option("--model", model_path, "Model for token embeddings")->required();
  evg->add_option("--rouge1-mode", rouge1_mode, "recall or f1")->check(CLI::IsMember({"recall", "f1"}));
  evg->add_option("--beta", text_opts.rouge_l_beta, "ROUGE-L beta");
  evg->add_option("--bleu-max-n", text_opts.bleu.max_n, "Highest BLEU order");
  evg->add_flag("--bleu-strict", text_opts.bleu.strict, "Score 0 when a text is shorter than the order");
  evg->add_option("--out", out_path, "Report JSONL (table goes to stdout)");

  // rag-eval
  std::string generator = "echo";
  std::size_t max_input_tokens = kDefaultMaxInputTokens;
  auto* rag = app.add_subcommand("rag-eval", "Retrieve, prompt, generate and score in one pass");
  rag->add_option("--corpus", corpus_path, "Corpus JSONL file")->required();
  rag->add_option("--model", model_path, "Model file")->required();
  rag->add_option("--index", index_path, "Index file")->required();
  rag->add_option("--eval-queries", eval_path, "Evaluation queries JSONL")->required();
  rag->add_option("--generator", generator, "echo or chat")->check(CLI::IsMember({"echo", "chat"}));
  rag->add_option("--rag-k", k, "Contexts per prompt")->check(CLI::PositiveNumber);
  rag->add_option("--k", k_arg, "Retrieval cutoffs, e.g. 1,3");
  rag->add_option("--max-input-tokens", max_input_tokens, "Prompt token cap");
  rag->add_option("--concurrency", concurrency, "Maximum in-flight generator calls");
  rag->add_option("--out", out_path, "Report JSONL (tables go to stdout)");
  add_endpoint(rag);

  // diversity
  auto* div = app.add_subcommand("diversity", "Distance of generated queries from their source question");
  div->add_option("--queries", queries_path, "Generated queries JSONL")->required();
  div->add_option("--corpus", corpus_path, "Corpus JSONL file")->required();
  div->add_option("--model", model_path, "Model file")->required();
  div->add_option("--out", out_path, "CSV output")->required();

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* srv = app.add_subcommand("serve", "HTTP question answering endpoint");
  srv->add_option("--corpus", corpus_path, "Corpus JSONL file")->required();
  srv->add_option("--model", model_path, "Model file")->required();
  srv->add_option("--index", index_path, "Index file")->required();
  srv->add_option("--host", host, "Bind address");
  srv->add_option("--port", port, "Port");
  srv->add_option("--generator", generator, "echo or chat")->check(CLI::IsMember({"echo", "chat"}));
  srv->add_option("--k", k, "Default number of contexts")->check(CLI::PositiveNumber);
  srv->add_option("--max-input-tokens", max_input_tokens, "Prompt token cap");
  add_endpoint(srv);

  // pipeline / ablate
  ConfigFlags pipe_flags, ablate_flags;
  bool print_config = false;
  auto* pipe = app.add_subcommand("pipeline", "Run generate, mine, partition, train, index and evaluate");
  pipe_flags.add(pipe);
  pipe->add_flag("--print-config", print_config, "Print the resolved config and exit");
  auto* abl = app.add_subcommand("ablate", "Compare the untrained and fine-tuned retriever");
  ablate_flags.add(abl);
  abl->add_flag("--print-config", print_config, "Print the resolved config and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      const auto corpus = load_corpus(corpus_path);
      std::cout << fmt::format("{}: {} QA pairs\n", corpus.name(), corpus.size());
      if (!out_path.empty()) save_corpus(corpus, out_path);
      if (split_fraction > 0.0) {
        if (out_path.empty()) throw Error(Errc::InvalidArgument, "--out", "required with --split");
        const auto split = split_corpus(corpus, split_fraction, seed);
        save_corpus(split.train, out_path + ".train");
        save_corpus(split.test, out_path + ".test");
        std::cout << fmt::format("train {} / test {}\n", split.train.size(), split.test.size());
      }
    } else if (synth->parsed()) {
      save_corpus(make_synthetic_corpus(synth_n, synth_seed), out_path);
    } else if (genq->parsed()) {
      const auto corpus = load_corpus(corpus_path);
      const auto types = parse_types(types_arg);
      GenerationResult result;
      if (source == "synthetic") {
        result = synthesize_queries(corpus, types, k_per_type, seed);
      } else {
        HttpChatClient client(endpoint);
        GenerationOptions opts;
        opts.k_per_type = k_per_type;
        opts.decoding = decoding;
        opts.language = language == "english" ? PromptLanguage::English : PromptLanguage::Chinese;
        opts.max_concurrency = concurrency;
        result = generate_queries(corpus, types, client, opts);
      }
      write_generated_queries(result.queries, out_path);
      for (const auto& f : result.failures)
        std::cerr << fmt::format("warning: {} / {}: {}\n", f.qa_id, to_string(f.query_type), f.message);
      std::cout << fmt::format("{} queries, {} failed cells\n", result.queries.size(), result.failures.size());
    } else if (mine->parsed()) {
      const auto corpus = load_corpus(corpus_path);
      const auto set = mine_triples(read_generated_queries(queries_path), corpus, n_neg, seed);
      write_triples(set, out_path);
      std::cout << fmt::format("{} triples\n", set.triples.size());
    } else if (part->parsed()) {
      const auto p = partition_triples(read_triples(triples_path), holdout, seed);
      write_triples(p.train, out_path);
      write_eval_queries(p.eval_queries, eval_out);
      std::cout << fmt::format("{} training triples, {} evaluation queries\n", p.train.triples.size(),
                               p.eval_queries.size());
    } else if (initm->parsed()) {
      persist_model(init_model(feat_dim, emb_dim, seed, hash_seed), out_path);
    } else if (trn->parsed()) {
      tc.optimizer = parse_optimizer(optimizer);
      tc.use_inbatch_negatives = !no_inbatch;
      const auto result = train(restore_model(model_in), read_triples(triples_path), load_corpus(corpus_path), tc);
      persist_model(result.model, model_out);
      if (!log_path.empty()) write_train_log(result.log, log_path);
      for (const auto& e : result.log.epochs)
        std::cout << fmt::format("epoch {}  loss {:.6f}  grad-norm {:.6f}\n", e.epoch, e.mean_loss, e.mean_grad_norm);
      std::cout << fmt::format("wall time {:.1f} s\n", result.log.wall_time_seconds);
    } else if (idx->parsed()) {
      persist_index(build_index(restore_model(model_path), load_corpus(corpus_path)), out_path);
    } else if (srch->parsed()) {
      std::optional<Corpus> corpus;
      if (!corpus_path.empty()) corpus = load_corpus(corpus_path);
      print_hits(search(restore_index(index_path), restore_model(model_path), query, k), corpus ? &*corpus : nullptr);
    } else if (bm->parsed()) {
      const auto corpus = load_corpus(corpus_path);
      const Bm25Index index(corpus, k1, b);
      if (!eval_path.empty()) {
        const auto report = evaluate_retrieval(index, read_eval_queries(eval_path), parse_k_set(k_arg));
        std::vector<std::pair<std::string, RetrievalReport>> rows = {{"bm25", report}};
        std::cout << report_table(rows);
      } else {
        if (query.empty()) throw Error(Errc::InvalidArgument, "--query", "required without --eval-queries");
        print_hits(index.search(query, k), &corpus);
      }
    } else if (evr->parsed()) {
      if (eval_path.empty() == original_corpus.empty())
        throw Error(Errc::InvalidArgument, "eval-retrieval", "give --eval-queries or --original-questions");
      const auto queries = original_corpus.empty() ? read_eval_queries(eval_path)
                                                   : original_question_queries(load_corpus(original_corpus));
      const auto report = evaluate_retrieval(restore_index(index_path), restore_model(model_path), queries,
                                             parse_k_set(k_arg));
      std::vector<std::pair<std::string, RetrievalReport>> rows = {{"dense", report}};
      std::cout << report_table(rows);
      if (!out_path.empty()) write_or_print(out_path, report_record(report, "dense") + "\n");
    } else if (evg->parsed()) {
      auto read_texts = [](const std::string& path) {
        std::map<std::string, std::string> out;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(Errc::FileNotFound, path);
        std::string line;
        for (std::size_t n = 1; std::getline(in, line); ++n) {
          if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
          try {
            const auto j = json::parse(line);
            out[j.at("id").get<std::string>()] = j.at("text").get<std::string>();
          } catch (const json::exception& e) {
            throw Error(Errc::MalformedRecord, path + ":" + std::to_string(n), e.what());
          }
        }
        return out;
      };
      text_opts.rouge1_mode = parse_rouge1_mode(rouge1_mode);
      const auto report = evaluate_generation(read_texts(predictions_path), read_texts(references_path),
                                              restore_model(model_path), text_opts);
      std::vector<std::pair<std::string, GenerationReport>> rows = {{"predictions", report}};
      std::cout << report_table(rows);
      if (!out_path.empty()) write_or_print(out_path, report_record(report, "predictions") + "\n");
    } else if (rag->parsed()) {
      const auto corpus = load_corpus(corpus_path);
      const auto model = restore_model(model_path);
      const auto index = restore_index(index_path);
      PipelineConfig cfg;
      cfg.generator = generator == "echo" ? GeneratorKind::Echo : GeneratorKind::Chat;
      cfg.generator_endpoint = endpoint;
      auto gen = make_generator(cfg);
      EndToEndOptions opts;
      opts.rag = {k, max_input_tokens, decoding};
      opts.k_set = parse_k_set(k_arg);
      opts.max_concurrency = concurrency;
      const auto report = evaluate_end2end(read_eval_queries(eval_path), corpus, index, model, *gen, opts);
      std::vector<std::pair<std::string, RetrievalReport>> r = {{"rag", report.retrieval}};
      std::vector<std::pair<std::string, GenerationReport>> g = {{"rag", report.generation}};
      std::cout << report_table(r) << '\n' << report_table(g);
      if (!out_path.empty())
        write_or_print(out_path, report_record(report.retrieval, "rag") + "\n" +
                                     report_record(report.generation, "rag") + "\n");
    } else if (div->parsed()) {
      const auto table = diversity_report(read_generated_queries(queries_path), load_corpus(corpus_path),
                                          restore_model(model_path), out_path);
      for (const auto& [type, mean] : table.type_means)
        std::cout << fmt::format("{:<16} {:.4f}\n", to_string(type), mean);
    } else if (srv->parsed()) {
      PipelineConfig cfg;
      cfg.generator = generator == "echo" ? GeneratorKind::Echo : GeneratorKind::Chat;
      cfg.generator_endpoint = endpoint;
      ServiceState state;
      state.corpus = load_corpus(corpus_path);
      state.model = restore_model(model_path);
      state.index = restore_index(index_path);
      state.generator = make_generator(cfg);
      state.rag = {k, max_input_tokens, decoding};
      RagService service(std::move(state));
      if (!service.bind(host, port)) throw Error(Errc::IoError, fmt::format("{}:{}", host, port), "cannot bind");
      g_service = &service;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::cerr << fmt::format("listening on http://{}:{}\n", host, port);
      service.listen_after_bind();
      g_service = nullptr;
    } else if (pipe->parsed()) {
      const auto config = pipe_flags.resolve();
      if (print_config) {
        std::cout << config.to_json() << '\n';
        return 0;
      }
      const auto result = run_pipeline(config);
      std::cout << std::ifstream(config.output_dir / "report.txt").rdbuf();
      std::cout << fmt::format("manifest: {}\n", (config.output_dir / "manifest.json").string());
    } else if (abl->parsed()) {
      const auto config = ablate_flags.resolve();
      if (print_config) {
        std::cout << config.to_json() << '\n';
        return 0;
      }
      const auto report = run_ablation(config);
      std::cout << std::ifstream(config.output_dir / "ablation.txt").rdbuf();
      return report.meets_thresholds ? 0 : 3;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
