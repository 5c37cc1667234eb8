#include "ragtune/pipeline.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ragtune/records.hpp"
#include "ragtune/retriever.hpp"
#include "ragtune/rng.hpp"
#include "ragtune/version.hpp"
#include "ragtune/xxhash64.hpp"

namespace ragtune {

using json = nlohmann::ordered_json;

namespace {

std::string_view to_string(QuerySource s) { return s == QuerySource::Synthetic ? "synthetic" : "llm"; }
std::string_view to_string(GeneratorKind g) { return g == GeneratorKind::Echo ? "echo" : "chat"; }
std::string_view to_string(PromptLanguage l) { return l == PromptLanguage::English ? "english" : "chinese"; }

QuerySource parse_source(const std::string& s) {
  if (s == "synthetic") return QuerySource::Synthetic;
  if (s == "llm") return QuerySource::Llm;
  throw Error(Errc::InvalidArgument, s, "query_source must be synthetic or llm");
}

GeneratorKind parse_generator(const std::string& s) {
  if (s == "echo") return GeneratorKind::Echo;
  if (s == "chat") return GeneratorKind::Chat;
  throw Error(Errc::InvalidArgument, s, "generator must be echo or chat");
}

PromptLanguage parse_language(const std::string& s) {
  if (s == "english") return PromptLanguage::English;
  if (s == "chinese") return PromptLanguage::Chinese;
  throw Error(Errc::InvalidArgument, s, "prompt_language must be english or chinese");
}

json endpoint_json(const ChatEndpoint& e) {
  return {{"base_url", e.base_url},
          {"model", e.model},
          {"api_key_env", e.api_key_env},
          {"timeout_seconds", e.timeout_seconds}};
}

json decoding_json(const DecodingParams& d) {
  return {{"temperature", d.temperature}, {"max_output_tokens", d.max_output_tokens}};
}

/// Reads known keys from an object and rejects unknown ones.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw Error(Errc::InvalidArgument, where_, "expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw Error(Errc::InvalidArgument, where_ + "." + key, "unknown config key");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(Errc::InvalidArgument, where_ + "." + key, e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_endpoint(const json* j, ChatEndpoint& e, const std::string& where) {
  if (!j) return;
  Fields f(*j, where);
  f.get("base_url", e.base_url);
  f.get("model", e.model);
  f.get("api_key_env", e.api_key_env);
  f.get("timeout_seconds", e.timeout_seconds);
}

void read_decoding(const json* j, DecodingParams& d, const std::string& where) {
  if (!j) return;
  Fields f(*j, where);
  f.get("temperature", d.temperature);
  f.get("max_output_tokens", d.max_output_tokens);
}

}  // namespace

void PipelineConfig::validate() const {
  auto bad = [](const char* key, const char* why) { throw Error(Errc::InvalidArgument, key, why); };
  if (query_types.empty()) bad("query_types", "must not be empty");
  if (k_per_type < 1) bad("k_per_type", "must be >= 1");
  if (n_neg < 1) bad("n_neg", "must be >= 1");
  if (holdout_per_pair < 1) bad("holdout_per_pair", "must be >= 1 to have evaluation queries");
  if (feat_dim == 0 || emb_dim == 0) bad("feat_dim/emb_dim", "must be positive");
  if (k_set.empty()) bad("k_set", "must not be empty");
  for (auto k : k_set)
    if (k < 1) bad("k_set", "entries must be >= 1");
  if (rag_k < 1) bad("rag_k", "must be >= 1");
  if (max_concurrency < 1) bad("max_concurrency", "must be >= 1");
  if (train.epochs < 0) bad("train.epochs", "must be >= 0");
  if (train.epochs > 0) train.validate();
}

std::string PipelineConfig::to_json() const {
  json types = json::array();
  for (auto t : query_types) types.push_back(ragtune::to_string(t));
  const auto& t = train;
  json j = {
      {"corpus_path", corpus_path.generic_string()},
      {"output_dir", output_dir.generic_string()},
      {"initial_model", initial_model.generic_string()},
      {"run_bm25_baseline", run_bm25_baseline},
      {"run_type_slices", run_type_slices},
      {"run_rag_eval", run_rag_eval},
      {"seed", seed},
      {"query_source", to_string(query_source)},
      {"query_types", types},
      {"k_per_type", k_per_type},
      {"prompt_language", to_string(prompt_language)},
      {"query_endpoint", endpoint_json(query_endpoint)},
      {"query_decoding", decoding_json(query_decoding)},
      {"max_concurrency", max_concurrency},
      {"n_neg", n_neg},
      {"holdout_per_pair", holdout_per_pair},
      {"feat_dim", feat_dim},
      {"emb_dim", emb_dim},
      {"hash_seed", hash_seed},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"tau", t.tau},
        {"use_inbatch_negatives", t.use_inbatch_negatives},
        {"optimizer", ragtune::to_string(t.optimizer)},
        {"adam", {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"epsilon", t.adam.epsilon}}}}},
      {"k_set", k_set},
      {"rag_k", rag_k},
      {"max_input_tokens", max_input_tokens},
      {"generator", to_string(generator)},
      {"generator_endpoint", endpoint_json(generator_endpoint)},
      {"generator_decoding", decoding_json(generator_decoding)},
      {"text_metrics",
       {{"rouge1_mode", ragtune::to_string(text_metrics.rouge1_mode)},
        {"rouge_l_beta", text_metrics.rouge_l_beta},
        {"bleu_max_n", text_metrics.bleu.max_n},
        {"bleu_strict", text_metrics.bleu.strict}}},
      {"min_hit1_delta", min_hit1_delta},
      {"min_mrr_delta", min_mrr_delta},
  };
  return j.dump(2);
}

PipelineConfig PipelineConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, "config", e.what());
  }
  PipelineConfig c;
  {
    Fields f(j, "config");
    std::string s;
    s = c.corpus_path.string();
    f.get("corpus_path", s);
    c.corpus_path = s;
    s = c.output_dir.string();
    f.get("output_dir", s);
    c.output_dir = s;
    s = c.initial_model.string();
    f.get("initial_model", s);
    c.initial_model = s;
    f.get("run_bm25_baseline", c.run_bm25_baseline);
    f.get("run_type_slices", c.run_type_slices);
    f.get("run_rag_eval", c.run_rag_eval);
    f.get("seed", c.seed);
    s = std::string(to_string(c.query_source));
    f.get("query_source", s);
    c.query_source = parse_source(s);
    if (const auto* types = f.sub("query_types")) {
      if (!types->is_array()) throw Error(Errc::InvalidArgument, "config.query_types", "expected an array");
      c.query_types.clear();
      for (const auto& t : *types) c.query_types.insert(parse_query_type(t.get<std::string>()));
    }
    f.get("k_per_type", c.k_per_type);
    s = std::string(to_string(c.prompt_language));
    f.get("prompt_language", s);
    c.prompt_language = parse_language(s);
    read_endpoint(f.sub("query_endpoint"), c.query_endpoint, "config.query_endpoint");
    read_decoding(f.sub("query_decoding"), c.query_decoding, "config.query_decoding");
    f.get("max_concurrency", c.max_concurrency);
    f.get("n_neg", c.n_neg);
    f.get("holdout_per_pair", c.holdout_per_pair);
    f.get("feat_dim", c.feat_dim);
    f.get("emb_dim", c.emb_dim);
    f.get("hash_seed", c.hash_seed);
    if (const auto* tj = f.sub("train")) {
      Fields t(*tj, "config.train");
      t.get("epochs", c.train.epochs);
      t.get("batch_size", c.train.batch_size);
      t.get("learning_rate", c.train.learning_rate);
      t.get("tau", c.train.tau);
      t.get("use_inbatch_negatives", c.train.use_inbatch_negatives);
      s = std::string(ragtune::to_string(c.train.optimizer));
      t.get("optimizer", s);
      c.train.optimizer = parse_optimizer(s);
      if (const auto* aj = t.sub("adam")) {
        Fields a(*aj, "config.train.adam");
        a.get("beta1", c.train.adam.beta1);
        a.get("beta2", c.train.adam.beta2);
        a.get("epsilon", c.train.adam.epsilon);
      }
    }
    f.get("k_set", c.k_set);
    f.get("rag_k", c.rag_k);
    f.get("max_input_tokens", c.max_input_tokens);
    s = std::string(to_string(c.generator));
    f.get("generator", s);
    c.generator = parse_generator(s);
    read_endpoint(f.sub("generator_endpoint"), c.generator_endpoint, "config.generator_endpoint");
    read_decoding(f.sub("generator_decoding"), c.generator_decoding, "config.generator_decoding");
    if (const auto* mj = f.sub("text_metrics")) {
      Fields m(*mj, "config.text_metrics");
      s = std::string(ragtune::to_string(c.text_metrics.rouge1_mode));
      m.get("rouge1_mode", s);
      c.text_metrics.rouge1_mode = parse_rouge1_mode(s);
      m.get("rouge_l_beta", c.text_metrics.rouge_l_beta);
      m.get("bleu_max_n", c.text_metrics.bleu.max_n);
      m.get("bleu_strict", c.text_metrics.bleu.strict);
    }
    f.get("min_hit1_delta", c.min_hit1_delta);
    f.get("min_mrr_delta", c.min_mrr_delta);
  }
  c.train.seed = c.seed;
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return PipelineConfig::from_json(ss.str());
}

void save_pipeline_config(const PipelineConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, path.string(), "cannot open for writing");
  out << config.to_json() << '\n';
}

std::uint64_t stage_seed(const PipelineConfig& config, std::string_view stage) {
  return derive_seed(config.seed, stage);
}

StageError::StageError(std::string stage, Errc cause, const std::string& message)
    : Error(Errc::StageFailure, std::move(stage), message),
      cause_(cause) {}

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, path.string());
  Xxh64State state(0);
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    state.update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(buf.data()), got));
  }
  return hex64(state.digest());
}

namespace {

class OwningChatGenerator : public GeneratorClient {
 public:
  explicit OwningChatGenerator(ChatEndpoint endpoint) : http_(std::move(endpoint)), adapter_(http_) {}
  std::string complete(const PromptBundle& prompt, const DecodingParams& decoding) override {
    return adapter_.complete(prompt, decoding);
  }

 private:
  HttpChatClient http_;
  ChatGeneratorClient adapter_;
};

}  // namespace

std::unique_ptr<GeneratorClient> make_generator(const PipelineConfig& config) {
  if (config.generator == GeneratorKind::Echo) return std::make_unique<EchoGeneratorClient>();
  return std::make_unique<OwningChatGenerator>(config.generator_endpoint);
}

ArmReport evaluate_arm(const EmbeddingModel& model, const Corpus& corpus, std::span<const EvalQuery> eval_queries,
                       const PipelineConfig& config) {
  const auto index = build_index(model, corpus);
  ArmReport arm;
  if (config.run_rag_eval) {
    auto generator = make_generator(config);
    EndToEndOptions opts;
    opts.rag = {config.rag_k, config.max_input_tokens, config.generator_decoding};
    opts.k_set = config.k_set;
    opts.metrics = config.text_metrics;
    opts.max_concurrency = config.generator == GeneratorKind::Echo ? 1 : config.max_concurrency;
    auto e2e = evaluate_end2end(eval_queries, corpus, index, model, *generator, opts);
    arm.retrieval = std::move(e2e.retrieval);
    arm.generation = std::move(e2e.generation);
  } else {
    arm.retrieval = evaluate_retrieval(index, model, eval_queries, config.k_set);
  }
  return arm;
}

namespace {

/// Runs one stage, converting any failure into StageError(stage, cause).
template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.code(), e.what());
  } catch (const std::exception& e) {
    throw StageError(name, Errc::IoError, e.what());
  }
}

struct Prepared {
  Corpus corpus;
  TripleSet train;
  std::vector<EvalQuery> eval_queries;
  EmbeddingModel initial;
};

class Run {
 public:
  explicit Run(const PipelineConfig& config) : config_(config), dir_(config.output_dir) {}

  Artifact record(const std::string& name) {
    return {name, file_checksum(dir_ / name)};
  }

  Prepared prepare(RunManifest* manifest) {
    Prepared p;
    p.corpus = stage("ingest", [&] {
      auto c = load_corpus(config_.corpus_path);
      if (c.empty()) throw Error(Errc::EmptyCorpus, config_.corpus_path.string());
      return c;
    });
    stage("ingest", [&] {
      std::filesystem::create_directories(dir_);
      return 0;
    });

    auto queries = stage("generate", [&] {
      GenerationResult result;
      if (config_.query_source == QuerySource::Synthetic) {
        result = synthesize_queries(p.corpus, config_.query_types, config_.k_per_type,
                                    stage_seed(config_, "generate"));
      } else {
        HttpChatClient client(config_.query_endpoint);
        GenerationOptions opts;
        opts.k_per_type = config_.k_per_type;
        opts.decoding = config_.query_decoding;
        opts.language = config_.prompt_language;
        opts.max_concurrency = config_.max_concurrency;
        result = generate_queries(p.corpus, config_.query_types, client, opts);
      }
      write_generated_queries(result.queries, dir_ / "queries.jsonl");
      if (manifest) manifest->stages.push_back({"generate", {record("queries.jsonl")}});
      return std::move(result.queries);
    });

    auto triples = stage("mine", [&] {
      auto set = mine_triples(queries, p.corpus, config_.n_neg, stage_seed(config_, "mine"));
      write_triples(set, dir_ / "triples.jsonl");
      if (manifest) manifest->stages.push_back({"mine", {record("triples.jsonl")}});
      return set;
    });

    stage("partition", [&] {
      auto part = partition_triples(triples, config_.holdout_per_pair, stage_seed(config_, "partition"));
      write_triples(part.train, dir_ / "train_triples.jsonl");
      write_eval_queries(part.eval_queries, dir_ / "eval_queries.jsonl");
      if (manifest)
        manifest->stages.push_back(
            {"partition", {record("train_triples.jsonl"), record("eval_queries.jsonl")}});
      p.train = std::move(part.train);
      p.eval_queries = std::move(part.eval_queries);
      return 0;
    });

    p.initial = stage("train", [&] {
      if (!config_.initial_model.empty()) return restore_model(config_.initial_model);
      return init_model(config_.feat_dim, config_.emb_dim, stage_seed(config_, "init"), config_.hash_seed);
    });
    return p;
  }

  EmbeddingModel train_model(const Prepared& p, RunManifest* manifest) {
    return stage("train", [&] {
      TrainConfig tc = config_.train;
      tc.seed = stage_seed(config_, "train");
      auto result = train(p.initial, p.train, p.corpus, tc);
      if (manifest) {
        persist_model(result.model, dir_ / "model.bin");
        write_train_log(result.log, dir_ / "train_log.jsonl");
        manifest->stages.push_back({"train", {record("model.bin"), record("train_log.jsonl")}});
      }
      return std::move(result.model);
    });
  }

 private:
  const PipelineConfig& config_;
  std::filesystem::path dir_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, path.string(), "cannot open for writing");
  out << text;
  if (!out) throw Error(Errc::IoError, path.string(), "write failed");
}

std::string manifest_json(const RunManifest& m, const PipelineConfig& config) {
  json stages = json::array();
  for (const auto& s : m.stages) {
    json artifacts = json::array();
    for (const auto& a : s.artifacts) artifacts.push_back({{"path", a.path}, {"checksum", a.checksum}});
    stages.push_back({{"stage", s.stage}, {"artifacts", artifacts}});
  }
  json j = {{"version", kVersion},
            {"output_dir", config.output_dir.generic_string()},
            {"config", json::parse(m.config_json)},
            {"stages", stages}};
  return j.dump(2) + "\n";
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  stage("config", [&] {
    config.validate();
    if (config.train.epochs < 1) throw Error(Errc::InvalidArgument, "train.epochs", "must be >= 1");
    return 0;
  });
  const auto& dir = config.output_dir;
  PipelineResult result;
  result.manifest.config_json = config.to_json();
  Run run(config);
  auto prepared = run.prepare(&result.manifest);
  const auto model = run.train_model(prepared, &result.manifest);

  const auto index = stage("index", [&] {
    auto idx = build_index(model, prepared.corpus);
    persist_index(idx, dir / "index.bin");
    result.manifest.stages.push_back({"index", {run.record("index.bin")}});
    return idx;
  });

  stage("evaluate", [&] {
    const auto& eq = prepared.eval_queries;
    std::vector<std::pair<std::string, RetrievalReport>> retrieval_rows;
    std::vector<std::pair<std::string, GenerationReport>> generation_rows;
    result.dense = evaluate_arm(model, prepared.corpus, eq, config);
    retrieval_rows.emplace_back("dense", result.dense.retrieval);
    if (result.dense.generation) generation_rows.emplace_back("rag", *result.dense.generation);

    std::optional<Bm25Index> bm25;
    if (config.run_bm25_baseline) {
      bm25.emplace(prepared.corpus);
      result.bm25 = evaluate_retrieval(*bm25, eq, config.k_set);
      retrieval_rows.emplace_back("bm25", *result.bm25);
    }
    if (config.run_type_slices) {
      for (auto type : config.query_types) {
        std::vector<EvalQuery> slice;
        for (const auto& q : eq)
          if (q.query_type == type) slice.push_back(q);
        if (slice.empty()) continue;
        const std::string name(to_string(type));
        retrieval_rows.emplace_back("dense/" + name, evaluate_retrieval(index, model, slice, config.k_set));
        if (bm25) retrieval_rows.emplace_back("bm25/" + name, evaluate_retrieval(*bm25, slice, config.k_set));
      }
    }

    std::string records, table = report_table(retrieval_rows);
    for (const auto& [label, r] : retrieval_rows) records += report_record(r, label) + '\n';
    for (const auto& [label, g] : generation_rows) records += report_record(g, label) + '\n';
    if (!generation_rows.empty()) table += '\n' + report_table(generation_rows);
    write_text(dir / "report.jsonl", records);
    write_text(dir / "report.txt", table);
    result.manifest.stages.push_back({"evaluate", {run.record("report.jsonl"), run.record("report.txt")}});
    return 0;
  });

  stage("manifest", [&] {
    write_text(dir / "manifest.json", manifest_json(result.manifest, config));
    return 0;
  });
  return result;
}

namespace {

void add_deltas(std::map<std::string, double>& deltas, const ArmReport& a, const ArmReport& b) {
  deltas["mrr"] = b.retrieval.mrr - a.retrieval.mrr;
  for (auto k : a.retrieval.k_set) {
    deltas[fmt::format("hit@{}", k)] = b.retrieval.hit.at(k) - a.retrieval.hit.at(k);
    deltas[fmt::format("precision@{}", k)] = b.retrieval.precision.at(k) - a.retrieval.precision.at(k);
    deltas[fmt::format("ndcg@{}", k)] = b.retrieval.ndcg.at(k) - a.retrieval.ndcg.at(k);
  }
  if (a.generation && b.generation) {
    const auto& ga = *a.generation;
    const auto& gb = *b.generation;
    deltas["rouge1"] = gb.rouge1 - ga.rouge1;
    deltas["rouge_l"] = gb.rouge_l - ga.rouge_l;
    for (std::size_t i = 0; i < ga.bleu.size(); ++i) deltas[fmt::format("bleu{}", i + 1)] = gb.bleu[i] - ga.bleu[i];
    deltas["bert_p"] = gb.bert_p - ga.bert_p;
    deltas["bert_r"] = gb.bert_r - ga.bert_r;
    deltas["bert_f1"] = gb.bert_f1 - ga.bert_f1;
  }
}

}  // namespace

AblationReport run_ablation(const PipelineConfig& config) {
  stage("config", [&] {
    config.validate();
    return 0;
  });
  Run run(config);
  auto prepared = run.prepare(nullptr);
  AblationReport report;
  report.untrained = stage("evaluate", [&] {
    return evaluate_arm(prepared.initial, prepared.corpus, prepared.eval_queries, config);
  });
  if (config.train.epochs == 0) {
    report.finetuned = report.untrained;
  } else {
    const auto model = run.train_model(prepared, nullptr);
    report.finetuned = stage("evaluate", [&] {
      return evaluate_arm(model, prepared.corpus, prepared.eval_queries, config);
    });
  }
  add_deltas(report.deltas, report.untrained, report.finetuned);
  const auto hit1 = report.deltas.find("hit@1");
  report.meets_thresholds = hit1 != report.deltas.end() && hit1->second >= config.min_hit1_delta &&
                            report.deltas.at("mrr") >= config.min_mrr_delta;

  stage("evaluate", [&] {
    std::string records;
    records += report_record(report.untrained.retrieval, "untrained") + '\n';
    records += report_record(report.finetuned.retrieval, "finetuned") + '\n';
    if (report.untrained.generation) {
      records += report_record(*report.untrained.generation, "untrained") + '\n';
      records += report_record(*report.finetuned.generation, "finetuned") + '\n';
    }
    json deltas = {{"label", "delta"}, {"kind", "delta"}, {"meets_thresholds", report.meets_thresholds}};
    for (const auto& [k, v] : report.deltas) deltas[k] = v;
    records += deltas.dump() + '\n';

    std::vector<std::pair<std::string, RetrievalReport>> rows = {{"untrained", report.untrained.retrieval},
                                                                  {"finetuned", report.finetuned.retrieval}};
    std::string table = report_table(rows);
    if (report.untrained.generation) {
      std::vector<std::pair<std::string, GenerationReport>> g = {{"untrained", *report.untrained.generation},
                                                                  {"finetuned", *report.finetuned.generation}};
      table += '\n' + report_table(g);
    }
    table += fmt::format("\nHit@1 delta {:+.3f} (threshold {:+.2f}), MRR delta {:+.3f} (threshold {:+.2f}): {}\n",
                         hit1 == report.deltas.end() ? 0.0 : hit1->second, config.min_hit1_delta,
                         report.deltas.at("mrr"), config.min_mrr_delta, report.meets_thresholds ? "met" : "not met");
    write_text(config.output_dir / "ablation.jsonl", records);
    write_text(config.output_dir / "ablation.txt", table);
    return 0;
  });
  return report;
}

}  // namespace ragtune
