#include "ragtune/records.hpp"

#include <fstream>
#include <functional>

#include "json.hpp"
#include "ragtune/error.hpp"

namespace ragtune {

using json = nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, path.string(), "cannot open for writing");
  return out;
}

void close_out(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(Errc::IoError, path.string(), "write failed");
}

void for_each_record(const std::filesystem::path& path, const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, path.string());
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(n);
    try {
      const auto j = json::parse(line);
      if (!j.is_object()) throw Error(Errc::MalformedRecord, where, "not a JSON object");
      fn(j, n);
    } catch (const json::exception& e) {
      throw Error(Errc::MalformedRecord, where, e.what());
    } catch (const Error& e) {
      if (e.code() == Errc::MalformedRecord) throw;
      throw Error(Errc::MalformedRecord, where, e.what());
    }
  }
}

std::string str(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string())
    throw Error(Errc::MalformedRecord, key, "missing or non-string field");
  return j.at(key).get<std::string>();
}

std::optional<QueryType> opt_type(const json& j) {
  if (!j.contains("query_type") || j.at("query_type").is_null()) return std::nullopt;
  return parse_query_type(j.at("query_type").get<std::string>());
}

}  // namespace

void write_generated_queries(std::span<const GeneratedQuery> queries, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& q : queries)
    out << json{{"source_qa_id", q.source_qa_id},
                {"query_type", to_string(q.query_type)},
                {"text", q.text},
                {"origin", to_string(q.origin)}}
               .dump()
        << '\n';
  close_out(out, path);
}

std::vector<GeneratedQuery> read_generated_queries(const std::filesystem::path& path) {
  std::vector<GeneratedQuery> out;
  for_each_record(path, [&](const json& j, std::size_t) {
    GeneratedQuery q;
    q.source_qa_id = str(j, "source_qa_id");
    q.query_type = parse_query_type(str(j, "query_type"));
    q.text = str(j, "text");
    q.origin = j.contains("origin") ? parse_query_origin(str(j, "origin")) : QueryOrigin::Llm;
    out.push_back(std::move(q));
  });
  return out;
}

void write_triples(const TripleSet& tripleset, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << json{{"corpus_name", tripleset.corpus_name}, {"seed", tripleset.seed}}.dump() << '\n';
  for (const auto& t : tripleset.triples) {
    json j = {{"query_text", t.query_text},
              {"positive_answer_id", t.positive_answer_id},
              {"negative_answer_ids", t.negative_answer_ids}};
    if (t.query_type) j["query_type"] = to_string(*t.query_type);
    out << j.dump() << '\n';
  }
  close_out(out, path);
}

TripleSet read_triples(const std::filesystem::path& path) {
  TripleSet set;
  bool header = true;
  for_each_record(path, [&](const json& j, std::size_t) {
    if (header) {
      header = false;
      set.corpus_name = str(j, "corpus_name");
      if (!j.contains("seed") || !j.at("seed").is_number_unsigned())
        throw Error(Errc::MalformedRecord, "seed", "missing or not an unsigned integer");
      set.seed = j.at("seed").get<std::uint64_t>();
      return;
    }
    TrainingTriple t;
    t.query_text = str(j, "query_text");
    t.positive_answer_id = str(j, "positive_answer_id");
    if (!j.contains("negative_answer_ids") || !j.at("negative_answer_ids").is_array())
      throw Error(Errc::MalformedRecord, "negative_answer_ids", "missing or not an array");
    t.negative_answer_ids = j.at("negative_answer_ids").get<std::vector<std::string>>();
    t.query_type = opt_type(j);
    set.triples.push_back(std::move(t));
  });
  if (header) throw Error(Errc::MalformedRecord, path.string(), "missing header record");
  return set;
}

void write_eval_queries(std::span<const EvalQuery> queries, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& q : queries) {
    json j = {{"query_id", q.query_id}, {"query_text", q.query_text}, {"positive_answer_id", q.positive_answer_id}};
    if (q.query_type) j["query_type"] = to_string(*q.query_type);
    out << j.dump() << '\n';
  }
  close_out(out, path);
}

std::vector<EvalQuery> read_eval_queries(const std::filesystem::path& path) {
  std::vector<EvalQuery> out;
  for_each_record(path, [&](const json& j, std::size_t) {
    out.push_back({str(j, "query_id"), str(j, "query_text"), str(j, "positive_answer_id"), opt_type(j)});
  });
  return out;
}

}  // namespace ragtune
