#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "ragtune/augment.hpp"
#include "ragtune/querygen.hpp"

namespace ragtune {

// Line-oriented JSON files for stage outputs. Readers report 1-based line
// numbers in MalformedRecord errors and skip blank lines.

/// {"source_qa_id","query_type","text","origin"} per line.
void write_generated_queries(std::span<const GeneratedQuery> queries, const std::filesystem::path& path);
std::vector<GeneratedQuery> read_generated_queries(const std::filesystem::path& path);

/// Header line {"corpus_name","seed"}, then {"query_text","positive_answer_id",
/// "negative_answer_ids","query_type"?} per triple.
void write_triples(const TripleSet& tripleset, const std::filesystem::path& path);
TripleSet read_triples(const std::filesystem::path& path);

/// {"query_id","query_text","positive_answer_id","query_type"?} per line.
void write_eval_queries(std::span<const EvalQuery> queries, const std::filesystem::path& path);
std::vector<EvalQuery> read_eval_queries(const std::filesystem::path& path);

}  // namespace ragtune
