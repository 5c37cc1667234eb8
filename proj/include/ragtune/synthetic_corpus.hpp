#pragma once

#include <cstdint>

#include "ragtune/corpus.hpp"

namespace ragtune {

/// Deterministic English IP-office FAQ corpus. Each pair crosses one of 20
/// protection subjects with one of 10 procedures. Questions are colloquial
/// (formal terms appear only sometimes); answers are formal and carry
/// pair-specific deadlines, fees and form codes, so question and answer share
/// little vocabulary beyond function words.
Corpus make_synthetic_corpus(std::size_t n = 200, std::uint64_t seed = 20240501);

}  // namespace ragtune
