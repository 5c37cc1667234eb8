#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "ragtune/corpus.hpp"
#include "ragtune/error.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ragtune-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline ragtune::Corpus small_corpus(std::size_t n) {
  static const char* subjects[] = {"patent", "trademark", "design", "copyright", "license",
                                   "renewal", "appeal",  "priority", "transfer", "examination"};
  std::vector<ragtune::QAPair> entries;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string s = subjects[i % 10];
    entries.push_back({"q" + std::to_string(i + 1),
                       "How do I handle the " + s + " step number " + std::to_string(i) + "?",
                       "The " + s + " procedure " + std::to_string(i) + " requires form " + std::to_string(100 + i) +
                           " and a fee of " + std::to_string(10 * (i + 1)) + " dollars.",
                       {}});
  }
  return ragtune::Corpus("small", std::move(entries));
}

template <typename Fn>
ragtune::Errc error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const ragtune::Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected ragtune::Error");
}

}  // namespace testing
