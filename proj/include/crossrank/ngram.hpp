#pragma once

// Byte-level add-alpha smoothed n-gram language model.
//
// Tokens are bytes (vocabulary of 256). A model of order m conditions each
// byte on the previous m-1 symbols, where positions before the start of a
// text are filled with a start marker that lies outside the byte range. The
// marker is only ever context, never a predicted symbol.
//
//   P(w | ctx) = (count(ctx, w) + alpha) / (total(ctx) + 256 * alpha)
//
// Models are immutable once built; scoring and generation are const and safe
// to call concurrently.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "crossrank/scoring.hpp"

namespace crossrank {

inline constexpr std::size_t kVocabSize = 256;
inline constexpr char16_t kStartMarker = 256;

// Context symbols: bytes 0..255 plus kStartMarker.
using ContextKey = std::u16string;

struct Corpus {
  std::string name;
  std::vector<std::string> documents;
};

// Every regular file directly in `dir`, in filename order, one document
// each. Throws InvalidArgument when there is none.
Corpus load_corpus_directory(const std::filesystem::path& dir);

// FNV-1a 64 over the length-prefixed documents, as 16 lowercase hex digits.
std::string corpus_fingerprint(const Corpus& corpus);

struct GenerateOptions {
  // 1.0 samples the smoothed distribution as-is, 0.0 is greedy argmax
  // (ties to the lowest byte), other values sharpen or flatten it.
  double temperature = 1.0;
  // Stop after emitting a '\n' byte. The newline is kept.
  bool stop_at_newline = false;
};

class NGramModel {
 public:
  // A model with no observations; every byte has probability 1/256.
  NGramModel(int order, double alpha);

  int order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }
  std::size_t context_count() const noexcept { return contexts_.size(); }

  std::uint64_t count(const ContextKey& context, std::uint8_t next) const;
  std::uint64_t context_total(const ContextKey& context) const;
  std::uint64_t max_context_total() const;

  double probability(const ContextKey& context, std::uint8_t next) const;

  // One value per byte of `text`. `context` seeds the conditioning window
  // and is not scored. Throws EmptySequenceError on empty text.
  TokenLogProbs token_logprobs(
      std::string_view text,
      std::optional<std::string_view> context = std::nullopt) const;

  // Samples up to max_len bytes after `prompt`. Deterministic in
  // (model, prompt, max_len, seed, options).
  std::string generate(std::string_view prompt, std::size_t max_len,
                       std::uint64_t seed,
                       const GenerateOptions& options = {}) const;

  void save(std::ostream& out) const;
  static NGramModel load(std::istream& in);
  void save_file(const std::filesystem::path& path) const;
  static NGramModel load_file(const std::filesystem::path& path);

  // Extensional equality: same order, alpha and counts.
  friend bool operator==(const NGramModel& a, const NGramModel& b);

 private:
  struct NextCounts {
    std::uint64_t total = 0;
    // Sorted by byte.
    std::vector<std::pair<std::uint8_t, std::uint64_t>> next;

    std::uint64_t get(std::uint8_t b) const;
    void add(std::uint8_t b, std::uint64_t n);
  };

  friend NGramModel train(const Corpus& corpus, int order, double alpha);

  ContextKey initial_window() const;
  void push(ContextKey& window, char16_t symbol) const;
  const NextCounts* find(const ContextKey& context) const;
  std::uint8_t sample(const NextCounts* counts, double u,
                      double temperature) const;

  int order_;
  double alpha_;
  std::string fingerprint_ = "untrained";
  std::unordered_map<ContextKey, NextCounts> contexts_;
};

// Counts every window of every document (left-padded with m-1 start
// markers). Throws InvalidArgument for order < 1, alpha <= 0 or a corpus with
// no non-empty document.
NGramModel train(const Corpus& corpus, int order, double alpha);

// SplitMix64. The generator behind all seeded sampling in the project; its
// arithmetic is fixed-width unsigned so sequences are platform-independent.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound). Plain modulo; the bias is irrelevant at
  // the bounds used here and keeps the arithmetic easy to reproduce.
  std::uint64_t below(std::uint64_t bound) { return next() % bound; }

 private:
  std::uint64_t state_;
};

}  // namespace crossrank
