#pragma once

// Cross-model consensus scoring.
//
// Each candidate c_i is scored by every other model M_j (j != i) as the mean
// per-token natural-log probability L(c_i, M_j). A candidate's consensus
// score is the negated average of those cross-scores; lower is better and the
// lowest-scoring candidate wins. Everything here is a pure function over
// immutable values.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace crossrank {

// Per-token natural-log probabilities of one text under one model.
// Non-empty; every value finite and <= 0.
class TokenLogProbs {
 public:
  explicit TokenLogProbs(std::vector<double> values);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t token_count() const noexcept { return values_.size(); }
  double sum() const noexcept;

 private:
  std::vector<double> values_;
};

// One model's generated solution.
struct Candidate {
  std::size_t candidate_id = 0;
  std::string producer_id;
  std::string text;
};

// n x n grid of cross-scores; entry (i, j) is L(c_i, M_j) in nats/token.
// The diagonal is never stored.
class ScoreMatrix {
 public:
  explicit ScoreMatrix(std::size_t n);

  // Builds a matrix from dense rows. Diagonal cells are discarded whatever
  // they hold.
  static ScoreMatrix from_rows(
      const std::vector<std::vector<std::optional<double>>>& rows);

  std::size_t size() const noexcept { return n_; }
  std::optional<double> at(std::size_t i, std::size_t j) const;
  void set(std::size_t i, std::size_t j, double value);
  void clear(std::size_t i, std::size_t j);

  // Number of present off-diagonal entries in row i.
  std::size_t present_in_row(std::size_t i) const;

  friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;

 private:
  std::size_t index(std::size_t i, std::size_t j) const;

  std::size_t n_;
  std::vector<std::optional<double>> entries_;
};

struct CandidateScore {
  std::size_t candidate_id = 0;
  double score = 0.0;
  std::size_t contributing_models = 0;

  friend bool operator==(const CandidateScore&,
                         const CandidateScore&) = default;
};

struct OutlierFlag {
  std::size_t candidate_id = 0;
  bool flagged = false;
  double zvalue = 0.0;

  friend bool operator==(const OutlierFlag&, const OutlierFlag&) = default;
};

// Arithmetic mean of the values. Throws EmptySequenceError on an empty span.
double mean_token_logprob(std::span<const double> values);
double mean_token_logprob(const TokenLogProbs& logprobs);

// score(c_i) = -(1/k) * sum of the k present entries L[i][j], j != i.
// Throws NoScorersError when k == 0.
CandidateScore consensus_score(const ScoreMatrix& matrix, std::size_t i);

// All candidates, ascending by score, ties by ascending candidate_id.
std::vector<CandidateScore> rank_candidates(const ScoreMatrix& matrix);

// Sorts already-computed scores with the same ordering as rank_candidates.
std::vector<CandidateScore> order_scores(std::vector<CandidateScore> scores);

// exp(-mean_logprob). Strictly decreasing in mean_logprob.
double perplexity(double mean_logprob);

// Per-token perplexity of the candidate averaged over its scorers: the
// geometric mean of exp(-L[i][j]), which equals exp(score). Ranking by it is
// the same as ranking by score. (The arithmetic mean of the per-scorer
// perplexities is not order-equivalent and is not offered.)
double consensus_perplexity(const CandidateScore& score);

inline constexpr double kDefaultOutlierK = 2.0;

// Flags scores above mean + k * population stddev. Output follows the input
// order. Throws InvalidArgument for fewer than two scores or k <= 0.
std::vector<OutlierFlag> flag_outliers(std::span<const CandidateScore> scores,
                                       double k = kDefaultOutlierK);

}  // namespace crossrank
