#include "crossrank/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crossrank/error.hpp"

namespace crossrank {

namespace {

void check_logprob(double v) {
  if (!std::isfinite(v) || v > 0.0) {
    throw InvalidArgument("log probability must be finite and <= 0, got " +
                          std::to_string(v));
  }
}

}  // namespace

TokenLogProbs::TokenLogProbs(std::vector<double> values)
    : values_(std::move(values)) {
  if (values_.empty()) {
    throw EmptySequenceError("token log-probabilities are empty");
  }
  for (double v : values_) check_logprob(v);
}

double TokenLogProbs::sum() const noexcept {
  double total = 0.0;
  for (double v : values_) total += v;
  return total;
}

ScoreMatrix::ScoreMatrix(std::size_t n) : n_(n), entries_(n * n) {
  if (n < 2) {
    throw InvalidArgument("score matrix needs at least 2 models");
  }
}

ScoreMatrix ScoreMatrix::from_rows(
    const std::vector<std::vector<std::optional<double>>>& rows) {
  ScoreMatrix m(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) {
      throw InvalidArgument("score matrix rows must be square");
    }
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (i != j && rows[i][j]) m.set(i, j, *rows[i][j]);
    }
  }
  return m;
}

std::size_t ScoreMatrix::index(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_) {
    throw InvalidArgument("score matrix index out of range");
  }
  return i * n_ + j;
}

std::optional<double> ScoreMatrix::at(std::size_t i, std::size_t j) const {
  const auto idx = index(i, j);
  if (i == j) return std::nullopt;
  return entries_[idx];
}

void ScoreMatrix::set(std::size_t i, std::size_t j, double value) {
  const auto idx = index(i, j);
  if (i == j) {
    throw InvalidArgument("self-scores are excluded from the matrix");
  }
  check_logprob(value);
  entries_[idx] = value;
}

void ScoreMatrix::clear(std::size_t i, std::size_t j) {
  entries_[index(i, j)].reset();
}

std::size_t ScoreMatrix::present_in_row(std::size_t i) const {
  std::size_t count = 0;
  for (std::size_t j = 0; j < n_; ++j) {
    if (j != i && entries_[index(i, j)]) ++count;
  }
  return count;
}

double mean_token_logprob(std::span<const double> values) {
  if (values.empty()) {
    throw EmptySequenceError("mean of an empty token sequence");
  }
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

double mean_token_logprob(const TokenLogProbs& logprobs) {
  return mean_token_logprob(logprobs.values());
}

CandidateScore consensus_score(const ScoreMatrix& matrix, std::size_t i) {
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < matrix.size(); ++j) {
    if (j == i) continue;
    if (auto v = matrix.at(i, j)) {
      total += *v;
      ++used;
    }
  }
  if (used == 0) throw NoScorersError(i);
  double score = -total / static_cast<double>(used);
  if (score == 0.0) score = 0.0;  // no negative zero in reports
  return {i, score, used};
}

std::vector<CandidateScore> order_scores(std::vector<CandidateScore> scores) {
  std::sort(scores.begin(), scores.end(),
            [](const CandidateScore& a, const CandidateScore& b) {
              if (a.score != b.score) return a.score < b.score;
              return a.candidate_id < b.candidate_id;
            });
  return scores;
}

std::vector<CandidateScore> rank_candidates(const ScoreMatrix& matrix) {
  std::vector<CandidateScore> scores;
  scores.reserve(matrix.size());
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    scores.push_back(consensus_score(matrix, i));
  }
  return order_scores(std::move(scores));
}

double perplexity(double mean_logprob) {
  if (!std::isfinite(mean_logprob) || mean_logprob > 0.0) {
    throw InvalidArgument("mean log probability must be finite and <= 0");
  }
  return std::exp(-mean_logprob);
}

double consensus_perplexity(const CandidateScore& score) {
  return perplexity(-score.score);
}

std::vector<OutlierFlag> flag_outliers(std::span<const CandidateScore> scores,
                                       double k) {
  if (scores.size() < 2) {
    throw InvalidArgument("outlier detection needs at least 2 scores");
  }
  if (!(k > 0.0)) {
    throw InvalidArgument("outlier k must be > 0");
  }
  const double count = static_cast<double>(scores.size());
  double mean = 0.0;
  for (const auto& s : scores) mean += s.score;
  mean /= count;
  double var = 0.0;
  for (const auto& s : scores) var += (s.score - mean) * (s.score - mean);
  const double stdev = std::sqrt(var / count);

  std::vector<OutlierFlag> flags;
  flags.reserve(scores.size());
  for (const auto& s : scores) {
    OutlierFlag f{s.candidate_id, false, 0.0};
    if (stdev > 0.0) {
      f.zvalue = (s.score - mean) / stdev;
      f.flagged = s.score > mean + k * stdev;
    }
    flags.push_back(f);
  }
  return flags;
}

}  // namespace crossrank
