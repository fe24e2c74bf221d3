#include "crossrank/scoring.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "crossrank/error.hpp"
#include "support/oracles.hpp"

namespace crossrank {
namespace {

using testing::DenseRows;

DenseRows random_rows(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> entry(-10.0, 0.0);
  DenseRows rows(n, std::vector<std::optional<double>>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) rows[i][j] = entry(rng);
    }
  }
  return rows;
}

std::vector<std::size_t> ids(const std::vector<CandidateScore>& scores) {
  std::vector<std::size_t> out;
  for (const auto& s : scores) out.push_back(s.candidate_id);
  return out;
}

TEST(MeanTokenLogprob, AllCertainTokensAverageToZero) {
  EXPECT_EQ(mean_token_logprob(TokenLogProbs({0.0, 0.0, 0.0})), 0.0);
}

TEST(MeanTokenLogprob, UniformByteModel) {
  const double v = std::log(1.0 / 256.0);
  EXPECT_NEAR(mean_token_logprob(TokenLogProbs({v, v, v, v})), -5.545177, 1e-6);
  EXPECT_DOUBLE_EQ(mean_token_logprob(TokenLogProbs({v, v, v, v})), v);
}

TEST(MeanTokenLogprob, EmptySequenceIsAnError) {
  EXPECT_THROW(mean_token_logprob(std::span<const double>{}), EmptySequenceError);
  EXPECT_THROW(TokenLogProbs({}), EmptySequenceError);
}

TEST(TokenLogProbs, RejectsPositiveAndNonFiniteValues) {
  EXPECT_THROW(TokenLogProbs({-1.0, 0.5}), InvalidArgument);
  EXPECT_THROW(TokenLogProbs({NAN}), InvalidArgument);
  EXPECT_THROW(TokenLogProbs({-INFINITY}), InvalidArgument);
}

TEST(ConsensusScore, SingleScorerIsNegated) {
  ScoreMatrix m(2);
  m.set(0, 1, -3.0);
  m.set(1, 0, -1.0);
  const auto s = consensus_score(m, 0);
  EXPECT_EQ(s.score, 3.0);
  EXPECT_EQ(s.contributing_models, 1u);
}

TEST(ConsensusScore, SymmetricMatrixGivesEqualScores) {
  ScoreMatrix m(3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) m.set(i, j, -2.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(consensus_score(m, i).score, 2.0);
}

TEST(ConsensusScore, ArithmeticMean) {
  ScoreMatrix m(3);
  m.set(0, 1, -1.0);
  m.set(0, 2, -3.0);
  EXPECT_EQ(consensus_score(m, 0).score, 2.0);
  EXPECT_EQ(consensus_score(m, 0).contributing_models, 2u);
}

TEST(ConsensusScore, PartialRowAveragesPresentEntries) {
  ScoreMatrix m(4);
  m.set(1, 0, -2.0);
  m.set(1, 3, -4.0);
  const auto s = consensus_score(m, 1);
  EXPECT_EQ(s.score, 3.0);
  EXPECT_EQ(s.contributing_models, 2u);
}

TEST(ConsensusScore, EmptyRowNamesTheCandidate) {
  ScoreMatrix m(3);
  m.set(0, 1, -1.0);
  try {
    consensus_score(m, 2);
    FAIL() << "expected NoScorersError";
  } catch (const NoScorersError& e) {
    EXPECT_EQ(e.candidate_id(), 2u);
  }
  EXPECT_THROW(rank_candidates(m), NoScorersError);
}

TEST(ScoreMatrix, DiagonalCannotBeSet) {
  ScoreMatrix m(3);
  EXPECT_THROW(m.set(1, 1, -1.0), InvalidArgument);
  EXPECT_FALSE(m.at(1, 1).has_value());
  EXPECT_THROW(ScoreMatrix(1), InvalidArgument);
  EXPECT_THROW(m.set(0, 1, 0.1), InvalidArgument);
}

TEST(RankCandidates, TieBreaksByIndex) {
  ScoreMatrix m(2);
  m.set(0, 1, -2.0);
  m.set(1, 0, -2.0);
  EXPECT_EQ(ids(rank_candidates(m)), (std::vector<std::size_t>{0, 1}));
}

TEST(RankCandidates, SortsAscending) {
  ScoreMatrix m(3);
  m.set(0, 1, -3.5); m.set(0, 2, -3.5);
  m.set(1, 0, -1.2); m.set(1, 2, -1.2);
  m.set(2, 0, -2.0); m.set(2, 1, -2.0);
  EXPECT_EQ(ids(rank_candidates(m)), (std::vector<std::size_t>{1, 2, 0}));
}

TEST(RankCandidates, MatchesBruteForceOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto rows = random_rows(rng, 5);
    const auto m = ScoreMatrix::from_rows(rows);
    EXPECT_EQ(ids(rank_candidates(m)), testing::oracle_ranking(rows));
    const auto expected = testing::oracle_scores(rows);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_NEAR(consensus_score(m, i).score, expected[i].score, 1e-12);
    }
  }
}

TEST(Perplexity, KnownValues) {
  EXPECT_EQ(perplexity(0.0), 1.0);
  EXPECT_NEAR(perplexity(std::log(1.0 / 256.0)), 256.0, 1e-9);
  EXPECT_THROW(perplexity(0.5), InvalidArgument);
}

TEST(Perplexity, RankingMatchesScoreRanking) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto rows = random_rows(rng, 2 + trial % 5);
    EXPECT_EQ(ids(rank_candidates(ScoreMatrix::from_rows(rows))),
              testing::oracle_perplexity_ranking(rows))
        << "trial " << trial;
  }
}

TEST(Perplexity, ConsensusPerplexityIsGeometricMean) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rows = random_rows(rng, 4);
    const auto m = ScoreMatrix::from_rows(rows);
    const auto expected = testing::oracle_mean_perplexities(rows);
    for (std::size_t i = 0; i < 4; ++i) {
      const double got = consensus_perplexity(consensus_score(m, i));
      EXPECT_NEAR(got / expected[i], 1.0, 1e-12);
    }
  }
}

TEST(Perplexity, ArithmeticMeanOfPerplexitiesCanDisagree) {
  // c_0: cross-scores -1 and -5 (score 3.0, arithmetic mean perplexity
  // (e + e^5)/2 ~ 75.6). c_1: -3.1 twice (score 3.1, perplexity e^3.1 ~ 22.2).
  // The score prefers c_0; the arithmetic mean of perplexities prefers c_1.
  ScoreMatrix m(3);
  m.set(0, 1, -1.0); m.set(0, 2, -5.0);
  m.set(1, 0, -3.1); m.set(1, 2, -3.1);
  m.set(2, 0, -4.0); m.set(2, 1, -4.0);
  const auto ranked = rank_candidates(m);
  EXPECT_EQ(ranked[0].candidate_id, 0u);
  EXPECT_GT((std::exp(1.0) + std::exp(5.0)) / 2.0, std::exp(3.1));
  EXPECT_LT(consensus_perplexity(ranked[0]), consensus_perplexity(ranked[1]));
}

TEST(FlagOutliers, ZeroVarianceFlagsNothing) {
  std::vector<CandidateScore> s{{0, 2.0, 1}, {1, 2.0, 1}, {2, 2.0, 1}};
  for (const auto& f : flag_outliers(s, 2.0)) {
    EXPECT_FALSE(f.flagged);
    EXPECT_EQ(f.zvalue, 0.0);
  }
}

TEST(FlagOutliers, FarScoreIsFlagged) {
  // mean = 11.1/3 = 3.7; population variance = (2.7^2 + 2.6^2 + 5.3^2)/3
  // = 42.14/3, stdev ~ 3.748. Threshold at k=1 ~ 7.448 < 9.0.
  std::vector<CandidateScore> s{{0, 1.0, 2}, {1, 1.1, 2}, {2, 9.0, 2}};
  const auto flags = flag_outliers(s, 1.0);
  EXPECT_FALSE(flags[0].flagged);
  EXPECT_FALSE(flags[1].flagged);
  EXPECT_TRUE(flags[2].flagged);
  EXPECT_NEAR(flags[2].zvalue, 5.3 / std::sqrt(42.14 / 3.0), 1e-12);
}

TEST(FlagOutliers, PairNeverExceedsUnitZ) {
  std::vector<CandidateScore> s{{0, 1.0, 1}, {1, 5.0, 1}};
  const auto flags = flag_outliers(s, 2.0);
  EXPECT_FALSE(flags[0].flagged);
  EXPECT_FALSE(flags[1].flagged);
  EXPECT_EQ(flags[1].zvalue, 1.0);
  EXPECT_EQ(flags[0].zvalue, -1.0);
}

TEST(FlagOutliers, Preconditions) {
  std::vector<CandidateScore> one{{0, 1.0, 1}};
  EXPECT_THROW(flag_outliers(one, 2.0), InvalidArgument);
  std::vector<CandidateScore> two{{0, 1.0, 1}, {1, 2.0, 1}};
  EXPECT_THROW(flag_outliers(two, 0.0), InvalidArgument);
}

// Properties over random matrices.

TEST(ScoringProperties, DiagonalIsNeverConsulted) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 5;
    auto rows = random_rows(rng, n);
    const auto clean = rank_candidates(ScoreMatrix::from_rows(rows));
    for (std::size_t i = 0; i < n; ++i) rows[i][i] = -1e9;
    EXPECT_EQ(rank_candidates(ScoreMatrix::from_rows(rows)), clean);
    for (std::size_t i = 0; i < n; ++i) rows[i][i] = 1e9;
    EXPECT_EQ(rank_candidates(ScoreMatrix::from_rows(rows)), clean);
  }
}

TEST(ScoringProperties, ShiftEquivariance) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> shift(-3.0, 0.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 5;
    auto rows = random_rows(rng, n);
    const double delta = shift(rng);
    const auto base = rank_candidates(ScoreMatrix::from_rows(rows));
    for (auto& row : rows)
      for (auto& e : row)
        if (e) *e += delta;
    const auto shifted = rank_candidates(ScoreMatrix::from_rows(rows));
    EXPECT_EQ(ids(shifted), ids(base));
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_NEAR(shifted[k].score, base[k].score - delta, 1e-12);
    }
  }
}

TEST(ScoringProperties, PermutationEquivariance) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 5;
    const auto rows = random_rows(rng, n);
    std::vector<std::size_t> perm(n);
    for (std::size_t k = 0; k < n; ++k) perm[k] = k;
    std::shuffle(perm.begin(), perm.end(), rng);
    // Candidate perm[i] of the original becomes candidate i.
    DenseRows permuted(n, std::vector<std::optional<double>>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) permuted[i][j] = rows[perm[i]][perm[j]];
    const auto a = ScoreMatrix::from_rows(rows);
    const auto b = ScoreMatrix::from_rows(permuted);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(consensus_score(b, i).score, consensus_score(a, perm[i]).score,
                  1e-12);
    }
    EXPECT_EQ(perm[rank_candidates(b).front().candidate_id],
              rank_candidates(a).front().candidate_id);
  }
}

}  // namespace
}  // namespace crossrank
