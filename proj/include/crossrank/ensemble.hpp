#pragma once

// A full consensus run: every endpoint generates one candidate for the query,
// every candidate is scored by every other producing model, and the
// candidate with the lowest consensus score wins.

#include <cstddef>
#include <functional>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crossrank/backend.hpp"
#include "crossrank/scoring.hpp"
#include "crossrank/serialize.hpp"

namespace crossrank {

// What a scorer conditions on. candidate_only scores c_i on its own;
// query_conditioned feeds the query as unscored context first.
enum class ContextMode { candidate_only, query_conditioned };

// per_endpoint: seed + endpoint index. fixed: the same seed for everyone.
// none: no seed is sent (reference models then use 0).
enum class SeedPolicy { per_endpoint, fixed, none };

struct GenerationSettings {
  int max_tokens = 128;
  double temperature = 1.0;
  SeedPolicy seed_policy = SeedPolicy::per_endpoint;
  std::uint64_t seed = 0;
  bool stop_at_newline = false;
};

struct EnsembleConfig {
  std::vector<ModelEndpoint> endpoints;
  ContextMode context_mode = ContextMode::candidate_only;
  GenerationSettings generation;
  double outlier_k = kDefaultOutlierK;
  // Minimum fraction of a row's off-diagonal entries that must be present.
  double quorum = 1.0;
  Normalization normalization = Normalization::per_token;
  // Relative reference model_file paths resolve against this directory.
  // Not part of the echoed configuration.
  std::filesystem::path base_dir;

  // Throws InvalidArgument naming the offending field.
  void validate() const;
};

struct ExecutionOptions {
  // Worker threads for generation and scoring; 0 picks the hardware count.
  std::size_t max_parallel = 0;
  // When set, jobs are started in an order shuffled with this seed.
  std::optional<std::uint64_t> shuffle_seed;
};

enum class FailureStage { setup, generate, score };

struct FailureRecord {
  std::string endpoint_id;
  FailureCategory category = FailureCategory::transport;
  std::string detail;
  FailureStage stage = FailureStage::score;
  // For score failures: the candidate that could not be scored.
  std::optional<std::size_t> candidate_id;

  friend bool operator==(const FailureRecord&, const FailureRecord&) = default;
};

struct ConsensusReport {
  std::string query;
  std::vector<Candidate> candidates;
  ScoreMatrix matrix{2};
  std::vector<CandidateScore> scores;  // by candidate_id
  std::vector<std::size_t> ranking;
  std::size_t winner_id = 0;
  std::vector<OutlierFlag> outlier_flags;  // by candidate_id
  std::vector<FailureRecord> failures;
  std::vector<std::vector<std::size_t>> duplicate_groups;
  EnsembleConfig config_echo;
  std::string tool_version;

  bool any_flagged() const;
};

// Fewer than two candidates, or a quorum failure.
class ConsensusError : public Error {
 public:
  ConsensusError(const std::string& what, std::vector<FailureRecord> failures,
                 std::vector<std::size_t> deficient = {})
      : Error(what),
        failures_(std::move(failures)),
        deficient_(std::move(deficient)) {}

  const std::vector<FailureRecord>& failures() const { return failures_; }
  const std::vector<std::size_t>& deficient_candidates() const {
    return deficient_;
  }

 private:
  std::vector<FailureRecord> failures_;
  std::vector<std::size_t> deficient_;
};

struct QuorumCheck {
  std::vector<std::size_t> deficient;
  bool ok() const { return deficient.empty(); }
};

QuorumCheck apply_quorum(const ScoreMatrix& matrix, double quorum);

struct MatrixBuild {
  ScoreMatrix matrix;
  std::vector<FailureRecord> failures;
};

// entries[i][j] = L(c_i, M_j) for j != i, where M_j is the backend whose id
// equals candidates[j].producer_id. Failed scorings leave the entry absent
// and add a failure record. Never throws for backend failures.
MatrixBuild build_score_matrix(const std::vector<Candidate>& candidates,
                               const std::vector<BackendPtr>& backends,
                               const std::string& query,
                               const EnsembleConfig& config,
                               const ExecutionOptions& options = {});

// Builds backends from config.endpoints.
ConsensusReport run_consensus(const std::string& query,
                              const EnsembleConfig& config,
                              const ExecutionOptions& options = {});

// `backends` must be aligned with config.endpoints by id.
ConsensusReport run_consensus(const std::string& query,
                              const EnsembleConfig& config,
                              const std::vector<BackendPtr>& backends,
                              const ExecutionOptions& options = {});

inline constexpr int kReportSchemaVersion = 1;

std::string_view to_string(ContextMode mode);
std::string_view to_string(SeedPolicy policy);
std::string_view to_string(Normalization mode);
std::string_view to_string(FailureStage stage);

ordered_json to_json(const EnsembleConfig& config);
ordered_json to_json(const FailureRecord& failure);
ordered_json to_json(const ConsensusReport& report);

// Two-space indented JSON with a trailing newline. Field order is fixed, so
// equal reports serialize to identical bytes.
std::string canonical_json(const ConsensusReport& report);

// Runs fn(k) for k in [0, count) on up to max_parallel threads, starting
// jobs in a shuffled order when shuffle_seed is set. fn must not throw.
void run_jobs(std::size_t count, const ExecutionOptions& options,
              const std::function<void(std::size_t)>& fn);

}  // namespace crossrank
