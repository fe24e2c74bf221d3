#pragma once

// Desk-scale poisoning experiments on reference models.
//
// One model in an ensemble of n reference models is poisoned: its candidate
// carries a contiguous block of payload bytes making up a chosen fraction of
// the output. Sweeping that fraction (and how the clean models' training
// corpora relate) measures how often consensus selection rejects the
// poisoned candidate.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crossrank/backend.hpp"
#include "crossrank/ensemble.hpp"
#include "crossrank/ngram.hpp"
#include "crossrank/serialize.hpp"

namespace crossrank {

// How the clean models' training corpora relate to each other.
enum class Diversity { disjoint, overlapping, identical };

// candidate: the payload is spliced into the poisoned model's output.
// corpus: every document of the poisoned model's training shard is spliced
// instead, and its output is left alone.
enum class PoisonMode { candidate, corpus };

struct AttackScenario {
  std::string name = "scenario";
  Corpus clean_corpus;
  std::string payload;
  std::vector<double> injection_fractions;
  Diversity diversity = Diversity::disjoint;
  int n_models = 4;
  int order = 3;
  double alpha = 0.5;
  int trials = 1;
  std::uint64_t master_seed = 0;
  // When set, injection only happens if the query contains it.
  std::optional<std::string> trigger;
  std::string query;
  int candidate_length = 120;
  // Sampling temperature for every model's candidate.
  double temperature = 1.0;
  PoisonMode mode = PoisonMode::candidate;
  // overlapping diversity: chance that each document lands in a model's shard.
  double overlap_fraction = 0.5;

  // Throws InvalidArgument naming the offending field.
  void validate() const;
};

struct TrialOutcome {
  int trial_index = 0;
  std::uint64_t trial_seed = 0;
  std::size_t poisoned_candidate_id = 0;
  std::size_t poisoned_rank = 0;  // 0 = winner
  bool detected = false;
  double score_gap = 0.0;  // poisoned score minus winner score

  friend bool operator==(const TrialOutcome&, const TrialOutcome&) = default;
};

struct FractionResult {
  double fraction = 0.0;
  double detection_rate = 0.0;
  double mean_poisoned_rank = 0.0;
  double mean_score_gap = 0.0;
  int trials = 0;

  friend bool operator==(const FractionResult&, const FractionResult&) = default;
};

struct SimulationResult {
  std::vector<FractionResult> rows;  // ascending fraction

  friend bool operator==(const SimulationResult&,
                         const SimulationResult&) = default;
};

// Splices round(f*L/(1-f)) bytes of repeated payload into the candidate (L
// bytes) at a seeded position, so payload makes up `fraction` of the output
// to within one byte. fraction 0 returns the candidate; fraction 1 returns
// the payload repeated to the candidate's length.
std::string inject_payload(std::string_view candidate, std::string_view payload,
                           double fraction, std::uint64_t seed);

// Wraps a backend and splices the payload into every completion it returns.
// Scoring is delegated untouched.
class PoisonedBackend : public Backend {
 public:
  PoisonedBackend(BackendPtr inner, std::string payload, double fraction,
                  std::uint64_t seed);

  const std::string& id() const override { return inner_->id(); }
  std::string complete(const GenerationRequest& request) const override;
  ScoredText score(std::string_view text,
                   std::optional<std::string_view> context) const override;
  HealthStatus health() const override { return inner_->health(); }

 private:
  BackendPtr inner_;
  std::string payload_;
  double fraction_;
  std::uint64_t seed_;
};

// Seed of trial `trial_index`; the same for every fraction so fractions are
// compared on identical models and clean candidates.
std::uint64_t trial_seed(std::uint64_t master_seed, int trial_index);

TrialOutcome run_trial(const AttackScenario& scenario, double fraction,
                       int trial_index);

// Trials run on up to options.max_parallel threads; results are keyed by
// (fraction, trial) so the outcome does not depend on scheduling.
SimulationResult detection_curve(const AttackScenario& scenario,
                                 const ExecutionOptions& options = {});

inline constexpr int kScenarioSchemaVersion = 1;
inline constexpr int kSimulationSchemaVersion = 1;

std::string_view to_string(Diversity diversity);
std::string_view to_string(PoisonMode mode);

// Relative corpus directories resolve against base_dir. Throws FormatError
// with a field path on malformed input.
AttackScenario parse_scenario(const nlohmann::json& doc,
                              const std::filesystem::path& base_dir);
AttackScenario load_scenario(const std::filesystem::path& path);

ordered_json to_json(const AttackScenario& scenario,
                     const SimulationResult& result);
std::string canonical_json(const AttackScenario& scenario,
                           const SimulationResult& result);
// Header: fraction,detection_rate,mean_poisoned_rank,mean_score_gap
std::string to_csv(const SimulationResult& result);

}  // namespace crossrank
