#include "crossrank/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "crossrank/version.hpp"

namespace crossrank {

std::string_view to_string(ContextMode mode) {
  return mode == ContextMode::candidate_only ? "candidate_only"
                                             : "query_conditioned";
}

std::string_view to_string(SeedPolicy policy) {
  switch (policy) {
    case SeedPolicy::per_endpoint: return "per_endpoint";
    case SeedPolicy::fixed: return "fixed";
    case SeedPolicy::none: return "none";
  }
  return "none";
}

std::string_view to_string(Normalization mode) {
  return mode == Normalization::per_token ? "per_token" : "per_byte";
}

std::string_view to_string(FailureStage stage) {
  switch (stage) {
    case FailureStage::setup: return "setup";
    case FailureStage::generate: return "generate";
    case FailureStage::score: return "score";
  }
  return "score";
}

void EnsembleConfig::validate() const {
  if (endpoints.size() < 2) {
    throw InvalidArgument("endpoints: at least 2 endpoints are required");
  }
  for (std::size_t k = 0; k < endpoints.size(); ++k) {
    const auto& ep = endpoints[k];
    const std::string where = "endpoints[" + std::to_string(k) + "]";
    if (ep.id.empty()) throw InvalidArgument(where + ".id: must be non-empty");
    for (std::size_t other = 0; other < k; ++other) {
      if (endpoints[other].id == ep.id) {
        throw InvalidArgument(where + ".id: duplicate id '" + ep.id + "'");
      }
    }
    if (ep.timeout.count() <= 0) {
      throw InvalidArgument(where + ".timeout_ms: must be > 0");
    }
    if (ep.transport_retries < 0) {
      throw InvalidArgument(where + ".transport_retries: must be >= 0");
    }
    if (ep.kind == EndpointKind::remote && ep.base_url.empty()) {
      throw InvalidArgument(where + ".base_url: required for remote endpoints");
    }
    if (ep.kind == EndpointKind::reference && ep.model_file.empty()) {
      throw InvalidArgument(where +
                            ".model_file: required for reference endpoints");
    }
  }
  if (generation.max_tokens < 1) {
    throw InvalidArgument("generation.max_tokens: must be >= 1");
  }
  if (!(generation.temperature >= 0.0) ||
      !std::isfinite(generation.temperature)) {
    throw InvalidArgument("generation.temperature: must be >= 0");
  }
  if (!(outlier_k > 0.0) || !std::isfinite(outlier_k)) {
    throw InvalidArgument("outlier_k: must be > 0");
  }
  if (!(quorum > 0.0 && quorum <= 1.0)) {
    throw InvalidArgument("quorum: must be in (0, 1]");
  }
}

bool ConsensusReport::any_flagged() const {
  return std::any_of(outlier_flags.begin(), outlier_flags.end(),
                     [](const OutlierFlag& f) { return f.flagged; });
}

void run_jobs(std::size_t count, const ExecutionOptions& options,
              const std::function<void(std::size_t)>& fn) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (options.shuffle_seed) {
    SplitMix64 rng(*options.shuffle_seed);
    for (std::size_t k = count; k > 1; --k) {
      std::swap(order[k - 1], order[rng.below(k)]);
    }
  }
  std::size_t workers = options.max_parallel;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (auto k : order) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k; (k = next.fetch_add(1)) < count;) fn(order[k]);
    });
  }
}

namespace {

FailureRecord failure_from(const BackendError& e, FailureStage stage,
                           std::optional<std::size_t> candidate_id) {
  return {e.endpoint_id(), e.category(), e.detail(), stage, candidate_id};
}

FailureRecord failure_from(const std::string& endpoint_id,
                           const std::exception& e, FailureStage stage,
                           std::optional<std::size_t> candidate_id) {
  return {endpoint_id, FailureCategory::protocol, e.what(), stage,
          candidate_id};
}

const Backend* find_backend(const std::vector<BackendPtr>& backends,
                            const std::string& id) {
  for (const auto& b : backends) {
    if (b && b->id() == id) return b.get();
  }
  return nullptr;
}

std::vector<std::vector<std::size_t>> duplicate_groups(
    const std::vector<Candidate>& candidates) {
  std::map<std::string_view, std::vector<std::size_t>> by_text;
  for (const auto& c : candidates) by_text[c.text].push_back(c.candidate_id);
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [text, ids] : by_text) {
    if (ids.size() > 1) groups.push_back(std::move(ids));
  }
  std::sort(groups.begin(), groups.end());
  return groups;
}

}  // namespace

QuorumCheck apply_quorum(const ScoreMatrix& matrix, double quorum) {
  if (!(quorum > 0.0 && quorum <= 1.0)) {
    throw InvalidArgument("quorum must be in (0, 1]");
  }
  QuorumCheck check;
  const double possible = static_cast<double>(matrix.size() - 1);
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    const double present = static_cast<double>(matrix.present_in_row(i));
    if (present / possible < quorum) check.deficient.push_back(i);
  }
  return check;
}

MatrixBuild build_score_matrix(const std::vector<Candidate>& candidates,
                               const std::vector<BackendPtr>& backends,
                               const std::string& query,
                               const EnsembleConfig& config,
                               const ExecutionOptions& options) {
  const std::size_t n = candidates.size();
  if (n < 2) throw InvalidArgument("scoring needs at least 2 candidates");

  std::vector<const Backend*> scorers(n);
  for (std::size_t j = 0; j < n; ++j) {
    scorers[j] = find_backend(backends, candidates[j].producer_id);
    if (!scorers[j]) {
      throw InvalidArgument("no backend for producer '" +
                            candidates[j].producer_id + "'");
    }
  }

  std::optional<std::string_view> context;
  if (config.context_mode == ContextMode::query_conditioned) context = query;

  struct Slot {
    std::optional<double> value;
    std::optional<FailureRecord> failure;
  };
  std::vector<Slot> slots(n * n);
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) jobs.emplace_back(i, j);
    }
  }

  run_jobs(jobs.size(), options, [&](std::size_t k) {
    const auto [i, j] = jobs[k];
    auto& slot = slots[i * n + j];
    const Backend& scorer = *scorers[j];
    try {
      auto scored = score_text(scorer, candidates[i].text, context);
      slot.value = normalized_logprob(scored, config.normalization);
    } catch (const BackendError& e) {
      slot.failure = failure_from(e, FailureStage::score, i);
    } catch (const std::exception& e) {
      slot.failure = failure_from(scorer.id(), e, FailureStage::score, i);
    }
  });

  MatrixBuild out{ScoreMatrix(n), {}};
  for (const auto& [i, j] : jobs) {
    auto& slot = slots[i * n + j];
    if (slot.value) {
      out.matrix.set(i, j, *slot.value);
    } else if (slot.failure) {
      out.failures.push_back(std::move(*slot.failure));
    }
  }
  return out;
}

ConsensusReport run_consensus(const std::string& query,
                              const EnsembleConfig& config,
                              const ExecutionOptions& options) {
  config.validate();
  std::vector<BackendPtr> backends(config.endpoints.size());
  std::vector<FailureRecord> setup_failures;
  for (std::size_t k = 0; k < config.endpoints.size(); ++k) {
    try {
      backends[k] = make_backend(config.endpoints[k], config.base_dir);
    } catch (const BackendError& e) {
      setup_failures.push_back(failure_from(e, FailureStage::setup, {}));
    }
  }
  ConsensusReport report;
  try {
    report = run_consensus(query, config, backends, options);
  } catch (const ConsensusError& e) {
    auto failures = setup_failures;
    failures.insert(failures.end(), e.failures().begin(), e.failures().end());
    throw ConsensusError(e.what(), std::move(failures),
                         e.deficient_candidates());
  }
  report.failures.insert(report.failures.begin(), setup_failures.begin(),
                         setup_failures.end());
  return report;
}

ConsensusReport run_consensus(const std::string& query,
                              const EnsembleConfig& config,
                              const std::vector<BackendPtr>& backends,
                              const ExecutionOptions& options) {
  config.validate();
  if (backends.size() != config.endpoints.size()) {
    throw InvalidArgument("backends are not aligned with endpoints");
  }
  for (std::size_t k = 0; k < backends.size(); ++k) {
    if (backends[k] && backends[k]->id() != config.endpoints[k].id) {
      throw InvalidArgument("backend '" + backends[k]->id() +
                            "' does not match endpoint '" +
                            config.endpoints[k].id + "'");
    }
  }

  const auto& gen = config.generation;
  const std::size_t m = backends.size();
  std::vector<std::optional<Candidate>> generated(m);
  std::vector<std::optional<FailureRecord>> gen_failures(m);
  run_jobs(m, options, [&](std::size_t k) {
    if (!backends[k]) return;
    std::optional<std::uint64_t> seed;
    switch (gen.seed_policy) {
      case SeedPolicy::per_endpoint: seed = gen.seed + k; break;
      case SeedPolicy::fixed: seed = gen.seed; break;
      case SeedPolicy::none: break;
    }
    try {
      generated[k] = generate_candidate(*backends[k], query, gen.max_tokens,
                                        gen.temperature, seed,
                                        gen.stop_at_newline);
    } catch (const BackendError& e) {
      gen_failures[k] = failure_from(e, FailureStage::generate, {});
    } catch (const std::exception& e) {
      gen_failures[k] =
          failure_from(backends[k]->id(), e, FailureStage::generate, {});
    }
  });

  ConsensusReport report;
  report.query = query;
  report.config_echo = config;
  report.tool_version = kToolVersion;
  for (std::size_t k = 0; k < m; ++k) {
    if (generated[k]) {
      generated[k]->candidate_id = report.candidates.size();
      report.candidates.push_back(std::move(*generated[k]));
    } else if (gen_failures[k]) {
      report.failures.push_back(std::move(*gen_failures[k]));
    }
  }
  if (report.candidates.size() < 2) {
    throw ConsensusError("only " + std::to_string(report.candidates.size()) +
                             " candidate(s) generated; at least 2 required",
                         report.failures);
  }

  auto built = build_score_matrix(report.candidates, backends, query, config,
                                  options);
  report.matrix = std::move(built.matrix);
  report.failures.insert(report.failures.end(), built.failures.begin(),
                         built.failures.end());

  const auto quorum = apply_quorum(report.matrix, config.quorum);
  if (!quorum.ok()) {
    std::string ids;
    for (auto id : quorum.deficient) {
      if (!ids.empty()) ids += ", ";
      ids += std::to_string(id) + " (" + report.candidates[id].producer_id + ")";
    }
    throw ConsensusError("quorum not met for candidate(s) " + ids,
                         report.failures, quorum.deficient);
  }

  for (std::size_t i = 0; i < report.matrix.size(); ++i) {
    report.scores.push_back(consensus_score(report.matrix, i));
  }
  for (const auto& s : order_scores(report.scores)) {
    report.ranking.push_back(s.candidate_id);
  }
  report.winner_id = report.ranking.front();
  report.outlier_flags = flag_outliers(report.scores, config.outlier_k);
  report.duplicate_groups = duplicate_groups(report.candidates);
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

ordered_json to_json(const EnsembleConfig& config) {
  ordered_json endpoints = ordered_json::array();
  for (const auto& ep : config.endpoints) {
    ordered_json e;
    e["id"] = ep.id;
    if (ep.kind == EndpointKind::remote) {
      e["kind"] = "remote";
      e["base_url"] = ep.base_url;
      e["model_name"] = ep.model_name;
      if (ep.auth_env) e["auth_env"] = *ep.auth_env;
      e["transport_retries"] = ep.transport_retries;
    } else {
      e["kind"] = "reference";
      e["model_file"] = ep.model_file.generic_string();
    }
    e["timeout_ms"] = ep.timeout.count();
    endpoints.push_back(std::move(e));
  }
  ordered_json gen;
  gen["max_tokens"] = config.generation.max_tokens;
  gen["temperature"] = config.generation.temperature;
  gen["seed_policy"] = to_string(config.generation.seed_policy);
  gen["seed"] = config.generation.seed;
  gen["stop_at_newline"] = config.generation.stop_at_newline;

  ordered_json out;
  out["endpoints"] = std::move(endpoints);
  out["context_mode"] = to_string(config.context_mode);
  out["generation"] = std::move(gen);
  out["outlier_k"] = config.outlier_k;
  out["quorum"] = config.quorum;
  out["normalization"] = to_string(config.normalization);
  return out;
}

ordered_json to_json(const FailureRecord& failure) {
  ordered_json out;
  out["endpoint_id"] = failure.endpoint_id;
  out["stage"] = to_string(failure.stage);
  out["category"] = to_string(failure.category);
  out["candidate_id"] = failure.candidate_id
                            ? ordered_json(*failure.candidate_id)
                            : ordered_json(nullptr);
  out["detail"] = failure.detail;
  return out;
}

ordered_json to_json(const ConsensusReport& report) {
  ordered_json out;
  out["schema_version"] = kReportSchemaVersion;
  out["tool_version"] = report.tool_version;
  put_bytes(out, "query", report.query);
  out["config"] = to_json(report.config_echo);

  ordered_json candidates = ordered_json::array();
  for (const auto& c : report.candidates) {
    ordered_json cj;
    cj["candidate_id"] = c.candidate_id;
    cj["producer_id"] = c.producer_id;
    put_bytes(cj, "text", c.text);
    candidates.push_back(std::move(cj));
  }
  out["candidates"] = std::move(candidates);

  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < report.matrix.size(); ++i) {
    ordered_json row = ordered_json::array();
    for (std::size_t j = 0; j < report.matrix.size(); ++j) {
      auto v = report.matrix.at(i, j);
      row.push_back(v ? ordered_json(*v) : ordered_json(nullptr));
    }
    rows.push_back(std::move(row));
  }
  ordered_json matrix;
  matrix["n"] = report.matrix.size();
  matrix["entries"] = std::move(rows);
  out["matrix"] = std::move(matrix);

  ordered_json scores = ordered_json::array();
  for (const auto& s : report.scores) {
    ordered_json sj;
    sj["candidate_id"] = s.candidate_id;
    sj["score"] = s.score;
    sj["contributing_models"] = s.contributing_models;
    scores.push_back(std::move(sj));
  }
  out["scores"] = std::move(scores);
  out["ranking"] = report.ranking;
  out["winner_id"] = report.winner_id;

  ordered_json flags = ordered_json::array();
  for (const auto& f : report.outlier_flags) {
    ordered_json fj;
    fj["candidate_id"] = f.candidate_id;
    fj["flagged"] = f.flagged;
    fj["zvalue"] = f.zvalue;
    flags.push_back(std::move(fj));
  }
  out["outliers"] = std::move(flags);

  ordered_json failures = ordered_json::array();
  for (const auto& f : report.failures) failures.push_back(to_json(f));
  out["failures"] = std::move(failures);
  out["duplicate_groups"] = report.duplicate_groups;
  return out;
}

std::string canonical_json(const ConsensusReport& report) {
  return to_json(report).dump(2) + "\n";
}

}  // namespace crossrank
