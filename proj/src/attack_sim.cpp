#include "crossrank/attack_sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "crossrank/version.hpp"

namespace crossrank {

std::string_view to_string(Diversity diversity) {
  switch (diversity) {
    case Diversity::disjoint: return "disjoint";
    case Diversity::overlapping: return "overlapping";
    case Diversity::identical: return "identical";
  }
  return "disjoint";
}

std::string_view to_string(PoisonMode mode) {
  return mode == PoisonMode::candidate ? "candidate" : "corpus";
}

namespace {

std::size_t non_empty_documents(const Corpus& corpus) {
  return static_cast<std::size_t>(
      std::count_if(corpus.documents.begin(), corpus.documents.end(),
                    [](const std::string& d) { return !d.empty(); }));
}

}  // namespace

void AttackScenario::validate() const {
  if (payload.empty()) throw InvalidArgument("payload: must be non-empty");
  if (injection_fractions.empty()) {
    throw InvalidArgument("injection_fractions: must be non-empty");
  }
  for (std::size_t k = 0; k < injection_fractions.size(); ++k) {
    const double f = injection_fractions[k];
    if (!(f >= 0.0 && f <= 1.0)) {
      throw InvalidArgument("injection_fractions[" + std::to_string(k) +
                            "]: must be in [0, 1]");
    }
    if (k > 0 && !(injection_fractions[k - 1] < f)) {
      throw InvalidArgument("injection_fractions: must be strictly ascending");
    }
  }
  if (n_models < 2) throw InvalidArgument("n_models: must be >= 2");
  if (order < 1) throw InvalidArgument("order: must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InvalidArgument("alpha: must be > 0");
  }
  if (trials < 1) throw InvalidArgument("trials: must be >= 1");
  if (candidate_length < 1) {
    throw InvalidArgument("candidate_length: must be >= 1");
  }
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("temperature: must be >= 0");
  }
  if (!(overlap_fraction > 0.0 && overlap_fraction <= 1.0)) {
    throw InvalidArgument("overlap_fraction: must be in (0, 1]");
  }
  const auto docs = non_empty_documents(clean_corpus);
  if (docs == 0) {
    throw InvalidArgument("clean_corpus: needs at least one non-empty document");
  }
  if (diversity == Diversity::disjoint &&
      docs < static_cast<std::size_t>(n_models)) {
    throw InvalidArgument(
        "clean_corpus: disjoint diversity needs at least n_models non-empty "
        "documents");
  }
}

std::string inject_payload(std::string_view candidate, std::string_view payload,
                           double fraction, std::uint64_t seed) {
  if (payload.empty()) throw InvalidArgument("payload must be non-empty");
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("fraction must be in [0, 1]");
  }
  auto repeat = [payload](std::size_t len) {
    std::string block;
    block.reserve(len);
    while (block.size() < len) {
      block.append(payload.substr(0, len - block.size()));
    }
    return block;
  };

  const std::size_t length = candidate.size();
  if (fraction == 0.0) return std::string(candidate);
  if (fraction == 1.0) return repeat(std::max(length, payload.size()));

  const auto block_len = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(length) / (1.0 - fraction)));
  SplitMix64 rng(seed);
  const auto pos = static_cast<std::size_t>(rng.below(length + 1));
  std::string out;
  out.reserve(length + block_len);
  out.append(candidate.substr(0, pos));
  out.append(repeat(block_len));
  out.append(candidate.substr(pos));
  return out;
}

PoisonedBackend::PoisonedBackend(BackendPtr inner, std::string payload,
                                 double fraction, std::uint64_t seed)
    : inner_(std::move(inner)),
      payload_(std::move(payload)),
      fraction_(fraction),
      seed_(seed) {
  if (!inner_) throw InvalidArgument("poisoned backend needs an inner backend");
}

std::string PoisonedBackend::complete(const GenerationRequest& request) const {
  return inject_payload(inner_->complete(request), payload_, fraction_, seed_);
}

ScoredText PoisonedBackend::score(std::string_view text,
                                  std::optional<std::string_view> context) const {
  return inner_->score(text, context);
}

std::uint64_t trial_seed(std::uint64_t master_seed, int trial_index) {
  SplitMix64 rng(master_seed ^
                 (0xD1B54A32D192ED03ull * static_cast<std::uint64_t>(
                                              trial_index + 1)));
  return rng.next();
}

namespace {

struct TrialSetup {
  int trial_index = 0;
  std::uint64_t seed = 0;
  std::size_t poisoned = 0;
  std::vector<Corpus> shards;
  std::vector<std::shared_ptr<const NGramModel>> models;
  std::uint64_t generation_seed = 0;
  std::uint64_t injection_seed = 0;
};

std::vector<Corpus> split_corpus(const AttackScenario& s, SplitMix64& rng) {
  const auto n = static_cast<std::size_t>(s.n_models);
  std::vector<std::size_t> docs;
  for (std::size_t k = 0; k < s.clean_corpus.documents.size(); ++k) {
    if (!s.clean_corpus.documents[k].empty()) docs.push_back(k);
  }
  for (std::size_t k = docs.size(); k > 1; --k) {
    std::swap(docs[k - 1], docs[rng.below(k)]);
  }

  std::vector<Corpus> shards(n);
  for (std::size_t m = 0; m < n; ++m) {
    shards[m].name = s.clean_corpus.name + "/shard" + std::to_string(m);
  }
  auto add = [&](std::size_t m, std::size_t doc) {
    shards[m].documents.push_back(s.clean_corpus.documents[doc]);
  };
  switch (s.diversity) {
    case Diversity::disjoint:
      for (std::size_t k = 0; k < docs.size(); ++k) add(k % n, docs[k]);
      break;
    case Diversity::identical:
      for (std::size_t m = 0; m < n; ++m) {
        for (auto doc : docs) add(m, doc);
      }
      break;
    case Diversity::overlapping:
      for (std::size_t m = 0; m < n; ++m) {
        for (auto doc : docs) {
          if (rng.uniform() < s.overlap_fraction) add(m, doc);
        }
        if (shards[m].documents.empty()) add(m, docs[rng.below(docs.size())]);
      }
      break;
  }
  return shards;
}

TrialSetup prepare_trial(const AttackScenario& s, int trial_index) {
  TrialSetup setup;
  setup.trial_index = trial_index;
  setup.seed = trial_seed(s.master_seed, trial_index);
  SplitMix64 rng(setup.seed);
  setup.shards = split_corpus(s, rng);
  setup.poisoned = static_cast<std::size_t>(rng.below(setup.shards.size()));
  setup.generation_seed = rng.next();
  setup.injection_seed = rng.next();
  for (const auto& shard : setup.shards) {
    setup.models.push_back(
        std::make_shared<const NGramModel>(train(shard, s.order, s.alpha)));
  }
  return setup;
}

std::string model_id(std::size_t m) { return "m" + std::to_string(m); }

TrialOutcome evaluate_trial(const AttackScenario& s, const TrialSetup& setup,
                            double fraction) {
  const bool active =
      !s.trigger || s.query.find(*s.trigger) != std::string::npos;
  const double effective = active ? fraction : 0.0;
  const std::size_t n = setup.models.size();

  EnsembleConfig config;
  config.context_mode = ContextMode::candidate_only;
  config.generation.max_tokens = s.candidate_length;
  config.generation.temperature = s.temperature;
  config.generation.seed_policy = SeedPolicy::per_endpoint;
  config.generation.seed = setup.generation_seed;
  std::vector<BackendPtr> backends;
  for (std::size_t m = 0; m < n; ++m) {
    ModelEndpoint ep;
    ep.id = model_id(m);
    ep.kind = EndpointKind::reference;
    ep.model_file = "memory:" + ep.id;
    config.endpoints.push_back(ep);

    auto model = setup.models[m];
    if (m == setup.poisoned && s.mode == PoisonMode::corpus &&
        effective > 0.0) {
      Corpus poisoned = setup.shards[m];
      for (std::size_t d = 0; d < poisoned.documents.size(); ++d) {
        poisoned.documents[d] = inject_payload(
            poisoned.documents[d], s.payload, effective,
            setup.injection_seed + d);
      }
      model = std::make_shared<const NGramModel>(
          train(poisoned, s.order, s.alpha));
    }
    BackendPtr backend = std::make_shared<ReferenceBackend>(ep.id, model);
    if (m == setup.poisoned && s.mode == PoisonMode::candidate) {
      backend = std::make_shared<PoisonedBackend>(backend, s.payload, effective,
                                                  setup.injection_seed);
    }
    backends.push_back(std::move(backend));
  }

  ExecutionOptions serial;
  serial.max_parallel = 1;
  const auto report = run_consensus(s.query, config, backends, serial);

  TrialOutcome out;
  out.trial_index = setup.trial_index;
  out.trial_seed = setup.seed;
  out.poisoned_candidate_id = setup.poisoned;
  const auto it = std::find(report.ranking.begin(), report.ranking.end(),
                            setup.poisoned);
  out.poisoned_rank = static_cast<std::size_t>(it - report.ranking.begin());
  out.detected = out.poisoned_rank != 0;
  out.score_gap = report.scores[setup.poisoned].score -
                  report.scores[report.winner_id].score;
  return out;
}

}  // namespace

TrialOutcome run_trial(const AttackScenario& scenario, double fraction,
                       int trial_index) {
  scenario.validate();
  if (std::find(scenario.injection_fractions.begin(),
                scenario.injection_fractions.end(),
                fraction) == scenario.injection_fractions.end()) {
    throw InvalidArgument("fraction is not one of the scenario's fractions");
  }
  if (trial_index < 0) throw InvalidArgument("trial_index must be >= 0");
  return evaluate_trial(scenario, prepare_trial(scenario, trial_index),
                        fraction);
}

SimulationResult detection_curve(const AttackScenario& scenario,
                                 const ExecutionOptions& options) {
  scenario.validate();
  const auto& fractions = scenario.injection_fractions;
  const auto trials = static_cast<std::size_t>(scenario.trials);
  std::vector<std::vector<TrialOutcome>> outcomes(
      fractions.size(), std::vector<TrialOutcome>(trials));
  std::vector<std::string> errors(trials);

  ExecutionOptions trial_options = options;
  trial_options.shuffle_seed.reset();
  run_jobs(trials, trial_options, [&](std::size_t t) {
    try {
      const auto setup = prepare_trial(scenario, static_cast<int>(t));
      for (std::size_t f = 0; f < fractions.size(); ++f) {
        outcomes[f][t] = evaluate_trial(scenario, setup, fractions[f]);
      }
    } catch (const std::exception& e) {
      errors[t] = e.what();
    }
  });
  for (std::size_t t = 0; t < trials; ++t) {
    if (!errors[t].empty()) {
      throw Error("trial " + std::to_string(t) + " failed: " + errors[t]);
    }
  }

  SimulationResult result;
  for (std::size_t f = 0; f < fractions.size(); ++f) {
    std::size_t detected = 0;
    double rank_sum = 0.0;
    double gap_sum = 0.0;
    for (const auto& o : outcomes[f]) {
      detected += o.detected ? 1 : 0;
      rank_sum += static_cast<double>(o.poisoned_rank);
      gap_sum += o.score_gap;
    }
    const double count = static_cast<double>(trials);
    result.rows.push_back({fractions[f], static_cast<double>(detected) / count,
                           rank_sum / count, gap_sum / count,
                           scenario.trials});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Scenario files

namespace {

[[noreturn]] void field_error(const std::string& field, const std::string& msg) {
  throw FormatError(field + ": " + msg);
}

const nlohmann::json& require(const nlohmann::json& obj,
                              const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end()) field_error(key, "missing");
  return *it;
}

template <typename T>
T number_field(const nlohmann::json& obj, const std::string& key, T fallback,
               bool required = false) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) field_error(key, "missing");
    return fallback;
  }
  if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) field_error(key, "must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) field_error(key, "must be non-negative");
    }
  } else {
    if (!it->is_number()) field_error(key, "must be a number");
  }
  return it->get<T>();
}

std::string string_field(const nlohmann::json& obj, const std::string& key,
                         const std::string& fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_string()) field_error(key, "must be a string");
  return it->get<std::string>();
}

}  // namespace

AttackScenario parse_scenario(const nlohmann::json& doc,
                              const std::filesystem::path& base_dir) {
  if (!doc.is_object()) field_error("$", "scenario must be a JSON object");
  if (auto v = number_field<int>(doc, "schema_version", 0, true);
      v != kScenarioSchemaVersion) {
    field_error("schema_version", "unsupported version " + std::to_string(v));
  }
  for (const auto& [key, value] : doc.items()) {
    static const std::set<std::string> known = {
        "schema_version", "name", "clean_corpus", "payload", "payload_hex",
        "injection_fractions", "diversity", "n_models", "order", "alpha",
        "trials", "master_seed", "trigger", "query", "query_hex",
        "candidate_length", "temperature", "poison_mode", "overlap_fraction"};
    if (!known.count(key)) field_error(key, "unknown field");
  }
  AttackScenario s;
  s.name = string_field(doc, "name", s.name);

  const auto& corpus = require(doc, "clean_corpus");
  if (!corpus.is_object()) field_error("clean_corpus", "must be an object");
  if (corpus.contains("directory")) {
    const auto& dir = corpus["directory"];
    if (!dir.is_string()) field_error("clean_corpus.directory", "must be a string");
    std::filesystem::path p = dir.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    try {
      s.clean_corpus = load_corpus_directory(p);
    } catch (const Error& e) {
      field_error("clean_corpus.directory", e.what());
    }
  } else if (corpus.contains("documents")) {
    const auto& docs = corpus["documents"];
    if (!docs.is_array()) field_error("clean_corpus.documents", "must be an array");
    for (std::size_t k = 0; k < docs.size(); ++k) {
      if (!docs[k].is_string()) {
        field_error("clean_corpus.documents[" + std::to_string(k) + "]",
                    "must be a string");
      }
      s.clean_corpus.documents.push_back(docs[k].get<std::string>());
    }
  } else {
    field_error("clean_corpus", "needs 'directory' or 'documents'");
  }
  if (corpus.contains("name")) {
    if (!corpus["name"].is_string()) field_error("clean_corpus.name", "must be a string");
    s.clean_corpus.name = corpus["name"].get<std::string>();
  } else if (s.clean_corpus.name.empty()) {
    s.clean_corpus.name = "corpus";
  }

  if (!has_bytes(doc, "payload")) field_error("payload", "missing");
  try {
    s.payload = get_bytes(doc, "payload");
  } catch (const FormatError& e) {
    field_error("payload", e.what());
  }

  const auto& fractions = require(doc, "injection_fractions");
  if (!fractions.is_array()) field_error("injection_fractions", "must be an array");
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    if (!fractions[k].is_number()) {
      field_error("injection_fractions[" + std::to_string(k) + "]",
                  "must be a number");
    }
    s.injection_fractions.push_back(fractions[k].get<double>());
  }

  const auto diversity = string_field(doc, "diversity", "disjoint");
  if (diversity == "disjoint") s.diversity = Diversity::disjoint;
  else if (diversity == "overlapping") s.diversity = Diversity::overlapping;
  else if (diversity == "identical") s.diversity = Diversity::identical;
  else field_error("diversity", "must be disjoint, overlapping or identical");

  s.n_models = number_field<int>(doc, "n_models", s.n_models);
  s.order = number_field<int>(doc, "order", s.order);
  s.alpha = number_field<double>(doc, "alpha", s.alpha);
  s.trials = number_field<int>(doc, "trials", s.trials);
  s.master_seed = number_field<std::uint64_t>(doc, "master_seed", 0, true);
  if (doc.contains("trigger") && !doc["trigger"].is_null()) {
    if (!doc["trigger"].is_string()) field_error("trigger", "must be a string");
    s.trigger = doc["trigger"].get<std::string>();
  }
  if (has_bytes(doc, "query")) s.query = get_bytes(doc, "query");
  s.candidate_length =
      number_field<int>(doc, "candidate_length", s.candidate_length);
  s.temperature = number_field<double>(doc, "temperature", s.temperature);
  const auto mode = string_field(doc, "poison_mode", "candidate");
  if (mode == "candidate") s.mode = PoisonMode::candidate;
  else if (mode == "corpus") s.mode = PoisonMode::corpus;
  else field_error("poison_mode", "must be candidate or corpus");
  s.overlap_fraction =
      number_field<double>(doc, "overlap_fraction", s.overlap_fraction);

  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return s;
}

AttackScenario load_scenario(const std::filesystem::path& path) {
  const auto text = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    return parse_scenario(doc, path.parent_path());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ordered_json to_json(const AttackScenario& s, const SimulationResult& result) {
  ordered_json corpus;
  corpus["name"] = s.clean_corpus.name;
  corpus["documents"] = s.clean_corpus.documents.size();
  corpus["fingerprint"] = corpus_fingerprint(s.clean_corpus);

  ordered_json scenario;
  scenario["name"] = s.name;
  scenario["clean_corpus"] = std::move(corpus);
  put_bytes(scenario, "payload", s.payload);
  scenario["injection_fractions"] = s.injection_fractions;
  scenario["diversity"] = to_string(s.diversity);
  scenario["n_models"] = s.n_models;
  scenario["order"] = s.order;
  scenario["alpha"] = s.alpha;
  scenario["trials"] = s.trials;
  scenario["master_seed"] = s.master_seed;
  scenario["trigger"] = s.trigger ? ordered_json(*s.trigger) : ordered_json(nullptr);
  put_bytes(scenario, "query", s.query);
  scenario["candidate_length"] = s.candidate_length;
  scenario["temperature"] = s.temperature;
  scenario["poison_mode"] = to_string(s.mode);
  scenario["overlap_fraction"] = s.overlap_fraction;

  ordered_json rows = ordered_json::array();
  for (const auto& r : result.rows) {
    ordered_json row;
    row["fraction"] = r.fraction;
    row["detection_rate"] = r.detection_rate;
    row["mean_poisoned_rank"] = r.mean_poisoned_rank;
    row["mean_score_gap"] = r.mean_score_gap;
    row["trials"] = r.trials;
    rows.push_back(std::move(row));
  }

  ordered_json out;
  out["schema_version"] = kSimulationSchemaVersion;
  out["tool_version"] = kToolVersion;
  out["scenario"] = std::move(scenario);
  out["results"] = std::move(rows);
  return out;
}

std::string canonical_json(const AttackScenario& scenario,
                           const SimulationResult& result) {
  return to_json(scenario, result).dump(2) + "\n";
}

std::string to_csv(const SimulationResult& result) {
  auto num = [](double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  std::string out = "fraction,detection_rate,mean_poisoned_rank,mean_score_gap\n";
  for (const auto& r : result.rows) {
    out += num(r.fraction) + ',' + num(r.detection_rate) + ',' +
           num(r.mean_poisoned_rank) + ',' + num(r.mean_score_gap) + '\n';
  }
  return out;
}

}  // namespace crossrank
