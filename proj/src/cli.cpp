#include "crossrank/cli.hpp"

#include <iostream>
#include <iterator>
#include <sstream>

#include "CLI11.hpp"
#include "crossrank/attack_sim.hpp"
#include "crossrank/config.hpp"
#include "crossrank/ensemble.hpp"
#include "crossrank/ngram.hpp"
#include "crossrank/version.hpp"

namespace crossrank::cli {

namespace {

namespace fs = std::filesystem;

struct RankArgs {
  std::string config;
  std::string query;
  std::string query_file;
  bool strict = false;
  std::string output;
  bool print_winner = false;
};

struct ScoreArgs {
  std::string config;
  std::string candidate;
  std::string context;
  std::string context_file;
  std::string output;
};

struct SimulateArgs {
  std::string scenario;
  std::string output;
  std::string csv;
  std::size_t threads = 0;
};

struct TrainArgs {
  std::string corpus_dir;
  int order = 3;
  double alpha = 0.5;
  std::string output;
};

struct HealthArgs {
  std::string config;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

std::string read_input(const std::string& path, std::istream& in) {
  if (path == "-") {
    return std::string(std::istreambuf_iterator<char>(in), {});
  }
  try {
    return read_file(path);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

void write_output(const fs::path& path, std::string_view contents) {
  try {
    write_file_atomic(path, contents);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

void print_failures(std::ostream& err, const std::vector<FailureRecord>& fs) {
  for (const auto& f : fs) {
    err << "  " << f.endpoint_id << " [" << to_string(f.stage) << ", "
        << to_string(f.category) << "]: " << f.detail << "\n";
  }
}

int cmd_rank(const RankArgs& args, std::istream& in, std::ostream& out,
             std::ostream& err) {
  const auto config = load_tool_config(args.config);
  if (!args.query.empty() && !args.query_file.empty()) {
    throw UsageError("use either --query or --query-file, not both");
  }
  std::string query = args.query_file.empty() ? args.query
                                              : read_input(args.query_file, in);
  if (query.empty()) throw UsageError("query is empty");

  fs::path report_path;
  if (!args.output.empty()) {
    report_path = args.output;
  } else if (config.output.report_path) {
    report_path = *config.output.report_path;
  } else {
    throw UsageError("no report path: pass --output or set output.report_path");
  }

  ConsensusReport report;
  try {
    report = run_consensus(query, config.ensemble);
  } catch (const ConsensusError& e) {
    err << "error: " << e.what() << "\n";
    print_failures(err, e.failures());
    return kBackend;
  }
  write_output(report_path, canonical_json(report));

  if (!report.failures.empty()) {
    err << "warning: " << report.failures.size() << " backend failure(s)\n";
    print_failures(err, report.failures);
  }
  const bool vetoed = args.strict && report.any_flagged();
  if (vetoed) {
    for (const auto& f : report.outlier_flags) {
      if (f.flagged) {
        err << "flagged: candidate " << f.candidate_id << " ("
            << report.candidates[f.candidate_id].producer_id
            << "), z = " << f.zvalue << "\n";
      }
    }
    return kFlagged;
  }
  if (args.print_winner || config.output.print_winner) {
    out << report.candidates[report.winner_id].text;
  }
  return kOk;
}

int cmd_score(const ScoreArgs& args, std::istream& in, std::ostream& out,
              std::ostream& err) {
  const auto config = load_tool_config(args.config);
  const auto text = read_input(args.candidate, in);
  if (text.empty()) throw UsageError("candidate file is empty");
  if (!args.context.empty() && !args.context_file.empty()) {
    throw UsageError("use either --context or --context-file, not both");
  }
  std::optional<std::string> context;
  if (!args.context.empty()) context = args.context;
  if (!args.context_file.empty()) context = read_input(args.context_file, in);

  const auto& ens = config.ensemble;
  std::vector<std::optional<ordered_json>> rows(ens.endpoints.size());
  std::vector<std::optional<FailureRecord>> failures(ens.endpoints.size());
  std::vector<std::string> config_errors(ens.endpoints.size());
  run_jobs(ens.endpoints.size(), {}, [&](std::size_t k) {
    const auto& ep = ens.endpoints[k];
    try {
      auto backend = make_backend(ep, ens.base_dir);
      const auto scored = score_text(*backend, text, context);
      const double mean = normalized_logprob(scored, ens.normalization);
      ordered_json row;
      row["endpoint_id"] = ep.id;
      row["token_count"] = scored.logprobs.token_count();
      row["mean_logprob"] = mean;
      row["perplexity"] = perplexity(mean);
      rows[k] = std::move(row);
    } catch (const BackendError& e) {
      failures[k] = FailureRecord{e.endpoint_id(), e.category(), e.detail(),
                                  FailureStage::score, std::nullopt};
    } catch (const InvalidArgument& e) {
      config_errors[k] = e.what();
    } catch (const std::exception& e) {
      failures[k] = FailureRecord{ep.id, FailureCategory::protocol, e.what(),
                                  FailureStage::score, std::nullopt};
    }
  });

  for (const auto& msg : config_errors) {
    if (!msg.empty()) throw UsageError(msg);
  }

  ordered_json doc;
  doc["schema_version"] = 1;
  doc["tool_version"] = kToolVersion;
  put_bytes(doc, "text", text);
  if (context) put_bytes(doc, "context", *context);
  else doc["context"] = nullptr;
  doc["normalization"] = to_string(ens.normalization);
  doc["scores"] = ordered_json::array();
  doc["failures"] = ordered_json::array();
  std::size_t ok = 0;
  std::vector<FailureRecord> failed;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k]) {
      doc["scores"].push_back(std::move(*rows[k]));
      ++ok;
    } else if (failures[k]) {
      doc["failures"].push_back(to_json(*failures[k]));
      failed.push_back(*failures[k]);
    }
  }
  const auto body = doc.dump(2) + "\n";
  if (args.output.empty()) {
    out << body;
  } else {
    write_output(args.output, body);
  }
  print_failures(err, failed);
  const double fraction =
      static_cast<double>(ok) / static_cast<double>(ens.endpoints.size());
  if (ok == 0 || fraction < ens.quorum) {
    err << "error: " << ok << " of " << ens.endpoints.size()
        << " scorers succeeded; quorum is " << ens.quorum << "\n";
    return kBackend;
  }
  return kOk;
}

int cmd_simulate(const SimulateArgs& args, std::ostream& out,
                 std::ostream& err) {
  const auto scenario = load_scenario(args.scenario);
  SimulationResult result;
  try {
    ExecutionOptions options;
    options.max_parallel = args.threads;
    result = detection_curve(scenario, options);
  } catch (const Error& e) {
    err << "error: simulation failed: " << e.what() << "\n";
    return kBackend;
  }
  write_output(args.output, canonical_json(scenario, result));
  if (!args.csv.empty()) write_output(args.csv, to_csv(result));
  out << to_csv(result);
  return kOk;
}

int cmd_train_ref(const TrainArgs& args, std::ostream& out) {
  Corpus corpus;
  NGramModel model(1, 1.0);
  try {
    corpus = load_corpus_directory(args.corpus_dir);
    model = train(corpus, args.order, args.alpha);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  std::ostringstream body;
  model.save(body);
  write_output(args.output, body.str());
  out << model.fingerprint() << "\n";
  return kOk;
}

int cmd_health(const HealthArgs& args, std::ostream& out) {
  const auto config = load_tool_config(args.config);
  bool all_ok = true;
  for (const auto& ep : config.ensemble.endpoints) {
    const auto status = health_check(ep, config.ensemble.base_dir);
    if (status.ok) {
      out << ep.id << ": ok\n";
    } else {
      all_ok = false;
      out << ep.id << ": failing (" << to_string(status.error->category())
          << "): " << status.error->detail() << "\n";
    }
  }
  return all_ok ? kOk : kBackend;
}

}  // namespace

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Cross-model consensus ranking for generated code"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  RankArgs rank;
  auto* rank_cmd = app.add_subcommand(
      "rank", "Generate candidates on every endpoint and rank them");
  rank_cmd->add_option("-c,--config", rank.config, "Tool config (JSON)")->required();
  rank_cmd->add_option("-q,--query", rank.query, "Query text");
  rank_cmd->add_option("--query-file", rank.query_file,
                       "Read the query from a file ('-' for stdin)");
  rank_cmd->add_flag("--strict", rank.strict,
                     "Exit 3 when any candidate is flagged as an outlier");
  rank_cmd->add_option("-o,--output", rank.output, "Report path");
  rank_cmd->add_flag("--print-winner", rank.print_winner,
                     "Write the winning candidate's text to stdout");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand(
      "score", "Score one text with every configured endpoint");
  score_cmd->add_option("-c,--config", score.config, "Tool config (JSON)")->required();
  score_cmd->add_option("--candidate", score.candidate,
                        "Text to score ('-' for stdin)")->required();
  score_cmd->add_option("--context", score.context, "Unscored context text");
  score_cmd->add_option("--context-file", score.context_file,
                        "Read unscored context from a file");
  score_cmd->add_option("-o,--output", score.output,
                        "Write JSON here instead of stdout");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand(
      "simulate", "Run a poisoning scenario and write its detection curve");
  sim_cmd->add_option("-s,--scenario", sim.scenario, "Scenario (JSON)")->required();
  sim_cmd->add_option("-o,--output", sim.output, "Result JSON path")->required();
  sim_cmd->add_option("--csv", sim.csv, "Also write the curve as CSV");
  sim_cmd->add_option("-j,--threads", sim.threads,
                      "Worker threads (0 = hardware concurrency)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand(
      "train-ref", "Train a reference n-gram model on a directory of files");
  train_cmd->add_option("--corpus-dir", tr.corpus_dir, "Corpus directory")->required();
  train_cmd->add_option("--order", tr.order, "n-gram order")->check(CLI::PositiveNumber);
  train_cmd->add_option("--alpha", tr.alpha, "Add-alpha smoothing mass")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("-o,--output", tr.output, "Model file")->required();

  HealthArgs health;
  auto* health_cmd = app.add_subcommand("health", "Check every endpoint");
  health_cmd->add_option("-c,--config", health.config, "Tool config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*rank_cmd) return cmd_rank(rank, in, out, err);
    if (*score_cmd) return cmd_score(score, in, out, err);
    if (*sim_cmd) return cmd_simulate(sim, out, err);
    if (*train_cmd) return cmd_train_ref(tr, out);
    if (*health_cmd) return cmd_health(health, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kBackend;
  }
  return kUsage;
}

}  // namespace crossrank::cli
