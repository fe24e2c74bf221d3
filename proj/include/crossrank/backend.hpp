#pragma once

// Model backends: a uniform generate/score surface over remote inference
// servers (completions protocol with echoed logprobs) and in-process
// reference n-gram models.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "crossrank/error.hpp"
#include "crossrank/ngram.hpp"
#include "crossrank/scoring.hpp"

namespace crossrank {

enum class EndpointKind { remote, reference };

struct ModelEndpoint {
  std::string id;
  EndpointKind kind = EndpointKind::reference;
  // remote only
  std::string base_url;
  std::string model_name;
  // Name of the environment variable holding the bearer token, never the
  // token itself.
  std::optional<std::string> auth_env;
  std::chrono::milliseconds timeout{30000};
  // Extra attempts after a transport failure. Timeouts are never retried.
  int transport_retries = 1;
  // reference only
  std::filesystem::path model_file;
};

enum class FailureCategory { timeout, protocol, transport, refusal };

std::string_view to_string(FailureCategory category);
FailureCategory failure_category_from_string(std::string_view name);

class BackendError : public Error {
 public:
  BackendError(std::string endpoint_id, FailureCategory category,
               std::string detail);

  const std::string& endpoint_id() const noexcept { return endpoint_id_; }
  FailureCategory category() const noexcept { return category_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string endpoint_id_;
  FailureCategory category_;
  std::string detail_;
};

struct ScoredText {
  std::string text;
  TokenLogProbs logprobs;
  std::optional<std::vector<std::string>> token_texts;
  std::string scorer_id;
};

// How a scorer's total log probability becomes L(c_i, M_j).
enum class Normalization { per_token, per_byte };

// per_token: mean over the scorer's own tokens. per_byte: total divided by
// the text's byte length.
double normalized_logprob(const ScoredText& scored, Normalization mode);

struct GenerationRequest {
  std::string query;
  int max_tokens = 128;
  double temperature = 1.0;
  std::optional<std::uint64_t> seed;
  bool stop_at_newline = false;
};

struct HealthStatus {
  bool ok = true;
  std::optional<BackendError> error;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual const std::string& id() const = 0;
  // Raw completion text for the query. Throws BackendError.
  virtual std::string complete(const GenerationRequest& request) const = 0;
  // Throws BackendError; EmptySequenceError on empty text.
  virtual ScoredText score(std::string_view text,
                           std::optional<std::string_view> context) const = 0;
  virtual HealthStatus health() const = 0;
};

using BackendPtr = std::shared_ptr<const Backend>;

class ReferenceBackend : public Backend {
 public:
  ReferenceBackend(std::string id, std::shared_ptr<const NGramModel> model);
  // Loads endpoint.model_file. Throws BackendError(protocol) when the file
  // is missing or malformed.
  explicit ReferenceBackend(const ModelEndpoint& endpoint);

  const std::string& id() const override { return id_; }
  std::string complete(const GenerationRequest& request) const override;
  ScoredText score(std::string_view text,
                   std::optional<std::string_view> context) const override;
  HealthStatus health() const override;

  const NGramModel& model() const { return *model_; }

 private:
  std::string id_;
  std::shared_ptr<const NGramModel> model_;
};

class RemoteBackend : public Backend {
 public:
  // Resolves the auth token from the environment. Throws InvalidArgument
  // when the named variable is unset.
  explicit RemoteBackend(ModelEndpoint endpoint);

  const std::string& id() const override { return endpoint_.id; }
  std::string complete(const GenerationRequest& request) const override;
  ScoredText score(std::string_view text,
                   std::optional<std::string_view> context) const override;
  HealthStatus health() const override;

 private:
  nlohmann::json post_json(const std::string& path,
                           const std::string& body) const;

  ModelEndpoint endpoint_;
  std::string host_;         // scheme://host[:port]
  std::string path_prefix_;  // path part of base_url without trailing '/'
  std::optional<std::string> token_;
};

// Relative reference model paths resolve against base_dir.
BackendPtr make_backend(const ModelEndpoint& endpoint,
                        const std::filesystem::path& base_dir = {});

// Candidate tagged with the backend's id. candidate_id is left at 0 for the
// caller to assign. Throws BackendError (refusal on an empty completion).
Candidate generate_candidate(const Backend& backend, std::string_view query,
                             int max_tokens, double temperature,
                             std::optional<std::uint64_t> seed,
                             bool stop_at_newline = false);

ScoredText score_text(const Backend& backend, std::string_view text,
                      std::optional<std::string_view> context = std::nullopt);

HealthStatus health_check(const Backend& backend);
// Builds the backend first; construction failures become a failing status.
HealthStatus health_check(const ModelEndpoint& endpoint,
                          const std::filesystem::path& base_dir = {});

namespace wire {

// Request bodies, serialized compactly with fixed field order.
std::string scoring_request(std::string_view model, std::string_view prompt);
std::string generation_request(std::string_view model, std::string_view prompt,
                               int max_tokens, double temperature,
                               std::optional<std::uint64_t> seed,
                               bool stop_at_newline);

struct SuffixLogprobs {
  std::vector<double> values;
  std::optional<std::vector<std::string>> tokens;
};

// Pulls the logprobs of the `text` part of an echoed context+text prompt out
// of a completions response. text_offset values are character (code point)
// offsets into the prompt. A null logprob on the very first echoed token is
// dropped. Throws BackendError(protocol) when the logprobs block is missing
// or malformed, or when no token starts exactly at the context boundary;
// BackendError(refusal) when there is no choice.
SuffixLogprobs extract_suffix_logprobs(const nlohmann::json& response,
                                       std::string_view context,
                                       std::string_view text,
                                       const std::string& endpoint_id);

// Number of UTF-8 code points (non-continuation bytes).
std::size_t code_point_count(std::string_view s);

}  // namespace wire

}  // namespace crossrank
