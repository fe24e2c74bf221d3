#include "crossrank/backend.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace crossrank {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(FailureCategory category) {
  switch (category) {
    case FailureCategory::timeout: return "timeout";
    case FailureCategory::protocol: return "protocol";
    case FailureCategory::transport: return "transport";
    case FailureCategory::refusal: return "refusal";
  }
  return "unknown";
}

FailureCategory failure_category_from_string(std::string_view name) {
  if (name == "timeout") return FailureCategory::timeout;
  if (name == "protocol") return FailureCategory::protocol;
  if (name == "transport") return FailureCategory::transport;
  if (name == "refusal") return FailureCategory::refusal;
  throw InvalidArgument("unknown failure category '" + std::string(name) + "'");
}

BackendError::BackendError(std::string endpoint_id, FailureCategory category,
                           std::string detail)
    : Error(endpoint_id + ": " + std::string(to_string(category)) + ": " +
            detail),
      endpoint_id_(std::move(endpoint_id)),
      category_(category),
      detail_(std::move(detail)) {}

double normalized_logprob(const ScoredText& scored, Normalization mode) {
  if (mode == Normalization::per_token) {
    return mean_token_logprob(scored.logprobs);
  }
  if (scored.text.empty()) {
    throw EmptySequenceError("per-byte normalization of empty text");
  }
  return scored.logprobs.sum() / static_cast<double>(scored.text.size());
}

// ---------------------------------------------------------------------------
// Reference backend

ReferenceBackend::ReferenceBackend(std::string id,
                                   std::shared_ptr<const NGramModel> model)
    : id_(std::move(id)), model_(std::move(model)) {
  if (!model_) throw InvalidArgument("reference backend needs a model");
}

namespace {

std::shared_ptr<const NGramModel> load_reference_model(
    const ModelEndpoint& endpoint) {
  try {
    return std::make_shared<const NGramModel>(
        NGramModel::load_file(endpoint.model_file));
  } catch (const Error& e) {
    throw BackendError(endpoint.id, FailureCategory::protocol, e.what());
  }
}

}  // namespace

ReferenceBackend::ReferenceBackend(const ModelEndpoint& endpoint)
    : ReferenceBackend(endpoint.id, load_reference_model(endpoint)) {}

std::string ReferenceBackend::complete(const GenerationRequest& request) const {
  if (request.max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
  GenerateOptions options;
  options.temperature = request.temperature;
  options.stop_at_newline = request.stop_at_newline;
  return model_->generate(request.query,
                          static_cast<std::size_t>(request.max_tokens),
                          request.seed.value_or(0), options);
}

ScoredText ReferenceBackend::score(
    std::string_view text, std::optional<std::string_view> context) const {
  return ScoredText{std::string(text), model_->token_logprobs(text, context),
                    std::nullopt, id_};
}

HealthStatus ReferenceBackend::health() const { return {}; }

// ---------------------------------------------------------------------------
// Wire format

namespace wire {

std::size_t code_point_count(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string scoring_request(std::string_view model, std::string_view prompt) {
  ordered_json body;
  body["model"] = model;
  body["prompt"] = prompt;
  body["max_tokens"] = 0;
  body["echo"] = true;
  body["logprobs"] = 0;
  body["temperature"] = 0;
  return body.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string generation_request(std::string_view model, std::string_view prompt,
                               int max_tokens, double temperature,
                               std::optional<std::uint64_t> seed,
                               bool stop_at_newline) {
  ordered_json body;
  body["model"] = model;
  body["prompt"] = prompt;
  body["max_tokens"] = max_tokens;
  body["temperature"] = temperature;
  if (seed) body["seed"] = *seed;
  if (stop_at_newline) body["stop"] = json::array({"\n"});
  return body.dump(-1, ' ', false, json::error_handler_t::replace);
}

namespace {

[[noreturn]] void protocol(const std::string& endpoint_id,
                           const std::string& detail) {
  throw BackendError(endpoint_id, FailureCategory::protocol, detail);
}

const json& first_choice(const json& response, const std::string& endpoint_id) {
  if (!response.is_object()) protocol(endpoint_id, "response is not an object");
  auto it = response.find("choices");
  if (it == response.end() || !it->is_array()) {
    protocol(endpoint_id, "response has no choices array");
  }
  if (it->empty() || !(*it)[0].is_object()) {
    throw BackendError(endpoint_id, FailureCategory::refusal,
                       "response contains no completion choice");
  }
  return (*it)[0];
}

}  // namespace

SuffixLogprobs extract_suffix_logprobs(const json& response,
                                       std::string_view context,
                                       std::string_view text,
                                       const std::string& endpoint_id) {
  const json& choice = first_choice(response, endpoint_id);
  auto lp_it = choice.find("logprobs");
  if (lp_it == choice.end() || !lp_it->is_object()) {
    protocol(endpoint_id, "choice has no logprobs block");
  }
  const json& lp = *lp_it;
  auto values_it = lp.find("token_logprobs");
  auto offsets_it = lp.find("text_offset");
  if (values_it == lp.end() || !values_it->is_array()) {
    protocol(endpoint_id, "logprobs block lacks token_logprobs");
  }
  if (offsets_it == lp.end() || !offsets_it->is_array()) {
    protocol(endpoint_id, "logprobs block lacks text_offset");
  }
  const json& values = *values_it;
  const json& offsets = *offsets_it;
  if (values.size() != offsets.size()) {
    protocol(endpoint_id, "token_logprobs and text_offset lengths differ");
  }
  const json* tokens = nullptr;
  if (auto t = lp.find("tokens"); t != lp.end() && !t->is_null()) {
    if (!t->is_array() || t->size() != values.size()) {
      protocol(endpoint_id, "tokens length differs from token_logprobs");
    }
    tokens = &*t;
  }

  const std::size_t boundary = code_point_count(context);
  const std::size_t end = boundary + code_point_count(text);

  SuffixLogprobs out;
  if (tokens) out.tokens.emplace();
  bool boundary_hit = false;
  std::int64_t previous = -1;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!offsets[k].is_number_integer()) {
      protocol(endpoint_id, "text_offset entries must be integers");
    }
    const auto offset = offsets[k].get<std::int64_t>();
    if (offset < previous || offset < 0) {
      protocol(endpoint_id, "text_offset is not non-decreasing");
    }
    previous = offset;
    const auto pos = static_cast<std::size_t>(offset);
    if (pos == boundary) boundary_hit = true;
    if (pos < boundary || pos >= end) continue;

    const json& v = values[k];
    if (v.is_null()) {
      if (k == 0) continue;
      protocol(endpoint_id, "null logprob after the first echoed token");
    }
    if (!v.is_number()) protocol(endpoint_id, "logprob is not a number");
    const double value = v.get<double>();
    if (!std::isfinite(value) || value > 0.0) {
      protocol(endpoint_id, "logprob is not finite and <= 0");
    }
    out.values.push_back(value);
    if (tokens) {
      const json& tok = (*tokens)[k];
      if (!tok.is_string()) protocol(endpoint_id, "token text is not a string");
      out.tokens->push_back(tok.get<std::string>());
    }
  }
  if (!boundary_hit) {
    protocol(endpoint_id,
             "no echoed token starts at the context boundary; cannot "
             "isolate the scored text");
  }
  if (out.values.empty()) {
    protocol(endpoint_id, "echo contains no scorable token for the text");
  }
  return out;
}

}  // namespace wire

// ---------------------------------------------------------------------------
// Remote backend

namespace {

void split_base_url(const std::string& url, std::string& host,
                    std::string& prefix) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw InvalidArgument("base_url '" + url + "' has no scheme");
  }
  const auto path = url.find('/', scheme + 3);
  host = url.substr(0, path);
  prefix = path == std::string::npos ? "" : url.substr(path);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
}

}  // namespace

RemoteBackend::RemoteBackend(ModelEndpoint endpoint)
    : endpoint_(std::move(endpoint)) {
  if (endpoint_.timeout.count() <= 0) {
    throw InvalidArgument("endpoint '" + endpoint_.id + "': timeout must be > 0");
  }
  split_base_url(endpoint_.base_url, host_, path_prefix_);
  if (endpoint_.auth_env) {
    const char* value = std::getenv(endpoint_.auth_env->c_str());
    if (!value) {
      throw InvalidArgument("endpoint '" + endpoint_.id +
                            "': environment variable " + *endpoint_.auth_env +
                            " is not set");
    }
    token_ = value;
  }
}

namespace {

httplib::Client make_client(const std::string& host,
                            std::chrono::milliseconds timeout) {
  httplib::Client client(host);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  return client;
}

// Maps an HTTP status other than 200 onto a failure category:
// 5xx is a transport failure (server side, retryable), 401/403 a refusal and
// any other status a protocol failure.
FailureCategory category_for_status(int status) {
  if (status >= 500) return FailureCategory::transport;
  if (status == 401 || status == 403) return FailureCategory::refusal;
  return FailureCategory::protocol;
}

}  // namespace

json RemoteBackend::post_json(const std::string& path,
                              const std::string& body) const {
  httplib::Headers headers;
  if (token_) headers.emplace("Authorization", "Bearer " + *token_);

  for (int attempt = 0;; ++attempt) {
    auto client = make_client(host_, endpoint_.timeout);
    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path_prefix_ + path, headers, body,
                           "application/json");
    const auto elapsed = std::chrono::steady_clock::now() - started;

    std::optional<BackendError> failure;
    if (!res) {
      const auto err = res.error();
      const bool timed_out =
          err == httplib::Error::ConnectionTimeout ||
          (err == httplib::Error::Read && elapsed >= endpoint_.timeout);
      if (timed_out) {
        throw BackendError(endpoint_.id, FailureCategory::timeout,
                           "no response within " +
                               std::to_string(endpoint_.timeout.count()) +
                               " ms");
      }
      failure.emplace(endpoint_.id, FailureCategory::transport,
                      httplib::to_string(err));
    } else if (res->status != 200) {
      const auto category = category_for_status(res->status);
      BackendError error(endpoint_.id, category,
                         "HTTP status " + std::to_string(res->status));
      if (category != FailureCategory::transport) throw error;
      failure.emplace(std::move(error));
    } else {
      try {
        return json::parse(res->body);
      } catch (const json::parse_error&) {
        throw BackendError(endpoint_.id, FailureCategory::protocol,
                           "response body is not valid JSON");
      }
    }
    if (attempt >= endpoint_.transport_retries) throw *failure;
  }
}

std::string RemoteBackend::complete(const GenerationRequest& request) const {
  const auto body = wire::generation_request(
      endpoint_.model_name, request.query, request.max_tokens,
      request.temperature, request.seed, request.stop_at_newline);
  const auto response = post_json("/v1/completions", body);
  if (!response.is_object() || !response.contains("choices")) {
    throw BackendError(endpoint_.id, FailureCategory::protocol,
                       "response has no choices array");
  }
  const auto& choices = response["choices"];
  if (!choices.is_array()) {
    throw BackendError(endpoint_.id, FailureCategory::protocol,
                       "choices is not an array");
  }
  if (choices.empty()) {
    throw BackendError(endpoint_.id, FailureCategory::refusal,
                       "response contains no completion choice");
  }
  const auto& choice = choices[0];
  if (!choice.is_object() || !choice.contains("text") ||
      !choice["text"].is_string()) {
    throw BackendError(endpoint_.id, FailureCategory::protocol,
                       "first choice has no text");
  }
  return choice["text"].get<std::string>();
}

ScoredText RemoteBackend::score(std::string_view text,
                                std::optional<std::string_view> context) const {
  if (text.empty()) throw EmptySequenceError("cannot score empty text");
  const std::string_view ctx = context.value_or(std::string_view{});
  std::string prompt;
  prompt.reserve(ctx.size() + text.size());
  prompt.append(ctx).append(text);

  const auto response = post_json(
      "/v1/completions", wire::scoring_request(endpoint_.model_name, prompt));
  auto suffix = wire::extract_suffix_logprobs(response, ctx, text, endpoint_.id);
  return ScoredText{std::string(text), TokenLogProbs(std::move(suffix.values)),
                    std::move(suffix.tokens), endpoint_.id};
}

HealthStatus RemoteBackend::health() const {
  auto client = make_client(host_, endpoint_.timeout);
  httplib::Headers headers;
  if (token_) headers.emplace("Authorization", "Bearer " + *token_);
  const auto started = std::chrono::steady_clock::now();
  auto res = client.Get(path_prefix_ + "/v1/models", headers);
  const auto elapsed = std::chrono::steady_clock::now() - started;
  if (!res) {
    const auto err = res.error();
    const bool timed_out =
        err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= endpoint_.timeout);
    return {false, BackendError(endpoint_.id,
                                timed_out ? FailureCategory::timeout
                                          : FailureCategory::transport,
                                httplib::to_string(err))};
  }
  if (res->status != 200) {
    return {false, BackendError(endpoint_.id, category_for_status(res->status),
                                "HTTP status " + std::to_string(res->status))};
  }
  return {};
}

// ---------------------------------------------------------------------------

BackendPtr make_backend(const ModelEndpoint& endpoint,
                        const std::filesystem::path& base_dir) {
  if (endpoint.timeout.count() <= 0) {
    throw InvalidArgument("endpoint '" + endpoint.id + "': timeout must be > 0");
  }
  if (endpoint.kind == EndpointKind::reference) {
    if (endpoint.model_file.is_relative() && !base_dir.empty()) {
      auto resolved = endpoint;
      resolved.model_file = base_dir / endpoint.model_file;
      return std::make_shared<ReferenceBackend>(resolved);
    }
    return std::make_shared<ReferenceBackend>(endpoint);
  }
  return std::make_shared<RemoteBackend>(endpoint);
}

Candidate generate_candidate(const Backend& backend, std::string_view query,
                             int max_tokens, double temperature,
                             std::optional<std::uint64_t> seed,
                             bool stop_at_newline) {
  if (max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
  if (!(temperature >= 0.0)) throw InvalidArgument("temperature must be >= 0");
  GenerationRequest request{std::string(query), max_tokens, temperature, seed,
                            stop_at_newline};
  auto text = backend.complete(request);
  if (text.empty()) {
    throw BackendError(backend.id(), FailureCategory::refusal,
                       "completion is empty");
  }
  return Candidate{0, backend.id(), std::move(text)};
}

ScoredText score_text(const Backend& backend, std::string_view text,
                      std::optional<std::string_view> context) {
  return backend.score(text, context);
}

HealthStatus health_check(const Backend& backend) { return backend.health(); }

HealthStatus health_check(const ModelEndpoint& endpoint,
                          const std::filesystem::path& base_dir) {
  try {
    return make_backend(endpoint, base_dir)->health();
  } catch (const BackendError& e) {
    return {false, e};
  } catch (const Error& e) {
    return {false, BackendError(endpoint.id, FailureCategory::protocol,
                                e.what())};
  }
}

}  // namespace crossrank
