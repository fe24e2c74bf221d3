#include "crossrank/config.hpp"

#include <algorithm>
#include <cmath>

namespace crossrank {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& msg) {
  throw FormatError(field + ": " + msg);
}

const json* optional_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::string get_string(const json& obj, const char* key,
                       const std::string& where, bool required,
                       const std::string& fallback = {}) {
  const json* v = optional_field(obj, key);
  if (!v) {
    if (required) fail(where + key, "missing");
    return fallback;
  }
  if (!v->is_string()) fail(where + key, "must be a string");
  return v->get<std::string>();
}

double get_number(const json& obj, const char* key, const std::string& where,
                  double fallback) {
  const json* v = optional_field(obj, key);
  if (!v) return fallback;
  if (!v->is_number()) fail(where + key, "must be a number");
  return v->get<double>();
}

std::int64_t get_integer(const json& obj, const char* key,
                         const std::string& where, std::int64_t fallback) {
  const json* v = optional_field(obj, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) fail(where + key, "must be an integer");
  return v->get<std::int64_t>();
}

bool get_bool(const json& obj, const char* key, const std::string& where,
              bool fallback) {
  const json* v = optional_field(obj, key);
  if (!v) return fallback;
  if (!v->is_boolean()) fail(where + key, "must be true or false");
  return v->get<bool>();
}

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<std::string_view> known) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(where + key, "unknown field");
    }
  }
}

ModelEndpoint parse_endpoint(const json& e, const std::string& where) {
  if (!e.is_object()) fail(where.substr(0, where.size() - 1), "must be an object");
  ModelEndpoint ep;
  ep.id = get_string(e, "id", where, true);
  const auto kind = get_string(e, "kind", where, true);
  const auto timeout = get_integer(e, "timeout_ms", where, 30000);
  if (timeout <= 0) fail(where + "timeout_ms", "must be > 0");
  ep.timeout = std::chrono::milliseconds(timeout);
  if (kind == "remote") {
    reject_unknown(e, where, {"id", "kind", "base_url", "model_name", "auth_env",
                              "timeout_ms", "transport_retries"});
    ep.kind = EndpointKind::remote;
    ep.base_url = get_string(e, "base_url", where, true);
    if (ep.base_url.find("://") == std::string::npos) {
      fail(where + "base_url", "must include a scheme, e.g. http://");
    }
    ep.model_name = get_string(e, "model_name", where, false);
    if (const json* v = optional_field(e, "auth_env")) {
      if (!v->is_string() || v->get<std::string>().empty()) {
        fail(where + "auth_env", "must name an environment variable");
      }
      ep.auth_env = v->get<std::string>();
    }
    const auto retries = get_integer(e, "transport_retries", where, 1);
    if (retries < 0) fail(where + "transport_retries", "must be >= 0");
    ep.transport_retries = static_cast<int>(retries);
  } else if (kind == "reference") {
    reject_unknown(e, where, {"id", "kind", "model_file", "timeout_ms"});
    ep.kind = EndpointKind::reference;
    ep.model_file = get_string(e, "model_file", where, true);
  } else {
    fail(where + "kind", "must be 'remote' or 'reference'");
  }
  return ep;
}

}  // namespace

ToolConfig parse_tool_config(const json& doc,
                             const std::filesystem::path& base_dir) {
  if (!doc.is_object()) fail("$", "config must be a JSON object");
  reject_unknown(doc, "", {"schema_version", "endpoints", "context_mode",
                           "generation", "outlier_k", "quorum",
                           "normalization", "output"});
  const auto version = get_integer(doc, "schema_version", "", -1);
  if (version == -1) fail("schema_version", "missing");
  if (version != kConfigSchemaVersion) {
    fail("schema_version", "unsupported version " + std::to_string(version));
  }

  ToolConfig config;
  auto& ens = config.ensemble;
  ens.base_dir = base_dir;

  const json* endpoints = optional_field(doc, "endpoints");
  if (!endpoints) fail("endpoints", "missing");
  if (!endpoints->is_array()) fail("endpoints", "must be an array");
  for (std::size_t k = 0; k < endpoints->size(); ++k) {
    ens.endpoints.push_back(parse_endpoint(
        (*endpoints)[k], "endpoints[" + std::to_string(k) + "]."));
  }

  const auto mode = get_string(doc, "context_mode", "", false, "candidate_only");
  if (mode == "candidate_only") ens.context_mode = ContextMode::candidate_only;
  else if (mode == "query_conditioned") ens.context_mode = ContextMode::query_conditioned;
  else fail("context_mode", "must be 'candidate_only' or 'query_conditioned'");

  if (const json* gen = optional_field(doc, "generation")) {
    if (!gen->is_object()) fail("generation", "must be an object");
    const std::string where = "generation.";
    reject_unknown(*gen, where, {"max_tokens", "temperature", "seed_policy",
                                 "seed", "stop_at_newline"});
    auto& g = ens.generation;
    const auto max_tokens = get_integer(*gen, "max_tokens", where, g.max_tokens);
    if (max_tokens < 1 || max_tokens > 1'000'000) {
      fail(where + "max_tokens", "must be in [1, 1000000]");
    }
    g.max_tokens = static_cast<int>(max_tokens);
    g.temperature = get_number(*gen, "temperature", where, g.temperature);
    if (!(g.temperature >= 0.0) || !std::isfinite(g.temperature)) {
      fail(where + "temperature", "must be >= 0");
    }
    const auto policy = get_string(*gen, "seed_policy", where, false, "per_endpoint");
    if (policy == "per_endpoint") g.seed_policy = SeedPolicy::per_endpoint;
    else if (policy == "fixed") g.seed_policy = SeedPolicy::fixed;
    else if (policy == "none") g.seed_policy = SeedPolicy::none;
    else fail(where + "seed_policy", "must be 'per_endpoint', 'fixed' or 'none'");
    if (const json* seed = optional_field(*gen, "seed")) {
      if (!seed->is_number_unsigned()) fail(where + "seed", "must be a non-negative integer");
      g.seed = seed->get<std::uint64_t>();
    }
    g.stop_at_newline = get_bool(*gen, "stop_at_newline", where, false);
  }

  ens.outlier_k = get_number(doc, "outlier_k", "", ens.outlier_k);
  if (!(ens.outlier_k > 0.0) || !std::isfinite(ens.outlier_k)) {
    fail("outlier_k", "must be > 0");
  }
  ens.quorum = get_number(doc, "quorum", "", ens.quorum);
  if (!(ens.quorum > 0.0 && ens.quorum <= 1.0)) fail("quorum", "must be in (0, 1]");

  const auto norm = get_string(doc, "normalization", "", false, "per_token");
  if (norm == "per_token") ens.normalization = Normalization::per_token;
  else if (norm == "per_byte") ens.normalization = Normalization::per_byte;
  else fail("normalization", "must be 'per_token' or 'per_byte'");

  if (const json* out = optional_field(doc, "output")) {
    if (!out->is_object()) fail("output", "must be an object");
    reject_unknown(*out, "output.", {"report_path", "print_winner"});
    if (const json* rp = optional_field(*out, "report_path")) {
      if (!rp->is_string()) fail("output.report_path", "must be a string");
      std::filesystem::path p = rp->get<std::string>();
      config.output.report_path = p.is_relative() ? base_dir / p : p;
    }
    config.output.print_winner = get_bool(*out, "print_winner", "output.", false);
  }

  try {
    ens.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return config;
}

ToolConfig load_tool_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw FormatError(e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // e.byte is 1-based and points just past the offending character.
    std::size_t line = 1, column = 1;
    const auto stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t k = 0; k < stop; ++k) {
      if (text[k] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw FormatError(path.string() + ":" + std::to_string(line) + ":" +
                      std::to_string(column) + ": invalid JSON");
  }
  try {
    return parse_tool_config(doc, path.parent_path());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ordered_json to_json(const ToolConfig& config) {
  ordered_json out;
  out["schema_version"] = kConfigSchemaVersion;
  for (auto& [key, value] : to_json(config.ensemble).items()) out[key] = value;
  if (config.output.report_path || config.output.print_winner) {
    ordered_json o;
    if (config.output.report_path) {
      o["report_path"] = config.output.report_path->generic_string();
    }
    o["print_winner"] = config.output.print_winner;
    out["output"] = std::move(o);
  }
  return out;
}

}  // namespace crossrank
