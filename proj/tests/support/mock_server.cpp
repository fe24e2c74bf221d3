#include "mock_server.hpp"

#include <stdexcept>

namespace crossrank::testing {

namespace {

// Independent of the library's generator on purpose.
std::uint64_t lcg(std::uint64_t& state) {
  state = state * 6364136223846793005ull + 1442695040888963407ull;
  return state >> 33;
}

std::vector<std::string> split_code_points(const std::string& s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t len = 1;
    const auto c = static_cast<unsigned char>(s[i]);
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

MockCompletionsServer::MockCompletionsServer() {
  server_.Post("/v1/completions",
               [this](const httplib::Request& req, httplib::Response& res) {
                 handle_completions(req, res);
               });
  server_.Get("/v1/models", [this](const httplib::Request& req,
                                   httplib::Response& res) {
    {
      std::lock_guard l(mu_);
      requests_.push_back({"GET", req.path, "", req.get_header_value("Authorization")});
      if (required_token_ &&
          req.get_header_value("Authorization") != "Bearer " + *required_token_) {
        res.status = 401;
        return;
      }
    }
    if (status_ != 200) {
      res.status = status_;
      return;
    }
    res.set_content(R"({"object":"list","data":[{"id":"mock","object":"model"}]})",
                    "application/json");
  });
  port_ = server_.bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw std::runtime_error("mock server could not bind");
  thread_ = std::thread([this] { server_.listen_after_bind(); });
  server_.wait_until_ready();
}

MockCompletionsServer::~MockCompletionsServer() {
  server_.stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockCompletionsServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_);
}

nlohmann::json MockCompletionsServer::echo_response(
    const std::string& prompt) const {
  std::uint64_t seed;
  std::size_t max_chunk;
  std::optional<std::size_t> boundary;
  {
    std::lock_guard l(mu_);
    seed = tokenizer_seed_;
    max_chunk = max_chunk_;
    boundary = forced_boundary_;
  }
  const auto cps = split_code_points(prompt);
  std::vector<std::string> tokens;
  std::vector<std::size_t> offsets;
  std::uint64_t state = seed;
  for (std::size_t pos = 0; pos < cps.size();) {
    std::size_t len = 1 + lcg(state) % max_chunk;
    if (boundary && pos < *boundary && pos + len > *boundary) len = *boundary - pos;
    len = std::min(len, cps.size() - pos);
    std::string tok;
    for (std::size_t k = 0; k < len; ++k) tok += cps[pos + k];
    tokens.push_back(tok);
    offsets.push_back(pos);
    pos += len;
  }
  nlohmann::json logprobs = nlohmann::json::array();
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (k == 0) {
      logprobs.push_back(nullptr);
    } else {
      // Quarter-nat steps keep values exact in binary.
      logprobs.push_back(-0.25 * static_cast<double>(1 + lcg(state) % 40));
    }
  }
  nlohmann::ordered_json choice;
  choice["text"] = prompt;
  choice["index"] = 0;
  choice["logprobs"]["tokens"] = tokens;
  choice["logprobs"]["token_logprobs"] = logprobs;
  choice["logprobs"]["text_offset"] = offsets;
  choice["finish_reason"] = "length";
  nlohmann::ordered_json out;
  out["id"] = "cmpl-mock";
  out["object"] = "text_completion";
  out["model"] = "mock";
  out["choices"] = nlohmann::ordered_json::array({choice});
  return nlohmann::json::parse(out.dump());
}

void MockCompletionsServer::handle_completions(const httplib::Request& req,
                                               httplib::Response& res) {
  std::string completion;
  std::optional<TranscriptExchange> recorded;
  {
    std::lock_guard l(mu_);
    requests_.push_back({"POST", req.path, req.body,
                         req.get_header_value("Authorization")});
    if (required_token_ &&
        req.get_header_value("Authorization") != "Bearer " + *required_token_) {
      res.status = 401;
      return;
    }
    completion = completion_;
    for (const auto& ex : transcript_) {
      if (ex.path == req.path && ex.request_body == req.body) recorded = ex;
    }
    if (!transcript_.empty() && !recorded) {
      res.status = 400;
      res.set_content(R"({"error":"request does not match transcript"})",
                      "application/json");
      return;
    }
  }
  if (recorded) {
    res.status = recorded->status;
    res.set_content(recorded->response_body, "application/json");
    return;
  }

  nlohmann::json body;
  try {
    body = nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error&) {
    res.status = 400;
    return;
  }
  const bool scoring = body.value("echo", false) && body.value("max_tokens", -1) == 0;
  if (scoring) {
    ++scoring_requests_;
    std::this_thread::sleep_for(scoring_delay_.load());
    if (scoring_status_ != 200) {
      res.status = scoring_status_;
      return;
    }
  }
  if (status_ != 200) {
    res.status = status_;
    return;
  }
  if (invalid_json_) {
    res.set_content("{not json", "application/json");
    return;
  }
  if (empty_choices_) {
    res.set_content(R"({"id":"cmpl-mock","object":"text_completion","choices":[]})",
                    "application/json");
    return;
  }

  nlohmann::json out;
  if (scoring) {
    out = echo_response(body.at("prompt").get<std::string>());
    if (omit_logprobs_) out["choices"][0].erase("logprobs");
  } else {
    out = {{"id", "cmpl-mock"},
           {"object", "text_completion"},
           {"model", "mock"},
           {"choices", {{{"text", completion}, {"index", 0}, {"finish_reason", "stop"}}}}};
  }
  res.set_content(out.dump(), "application/json");
}

}  // namespace crossrank::testing
