#include "crossrank/backend.hpp"

#include <cmath>
#include <cstdlib>
#include <future>
#include <random>

#include <gtest/gtest.h>

#include "support/mock_server.hpp"
#include "support/test_util.hpp"

namespace crossrank {
namespace {

using nlohmann::json;
using testing::MockCompletionsServer;

ModelEndpoint remote(const MockCompletionsServer& server, std::string id = "remote") {
  ModelEndpoint ep;
  ep.id = std::move(id);
  ep.kind = EndpointKind::remote;
  ep.base_url = server.base_url();
  ep.model_name = "mock-coder";
  ep.timeout = std::chrono::milliseconds(2000);
  return ep;
}

std::vector<double> values(const ScoredText& s) {
  return {s.logprobs.values().begin(), s.logprobs.values().end()};
}

FailureCategory category_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const BackendError& e) {
    return e.category();
  }
  ADD_FAILURE() << "expected a BackendError";
  return FailureCategory::refusal;
}

json transcript() {
  return json::parse(testing::read_text(testing::source_dir() /
                                        "tests/golden/wire_transcript.json"));
}

const json& find_exchange(const json& t, const std::string& name) {
  for (const auto& ex : t["exchanges"]) {
    if (ex["name"] == name) return ex;
  }
  throw std::runtime_error("no exchange " + name);
}

class GoldenTranscript : public ::testing::Test {
 protected:
  void SetUp() override {
    for (const auto& ex : golden["exchanges"]) {
      server.add_transcript({ex["request"]["path"].get<std::string>(),
                             ex["request"]["body"].get<std::string>(),
                             ex["response"]["status"].get<int>(),
                             ex["response"]["body"].get<std::string>()});
    }
  }
  json golden = transcript();
  MockCompletionsServer server;
};

TEST_F(GoldenTranscript, ScoringWithContextIsolatesSuffix) {
  const auto& ex = find_exchange(golden, "score_with_context");
  RemoteBackend backend(remote(server));
  const auto context = ex["context"].get<std::string>();
  const auto scored = score_text(backend, ex["text"].get<std::string>(),
                                 std::string_view(context));
  EXPECT_EQ(values(scored), ex["expected_logprobs"].get<std::vector<double>>());
  ASSERT_TRUE(scored.token_texts.has_value());
  EXPECT_EQ(*scored.token_texts, ex["expected_tokens"].get<std::vector<std::string>>());
  EXPECT_EQ(scored.scorer_id, "remote");
  const auto requests = server.requests();
  ASSERT_EQ(requests.size(), 1u);
  EXPECT_EQ(requests[0].body, ex["request"]["body"].get<std::string>());
}

TEST_F(GoldenTranscript, ScoringWithoutContextDropsLeadingNull) {
  const auto& ex = find_exchange(golden, "score_without_context");
  RemoteBackend backend(remote(server));
  const auto scored = score_text(backend, ex["text"].get<std::string>());
  EXPECT_EQ(values(scored), ex["expected_logprobs"].get<std::vector<double>>());
  EXPECT_EQ(scored.logprobs.token_count(), 4u);
}

TEST_F(GoldenTranscript, GenerationUsesFirstChoiceText) {
  const auto& ex = find_exchange(golden, "generate");
  RemoteBackend backend(remote(server));
  const auto candidate = generate_candidate(backend, ex["query"].get<std::string>(),
                                            32, 0.0, 7);
  EXPECT_EQ(candidate.text, ex["expected_text"].get<std::string>());
  EXPECT_EQ(candidate.producer_id, "remote");
  EXPECT_EQ(server.requests().at(0).body, ex["request"]["body"].get<std::string>());
}

TEST_F(GoldenTranscript, UnexpectedRequestIsRejected) {
  RemoteBackend backend(remote(server));
  EXPECT_EQ(category_of([&] { score_text(backend, "something else"); }),
            FailureCategory::protocol);
}

TEST(WireFormat, LeadingNullIsDropped) {
  const json response = json::parse(R"({"choices":[{"text":"abc","logprobs":{
      "tokens":["a","b","c"],"token_logprobs":[null,-1.5,-2.5],"text_offset":[0,1,2]}}]})");
  const auto out = wire::extract_suffix_logprobs(response, "", "abc", "e");
  EXPECT_EQ(out.values, (std::vector<double>{-1.5, -2.5}));
  EXPECT_EQ(out.tokens, (std::vector<std::string>{"b", "c"}));
}

TEST(WireFormat, ContextTokensAreExcludedByOffset) {
  const json response = json::parse(R"({"choices":[{"text":"ctx:abc","logprobs":{
      "token_logprobs":[null,-0.5,-1.0,-2.0,-3.0],"text_offset":[0,3,4,5,6]}}]})");
  const auto out = wire::extract_suffix_logprobs(response, "ctx:", "abc", "e");
  EXPECT_EQ(out.values, (std::vector<double>{-1.0, -2.0, -3.0}));
  EXPECT_FALSE(out.tokens.has_value());
}

TEST(WireFormat, OffsetsCountCodePoints) {
  // "é" is two bytes but one character.
  const json response = json::parse(R"({"choices":[{"logprobs":{
      "token_logprobs":[null,-1.0,-2.0],"text_offset":[0,1,2]}}]})");
  const auto out = wire::extract_suffix_logprobs(response, "é", "xy", "e");
  EXPECT_EQ(out.values, (std::vector<double>{-1.0, -2.0}));
}

TEST(WireFormat, ProtocolErrors) {
  auto cat = [](const char* body, std::string_view ctx, std::string_view text) {
    return category_of([&] {
      wire::extract_suffix_logprobs(json::parse(body), ctx, text, "e");
    });
  };
  // no logprobs block
  EXPECT_EQ(cat(R"({"choices":[{"text":"x"}]})", "", "ab"), FailureCategory::protocol);
  // no choices at all
  EXPECT_EQ(cat(R"({"choices":[]})", "", "ab"), FailureCategory::refusal);
  EXPECT_EQ(cat(R"({"id":1})", "", "ab"), FailureCategory::protocol);
  // token straddles the context boundary
  EXPECT_EQ(cat(R"({"choices":[{"logprobs":{"token_logprobs":[null,-1.0],
                "text_offset":[0,2]}}]})", "abc", "d"),
            FailureCategory::protocol);
  // null in the middle
  EXPECT_EQ(cat(R"({"choices":[{"logprobs":{"token_logprobs":[null,null,-1.0],
                "text_offset":[0,1,2]}}]})", "", "abc"),
            FailureCategory::protocol);
  // positive logprob
  EXPECT_EQ(cat(R"({"choices":[{"logprobs":{"token_logprobs":[null,0.5],
                "text_offset":[0,1]}}]})", "", "ab"),
            FailureCategory::protocol);
  // single token: nothing left once the null is dropped
  EXPECT_EQ(cat(R"({"choices":[{"logprobs":{"token_logprobs":[null],
                "text_offset":[0]}}]})", "", "ab"),
            FailureCategory::protocol);
  // mismatched lengths
  EXPECT_EQ(cat(R"({"choices":[{"logprobs":{"token_logprobs":[null,-1.0],
                "text_offset":[0]}}]})", "", "ab"),
            FailureCategory::protocol);
}

TEST(WireFormat, RequestBodiesHaveFixedShape) {
  EXPECT_EQ(wire::scoring_request("m", "p"),
            R"({"model":"m","prompt":"p","max_tokens":0,"echo":true,"logprobs":0,"temperature":0})");
  EXPECT_EQ(wire::generation_request("m", "q", 8, 0.5, std::nullopt, true),
            R"({"model":"m","prompt":"q","max_tokens":8,"temperature":0.5,"stop":["\n"]})");
}

TEST(RemoteBackend, OffsetIsolationOverRandomTokenizations) {
  MockCompletionsServer server;
  RemoteBackend backend(remote(server));
  std::mt19937_64 rng(9);
  const std::string alphabet = "abc def();\n";
  for (int trial = 0; trial < 40; ++trial) {
    std::string context, text;
    const auto ctx_len = rng() % 12;
    const auto text_len = 2 + rng() % 20;
    for (std::size_t k = 0; k < ctx_len; ++k) context += alphabet[rng() % alphabet.size()];
    for (std::size_t k = 0; k < text_len; ++k) text += alphabet[rng() % alphabet.size()];
    server.set_tokenizer(rng(), 1 + rng() % 5, context.size());

    const auto echoed = server.echo_response(context + text);
    const auto& offsets = echoed["choices"][0]["logprobs"]["text_offset"];
    const auto& lps = echoed["choices"][0]["logprobs"]["token_logprobs"];
    std::vector<double> expected;
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      if (offsets[k].get<std::size_t>() >= context.size() && !lps[k].is_null()) {
        expected.push_back(lps[k].get<double>());
      }
    }
    if (expected.empty()) continue;  // a one-token text with no context
    const auto scored = score_text(backend, text, std::string_view(context));
    EXPECT_EQ(values(scored), expected) << "trial " << trial;
  }
}

TEST(RemoteBackend, RepeatedAndConcurrentScoringAgree) {
  MockCompletionsServer server;
  RemoteBackend backend(remote(server));
  const auto first = values(score_text(backend, "int x = 1;\n"));
  EXPECT_EQ(values(score_text(backend, "int x = 1;\n")), first);
  std::vector<std::future<std::vector<double>>> futures;
  for (int k = 0; k < 8; ++k) {
    futures.push_back(std::async(std::launch::async, [&] {
      return values(score_text(backend, "int x = 1;\n"));
    }));
  }
  for (auto& f : futures) EXPECT_EQ(f.get(), first);
}

TEST(RemoteBackend, FixedCompletionBecomesCandidate) {
  MockCompletionsServer server;
  server.set_completion("print('hi')\n");
  RemoteBackend backend(remote(server, "m1"));
  const auto c = generate_candidate(backend, "say hi", 16, 0.2, std::nullopt);
  EXPECT_EQ(c.text, "print('hi')\n");
  EXPECT_EQ(c.producer_id, "m1");
}

TEST(RemoteBackend, FailureCategories) {
  MockCompletionsServer server;
  RemoteBackend backend(remote(server));

  server.set_status(500);
  EXPECT_EQ(category_of([&] { score_text(backend, "abc"); }), FailureCategory::transport);
  // one retry on transport failures
  EXPECT_EQ(server.requests().size(), 2u);

  server.set_status(404);
  EXPECT_EQ(category_of([&] { score_text(backend, "abc"); }), FailureCategory::protocol);
  server.set_status(403);
  EXPECT_EQ(category_of([&] { score_text(backend, "abc"); }), FailureCategory::refusal);
  server.set_status(200);

  server.set_empty_choices(true);
  EXPECT_EQ(category_of([&] { generate_candidate(backend, "q", 4, 0, {}); }),
            FailureCategory::refusal);
  EXPECT_EQ(category_of([&] { score_text(backend, "abc"); }), FailureCategory::refusal);
  server.set_empty_choices(false);

  server.set_completion("");
  EXPECT_EQ(category_of([&] { generate_candidate(backend, "q", 4, 0, {}); }),
            FailureCategory::refusal);

  server.set_omit_logprobs(true);
  EXPECT_EQ(category_of([&] { score_text(backend, "abc"); }), FailureCategory::protocol);
  server.set_omit_logprobs(false);

  server.set_invalid_json(true);
  EXPECT_EQ(category_of([&] { score_text(backend, "abc"); }), FailureCategory::protocol);
}

TEST(RemoteBackend, SlowServerTimesOut) {
  MockCompletionsServer server;
  server.set_scoring_delay(std::chrono::milliseconds(600));
  auto ep = remote(server);
  ep.timeout = std::chrono::milliseconds(150);
  RemoteBackend backend(ep);
  EXPECT_EQ(category_of([&] { score_text(backend, "abc"); }), FailureCategory::timeout);
  // timeouts are not retried
  EXPECT_EQ(server.scoring_requests(), 1u);
}

TEST(RemoteBackend, UnreachableServerIsTransport) {
  ModelEndpoint ep;
  ep.id = "gone";
  ep.kind = EndpointKind::remote;
  ep.base_url = "http://127.0.0.1:1";
  ep.timeout = std::chrono::milliseconds(500);
  ep.transport_retries = 0;
  RemoteBackend backend(ep);
  EXPECT_EQ(category_of([&] { generate_candidate(backend, "q", 4, 0, {}); }),
            FailureCategory::transport);
  const auto status = health_check(ep);
  EXPECT_FALSE(status.ok);
  EXPECT_EQ(status.error->category(), FailureCategory::transport);
}

TEST(RemoteBackend, BearerTokenComesFromEnvironment) {
  MockCompletionsServer server;
  server.set_required_token("s3cret");
  auto ep = remote(server);
  ep.auth_env = "CROSSRANK_TEST_TOKEN";
  ::unsetenv("CROSSRANK_TEST_TOKEN");
  EXPECT_THROW(RemoteBackend{ep}, InvalidArgument);
  ::setenv("CROSSRANK_TEST_TOKEN", "s3cret", 1);
  RemoteBackend backend(ep);
  EXPECT_TRUE(health_check(backend).ok);
  EXPECT_NO_THROW(score_text(backend, "int main() {}\n"));
  EXPECT_EQ(server.requests().back().authorization, "Bearer s3cret");

  ep.auth_env.reset();
  RemoteBackend anonymous(ep);
  EXPECT_EQ(health_check(anonymous).error->category(), FailureCategory::refusal);
  ::unsetenv("CROSSRANK_TEST_TOKEN");
}

TEST(RemoteBackend, BaseUrlPathPrefixIsKept) {
  MockCompletionsServer server;
  auto ep = remote(server);
  ep.base_url += "/";
  RemoteBackend backend(ep);
  EXPECT_NO_THROW(score_text(backend, "int main() {}\n"));
  EXPECT_EQ(server.requests().back().path, "/v1/completions");
}

TEST(Health, StatusTable) {
  MockCompletionsServer server;
  EXPECT_TRUE(health_check(remote(server)).ok);
  server.set_status(500);
  const auto failing = health_check(remote(server));
  EXPECT_FALSE(failing.ok);
  EXPECT_EQ(failing.error->category(), FailureCategory::transport);

  testing::TempDir dir;
  NGramModel(2, 1.0).save_file(dir / "m.ngram");
  ModelEndpoint ref;
  ref.id = "ref";
  ref.model_file = dir / "m.ngram";
  EXPECT_TRUE(health_check(ref).ok);
  ref.model_file = dir / "missing.ngram";
  const auto missing = health_check(ref);
  EXPECT_FALSE(missing.ok);
  EXPECT_EQ(missing.error->category(), FailureCategory::protocol);
}

TEST(ReferenceBackend, UniformScoresAndDeterministicGeneration) {
  auto model = std::make_shared<const NGramModel>(NGramModel(3, 1.0));
  ReferenceBackend backend("ref", model);
  const auto scored = score_text(backend, "abc");
  ASSERT_EQ(scored.logprobs.token_count(), 3u);
  for (double v : scored.logprobs.values()) EXPECT_DOUBLE_EQ(v, std::log(1.0 / 256.0));

  const auto trained = std::make_shared<const NGramModel>(
      train(Corpus{"c", {"while (x) { x--; }\n"}}, 3, 0.1));
  ReferenceBackend gen("ref", trained);
  const auto a = generate_candidate(gen, "while", 40, 1.0, 17);
  const auto b = generate_candidate(gen, "while", 40, 1.0, 17);
  EXPECT_EQ(a.text, b.text);
  EXPECT_EQ(a.text.size(), 40u);
  EXPECT_EQ(a.producer_id, "ref");
}

TEST(ReferenceBackend, RelativeModelPathResolvesAgainstBaseDir) {
  testing::TempDir dir;
  NGramModel(2, 1.0).save_file(dir / "m.ngram");
  ModelEndpoint ep;
  ep.id = "ref";
  ep.model_file = "m.ngram";
  EXPECT_NO_THROW(make_backend(ep, dir.path()));
  EXPECT_THROW(make_backend(ep, dir / "elsewhere"), BackendError);
}

TEST(Normalization, PerByteDividesByTextLength) {
  ScoredText s{"abcd", TokenLogProbs({-1.0, -3.0}), std::nullopt, "x"};
  EXPECT_EQ(normalized_logprob(s, Normalization::per_token), -2.0);
  EXPECT_EQ(normalized_logprob(s, Normalization::per_byte), -1.0);
}

}  // namespace
}  // namespace crossrank
