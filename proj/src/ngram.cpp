#include "crossrank/ngram.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "crossrank/error.hpp"

namespace crossrank {

namespace {

constexpr std::string_view kMagic = "crossrank-ngram";
constexpr int kFormatVersion = 1;

void check_params(int order, double alpha) {
  if (order < 1) throw InvalidArgument("n-gram order must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InvalidArgument("smoothing alpha must be finite and > 0");
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw FormatError("bad number '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw FormatError("bad integer '" + std::string(s) + "'");
  }
  return v;
}

std::string encode_context(const ContextKey& ctx) {
  if (ctx.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    if (i) out += '.';
    out += std::to_string(static_cast<unsigned>(ctx[i]));
  }
  return out;
}

ContextKey decode_context(std::string_view s, int order) {
  ContextKey ctx;
  if (s != "-") {
    std::size_t start = 0;
    while (start <= s.size()) {
      auto dot = s.find('.', start);
      if (dot == std::string_view::npos) dot = s.size();
      auto sym = parse_u64(s.substr(start, dot - start));
      if (sym > kStartMarker) throw FormatError("context symbol out of range");
      ctx.push_back(static_cast<char16_t>(sym));
      start = dot + 1;
    }
  }
  if (ctx.size() != static_cast<std::size_t>(order - 1)) {
    throw FormatError("context length does not match model order");
  }
  return ctx;
}

}  // namespace

Corpus load_corpus_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw InvalidArgument("'" + dir.string() + "' is not a directory");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) {
              return a.filename().string() < b.filename().string();
            });
  if (files.empty()) {
    throw InvalidArgument("corpus directory '" + dir.string() + "' is empty");
  }
  auto label = dir.filename();
  if (label.empty()) label = dir.parent_path().filename();
  Corpus corpus{label.string(), {}};
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw InvalidArgument("cannot read '" + file.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    corpus.documents.push_back(ss.str());
  }
  return corpus;
}

std::string corpus_fingerprint(const Corpus& corpus) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ull;
  };
  for (const auto& doc : corpus.documents) {
    std::uint64_t len = doc.size();
    for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(len >> (8 * i)));
    for (char c : doc) mix(static_cast<unsigned char>(c));
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::uint64_t NGramModel::NextCounts::get(std::uint8_t b) const {
  auto it = std::lower_bound(
      next.begin(), next.end(), b,
      [](const auto& entry, std::uint8_t key) { return entry.first < key; });
  return (it != next.end() && it->first == b) ? it->second : 0;
}

void NGramModel::NextCounts::add(std::uint8_t b, std::uint64_t n) {
  auto it = std::lower_bound(
      next.begin(), next.end(), b,
      [](const auto& entry, std::uint8_t key) { return entry.first < key; });
  if (it != next.end() && it->first == b) {
    it->second += n;
  } else {
    next.insert(it, {b, n});
  }
  total += n;
}

NGramModel::NGramModel(int order, double alpha) : order_(order), alpha_(alpha) {
  check_params(order, alpha);
}

ContextKey NGramModel::initial_window() const {
  return ContextKey(static_cast<std::size_t>(order_ - 1), kStartMarker);
}

void NGramModel::push(ContextKey& window, char16_t symbol) const {
  if (window.empty()) return;
  window.erase(window.begin());
  window.push_back(symbol);
}

const NGramModel::NextCounts* NGramModel::find(const ContextKey& context) const {
  auto it = contexts_.find(context);
  return it == contexts_.end() ? nullptr : &it->second;
}

std::uint64_t NGramModel::count(const ContextKey& context,
                                std::uint8_t next) const {
  const auto* c = find(context);
  return c ? c->get(next) : 0;
}

std::uint64_t NGramModel::context_total(const ContextKey& context) const {
  const auto* c = find(context);
  return c ? c->total : 0;
}

std::uint64_t NGramModel::max_context_total() const {
  std::uint64_t best = 0;
  for (const auto& [ctx, counts] : contexts_) best = std::max(best, counts.total);
  return best;
}

double NGramModel::probability(const ContextKey& context,
                               std::uint8_t next) const {
  const auto* c = find(context);
  const double num = static_cast<double>(c ? c->get(next) : 0) + alpha_;
  const double den = static_cast<double>(c ? c->total : 0) +
                     alpha_ * static_cast<double>(kVocabSize);
  return num / den;
}

TokenLogProbs NGramModel::token_logprobs(
    std::string_view text, std::optional<std::string_view> context) const {
  if (text.empty()) {
    throw EmptySequenceError("cannot score empty text");
  }
  ContextKey window = initial_window();
  if (context) {
    for (char c : *context) push(window, static_cast<unsigned char>(c));
  }
  std::vector<double> values;
  values.reserve(text.size());
  for (char c : text) {
    const auto b = static_cast<std::uint8_t>(c);
    values.push_back(std::log(probability(window, b)));
    push(window, b);
  }
  return TokenLogProbs(std::move(values));
}

std::uint8_t NGramModel::sample(const NextCounts* counts, double u,
                                double temperature) const {
  auto count_of = [counts](std::uint8_t b) -> double {
    return counts ? static_cast<double>(counts->get(b)) : 0.0;
  };

  if (temperature == 0.0) {
    std::uint8_t best = 0;
    std::uint64_t best_count = 0;
    if (counts) {
      for (const auto& [b, n] : counts->next) {
        if (n > best_count) {
          best = b;
          best_count = n;
        }
      }
    }
    return best;
  }

  const double total = static_cast<double>(counts ? counts->total : 0);
  const double denom = total + alpha_ * static_cast<double>(kVocabSize);
  std::vector<double> weights(kVocabSize);
  double weight_sum = 0.0;
  for (std::size_t b = 0; b < kVocabSize; ++b) {
    double w = count_of(static_cast<std::uint8_t>(b)) + alpha_;
    if (temperature != 1.0) w = std::pow(w / denom, 1.0 / temperature);
    weights[b] = w;
    weight_sum += w;
  }
  if (temperature == 1.0) weight_sum = denom;

  const double target = u * weight_sum;
  double acc = 0.0;
  for (std::size_t b = 0; b < kVocabSize; ++b) {
    acc += weights[b];
    if (target < acc) return static_cast<std::uint8_t>(b);
  }
  return static_cast<std::uint8_t>(kVocabSize - 1);
}

std::string NGramModel::generate(std::string_view prompt, std::size_t max_len,
                                 std::uint64_t seed,
                                 const GenerateOptions& options) const {
  if (max_len < 1) throw InvalidArgument("max_len must be >= 1");
  if (!(options.temperature >= 0.0) || !std::isfinite(options.temperature)) {
    throw InvalidArgument("temperature must be finite and >= 0");
  }
  SplitMix64 rng(seed);
  ContextKey window = initial_window();
  for (char c : prompt) push(window, static_cast<unsigned char>(c));

  std::string out;
  out.reserve(max_len);
  while (out.size() < max_len) {
    const double u = options.temperature == 0.0 ? 0.0 : rng.uniform();
    const auto b = sample(find(window), u, options.temperature);
    out.push_back(static_cast<char>(b));
    push(window, b);
    if (options.stop_at_newline && b == '\n') break;
  }
  return out;
}

NGramModel train(const Corpus& corpus, int order, double alpha) {
  check_params(order, alpha);
  const bool any = std::any_of(corpus.documents.begin(), corpus.documents.end(),
                               [](const std::string& d) { return !d.empty(); });
  if (!any) {
    throw InvalidArgument("corpus '" + corpus.name +
                          "' has no non-empty document");
  }
  NGramModel model(order, alpha);
  for (const auto& doc : corpus.documents) {
    ContextKey window = model.initial_window();
    for (char c : doc) {
      const auto b = static_cast<std::uint8_t>(c);
      model.contexts_[window].add(b, 1);
      model.push(window, b);
    }
  }
  model.fingerprint_ = corpus_fingerprint(corpus);
  return model;
}

bool operator==(const NGramModel& a, const NGramModel& b) {
  if (a.order_ != b.order_ || a.alpha_ != b.alpha_ ||
      a.contexts_.size() != b.contexts_.size()) {
    return false;
  }
  for (const auto& [ctx, counts] : a.contexts_) {
    const auto* other = b.find(ctx);
    if (!other || other->total != counts.total || other->next != counts.next) {
      return false;
    }
  }
  return true;
}

// Text layout, one record per line:
//
//   crossrank-ngram 1
//   order <m>
//   alpha <shortest round-trip decimal>
//   fingerprint <hex>
//   contexts <count>
//   <ctx> <total> <byte>:<count> ...      (one line per context)
//
// <ctx> is the m-1 context symbols in decimal joined by '.', with 256 the
// start marker, or '-' for order 1. Context lines are sorted by symbol
// sequence and byte entries by byte, so equal models save identical files.
void NGramModel::save(std::ostream& out) const {
  std::vector<const ContextKey*> keys;
  keys.reserve(contexts_.size());
  for (const auto& entry : contexts_) keys.push_back(&entry.first);
  std::sort(keys.begin(), keys.end(),
            [](const ContextKey* x, const ContextKey* y) { return *x < *y; });

  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "order " << order_ << '\n';
  out << "alpha " << format_double(alpha_) << '\n';
  out << "fingerprint " << fingerprint_ << '\n';
  out << "contexts " << keys.size() << '\n';
  for (const auto* key : keys) {
    const auto& counts = contexts_.at(*key);
    out << encode_context(*key) << ' ' << counts.total;
    for (const auto& [b, n] : counts.next) {
      out << ' ' << static_cast<unsigned>(b) << ':' << n;
    }
    out << '\n';
  }
}

NGramModel NGramModel::load(std::istream& in) {
  auto expect_line = [&in](std::string_view key) {
    std::string line;
    if (!std::getline(in, line)) {
      throw FormatError("model file truncated before '" + std::string(key) + "'");
    }
    if (line.rfind(std::string(key) + ' ', 0) != 0) {
      throw FormatError("expected '" + std::string(key) + "' record");
    }
    return line.substr(key.size() + 1);
  };

  const auto version = expect_line(kMagic);
  if (version != std::to_string(kFormatVersion)) {
    throw FormatError("unsupported model format version " + version);
  }
  const auto order = static_cast<int>(parse_u64(expect_line("order")));
  const double alpha = parse_double(expect_line("alpha"));
  try {
    check_params(order, alpha);
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  NGramModel model(order, alpha);
  model.fingerprint_ = expect_line("fingerprint");
  const auto n_contexts = parse_u64(expect_line("contexts"));

  std::string line;
  for (std::uint64_t i = 0; i < n_contexts; ++i) {
    if (!std::getline(in, line)) throw FormatError("model file truncated");
    std::istringstream fields(line);
    std::string ctx_field, total_field, entry;
    fields >> ctx_field >> total_field;
    auto ctx = decode_context(ctx_field, order);
    const auto total = parse_u64(total_field);
    NextCounts counts;
    int last = -1;
    while (fields >> entry) {
      const auto colon = entry.find(':');
      if (colon == std::string::npos) throw FormatError("bad count entry");
      const auto b = parse_u64(std::string_view(entry).substr(0, colon));
      const auto n = parse_u64(std::string_view(entry).substr(colon + 1));
      if (b > 255 || static_cast<int>(b) <= last) {
        throw FormatError("byte entries must be ascending and < 256");
      }
      last = static_cast<int>(b);
      counts.next.emplace_back(static_cast<std::uint8_t>(b), n);
      counts.total += n;
    }
    if (counts.total != total) {
      throw FormatError("context total does not match its counts");
    }
    if (!model.contexts_.emplace(std::move(ctx), std::move(counts)).second) {
      throw FormatError("duplicate context record");
    }
  }
  return model;
}

void NGramModel::save_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  save(out);
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

NGramModel NGramModel::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file '" + path.string() + "'");
  return load(in);
}

}  // namespace crossrank
