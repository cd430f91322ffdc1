#include "asrimpact/metrics/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "asrimpact/textnorm/normalize.hpp"

namespace asrimpact::metrics {

namespace {

constexpr std::size_t kHashedDims = 32;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<double> SemanticScorer::embed(std::string_view) const {
  throw UnsupportedCapability("scorer '" + name() + "' cannot embed text");
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = std::max(a.size(), b.size());
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = i < a.size() ? a[i] : 0.0;
    const double y = i < b.size() ? b[i] : 0.0;
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

MockSemanticScorer::MockSemanticScorer(Mode mode, std::string name) : mode_(mode), name_(std::move(name)) {}

std::vector<double> MockSemanticScorer::embed_word(const std::string& word) const {
  switch (mode_) {
    case Mode::identical:
      return {1.0};
    case Mode::orthogonal: {
      std::lock_guard lock(vocab_mutex_);
      auto [it, inserted] = vocab_.emplace(word, vocab_.size());
      (void)inserted;
      std::vector<double> v(it->second + 1, 0.0);
      v[it->second] = 1.0;
      return v;
    }
    case Mode::hashed:
      break;
  }
  std::uint64_t state = fnv1a(word);
  std::vector<double> v(kHashedDims);
  for (auto& x : v) {
    x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  }
  return v;
}

std::vector<double> MockSemanticScorer::embed(std::string_view text) const {
  const auto tokens = textnorm::tokenize_words(textnorm::normalize(text, textnorm::NormalizationConfig::standard()));
  if (mode_ == Mode::identical) return {1.0};
  std::vector<double> sum;
  for (const auto& t : tokens) {
    const auto v = embed_word(t);
    if (sum.size() < v.size()) sum.resize(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
  }
  if (!tokens.empty()) {
    for (auto& x : sum) x /= static_cast<double>(tokens.size());
  }
  return sum;
}

double MockSemanticScorer::score(std::string_view ref, std::string_view hyp) const {
  const auto cfg = textnorm::NormalizationConfig::standard();
  const auto r = textnorm::normalize(ref, cfg);
  const auto h = textnorm::normalize(hyp, cfg);
  if (r == h) return 1.0;
  if (r.empty() || h.empty()) return 0.0;
  return std::clamp(cosine(embed(r), embed(h)), 0.0, 1.0);
}

std::unique_ptr<SemanticScorer> make_scorer(std::string_view name) {
  if (name == "mock") return std::make_unique<MockSemanticScorer>(MockSemanticScorer::Mode::hashed, "mock");
  if (name == "mock-identical") {
    return std::make_unique<MockSemanticScorer>(MockSemanticScorer::Mode::identical, "mock-identical");
  }
  if (name == "mock-orthogonal") {
    return std::make_unique<MockSemanticScorer>(MockSemanticScorer::Mode::orthogonal, "mock-orthogonal");
  }
  throw std::invalid_argument("unknown semantic scorer '" + std::string(name) + "'");
}

}  // namespace asrimpact::metrics
