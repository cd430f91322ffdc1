#include "asrimpact/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <type_traits>
#include <unordered_map>

#include "asrimpact/metrics/stemmer.hpp"

namespace asrimpact::metrics {

namespace {

using textnorm::normalize;
using textnorm::tokenize_words;

using NgramCounts = std::unordered_map<std::string, int>;

template <typename Seq>
NgramCounts count_ngrams(const Seq& items, int n) {
  NgramCounts counts;
  if (n <= 0 || static_cast<int>(items.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= items.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      if (k > 0) key += '\x1f';
      if constexpr (std::is_same_v<typename Seq::value_type, std::string>) {
        key += items[i + static_cast<std::size_t>(k)];
      } else {
        key += textnorm::utf8_encode(std::u32string(1, items[i + static_cast<std::size_t>(k)]));
      }
    }
    ++counts[key];
  }
  return counts;
}

int total(const NgramCounts& c) {
  int sum = 0;
  for (const auto& [k, v] : c) sum += v;
  return sum;
}

int clipped_overlap(const NgramCounts& hyp, const NgramCounts& ref) {
  int sum = 0;
  for (const auto& [k, v] : hyp) {
    auto it = ref.find(k);
    if (it != ref.end()) sum += std::min(v, it->second);
  }
  return sum;
}

double f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

MetricResult error_rate(std::string name, double raw, bool degenerate) {
  MetricResult r;
  r.name = std::move(name);
  r.family = MetricFamily::edit_distance;
  r.raw = raw;
  r.normalized = 1.0 - std::min(raw, 1.0);
  r.degenerate = degenerate;
  return r;
}

MetricResult similarity(std::string name, double raw, bool degenerate) {
  MetricResult r;
  r.name = std::move(name);
  r.family = MetricFamily::ngram_overlap;
  r.raw = raw;
  r.normalized = std::clamp(raw, 0.0, 1.0);
  r.degenerate = degenerate;
  return r;
}

struct Prepared {
  std::string ref;
  std::string hyp;
  std::vector<std::string> ref_tokens;
  std::vector<std::string> hyp_tokens;
};

Prepared prepare(std::string_view ref, std::string_view hyp, const NormalizationConfig& cfg) {
  Prepared p;
  p.ref = normalize(ref, cfg);
  p.hyp = normalize(hyp, cfg);
  p.ref_tokens = tokenize_words(p.ref);
  p.hyp_tokens = tokenize_words(p.hyp);
  return p;
}

// Word-level error rate with the empty-reference convention applied.
MetricResult word_rate(std::string name, std::string_view ref, std::string_view hyp, const NormalizationConfig& cfg,
                       double (*formula)(const EditCounts&)) {
  const auto p = prepare(ref, hyp, cfg);
  if (p.ref_tokens.empty()) return error_rate(std::move(name), p.hyp_tokens.empty() ? 0.0 : 1.0, !p.hyp_tokens.empty());
  return error_rate(std::move(name), formula(edit_counts(p.ref_tokens, p.hyp_tokens)), false);
}

}  // namespace

std::string_view to_string(MetricFamily f) {
  switch (f) {
    case MetricFamily::edit_distance: return "edit_distance";
    case MetricFamily::ngram_overlap: return "ngram_overlap";
    case MetricFamily::learned_semantic: return "learned_semantic";
  }
  return "edit_distance";
}

MetricFamily metric_family_from_string(std::string_view s) {
  if (s == "edit_distance") return MetricFamily::edit_distance;
  if (s == "ngram_overlap") return MetricFamily::ngram_overlap;
  if (s == "learned_semantic") return MetricFamily::learned_semantic;
  throw std::invalid_argument("unknown metric family '" + std::string(s) + "'");
}

std::string_view to_string(RougeVariant v) {
  switch (v) {
    case RougeVariant::rouge1: return "rouge1";
    case RougeVariant::rouge2: return "rouge2";
    case RougeVariant::rougeL: return "rougeL";
    case RougeVariant::rougeW: return "rougeW";
  }
  return "rouge1";
}

double wer_from_counts(const EditCounts& c) {
  if (c.ref_len == 0) return c.insertions > 0 ? 1.0 : 0.0;
  return static_cast<double>(c.errors()) / c.ref_len;
}

double mer_from_counts(const EditCounts& c) {
  const int denom = c.errors() + c.hits;
  return denom == 0 ? 0.0 : static_cast<double>(c.errors()) / denom;
}

double wil_from_counts(const EditCounts& c) {
  if (c.ref_len == 0 && c.hyp_len() == 0) return 0.0;
  const double ref_rate = c.ref_len == 0 ? 0.0 : static_cast<double>(c.hits) / c.ref_len;
  const double hyp_rate = c.hyp_len() == 0 ? 0.0 : static_cast<double>(c.hits) / c.hyp_len();
  return 1.0 - ref_rate * hyp_rate;
}

MetricResult wer(std::string_view ref, std::string_view hyp, const NormalizationConfig& cfg) {
  return word_rate("wer", ref, hyp, cfg, &wer_from_counts);
}

MetricResult mer(std::string_view ref, std::string_view hyp, const NormalizationConfig& cfg) {
  return word_rate("mer", ref, hyp, cfg, &mer_from_counts);
}

MetricResult wil(std::string_view ref, std::string_view hyp, const NormalizationConfig& cfg) {
  return word_rate("wil", ref, hyp, cfg, &wil_from_counts);
}

MetricResult cer(std::string_view ref, std::string_view hyp, const NormalizationConfig& cfg) {
  const auto r = textnorm::utf8_decode(normalize(ref, cfg));
  const auto h = textnorm::utf8_decode(normalize(hyp, cfg));
  if (r.empty()) return error_rate("cer", h.empty() ? 0.0 : 1.0, !h.empty());
  const std::vector<char32_t> rv(r.begin(), r.end());
  const std::vector<char32_t> hv(h.begin(), h.end());
  return error_rate("cer", wer_from_counts(edit_counts(rv, hv)), false);
}

MetricResult swer(std::string_view ref, std::string_view hyp, const SemanticScorer& scorer,
                  const NormalizationConfig& cfg) {
  if (!scorer.can_embed()) {
    throw UnsupportedCapability("S-WER needs an embedding scorer; '" + scorer.name() + "' cannot embed");
  }
  const auto p = prepare(ref, hyp, cfg);
  if (p.ref_tokens.empty()) return error_rate("swer", p.hyp_tokens.empty() ? 0.0 : 1.0, !p.hyp_tokens.empty());

  std::vector<double> centroid;
  for (const auto& t : p.hyp_tokens) {
    const auto v = scorer.embed(t);
    if (centroid.size() < v.size()) centroid.resize(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) centroid[i] += v[i];
  }
  auto weight = [](double cos) { return 1.0 - std::clamp(cos, 0.0, 1.0); };

  double weighted = 0.0;
  const auto ops = edit_alignment(std::span<const std::string>(p.ref_tokens), std::span<const std::string>(p.hyp_tokens));
  for (const auto& op : ops) {
    switch (op.kind) {
      case EditKind::hit:
        break;
      case EditKind::insertion:
        weighted += 1.0;
        break;
      case EditKind::substitution:
        weighted += weight(cosine(scorer.embed(p.ref_tokens[static_cast<std::size_t>(op.ref_pos)]),
                                  scorer.embed(p.hyp_tokens[static_cast<std::size_t>(op.hyp_pos)])));
        break;
      case EditKind::deletion:
        weighted += weight(cosine(scorer.embed(p.ref_tokens[static_cast<std::size_t>(op.ref_pos)]), centroid));
        break;
    }
  }
  return error_rate("swer", weighted / static_cast<double>(p.ref_tokens.size()), false);
}

double bleu_tokens(std::span<const std::string> ref, std::span<const std::string> hyp, int max_n) {
  if (max_n < 1 || max_n > 4) throw std::invalid_argument("BLEU order must be in 1..4");
  if (hyp.empty()) return 0.0;
  const std::vector<std::string> r(ref.begin(), ref.end());
  const std::vector<std::string> h(hyp.begin(), hyp.end());
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto hc = count_ngrams(h, n);
    const int matched = clipped_overlap(hc, count_ngrams(r, n));
    const int denom = std::max(1, total(hc));
    if (n == 1 && matched == 0) return 0.0;
    const double p = matched == 0 ? kBleuEpsilon / denom : static_cast<double>(matched) / denom;
    log_sum += std::log(p) / max_n;
  }
  const double c = static_cast<double>(h.size());
  const double rl = static_cast<double>(r.size());
  const double bp = c > rl ? 1.0 : std::exp(1.0 - rl / c);
  return bp * std::exp(log_sum);
}

MetricResult bleu(std::string_view ref, std::string_view hyp, int max_n, const NormalizationConfig& cfg) {
  const auto p = prepare(ref, hyp, cfg);
  const std::string name = "bleu" + std::to_string(max_n);
  if (p.ref_tokens.empty()) return similarity(name, p.hyp_tokens.empty() ? 1.0 : 0.0, true);
  return similarity(name, bleu_tokens(p.ref_tokens, p.hyp_tokens, max_n), false);
}

double rouge_tokens(std::span<const std::string> ref, std::span<const std::string> hyp, RougeVariant variant,
                    double weight_exponent) {
  const std::vector<std::string> r(ref.begin(), ref.end());
  const std::vector<std::string> h(hyp.begin(), hyp.end());
  if (variant == RougeVariant::rouge1 || variant == RougeVariant::rouge2) {
    const int n = variant == RougeVariant::rouge1 ? 1 : 2;
    const auto rc = count_ngrams(r, n);
    const auto hc = count_ngrams(h, n);
    const int rt = total(rc);
    const int ht = total(hc);
    if (rt == 0 || ht == 0) return 0.0;
    const int overlap = clipped_overlap(hc, rc);
    return f1(static_cast<double>(overlap) / ht, static_cast<double>(overlap) / rt);
  }
  if (r.empty() || h.empty()) return 0.0;

  const std::size_t m = r.size();
  const std::size_t n = h.size();
  // c: (weighted) LCS score; run: length of the consecutive match ending here.
  std::vector<double> c((m + 1) * (n + 1), 0.0);
  std::vector<int> run((m + 1) * (n + 1), 0);
  auto idx = [n](std::size_t i, std::size_t j) { return i * (n + 1) + j; };
  const bool weighted = variant == RougeVariant::rougeW;
  auto f = [&](double k) { return weighted ? std::pow(k, weight_exponent) : k; };
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      if (r[i - 1] == h[j - 1]) {
        const int k = run[idx(i - 1, j - 1)];
        c[idx(i, j)] = c[idx(i - 1, j - 1)] + (weighted ? f(k + 1) - f(k) : 1.0);
        run[idx(i, j)] = k + 1;
      } else {
        c[idx(i, j)] = std::max(c[idx(i - 1, j)], c[idx(i, j - 1)]);
      }
    }
  }
  const double score = c[idx(m, n)];
  if (!weighted) return f1(score / static_cast<double>(n), score / static_cast<double>(m));
  auto f_inv = [&](double x) { return std::pow(x, 1.0 / weight_exponent); };
  const double recall = f_inv(score / f(static_cast<double>(m)));
  const double precision = f_inv(score / f(static_cast<double>(n)));
  return f1(precision, recall);
}

MetricResult rouge(std::string_view ref, std::string_view hyp, RougeVariant variant, const NormalizationConfig& cfg,
                   double weight_exponent) {
  const auto p = prepare(ref, hyp, cfg);
  const std::string name(to_string(variant));
  if (p.ref_tokens.empty()) return similarity(name, p.hyp_tokens.empty() ? 1.0 : 0.0, true);
  return similarity(name, rouge_tokens(p.ref_tokens, p.hyp_tokens, variant, weight_exponent), false);
}

double chrf_text(std::string_view ref_normalized, std::string_view hyp_normalized, const ChrfParams& params) {
  std::u32string rc;
  std::u32string hc;
  for (char32_t ch : textnorm::utf8_decode(ref_normalized)) {
    if (ch != U' ') rc += ch;
  }
  for (char32_t ch : textnorm::utf8_decode(hyp_normalized)) {
    if (ch != U' ') hc += ch;
  }
  const auto rw = tokenize_words(ref_normalized);
  const auto hw = tokenize_words(hyp_normalized);

  struct Stat {
    int hyp;
    int ref;
    int match;
  };
  std::vector<Stat> stats;
  for (int n = 1; n <= params.char_order; ++n) {
    const auto h = count_ngrams(hc, n);
    const auto r = count_ngrams(rc, n);
    stats.push_back({total(h), total(r), clipped_overlap(h, r)});
  }
  for (int n = 1; n <= params.word_order; ++n) {
    const auto h = count_ngrams(hw, n);
    const auto r = count_ngrams(rw, n);
    stats.push_back({total(h), total(r), clipped_overlap(h, r)});
  }

  double avg_prec = 0.0;
  double avg_rec = 0.0;
  int effective = 0;
  for (const auto& s : stats) {
    if (s.hyp > 0 && s.ref > 0) {
      avg_prec += static_cast<double>(s.match) / s.hyp;
      avg_rec += static_cast<double>(s.match) / s.ref;
      ++effective;
    }
  }
  if (effective == 0) return 0.0;
  avg_prec /= effective;
  avg_rec /= effective;
  const double factor = params.beta * params.beta;
  if (avg_prec + avg_rec == 0.0) return 0.0;
  return (1.0 + factor) * avg_prec * avg_rec / (factor * avg_prec + avg_rec);
}

MetricResult chrf(std::string_view ref, std::string_view hyp, bool plus_plus, const NormalizationConfig& cfg) {
  const auto p = prepare(ref, hyp, cfg);
  ChrfParams params;
  params.word_order = plus_plus ? 2 : 0;
  const std::string name = plus_plus ? "chrf++" : "chrf";
  if (p.ref.empty()) return similarity(name, p.hyp.empty() ? 1.0 : 0.0, true);
  return similarity(name, chrf_text(p.ref, p.hyp, params), false);
}

MeteorAlignment meteor_align(std::span<const std::string> ref, std::span<const std::string> hyp,
                             const MeteorParams& params) {
  using Enum = std::vector<std::pair<int, std::string>>;
  Enum hyp_left;
  Enum ref_left;
  for (std::size_t i = 0; i < hyp.size(); ++i) hyp_left.emplace_back(static_cast<int>(i), hyp[i]);
  for (std::size_t j = 0; j < ref.size(); ++j) ref_left.emplace_back(static_cast<int>(j), ref[j]);

  MeteorAlignment out;
  // Greedy matching from the end of both sequences, one stage at a time.
  auto stage = [&](auto&& same) {
    int found = 0;
    for (std::size_t i = hyp_left.size(); i-- > 0;) {
      for (std::size_t j = ref_left.size(); j-- > 0;) {
        if (same(hyp_left[i].second, ref_left[j].second)) {
          out.matches.emplace_back(hyp_left[i].first, ref_left[j].first);
          hyp_left.erase(hyp_left.begin() + static_cast<std::ptrdiff_t>(i));
          ref_left.erase(ref_left.begin() + static_cast<std::ptrdiff_t>(j));
          ++found;
          break;
        }
      }
    }
    return found;
  };
  out.exact = stage([](const std::string& a, const std::string& b) { return a == b; });
  out.stem = stage([](const std::string& a, const std::string& b) { return porter_stem(a) == porter_stem(b); });
  if (!params.synonyms.empty()) {
    out.synonym = stage([&](const std::string& a, const std::string& b) {
      return params.synonyms.contains({a, b}) || params.synonyms.contains({b, a});
    });
  }
  std::sort(out.matches.begin(), out.matches.end());
  if (!out.matches.empty()) {
    out.chunks = 1;
    for (std::size_t i = 0; i + 1 < out.matches.size(); ++i) {
      const bool contiguous = out.matches[i + 1].first == out.matches[i].first + 1 &&
                              out.matches[i + 1].second == out.matches[i].second + 1;
      if (!contiguous) ++out.chunks;
    }
  }
  return out;
}

double meteor_tokens(std::span<const std::string> ref, std::span<const std::string> hyp, const MeteorParams& params) {
  if (ref.empty() || hyp.empty()) return 0.0;
  const auto alignment = meteor_align(ref, hyp, params);
  const double matches = static_cast<double>(alignment.matches.size());
  if (matches == 0.0) return 0.0;
  const double precision = matches / static_cast<double>(hyp.size());
  const double recall = matches / static_cast<double>(ref.size());
  const double fmean = precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
  // A single contiguous chunk carries no fragmentation penalty.
  const double penalty =
      alignment.chunks <= 1 ? 0.0 : params.gamma * std::pow(alignment.chunks / matches, params.beta);
  return (1.0 - penalty) * fmean;
}

MetricResult meteor(std::string_view ref, std::string_view hyp, const MeteorParams& params,
                    const NormalizationConfig& cfg) {
  const auto p = prepare(ref, hyp, cfg);
  if (p.ref_tokens.empty()) return similarity("meteor", p.hyp_tokens.empty() ? 1.0 : 0.0, true);
  return similarity("meteor", meteor_tokens(p.ref_tokens, p.hyp_tokens, params), false);
}

std::vector<MetricResult> score_all(std::string_view ref, std::string_view hyp,
                                    std::span<const SemanticScorer* const> scorers, const NormalizationConfig& cfg) {
  std::vector<MetricResult> out;
  out.push_back(wer(ref, hyp, cfg));
  out.push_back(cer(ref, hyp, cfg));
  out.push_back(mer(ref, hyp, cfg));
  out.push_back(wil(ref, hyp, cfg));
  for (int n = 1; n <= 4; ++n) out.push_back(bleu(ref, hyp, n, cfg));
  for (auto v : {RougeVariant::rouge1, RougeVariant::rouge2, RougeVariant::rougeL, RougeVariant::rougeW}) {
    out.push_back(rouge(ref, hyp, v, cfg));
  }
  out.push_back(chrf(ref, hyp, false, cfg));
  out.push_back(chrf(ref, hyp, true, cfg));
  out.push_back(meteor(ref, hyp, {}, cfg));

  auto failed = [](std::string name, MetricFamily family, const std::exception& e) {
    MetricResult r;
    r.name = std::move(name);
    r.family = family;
    r.failed = true;
    r.error = e.what();
    return r;
  };

  const auto embedder = std::find_if(scorers.begin(), scorers.end(),
                                     [](const SemanticScorer* s) { return s != nullptr && s->can_embed(); });
  if (embedder != scorers.end()) {
    try {
      out.push_back(swer(ref, hyp, **embedder, cfg));
    } catch (const std::exception& e) {
      out.push_back(failed("swer", MetricFamily::edit_distance, e));
    }
  }
  for (const SemanticScorer* scorer : scorers) {
    if (scorer == nullptr) continue;
    const std::string name = scorer->name();
    try {
      MetricResult r;
      r.name = name;
      r.family = MetricFamily::learned_semantic;
      r.raw = scorer->score(ref, hyp);
      r.normalized = std::clamp(r.raw, 0.0, 1.0);
      r.degenerate = normalize(ref, cfg).empty();
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      out.push_back(failed(name, MetricFamily::learned_semantic, e));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const MetricResult& a, const MetricResult& b) {
    if (a.family != b.family) return a.family < b.family;
    return a.name < b.name;
  });
  return out;
}

}  // namespace asrimpact::metrics
