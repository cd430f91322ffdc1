#include "asrimpact/stats/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include "asrimpact/core/random.hpp"

namespace asrimpact::stats {

namespace {

void check_labels(std::span<const int> labels, const char* what) {
  for (int v : labels) {
    if (!is_valid_label(v)) {
      throw StatsError(std::string(what) + ": label " + std::to_string(v) + " is outside 0..2");
    }
  }
}

void check_same_length(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw StatsError("series lengths differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  if (a.empty()) throw StatsError("series are empty");
  check_labels(a, "first series");
  check_labels(b, "second series");
}

std::string class_name(int label) {
  return std::to_string(label) + " (" + std::string(to_string(static_cast<ImpactLabel>(label))) + ")";
}

double weight(KappaWeighting w, int i, int j) {
  const double d = std::abs(i - j) / static_cast<double>(kNumLabels - 1);
  switch (w) {
    case KappaWeighting::none: return i == j ? 1.0 : 0.0;
    case KappaWeighting::linear: return 1.0 - d;
    case KappaWeighting::quadratic: return 1.0 - d * d;
  }
  return 0.0;
}

// Merge sort on y counting strict inversions.
std::int64_t count_swaps(std::vector<double>& y, std::vector<double>& buffer, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = count_swaps(y, buffer, lo, mid) + count_swaps(y, buffer, mid, hi);
  std::size_t i = lo;
  std::size_t j = mid;
  std::size_t k = lo;
  while (i < mid && j < hi) {
    if (y[j] < y[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buffer[k++] = y[j++];
    } else {
      buffer[k++] = y[i++];
    }
  }
  while (i < mid) buffer[k++] = y[i++];
  while (j < hi) buffer[k++] = y[j++];
  std::copy(buffer.begin() + static_cast<std::ptrdiff_t>(lo), buffer.begin() + static_cast<std::ptrdiff_t>(hi),
            y.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

// Sum of t(t-1)/2 over runs of equal adjacent values.
template <typename It, typename Eq>
std::int64_t tied_pairs(It first, It last, Eq eq) {
  std::int64_t total = 0;
  std::int64_t run = 1;
  for (It it = first; it != last; ++it) {
    if (it != first && eq(*std::prev(it), *it)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total + run * (run - 1) / 2;
}

// Largest-remainder apportionment of `total` over `weights`.
// Ties go to the lower index.
std::vector<int> apportion(const std::vector<std::int64_t>& weights, int total) {
  const std::int64_t sum = std::accumulate(weights.begin(), weights.end(), std::int64_t{0});
  std::vector<int> out(weights.size(), 0);
  if (sum == 0 || total == 0) return out;
  std::vector<std::pair<std::int64_t, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out[i] = static_cast<int>(weights[i] * total / sum);
    assigned += out[i];
    remainders.emplace_back(weights[i] * total % sum, i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[remainders[k].second];
  return out;
}

}  // namespace

void LabelSeries::check() const {
  if (ids.size() != labels.size()) {
    throw StatsError("label series has " + std::to_string(ids.size()) + " ids but " + std::to_string(labels.size()) +
                     " labels");
  }
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw StatsError("duplicate id '" + id + "' in label series");
  }
  check_labels(labels, "label series");
}

void check_paired(const LabelSeries& a, const LabelSeries& b) {
  a.check();
  b.check();
  if (a.ids.size() != b.ids.size()) {
    throw StatsError("series cover different items: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  for (std::size_t i = 0; i < a.ids.size(); ++i) {
    if (a.ids[i] != b.ids[i]) {
      throw StatsError("id mismatch at position " + std::to_string(i) + ": '" + a.ids[i] + "' vs '" + b.ids[i] + "'");
    }
  }
}

Confusion confusion_matrix(std::span<const int> a, std::span<const int> b) {
  check_same_length(a, b);
  Confusion m{};
  for (std::size_t i = 0; i < a.size(); ++i) ++m[static_cast<std::size_t>(a[i])][static_cast<std::size_t>(b[i])];
  return m;
}

double percent_agreement(std::span<const int> a, std::span<const int> b) {
  check_same_length(a, b);
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(a.size());
}

KappaResult cohens_kappa_detail(std::span<const int> a, std::span<const int> b, KappaWeighting weighting) {
  const Confusion m = confusion_matrix(a, b);
  const auto n = static_cast<std::int64_t>(a.size());
  std::array<std::int64_t, kNumLabels> row{};
  std::array<std::int64_t, kNumLabels> col{};
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      row[i] += m[i][j];
      col[j] += m[i][j];
    }
  }

  KappaResult r;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    if (row[c] == n && col[c] == n) r.degenerate = true;
  }

  if (weighting == KappaWeighting::none) {
    // Integer numerator and denominator keep the sign of kappa exact.
    std::int64_t agree = 0;
    std::int64_t chance = 0;
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      agree += m[c][c];
      chance += row[c] * col[c];
    }
    r.observed = static_cast<double>(agree) / static_cast<double>(n);
    r.expected = static_cast<double>(chance) / static_cast<double>(n * n);
    if (r.degenerate) {
      r.kappa = agree == n ? 1.0 : 0.0;
    } else {
      r.kappa = static_cast<double>(n * agree - chance) / static_cast<double>(n * n - chance);
    }
    return r;
  }

  const double nn = static_cast<double>(n);
  for (int i = 0; i < kNumLabels; ++i) {
    for (int j = 0; j < kNumLabels; ++j) {
      const double w = weight(weighting, i, j);
      r.observed += w * m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] / nn;
      r.expected += w * static_cast<double>(row[static_cast<std::size_t>(i)]) *
                    static_cast<double>(col[static_cast<std::size_t>(j)]) / (nn * nn);
    }
  }
  if (r.degenerate) {
    r.kappa = r.observed == 1.0 ? 1.0 : 0.0;
  } else {
    r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
  }
  return r;
}

double cohens_kappa(std::span<const int> a, std::span<const int> b, KappaWeighting weighting) {
  return cohens_kappa_detail(a, b, weighting).kappa;
}

double cohens_kappa(const LabelSeries& a, const LabelSeries& b, KappaWeighting weighting) {
  check_paired(a, b);
  return cohens_kappa(a.labels, b.labels, weighting);
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || sorted[lo] == sorted[hi]) return sorted[lo];
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

Interval bootstrap_ci(std::size_t n, const ResampleStatistic& statistic, const BootstrapOptions& options) {
  if (n == 0) throw StatsError("cannot bootstrap an empty series");
  if (options.iterations < 1) throw StatsError("bootstrap needs at least one iteration");
  if (!(options.level > 0.0 && options.level < 1.0)) throw StatsError("confidence level must lie in (0, 1)");

  const auto iterations = static_cast<std::size_t>(options.iterations);
  std::vector<double> values(iterations);
  auto run = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> indices(n);
    for (std::size_t it = begin; it < end; ++it) {
      SplitMix64 rng(substream_seed(options.seed, it));
      for (auto& idx : indices) idx = static_cast<std::size_t>(rng.below(n));
      values[it] = statistic(indices);
    }
  };

  const auto threads = static_cast<std::size_t>(std::clamp(options.threads, 1, 64));
  if (threads == 1) {
    run(0, iterations);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (iterations + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(iterations, begin + chunk);
      if (begin < end) pool.emplace_back(run, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  std::vector<double> finite;
  finite.reserve(values.size());
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  std::sort(finite.begin(), finite.end());
  const double alpha = 1.0 - options.level;
  return {percentile_sorted(finite, alpha / 2.0), percentile_sorted(finite, 1.0 - alpha / 2.0)};
}

Interval bootstrap_ci(std::span<const int> a, std::span<const int> b, const PairStatistic& statistic,
                      const BootstrapOptions& options) {
  check_same_length(a, b);
  return bootstrap_ci(
      a.size(),
      [&](std::span<const std::size_t> indices) {
        std::vector<int> ra(indices.size());
        std::vector<int> rb(indices.size());
        for (std::size_t k = 0; k < indices.size(); ++k) {
          ra[k] = a[indices[k]];
          rb[k] = b[indices[k]];
        }
        return statistic(ra, rb);
      },
      options);
}

TauResult kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatsError("kendall tau needs equal lengths");
  if (x.size() < 2) throw StatsError("kendall tau needs at least two items");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i])) throw StatsError("kendall tau input contains NaN");
  }

  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return x[i] != x[j] ? x[i] < x[j] : y[i] < y[j];
  });

  TauResult r;
  r.pairs = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  r.ties_x = tied_pairs(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] == x[j]; });
  const std::int64_t ties_xy = tied_pairs(order.begin(), order.end(),
                                          [&](std::size_t i, std::size_t j) { return x[i] == x[j] && y[i] == y[j]; });

  std::vector<double> ys(n);
  for (std::size_t k = 0; k < n; ++k) ys[k] = y[order[k]];
  std::vector<double> buffer(n);
  const std::int64_t swaps = count_swaps(ys, buffer, 0, n);
  r.ties_y = tied_pairs(ys.begin(), ys.end(), [](double a, double b) { return a == b; });

  r.concordant_minus_discordant = r.pairs - r.ties_x - r.ties_y + ties_xy - 2 * swaps;
  const std::int64_t dx = r.pairs - r.ties_x;
  const std::int64_t dy = r.pairs - r.ties_y;
  if (dx == 0 || dy == 0) {
    r.degenerate = true;
    r.tau = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.tau = static_cast<double>(r.concordant_minus_discordant) /
          std::sqrt(static_cast<double>(dx) * static_cast<double>(dy));
  return r;
}

TauResult kendall_tau(std::span<const double> scores, std::span<const int> labels) {
  check_labels(labels, "labels");
  std::vector<double> y(labels.begin(), labels.end());
  return kendall_tau_b(scores, y);
}

double enrichment_delta(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw StatsError("scores and labels differ in length");
  check_labels(labels, "labels");
  double sum0 = 0.0;
  double sum2 = 0.0;
  std::size_t n0 = 0;
  std::size_t n2 = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) {
      sum0 += scores[i];
      ++n0;
    } else if (labels[i] == 2) {
      sum2 += scores[i];
      ++n2;
    }
  }
  if (n0 == 0) throw StatsError("enrichment delta needs examples of class " + class_name(0));
  if (n2 == 0) throw StatsError("enrichment delta needs examples of class " + class_name(2));
  return sum2 / static_cast<double>(n2) - sum0 / static_cast<double>(n0);
}

ClassificationReport classification_report(std::span<const int> pred, std::span<const int> truth) {
  ClassificationReport r;
  r.confusion = confusion_matrix(truth, pred);
  r.n = truth.size();
  int correct = 0;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    const int tp = r.confusion[c][c];
    int predicted = 0;
    int actual = 0;
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      predicted += r.confusion[k][c];
      actual += r.confusion[c][k];
    }
    correct += tp;
    r.support[c] = actual;
    r.undefined[c] = predicted == 0 || actual == 0;
    r.precision[c] = predicted == 0 ? 0.0 : static_cast<double>(tp) / predicted;
    r.recall[c] = actual == 0 ? 0.0 : static_cast<double>(tp) / actual;
    const double pr = r.precision[c] + r.recall[c];
    r.f1[c] = r.undefined[c] || pr == 0.0 ? 0.0 : 2.0 * r.precision[c] * r.recall[c] / pr;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  r.macro_f1 = (r.f1[0] + r.f1[1] + r.f1[2]) / kNumLabels;
  return r;
}

ClassificationReport classification_report(const LabelSeries& pred, const LabelSeries& truth) {
  check_paired(pred, truth);
  return classification_report(pred.labels, truth.labels);
}

SplitQuota split_quota(const std::array<int, kNumLabels>& class_counts, const SplitSizes& sizes) {
  const int n = std::accumulate(class_counts.begin(), class_counts.end(), 0);
  const int total = sizes.total();
  if (sizes.train < 0 || sizes.validation < 0 || sizes.test < 0) throw StatsError("split sizes must be non-negative");
  if (total > n) {
    throw StatsError("split sizes sum to " + std::to_string(total) + " but only " + std::to_string(n) +
                     " examples are available");
  }
  const std::array<int, 3> split_size = {sizes.train, sizes.validation, sizes.test};

  // Items of each class used at all, then each class spread over the splits.
  const auto used = apportion({class_counts[0], class_counts[1], class_counts[2]}, total);

  SplitQuota q{};
  if (total == 0) return q;
  std::array<int, kNumLabels> row_deficit{};
  std::array<int, 3> col_deficit = split_size;
  std::array<std::int64_t, kNumLabels * 3> remainder{};
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    row_deficit[c] = used[c];
    for (std::size_t s = 0; s < 3; ++s) {
      const std::int64_t num = static_cast<std::int64_t>(used[c]) * split_size[s];
      q[c][s] = static_cast<int>(num / total);
      remainder[c * 3 + s] = num % total;
      row_deficit[c] -= q[c][s];
      col_deficit[s] -= q[c][s];
    }
  }

  // Controlled rounding: round up a subset of fractional cells so that both
  // class and split totals hold, preferring the largest remainders. A 3x3
  // table always admits such a subset.
  int best_mask = -1;
  std::int64_t best_score = -1;
  for (int mask = 0; mask < (1 << (kNumLabels * 3)); ++mask) {
    std::array<int, kNumLabels> rows{};
    std::array<int, 3> cols{};
    std::int64_t score = 0;
    bool ok = true;
    for (int cell = 0; cell < kNumLabels * 3 && ok; ++cell) {
      if ((mask >> cell & 1) == 0) continue;
      if (remainder[static_cast<std::size_t>(cell)] == 0) ok = false;
      ++rows[static_cast<std::size_t>(cell / 3)];
      ++cols[static_cast<std::size_t>(cell % 3)];
      score += remainder[static_cast<std::size_t>(cell)];
    }
    if (!ok || rows != row_deficit || cols != col_deficit) continue;
    if (score > best_score) {
      best_score = score;
      best_mask = mask;
    }
  }
  if (best_mask < 0) throw StatsError("no consistent rounding of split quotas exists");
  for (int cell = 0; cell < kNumLabels * 3; ++cell) {
    if (best_mask >> cell & 1) ++q[static_cast<std::size_t>(cell / 3)][static_cast<std::size_t>(cell % 3)];
  }
  return q;
}

std::vector<Split> stratified_split(std::span<const int> labels, const SplitSizes& sizes, std::uint64_t seed) {
  check_labels(labels, "labels");
  std::array<std::vector<std::size_t>, kNumLabels> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);

  const int nonempty_splits = (sizes.train > 0) + (sizes.validation > 0) + (sizes.test > 0);
  std::array<int, kNumLabels> counts{};
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    counts[c] = static_cast<int>(members[c].size());
    if (counts[c] == 0) throw StatsError("class " + class_name(static_cast<int>(c)) + " has no examples");
    if (counts[c] < nonempty_splits) {
      throw StatsError("class " + class_name(static_cast<int>(c)) + " has " + std::to_string(counts[c]) +
                       " examples, fewer than the " + std::to_string(nonempty_splits) + " non-empty splits");
    }
  }
  const SplitQuota q = split_quota(counts, sizes);

  std::vector<Split> out(labels.size(), Split::unassigned);
  constexpr std::array<Split, 3> kOrder = {Split::train, Split::validation, Split::test};
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    SplitMix64 rng(substream_seed(seed, c));
    auto pool = members[c];
    shuffle(pool, rng);
    std::size_t next = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (int k = 0; k < q[c][s]; ++k) out[pool[next++]] = kOrder[s];
    }
  }
  return out;
}

std::vector<Split> stratified_split(std::span<const LabeledExample> examples, const SplitSizes& sizes,
                                    std::uint64_t seed) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return examples[i].id < examples[j].id; });
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (std::size_t i : order) {
    if (!examples[i].label) throw StatsError("example '" + examples[i].id + "' has no label");
    labels.push_back(*examples[i].label);
  }
  const auto sorted_splits = stratified_split(labels, sizes, seed);
  std::vector<Split> out(examples.size());
  for (std::size_t k = 0; k < order.size(); ++k) out[order[k]] = sorted_splits[k];
  return out;
}

AgreementReport agreement_report(const LabelSeries& a, const LabelSeries& b, const BootstrapOptions& options) {
  check_paired(a, b);
  AgreementReport r;
  r.n = a.size();
  r.percent_agreement = percent_agreement(a.labels, b.labels);
  const auto k = cohens_kappa_detail(a.labels, b.labels);
  r.kappa = k.kappa;
  r.kappa_degenerate = k.degenerate;
  r.kappa_ci = bootstrap_ci(
      a.labels, b.labels, [](std::span<const int> x, std::span<const int> y) { return cohens_kappa(x, y); }, options);
  r.per_class_confusion = confusion_matrix(a.labels, b.labels);
  return r;
}

}  // namespace asrimpact::stats
