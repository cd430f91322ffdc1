#pragma once

// Agreement, correlation and class-performance statistics over 3-class
// impact labels.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "asrimpact/core/model.hpp"

namespace asrimpact::stats {

class StatsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LabelSeries {
  std::vector<std::string> ids;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  // Throws StatsError on unequal lengths, duplicate ids or labels outside 0..2.
  void check() const;
};

// Throws StatsError unless both series hold the same ids in the same order.
void check_paired(const LabelSeries& a, const LabelSeries& b);

using Confusion = std::array<std::array<int, kNumLabels>, kNumLabels>;

// confusion[a][b] counts items labelled a by the first series and b by the second.
Confusion confusion_matrix(std::span<const int> a, std::span<const int> b);

double percent_agreement(std::span<const int> a, std::span<const int> b);

enum class KappaWeighting { none, linear, quadratic };

struct KappaResult {
  double kappa = 0.0;
  double observed = 0.0;  // p_o (weighted agreement under a weighting)
  double expected = 0.0;  // p_e
  // p_e = 1: every rating used a single shared label; kappa is 1 if p_o = 1, else 0.
  bool degenerate = false;
};

KappaResult cohens_kappa_detail(std::span<const int> a, std::span<const int> b,
                                KappaWeighting weighting = KappaWeighting::none);
double cohens_kappa(std::span<const int> a, std::span<const int> b, KappaWeighting weighting = KappaWeighting::none);
double cohens_kappa(const LabelSeries& a, const LabelSeries& b, KappaWeighting weighting = KappaWeighting::none);

struct BootstrapOptions {
  int iterations = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  // Resamples are split across threads; results do not depend on this.
  int threads = 1;
};

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

// Statistic over a resample given as indices into the original items.
using ResampleStatistic = std::function<double(std::span<const std::size_t> indices)>;

// Percentile interval. Resample i draws from its own substream of the seed.
// Non-finite statistic values are dropped; if none remain both bounds are NaN.
Interval bootstrap_ci(std::size_t n, const ResampleStatistic& statistic, const BootstrapOptions& options = {});

using PairStatistic = std::function<double(std::span<const int> a, std::span<const int> b)>;

// Paired resampling over items of two label series.
Interval bootstrap_ci(std::span<const int> a, std::span<const int> b, const PairStatistic& statistic,
                      const BootstrapOptions& options = {});

// Linear interpolation between closest ranks; values must be sorted.
double percentile_sorted(std::span<const double> sorted, double q);

struct TauResult {
  double tau = 0.0;  // NaN when degenerate
  bool degenerate = false;
  std::int64_t concordant_minus_discordant = 0;
  std::int64_t pairs = 0;
  std::int64_t ties_x = 0;
  std::int64_t ties_y = 0;
};

// Kendall's tau-b in O(n log n). Degenerate when either input is constant.
TauResult kendall_tau_b(std::span<const double> x, std::span<const double> y);
TauResult kendall_tau(std::span<const double> scores, std::span<const int> labels);

// Mean score on label 2 minus mean score on label 0; label 1 is ignored.
double enrichment_delta(std::span<const double> scores, std::span<const int> labels);

struct ClassificationReport {
  std::size_t n = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<double, kNumLabels> precision{};
  std::array<double, kNumLabels> recall{};
  std::array<double, kNumLabels> f1{};
  std::array<int, kNumLabels> support{};
  // Precision or recall undefined for the class; its F1 is reported as 0.
  std::array<bool, kNumLabels> undefined{};
  Confusion confusion{};  // [truth][pred]
};

ClassificationReport classification_report(std::span<const int> pred, std::span<const int> truth);
ClassificationReport classification_report(const LabelSeries& pred, const LabelSeries& truth);

struct SplitSizes {
  int train = 0;
  int validation = 0;
  int test = 0;

  int total() const { return train + validation + test; }
};

// Per-class item counts for each split, [label][train, validation, test].
using SplitQuota = std::array<std::array<int, 3>, kNumLabels>;

// Proportional allocation with largest-remainder rounding in both directions.
SplitQuota split_quota(const std::array<int, kNumLabels>& class_counts, const SplitSizes& sizes);

// One split per label, in input order. Items beyond the requested sizes stay
// unassigned. Throws StatsError if sizes exceed the item count, a class is
// absent, or a class has fewer items than there are non-empty splits.
std::vector<Split> stratified_split(std::span<const int> labels, const SplitSizes& sizes, std::uint64_t seed);
// Examples must be labelled; ordering within a class follows the ids.
std::vector<Split> stratified_split(std::span<const LabeledExample> examples, const SplitSizes& sizes,
                                    std::uint64_t seed);

struct AgreementReport {
  std::size_t n = 0;
  double percent_agreement = 0.0;
  double kappa = 0.0;
  bool kappa_degenerate = false;
  Interval kappa_ci;
  Confusion per_class_confusion{};
};

AgreementReport agreement_report(const LabelSeries& a, const LabelSeries& b, const BootstrapOptions& options = {});

}  // namespace asrimpact::stats
