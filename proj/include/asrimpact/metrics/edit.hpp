#pragma once

// Unit-cost edit distance with a deterministic backtrace.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace asrimpact::metrics {

// S + D + H = N (reference length); hypothesis length = S + I + H.
struct EditCounts {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int hits = 0;
  int ref_len = 0;

  int errors() const { return substitutions + deletions + insertions; }
  int hyp_len() const { return substitutions + insertions + hits; }
  bool operator==(const EditCounts&) const = default;
};

enum class EditKind { hit, substitution, insertion, deletion };

// ref_pos is -1 for insertions, hyp_pos is -1 for deletions.
struct EditOp {
  EditKind kind;
  int ref_pos;
  int hyp_pos;

  bool operator==(const EditOp&) const = default;
};

// Operations in reference order. On equal cost the backtrace prefers the
// diagonal (hit/substitution), then insertion, then deletion.
template <typename T>
std::vector<EditOp> edit_alignment(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<int> dist((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> int& { return dist[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  }

  std::vector<EditOp> ops;
  ops.reserve(n + m);
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        ops.push_back({same ? EditKind::hit : EditKind::substitution, static_cast<int>(i - 1),
                       static_cast<int>(j - 1)});
        --i;
        --j;
        continue;
      }
    }
    if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ops.push_back({EditKind::insertion, -1, static_cast<int>(j - 1)});
      --j;
    } else {
      ops.push_back({EditKind::deletion, static_cast<int>(i - 1), -1});
      --i;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

template <typename T>
EditCounts edit_counts(std::span<const T> ref, std::span<const T> hyp) {
  EditCounts counts;
  counts.ref_len = static_cast<int>(ref.size());
  for (const auto& op : edit_alignment(ref, hyp)) {
    switch (op.kind) {
      case EditKind::hit: ++counts.hits; break;
      case EditKind::substitution: ++counts.substitutions; break;
      case EditKind::insertion: ++counts.insertions; break;
      case EditKind::deletion: ++counts.deletions; break;
    }
  }
  return counts;
}

template <typename T>
EditCounts edit_counts(const std::vector<T>& ref, const std::vector<T>& hyp) {
  return edit_counts(std::span<const T>(ref), std::span<const T>(hyp));
}

// Plain Levenshtein distance, two-row version.
template <typename T>
int levenshtein(std::span<const T> a, std::span<const T> b) {
  std::vector<int> prev(b.size() + 1);
  std::vector<int> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1), prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace asrimpact::metrics
