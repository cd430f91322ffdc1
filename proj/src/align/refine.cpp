#include <algorithm>
#include <map>
#include <set>

#include "asrimpact/align/align.hpp"

namespace asrimpact::align {

namespace {

constexpr double kThresholdSlack = 1e-9;

struct Context {
  const Conversation& conv;
  std::function<double(const std::string&, const std::string&)> similarity;
  double threshold;
  std::map<int, int> gold_pos;
  std::map<int, int> asr_pos;
  std::vector<int> asr_by_pos;
};

std::map<int, int> positions(const std::vector<const Utterance*>& utts) {
  std::map<int, int> pos;
  for (std::size_t i = 0; i < utts.size(); ++i) pos.emplace(utts[i]->index, static_cast<int>(i));
  return pos;
}

int position(const std::map<int, int>& pos, int index) {
  auto it = pos.find(index);
  return it == pos.end() ? -1 : it->second;
}

// Recomputes an entry touched by a rule, using the configured similarity.
void rebuild(AlignmentEntry& e, const Context& ctx) {
  finalize_entry(e, ctx.conv);
  if (!e.asr_indices.empty()) {
    e.similarity = std::clamp(ctx.similarity(joined_text(ctx.conv.gold, e.gold_indices),
                                             joined_text(ctx.conv.hypothesis, e.asr_indices)),
                              0.0, 1.0);
  }
}

std::vector<int> sorted_union(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool intersects(const std::vector<int>& a, const std::vector<int>& b) {
  for (int x : a) {
    if (std::find(b.begin(), b.end(), x) != b.end()) return true;
  }
  return false;
}

// Rule 1: adjacent gold entries that claim the same ASR segment(s) become one entry.
bool merge_duplicates(Alignment& a, const Context& ctx) {
  bool changed = false;
  auto& entries = a.entries;
  for (std::size_t i = 0; i + 1 < entries.size();) {
    const auto& x = entries[i];
    const auto& y = entries[i + 1];
    const bool adjacent = !x.gold_indices.empty() && !y.gold_indices.empty() &&
                          position(ctx.gold_pos, x.gold_indices.back()) + 1 ==
                              position(ctx.gold_pos, y.gold_indices.front()) &&
                          position(ctx.gold_pos, x.gold_indices.back()) >= 0;
    if (adjacent && !x.asr_indices.empty() && intersects(x.asr_indices, y.asr_indices)) {
      AlignmentEntry merged;
      merged.gold_indices = sorted_union(x.gold_indices, y.gold_indices);
      merged.asr_indices = sorted_union(x.asr_indices, y.asr_indices);
      merged.duplicate_merged = true;
      rebuild(merged, ctx);
      entries[i] = std::move(merged);
      entries.erase(entries.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      changed = true;
    } else {
      ++i;
    }
  }
  return changed;
}

// Rule 2: a missing gold entry takes the most similar unused ASR segment that
// keeps the order, if it clears the threshold.
bool recover_misses(Alignment& a, const Context& ctx) {
  bool changed = false;
  std::set<int> used;
  for (const auto& e : a.entries) used.insert(e.asr_indices.begin(), e.asr_indices.end());

  auto& entries = a.entries;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (!entries[k].asr_indices.empty() || entries[k].gold_indices.empty()) continue;
    int lo = -1;
    for (std::size_t p = k; p-- > 0;) {
      if (!entries[p].asr_indices.empty()) {
        for (int idx : entries[p].asr_indices) lo = std::max(lo, position(ctx.asr_pos, idx));
        break;
      }
    }
    int hi = static_cast<int>(ctx.asr_by_pos.size());
    for (std::size_t q = k + 1; q < entries.size(); ++q) {
      if (!entries[q].asr_indices.empty()) {
        for (int idx : entries[q].asr_indices) {
          const int pos = position(ctx.asr_pos, idx);
          if (pos >= 0) hi = std::min(hi, pos);
        }
        break;
      }
    }

    const std::string gold = joined_text(ctx.conv.gold, entries[k].gold_indices);
    int best_index = -1;
    double best = -1.0;
    for (int pos = lo + 1; pos < hi; ++pos) {
      const int idx = ctx.asr_by_pos[static_cast<std::size_t>(pos)];
      if (used.contains(idx)) continue;
      const double s = ctx.similarity(gold, joined_text(ctx.conv.hypothesis, {idx}));
      if (s > best) {
        best = s;
        best_index = idx;
      }
    }
    if (best_index >= 0 && best >= ctx.threshold - kThresholdSlack) {
      auto& e = entries[k];
      e.asr_indices = {best_index};
      finalize_entry(e, ctx.conv);
      e.match_type = MatchType::fuzzy;
      e.similarity = std::clamp(best, 0.0, 1.0);
      used.insert(best_index);
      changed = true;
    }
  }
  return changed;
}

// Rule 3: one gold entry split over consecutive ASR fragments becomes one entry.
bool join_fragments(Alignment& a, const Context& ctx) {
  bool changed = false;
  auto& entries = a.entries;
  for (std::size_t i = 0; i + 1 < entries.size();) {
    const auto& x = entries[i];
    const auto& y = entries[i + 1];
    const bool joinable = !x.gold_indices.empty() && x.gold_indices == y.gold_indices && !x.asr_indices.empty() &&
                          !y.asr_indices.empty() && position(ctx.asr_pos, x.asr_indices.back()) >= 0 &&
                          position(ctx.asr_pos, x.asr_indices.back()) + 1 ==
                              position(ctx.asr_pos, y.asr_indices.front());
    if (joinable) {
      AlignmentEntry merged = x;
      merged.asr_indices.insert(merged.asr_indices.end(), y.asr_indices.begin(), y.asr_indices.end());
      merged.duplicate_merged = x.duplicate_merged || y.duplicate_merged;
      rebuild(merged, ctx);
      entries[i] = std::move(merged);
      entries.erase(entries.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      changed = true;
    } else {
      ++i;
    }
  }
  for (auto& e : entries) {
    if (e.asr_indices.size() > 1 && !e.multi_fragment) {
      rebuild(e, ctx);
      changed = true;
    }
  }
  return changed;
}

}  // namespace

Alignment refine(const Alignment& raw, const Conversation& conv, const RefineOptions& options) {
  Context ctx{conv,
              options.similarity ? options.similarity
                                 : [](const std::string& g, const std::string& h) { return lexical_similarity(g, h); },
              options.threshold,
              positions(alignable_gold(conv)),
              positions(alignable_hypothesis(conv)),
              {}};
  for (const Utterance* u : alignable_hypothesis(conv)) ctx.asr_by_pos.push_back(u->index);

  Alignment a = raw;
  // Entries without gold carry no information in this schema.
  std::erase_if(a.entries, [](const AlignmentEntry& e) { return e.gold_indices.empty(); });
  std::set<int> covered;
  for (const auto& e : a.entries) covered.insert(e.gold_indices.begin(), e.gold_indices.end());
  for (const Utterance* g : alignable_gold(conv)) {
    if (covered.contains(g->index)) continue;
    AlignmentEntry e;
    e.gold_indices = {g->index};
    a.entries.push_back(std::move(e));
  }
  sort_entries(a);

  while (true) {
    bool changed = merge_duplicates(a, ctx);
    changed = recover_misses(a, ctx) || changed;
    changed = join_fragments(a, ctx) || changed;
    if (!changed) break;
    sort_entries(a);
  }
  return a;
}

}  // namespace asrimpact::align
