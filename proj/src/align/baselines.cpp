#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "asrimpact/align/align.hpp"
#include "asrimpact/metrics/edit.hpp"
#include "asrimpact/textnorm/normalize.hpp"

namespace asrimpact::align {

namespace {

const Utterance* find_utterance(const std::vector<Utterance>& side, int index) {
  // Indices are normally positions; fall back to a search otherwise.
  if (index >= 0 && static_cast<std::size_t>(index) < side.size() && side[static_cast<std::size_t>(index)].index == index) {
    return &side[static_cast<std::size_t>(index)];
  }
  for (const auto& u : side) {
    if (u.index == index) return &u;
  }
  return nullptr;
}

double midpoint(const Utterance& u) { return (*u.start_time + *u.end_time) / 2.0; }

void require_timestamps(const std::vector<const Utterance*>& utts, const char* side) {
  for (const Utterance* u : utts) {
    if (!u->start_time || !u->end_time) {
      throw std::invalid_argument(std::string(side) + " utterance " + std::to_string(u->index) +
                                  " has no timestamps");
    }
  }
}

}  // namespace

double lexical_similarity(std::string_view a, std::string_view b) {
  const auto cfg = textnorm::NormalizationConfig::standard();
  const auto x = textnorm::utf8_decode(textnorm::normalize(a, cfg));
  const auto y = textnorm::utf8_decode(textnorm::normalize(b, cfg));
  if (x.empty() && y.empty()) return 1.0;
  const std::size_t longest = std::max(x.size(), y.size());
  const int dist = metrics::levenshtein(std::span<const char32_t>(x.data(), x.size()),
                                        std::span<const char32_t>(y.data(), y.size()));
  return 1.0 - static_cast<double>(dist) / static_cast<double>(longest);
}

std::string joined_text(const std::vector<Utterance>& side, const std::vector<int>& indices) {
  std::string out;
  for (int idx : indices) {
    const Utterance* u = find_utterance(side, idx);
    if (u == nullptr) continue;
    if (!out.empty()) out += ' ';
    out += u->text;
  }
  return out;
}

void finalize_entry(AlignmentEntry& entry, const Conversation& conv) {
  entry.confidence.reset();
  entry.start_time.reset();
  entry.end_time.reset();
  entry.multi_fragment = entry.asr_indices.size() > 1;
  if (entry.asr_indices.empty()) {
    entry.match_type = MatchType::missing;
    entry.similarity = 0.0;
    return;
  }
  const std::string gold = joined_text(conv.gold, entry.gold_indices);
  const std::string asr = joined_text(conv.hypothesis, entry.asr_indices);
  entry.similarity = lexical_similarity(gold, asr);
  const auto cfg = textnorm::NormalizationConfig::standard();
  entry.match_type = textnorm::normalize(gold, cfg) == textnorm::normalize(asr, cfg) ? MatchType::exact
                                                                                     : MatchType::fuzzy;
  double conf_sum = 0.0;
  int conf_n = 0;
  for (int idx : entry.asr_indices) {
    const Utterance* u = find_utterance(conv.hypothesis, idx);
    if (u == nullptr) continue;
    if (u->confidence) {
      conf_sum += *u->confidence;
      ++conf_n;
    }
    if (u->start_time) entry.start_time = entry.start_time ? std::min(*entry.start_time, *u->start_time) : *u->start_time;
    if (u->end_time) entry.end_time = entry.end_time ? std::max(*entry.end_time, *u->end_time) : *u->end_time;
  }
  if (conf_n > 0) entry.confidence = conf_sum / conf_n;
}

void sort_entries(Alignment& alignment) {
  auto key = [](const AlignmentEntry& e) {
    constexpr int kLast = std::numeric_limits<int>::max();
    return std::make_pair(e.gold_indices.empty() ? kLast : e.gold_indices.front(),
                          e.asr_indices.empty() ? kLast : e.asr_indices.front());
  };
  std::stable_sort(alignment.entries.begin(), alignment.entries.end(),
                   [&](const AlignmentEntry& a, const AlignmentEntry& b) { return key(a) < key(b); });
}

Alignment align_timestamp_proximity(const Conversation& conv) {
  const auto gold = alignable_gold(conv);
  const auto asr = alignable_hypothesis(conv);
  require_timestamps(gold, "gold");
  require_timestamps(asr, "hypothesis");

  Alignment out;
  out.conversation_id = conv.id;
  std::set<int> taken;
  for (const Utterance* g : gold) {
    AlignmentEntry e;
    e.gold_indices = {g->index};
    const Utterance* best = nullptr;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const Utterance* a : asr) {
      const double d = std::abs(midpoint(*g) - midpoint(*a));
      if (d < best_dist) {
        best_dist = d;
        best = a;
      }
    }
    if (best != nullptr && taken.insert(best->index).second) e.asr_indices = {best->index};
    finalize_entry(e, conv);
    out.entries.push_back(std::move(e));
  }
  return out;
}

EditDistanceAlignment align_edit_distance(const Conversation& conv, double gap_cost) {
  const auto gold = alignable_gold(conv);
  const auto asr = alignable_hypothesis(conv);
  const std::size_t n = gold.size();
  const std::size_t m = asr.size();

  std::vector<double> sub(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) sub[i * m + j] = 1.0 - lexical_similarity(gold[i]->text, asr[j]->text);
  }
  std::vector<double> dp((n + 1) * (m + 1), 0.0);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 1; i <= n; ++i) at(i, 0) = at(i - 1, 0) + gap_cost;
  for (std::size_t j = 1; j <= m; ++j) at(0, j) = at(0, j - 1) + gap_cost;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      at(i, j) = std::min({at(i - 1, j - 1) + sub[(i - 1) * m + (j - 1)], at(i - 1, j) + gap_cost,
                           at(i, j - 1) + gap_cost});
    }
  }

  EditDistanceAlignment result;
  result.total_cost = at(n, m);
  result.alignment.conversation_id = conv.id;
  std::vector<AlignmentEntry> reversed;
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && at(i, j) == at(i - 1, j) + gap_cost) {
      AlignmentEntry e;
      e.gold_indices = {gold[i - 1]->index};
      reversed.push_back(std::move(e));
      --i;
    } else if (j > 0 && at(i, j) == at(i, j - 1) + gap_cost) {
      --j;  // ASR segment left unmatched
    } else {
      AlignmentEntry e;
      e.gold_indices = {gold[i - 1]->index};
      e.asr_indices = {asr[j - 1]->index};
      reversed.push_back(std::move(e));
      --i;
      --j;
    }
  }
  for (auto it = reversed.rbegin(); it != reversed.rend(); ++it) {
    finalize_entry(*it, conv);
    result.alignment.entries.push_back(std::move(*it));
  }
  return result;
}

}  // namespace asrimpact::align
