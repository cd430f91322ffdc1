#include "asrimpact/core/validate.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace asrimpact {

namespace {

void check_side(const std::vector<Utterance>& side, const std::string& name,
                std::vector<Violation>& out) {
  if (side.empty()) {
    out.push_back({name, -1, "nonempty", name + " transcript has no utterances"});
    return;
  }
  std::set<int> distinct;
  for (std::size_t i = 0; i < side.size(); ++i) {
    const Utterance& u = side[i];
    distinct.insert(u.index);
    if (i > 0) {
      const int prev = side[i - 1].index;
      if (u.index == prev) {
        out.push_back({name, u.index, "unique_index",
                       name + " index " + std::to_string(u.index) + " appears more than once"});
      } else if (u.index < prev) {
        out.push_back({name, u.index, "increasing_index",
                       name + " index " + std::to_string(u.index) + " follows larger index " +
                           std::to_string(prev)});
      }
    }
    if (u.start_time && *u.start_time < 0.0) {
      out.push_back({name, u.index, "start_time",
                     name + " utterance " + std::to_string(u.index) + " has negative start_time"});
    }
    if (u.start_time && u.end_time && *u.end_time < *u.start_time) {
      out.push_back({name, u.index, "timestamps",
                     name + " utterance " + std::to_string(u.index) + " has end_time before start_time"});
    }
    if (u.confidence && (*u.confidence < 0.0 || *u.confidence > 1.0)) {
      out.push_back({name, u.index, "confidence",
                     name + " utterance " + std::to_string(u.index) + " has confidence outside [0,1]"});
    }
  }
  if (*distinct.begin() != 0 || *distinct.rbegin() != static_cast<int>(distinct.size()) - 1) {
    out.push_back({name, -1, "contiguous_index", name + " indices are not contiguous from 0"});
  }
}

// Maps an utterance index to its position among the alignable utterances.
std::map<int, int> positions(const std::vector<const Utterance*>& utts) {
  std::map<int, int> pos;
  for (std::size_t i = 0; i < utts.size(); ++i) pos.emplace(utts[i]->index, static_cast<int>(i));
  return pos;
}

bool strictly_increasing(const std::vector<int>& v) {
  return std::adjacent_find(v.begin(), v.end(), [](int a, int b) { return a >= b; }) == v.end();
}

}  // namespace

std::vector<Violation> validate_conversation(const Conversation& conv) {
  std::vector<Violation> out;
  if (conv.id.empty()) out.push_back({"conversation", -1, "id", "conversation id is empty"});
  check_side(conv.gold, "gold", out);
  check_side(conv.hypothesis, "hypothesis", out);
  return out;
}

std::vector<const Utterance*> alignable_gold(const Conversation& conv) {
  std::vector<const Utterance*> out;
  for (const auto& u : conv.gold) {
    if (u.speaker == Speaker::patient) out.push_back(&u);
  }
  return out;
}

std::vector<const Utterance*> alignable_hypothesis(const Conversation& conv) {
  std::vector<const Utterance*> out;
  for (const auto& u : conv.hypothesis) {
    if (u.speaker == Speaker::patient) out.push_back(&u);
  }
  return out;
}

std::vector<Violation> validate_alignment(const Alignment& alignment, const Conversation& conv) {
  if (alignment.conversation_id != conv.id) {
    throw PairingError("alignment for conversation '" + alignment.conversation_id +
                       "' checked against conversation '" + conv.id + "'");
  }
  std::vector<Violation> out;
  const auto gold_pos = positions(alignable_gold(conv));
  const auto asr_pos = positions(alignable_hypothesis(conv));

  auto consecutive = [](const std::vector<int>& idx, const std::map<int, int>& pos) {
    for (std::size_t i = 1; i < idx.size(); ++i) {
      auto a = pos.find(idx[i - 1]);
      auto b = pos.find(idx[i]);
      if (a == pos.end() || b == pos.end() || b->second != a->second + 1) return false;
    }
    return true;
  };

  std::map<int, int> gold_use;
  std::map<int, int> asr_use;
  for (std::size_t k = 0; k < alignment.entries.size(); ++k) {
    const auto& e = alignment.entries[k];
    const int at = static_cast<int>(k);
    const std::string where = "entry " + std::to_string(k);
    if (e.gold_indices.empty()) {
      out.push_back({"alignment", at, "gold_nonempty", where + " has no gold indices"});
    }
    if (!strictly_increasing(e.gold_indices) || !strictly_increasing(e.asr_indices)) {
      out.push_back({"alignment", at, "sorted_indices", where + " has unsorted or repeated indices"});
    }
    for (int g : e.gold_indices) {
      ++gold_use[g];
      if (!gold_pos.contains(g)) {
        out.push_back({"alignment", at, "gold_index_unknown",
                       where + " references gold index " + std::to_string(g) + " not submitted for alignment"});
      }
    }
    for (int a : e.asr_indices) {
      ++asr_use[a];
      if (!asr_pos.contains(a)) {
        out.push_back({"alignment", at, "asr_index_unknown",
                       where + " references unknown ASR index " + std::to_string(a)});
      }
    }
    if ((e.match_type == MatchType::missing) != e.asr_indices.empty()) {
      out.push_back({"alignment", at, "match_type",
                     where + " match_type is missing iff it has no ASR indices"});
    }
    if (e.multi_fragment != (e.asr_indices.size() > 1)) {
      out.push_back({"alignment", at, "multi_fragment",
                     where + " multi_fragment must be set iff it spans more than one ASR index"});
    }
    if (!(e.similarity >= 0.0 && e.similarity <= 1.0)) {
      out.push_back({"alignment", at, "similarity_range", where + " similarity outside [0,1]"});
    }
    if (!consecutive(e.gold_indices, gold_pos)) {
      out.push_back({"alignment", at, "gold_consecutive", where + " joins non-consecutive gold utterances"});
    }
    if (!consecutive(e.asr_indices, asr_pos)) {
      out.push_back({"alignment", at, "asr_consecutive", where + " joins non-consecutive ASR segments"});
    }
    if (e.gold_indices.size() > 1 && e.asr_indices.size() > 1 && !e.duplicate_merged) {
      out.push_back({"alignment", at, "many_to_many",
                     where + " maps several gold utterances to several ASR segments"});
    }
  }

  for (const auto& [asr, count] : asr_use) {
    if (count > 1) {
      out.push_back({"alignment", asr, "match_once",
                     "ASR index " + std::to_string(asr) + " is matched by " + std::to_string(count) + " entries"});
    }
  }
  for (const auto& [gold, count] : gold_use) {
    if (count > 1) {
      out.push_back({"alignment", gold, "gold_disjoint",
                     "gold index " + std::to_string(gold) + " appears in " + std::to_string(count) + " entries"});
    }
  }
  for (const auto& [gold, pos] : gold_pos) {
    (void)pos;
    if (!gold_use.contains(gold)) {
      out.push_back({"alignment", gold, "gold_coverage",
                     "gold index " + std::to_string(gold) + " is not covered by any entry"});
    }
  }

  // Non-crossing: sorted by first gold index, first ASR indices must increase.
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < alignment.entries.size(); ++k) {
    const auto& e = alignment.entries[k];
    if (!e.gold_indices.empty() && !e.asr_indices.empty()) order.push_back(k);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return alignment.entries[a].gold_indices.front() < alignment.entries[b].gold_indices.front();
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto& prev = alignment.entries[order[i - 1]];
    const auto& cur = alignment.entries[order[i]];
    if (cur.asr_indices.front() < prev.asr_indices.front()) {
      out.push_back({"alignment", static_cast<int>(order[i]), "non_crossing",
                     "entry " + std::to_string(order[i]) + " (gold " + std::to_string(cur.gold_indices.front()) +
                         ") crosses entry " + std::to_string(order[i - 1]) + " (gold " +
                         std::to_string(prev.gold_indices.front()) + ")"});
    }
  }
  return out;
}

}  // namespace asrimpact
