#include <map>
#include <set>

#include "asrimpact/align/align.hpp"

namespace asrimpact::align {

namespace {

void check_pair(const Alignment& pred, const Alignment& truth) {
  if (pred.conversation_id != truth.conversation_id) {
    throw PairingError("predicted alignment for '" + pred.conversation_id + "' compared with reference for '" +
                       truth.conversation_id + "'");
  }
}

std::set<int> matched_gold(const Alignment& a) {
  std::set<int> out;
  for (const auto& e : a.entries) {
    if (!e.asr_indices.empty()) out.insert(e.gold_indices.begin(), e.gold_indices.end());
  }
  return out;
}

std::set<int> matched_asr(const Alignment& a) {
  std::set<int> out;
  for (const auto& e : a.entries) out.insert(e.asr_indices.begin(), e.asr_indices.end());
  return out;
}

std::map<int, std::vector<int>> asr_sets(const Alignment& a) {
  std::map<int, std::vector<int>> out;
  for (const auto& e : a.entries) {
    for (int g : e.gold_indices) out[g] = e.asr_indices;
  }
  return out;
}

}  // namespace

ClassificationAccuracy eval_classification_accuracy(const Alignment& pred, const GoldAlignmentStandard& truth,
                                                    const Conversation& conv) {
  check_pair(pred, truth);
  if (truth.conversation_id != conv.id) {
    throw PairingError("reference alignment for '" + truth.conversation_id + "' paired with conversation '" +
                       conv.id + "'");
  }
  ClassificationAccuracy r;
  const auto pred_gold = matched_gold(pred);
  const auto true_gold = matched_gold(truth);
  int correct = 0;
  for (const Utterance* g : alignable_gold(conv)) {
    const bool p = pred_gold.contains(g->index);
    const bool t = true_gold.contains(g->index);
    ++r.gold_total;
    if (p == t) {
      ++correct;
    } else if (t) {
      ++r.fp;
    } else {
      ++r.fn;
    }
  }
  r.gold_side = r.gold_total == 0 ? 1.0 : static_cast<double>(correct) / r.gold_total;

  const auto pred_asr = matched_asr(pred);
  const auto true_asr = matched_asr(truth);
  correct = 0;
  for (const Utterance* a : alignable_hypothesis(conv)) {
    const bool p = pred_asr.contains(a->index);
    const bool t = true_asr.contains(a->index);
    ++r.asr_total;
    if (p == t) {
      ++correct;
    } else if (t) {
      ++r.asr_fp;
    } else {
      ++r.asr_fn;
    }
  }
  r.asr_side = r.asr_total == 0 ? 1.0 : static_cast<double>(correct) / r.asr_total;
  return r;
}

double eval_structural_accuracy(const Alignment& pred, const GoldAlignmentStandard& truth) {
  check_pair(pred, truth);
  const auto predicted = asr_sets(pred);
  const auto expected = asr_sets(truth);
  if (expected.empty()) return 1.0;
  int same = 0;
  for (const auto& [gold, indices] : expected) {
    auto it = predicted.find(gold);
    const std::vector<int> got = it == predicted.end() ? std::vector<int>{} : it->second;
    if (got == indices) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(expected.size());
}

}  // namespace asrimpact::align
