#pragma once

// Fixture builders shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "asrimpact/align/align.hpp"
#include "asrimpact/core/random.hpp"
#include "asrimpact/core/serialize.hpp"

namespace asrimpact::testing {

// Patient-only conversation; ASR utterances get confidence 0.9.
inline Conversation patient_conversation(const std::string& id, const std::vector<std::string>& gold,
                                         const std::vector<std::string>& asr) {
  Conversation c;
  c.id = id;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    c.gold.push_back({static_cast<int>(i), Speaker::patient, gold[i], std::nullopt, std::nullopt, std::nullopt});
  }
  for (std::size_t i = 0; i < asr.size(); ++i) {
    c.hypothesis.push_back({static_cast<int>(i), Speaker::patient, asr[i], std::nullopt, std::nullopt, 0.9});
  }
  return c;
}

inline AlignmentEntry entry(const Conversation& conv, std::vector<int> gold, std::vector<int> asr) {
  AlignmentEntry e;
  e.gold_indices = std::move(gold);
  e.asr_indices = std::move(asr);
  align::finalize_entry(e, conv);
  return e;
}

// The aligner reply a faithful model would give for `truth`.
inline std::string faithful_response(const Alignment& truth) {
  Json items = Json::array();
  for (const auto& e : truth.entries) {
    items.push_back(Json{{"gold", e.gold_indices},
                         {"asr", e.asr_indices},
                         {"match_type", to_string(e.match_type)},
                         {"similarity", e.similarity}});
  }
  return Json{{"alignments", items}}.dump();
}

// Entries compared on the index sets only.
inline std::vector<std::pair<std::vector<int>, std::vector<int>>> structure(const Alignment& a) {
  std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
  for (const auto& e : a.entries) out.emplace_back(e.gold_indices, e.asr_indices);
  return out;
}

enum class Perturbation { duplicate, miss, split };

struct PlannedChange {
  Perturbation kind;
  int gold_position;  // position among the patient gold utterances
  double similarity = 0.0;  // misses only
};

struct PerturbationCase {
  Conversation conversation;
  Alignment raw;
  std::vector<PlannedChange> changes;
  // Similarity under test: `similarity` of a planned miss for its own pair, lexical otherwise.
  align::RefineOptions options;
};

// A randomized identity alignment with up to three perturbations placed at
// least three patient turns apart. Case 0 and 1 pin a miss at 0.65 and 0.6499.
inline PerturbationCase perturbation_case(std::uint64_t seed, int case_number) {
  static const std::vector<std::string> vocab = {
      "pain",  "chest", "left", "arm",   "tablets", "morning", "night", "bleeding", "cough", "fever",
      "week",  "sleep", "eat",  "walk",  "dizzy",   "sharp",   "dull",  "mother",   "heart", "stairs",
      "water", "blood", "skin", "tired", "nausea",  "back",    "knee",  "doctor",   "smoke", "drink"};
  SplitMix64 rng(substream_seed(seed, static_cast<std::uint64_t>(case_number)));
  const int n = 7 + static_cast<int>(rng.below(6));

  std::vector<std::string> texts;
  for (int k = 0; k < n; ++k) {
    std::string t = "turn" + std::to_string(k);
    const int words = 3 + static_cast<int>(rng.below(4));
    for (int w = 0; w < words; ++w) t += " " + vocab[rng.below(vocab.size())];
    texts.push_back(std::move(t));
  }

  PerturbationCase pc;
  const int count = 1 + static_cast<int>(rng.below(3));
  std::vector<int> slots;
  for (int k = 0; k + 1 < n; k += 3) slots.push_back(k);
  shuffle(slots, rng);
  slots.resize(std::min<std::size_t>(slots.size(), static_cast<std::size_t>(count)));
  std::sort(slots.begin(), slots.end());
  for (std::size_t s = 0; s < slots.size(); ++s) {
    PlannedChange c;
    c.kind = static_cast<Perturbation>(rng.below(3));
    c.gold_position = slots[s];
    if (case_number < 2 && s == 0) c.kind = Perturbation::miss;
    if (c.kind == Perturbation::miss) {
      if (case_number == 0 && s == 0) {
        c.similarity = 0.65;
      } else if (case_number == 1 && s == 0) {
        c.similarity = 0.6499;
      } else {
        const double u = rng.unit();
        c.similarity = u < 0.2 ? 0.65 : u < 0.4 ? 0.6499 : 0.55 + 0.2 * rng.unit();
      }
    }
    pc.changes.push_back(c);
  }

  // Doctor turns are interleaved at random on both sides so indices and
  // patient positions differ.
  Conversation& conv = pc.conversation;
  conv.id = "perturb-" + std::to_string(case_number);
  std::vector<std::vector<int>> asr_of(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    if (rng.below(2) == 0) {
      const std::string doctor = "doctor question " + std::to_string(k);
      conv.gold.push_back({static_cast<int>(conv.gold.size()), Speaker::doctor, doctor, std::nullopt, std::nullopt,
                           std::nullopt});
      conv.hypothesis.push_back({static_cast<int>(conv.hypothesis.size()), Speaker::doctor, doctor, std::nullopt,
                                 std::nullopt, 0.8});
    }
    const double start = 2.0 * k;
    conv.gold.push_back({static_cast<int>(conv.gold.size()), Speaker::patient, texts[static_cast<std::size_t>(k)],
                         start, start + 1.5, std::nullopt});
    const bool split = std::any_of(pc.changes.begin(), pc.changes.end(), [&](const PlannedChange& c) {
      return c.kind == Perturbation::split && c.gold_position == k;
    });
    if (split) {
      const std::string& t = texts[static_cast<std::size_t>(k)];
      const auto cut = t.find(' ');
      const double c1 = 0.5 + 0.01 * static_cast<double>(rng.below(50));
      const double c2 = 0.5 + 0.01 * static_cast<double>(rng.below(50));
      asr_of[static_cast<std::size_t>(k)].push_back(static_cast<int>(conv.hypothesis.size()));
      conv.hypothesis.push_back(
          {static_cast<int>(conv.hypothesis.size()), Speaker::patient, t.substr(0, cut), start, start + 0.6, c1});
      asr_of[static_cast<std::size_t>(k)].push_back(static_cast<int>(conv.hypothesis.size()));
      conv.hypothesis.push_back({static_cast<int>(conv.hypothesis.size()), Speaker::patient, t.substr(cut + 1),
                                 start + 0.7, start + 1.6, c2});
    } else {
      asr_of[static_cast<std::size_t>(k)].push_back(static_cast<int>(conv.hypothesis.size()));
      conv.hypothesis.push_back({static_cast<int>(conv.hypothesis.size()), Speaker::patient,
                                 texts[static_cast<std::size_t>(k)], start + 0.1, start + 1.6,
                                 0.5 + 0.01 * static_cast<double>(rng.below(50))});
    }
  }

  const auto gold = alignable_gold(conv);
  pc.raw.conversation_id = conv.id;
  for (int k = 0; k < n; ++k) {
    const int g = gold[static_cast<std::size_t>(k)]->index;
    const auto& asr = asr_of[static_cast<std::size_t>(k)];
    auto change = std::find_if(pc.changes.begin(), pc.changes.end(),
                               [&](const PlannedChange& c) { return c.gold_position == k; });
    auto dup_source = std::find_if(pc.changes.begin(), pc.changes.end(), [&](const PlannedChange& c) {
      return c.kind == Perturbation::duplicate && c.gold_position + 1 == k;
    });
    if (dup_source != pc.changes.end()) {
      pc.raw.entries.push_back(entry(conv, {g}, asr_of[static_cast<std::size_t>(k - 1)]));
    } else if (change != pc.changes.end() && change->kind == Perturbation::miss) {
      pc.raw.entries.push_back(entry(conv, {g}, {}));
    } else if (change != pc.changes.end() && change->kind == Perturbation::split) {
      pc.raw.entries.push_back(entry(conv, {g}, {asr[0]}));
      pc.raw.entries.push_back(entry(conv, {g}, {asr[1]}));
    } else {
      pc.raw.entries.push_back(entry(conv, {g}, asr));
    }
  }

  std::vector<std::pair<std::pair<std::string, std::string>, double>> pinned;
  for (const auto& c : pc.changes) {
    if (c.kind != Perturbation::miss) continue;
    const int g = gold[static_cast<std::size_t>(c.gold_position)]->index;
    const int a = asr_of[static_cast<std::size_t>(c.gold_position)].front();
    pinned.push_back({{conv.gold[static_cast<std::size_t>(g)].text, conv.hypothesis[static_cast<std::size_t>(a)].text},
                      c.similarity});
  }
  pc.options.similarity = [pinned](const std::string& g, const std::string& h) {
    for (const auto& [pair, s] : pinned) {
      if (pair.first == g) return pair.second == h ? s : 0.0;
    }
    return align::lexical_similarity(g, h);
  };
  return pc;
}

// Checks the planned outcome of every change; returns a description of the
// first mismatch or an empty string.
inline std::string check_planned_outcome(const PerturbationCase& pc, const Alignment& refined) {
  const auto gold = alignable_gold(pc.conversation);
  auto find_entry = [&](int g) -> const AlignmentEntry* {
    for (const auto& e : refined.entries) {
      if (std::find(e.gold_indices.begin(), e.gold_indices.end(), g) != e.gold_indices.end()) return &e;
    }
    return nullptr;
  };
  for (const auto& c : pc.changes) {
    const int g = gold[static_cast<std::size_t>(c.gold_position)]->index;
    const AlignmentEntry* e = find_entry(g);
    if (e == nullptr) return "gold " + std::to_string(g) + " lost";
    switch (c.kind) {
      case Perturbation::duplicate: {
        const int next = gold[static_cast<std::size_t>(c.gold_position + 1)]->index;
        if (e->gold_indices != std::vector<int>{g, next} || !e->duplicate_merged || e->asr_indices.size() != 1) {
          return "duplicate at gold " + std::to_string(g) + " not merged";
        }
        break;
      }
      case Perturbation::miss: {
        const bool expect = c.similarity >= align::kMissRecoveryThreshold;
        const bool recovered = !e->asr_indices.empty();
        if (expect != recovered) {
          return "miss at gold " + std::to_string(g) + " with similarity " + std::to_string(c.similarity) +
                 (recovered ? " recovered" : " not recovered");
        }
        if (recovered && (e->match_type != MatchType::fuzzy || e->similarity != c.similarity)) {
          return "recovered miss at gold " + std::to_string(g) + " has wrong attributes";
        }
        break;
      }
      case Perturbation::split: {
        if (e->asr_indices.size() != 2 || !e->multi_fragment) {
          return "fragments of gold " + std::to_string(g) + " not joined";
        }
        const auto& a = pc.conversation.hypothesis[static_cast<std::size_t>(e->asr_indices[0])];
        const auto& b = pc.conversation.hypothesis[static_cast<std::size_t>(e->asr_indices[1])];
        if (!e->confidence || *e->confidence != (*a.confidence + *b.confidence) / 2.0 ||
            e->start_time != a.start_time || e->end_time != b.end_time) {
          return "joined fragments of gold " + std::to_string(g) + " have wrong span attributes";
        }
        break;
      }
    }
  }
  return {};
}

}  // namespace asrimpact::testing
