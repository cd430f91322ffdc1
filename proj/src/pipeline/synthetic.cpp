#include "asrimpact/pipeline/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <sstream>

#include "asrimpact/align/align.hpp"
#include "asrimpact/core/random.hpp"

namespace asrimpact::pipeline {

namespace {

using Tokens = std::vector<std::string>;

constexpr std::array kPatientTemplates = {
    "there is some {adj} bleeding from the {site}",
    "i have been taking {num} milligrams of {drug} every day",
    "the pain started about {num} days ago",
    "i don't have any {symptom} at the moment",
    "my {relative} had {condition} when she was younger",
    "it gets really bad when i {activity}",
    "i have had the {symptom} for {num} weeks now",
    "yes it is just on the {side} side",
    "i do smoke about {num} cigarettes a day",
    "no i have not noticed any {symptom} recently",
    "the {drug} helps a bit but the {symptom} comes back",
    "it is worse in the {time} and better at night",
};

constexpr std::array kDoctorTemplates = {
    "how long has this been going on",
    "are you taking anything for it at the moment",
    "have you noticed any bleeding",
    "does anyone in your family have a similar problem",
    "what makes it worse",
    "how much do you take and how often",
    "do you smoke or drink alcohol",
    "any other symptoms you have noticed",
    "can you tell me where exactly it hurts",
    "is it there all the time or does it come and go",
};

const std::map<std::string, std::vector<std::string>>& slot_pools() {
  static const std::map<std::string, std::vector<std::string>> pools = {
      {"adj", {"extra", "fresh", "dark", "light"}},
      {"site", {"nose", "gums", "back passage", "wound"}},
      {"num", {"two", "three", "five", "ten", "twenty", "forty"}},
      {"drug", {"ibuprofen", "paracetamol", "metformin", "aspirin", "ramipril"}},
      {"symptom", {"chest pain", "headaches", "dizziness", "nausea", "shortness of breath"}},
      {"relative", {"mother", "sister", "aunt", "grandmother"}},
      {"condition", {"diabetes", "breast cancer", "asthma", "high blood pressure"}},
      {"activity", {"climb the stairs", "lie down", "eat", "walk the dog"}},
      {"side", {"left", "right"}},
      {"time", {"morning", "evening"}},
  };
  return pools;
}

const std::map<std::string, std::string>& negations() {
  static const std::map<std::string, std::string> m = {
      {"is", "isn't"}, {"have", "haven't"}, {"do", "don't"}, {"don't", "do"}, {"had", "hadn't"}, {"not", "never"},
  };
  return m;
}

Tokens split_words(const std::string& s) {
  Tokens out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string join(const Tokens& t) {
  std::string out;
  for (const auto& w : t) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

template <typename C>
const auto& pick(const C& c, SplitMix64& rng) {
  return c[static_cast<std::size_t>(rng.below(c.size()))];
}

std::string fill_template(const std::string& tpl, SplitMix64& rng) {
  std::string out;
  for (std::size_t i = 0; i < tpl.size();) {
    if (tpl[i] == '{') {
      const auto close = tpl.find('}', i);
      out += pick(slot_pools().at(tpl.substr(i + 1, close - i - 1)), rng);
      i = close + 1;
    } else {
      out += tpl[i++];
    }
  }
  return out;
}

bool is_number_word(const std::string& w) {
  const auto& nums = slot_pools().at("num");
  return std::find(nums.begin(), nums.end(), w) != nums.end();
}

bool is_drug(const std::string& w) {
  const auto& drugs = slot_pools().at("drug");
  return std::find(drugs.begin(), drugs.end(), w) != drugs.end();
}

Tokens apply_edit(const Tokens& gold, EditKind kind, SplitMix64& rng) {
  Tokens t = gold;
  switch (kind) {
    case EditKind::verbatim:
      return t;
    case EditKind::filler: {
      static const std::array fillers = {"um", "uh", "erm"};
      t.insert(t.begin() + static_cast<std::ptrdiff_t>(rng.below(t.size() + 1)), pick(fillers, rng));
      return t;
    }
    case EditKind::cosmetic: {
      for (auto& w : t) {
        if (w == "the") {
          w = "a";
          return t;
        }
      }
      for (auto it = t.begin(); it != t.end(); ++it) {
        if (*it == "really" || *it == "just" || *it == "about" || *it == "some") {
          t.erase(it);
          return t;
        }
      }
      t.push_back("yeah");
      return t;
    }
    case EditKind::moderate: {
      std::vector<std::size_t> candidates;
      for (std::size_t i = 1; i < t.size(); ++i) {
        if (!negations().contains(t[i]) && !is_number_word(t[i]) && !is_drug(t[i])) candidates.push_back(i);
      }
      if (candidates.empty()) {
        t.push_back("then");
      } else {
        t.erase(t.begin() + static_cast<std::ptrdiff_t>(pick(candidates, rng)));
      }
      return t;
    }
    case EditKind::critical: {
      for (auto& w : t) {
        if (auto it = negations().find(w); it != negations().end()) {
          w = it->second;
          return t;
        }
      }
      for (auto& w : t) {
        if (is_number_word(w) || is_drug(w)) {
          const auto& pool = slot_pools().at(is_drug(w) ? "drug" : "num");
          std::string replacement = w;
          while (replacement == w) replacement = pick(pool, rng);
          w = replacement;
          return t;
        }
      }
      t.insert(t.begin(), "not");
      return t;
    }
  }
  return t;
}

int label_for(EditKind kind) {
  switch (kind) {
    case EditKind::verbatim:
    case EditKind::filler:
    case EditKind::cosmetic:
      return 0;
    case EditKind::moderate:
      return 1;
    case EditKind::critical:
      return 2;
  }
  return 0;
}

double round_ms(double seconds) { return static_cast<double>(static_cast<long long>(seconds * 1000.0 + 0.5)) / 1000.0; }

EditKind draw_edit(SplitMix64& rng) {
  const double u = rng.unit();
  if (u < 0.15) return EditKind::verbatim;
  if (u < 0.30) return EditKind::filler;
  if (u < 0.45) return EditKind::cosmetic;
  if (u < 0.70) return EditKind::moderate;
  return EditKind::critical;
}

StructureOp draw_op(SplitMix64& rng, bool can_merge) {
  const double u = rng.unit();
  if (u < 0.62) return StructureOp::keep;
  if (u < 0.77) return StructureOp::split;
  if (u < 0.89) return can_merge ? StructureOp::merge : StructureOp::keep;
  return StructureOp::miss;
}

}  // namespace

std::string_view to_string(StructureOp op) {
  switch (op) {
    case StructureOp::keep:
      return "keep";
    case StructureOp::split:
      return "split";
    case StructureOp::merge:
      return "merge";
    case StructureOp::miss:
      return "miss";
  }
  return "keep";
}

std::string_view to_string(EditKind kind) {
  switch (kind) {
    case EditKind::verbatim:
      return "verbatim";
    case EditKind::filler:
      return "filler";
    case EditKind::cosmetic:
      return "cosmetic";
    case EditKind::moderate:
      return "moderate";
    case EditKind::critical:
      return "critical";
  }
  return "verbatim";
}

std::string example_id(const std::string& conversation_id, int first_gold_index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", first_gold_index);
  return conversation_id + "/" + buf;
}

SyntheticConversation synthetic_conversation(std::uint64_t seed, const std::string& id, int patient_turns) {
  if (patient_turns < 1) throw std::invalid_argument("synthetic conversation needs at least one patient turn");
  SplitMix64 rng(seed);
  SyntheticConversation out;
  Conversation& conv = out.conversation;
  conv.id = id;
  conv.source = Source::other;
  conv.asr_provider = "synthetic";

  // Gold: doctor and patient turns alternate, starting with the doctor.
  std::vector<Tokens> patient_text;
  double clock = 0.0;
  for (int k = 0; k < patient_turns; ++k) {
    for (const bool patient : {false, true}) {
      Utterance u;
      u.index = static_cast<int>(conv.gold.size());
      u.speaker = patient ? Speaker::patient : Speaker::doctor;
      const std::string text = patient ? fill_template(pick(kPatientTemplates, rng), rng)
                                       : std::string(pick(kDoctorTemplates, rng));
      u.text = text;
      const auto words = split_words(text);
      u.start_time = round_ms(clock);
      clock += 0.35 * static_cast<double>(words.size()) + 0.4;
      u.end_time = round_ms(clock);
      clock += 0.3 + 0.4 * rng.unit();
      if (patient) patient_text.push_back(words);
      conv.gold.push_back(std::move(u));
    }
  }

  auto add_asr = [&](Speaker speaker, const std::string& text, double start, double end) {
    Utterance u;
    u.index = static_cast<int>(conv.hypothesis.size());
    u.speaker = speaker;
    u.text = text;
    u.start_time = round_ms(std::max(0.0, start));
    u.end_time = round_ms(std::max(start, end));
    u.confidence = round_ms(0.6 + 0.39 * rng.unit());
    conv.hypothesis.push_back(std::move(u));
    return conv.hypothesis.back().index;
  };

  out.truth.conversation_id = id;
  out.truth.standard = true;
  for (int k = 0; k < patient_turns; ++k) {
    const Utterance& doctor = conv.gold[static_cast<std::size_t>(2 * k)];
    add_asr(Speaker::doctor, doctor.text, *doctor.start_time, *doctor.end_time);

    const Utterance& gold = conv.gold[static_cast<std::size_t>(2 * k + 1)];
    SyntheticTurn turn;
    turn.gold_indices = {gold.index};
    turn.op = draw_op(rng, k + 1 < patient_turns);
    if (turn.op == StructureOp::split && patient_text[static_cast<std::size_t>(k)].size() < 4) {
      turn.op = StructureOp::keep;
    }
    turn.edit = draw_edit(rng);
    const double jitter = 0.2 * (rng.unit() - 0.5);

    AlignmentEntry entry;
    entry.gold_indices = turn.gold_indices;
    switch (turn.op) {
      case StructureOp::keep: {
        const auto text = join(apply_edit(patient_text[static_cast<std::size_t>(k)], turn.edit, rng));
        entry.asr_indices = {add_asr(Speaker::patient, text, *gold.start_time + jitter, *gold.end_time + jitter)};
        break;
      }
      case StructureOp::split: {
        const auto words = apply_edit(patient_text[static_cast<std::size_t>(k)], turn.edit, rng);
        const std::size_t cut = words.size() / 2;
        const Tokens first(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(cut));
        const Tokens second(words.begin() + static_cast<std::ptrdiff_t>(cut), words.end());
        const double mid = (*gold.start_time + *gold.end_time) / 2.0;
        const int a = add_asr(Speaker::patient, join(first), *gold.start_time + jitter, mid - 0.05);
        const int b = add_asr(Speaker::patient, join(second), mid + 0.05, *gold.end_time + jitter);
        entry.asr_indices = {a, b};
        break;
      }
      case StructureOp::merge: {
        // The next patient turn is folded into this ASR segment; the doctor
        // turn between them is emitted afterwards.
        const Utterance& doctor_next = conv.gold[static_cast<std::size_t>(2 * k + 2)];
        const Utterance& gold_next = conv.gold[static_cast<std::size_t>(2 * k + 3)];
        Tokens words = apply_edit(patient_text[static_cast<std::size_t>(k)], turn.edit, rng);
        const auto& rest = patient_text[static_cast<std::size_t>(k + 1)];
        words.insert(words.end(), rest.begin(), rest.end());
        entry.gold_indices = {gold.index, gold_next.index};
        turn.gold_indices = entry.gold_indices;
        entry.asr_indices = {add_asr(Speaker::patient, join(words), *gold.start_time + jitter,
                                     *gold_next.end_time + jitter)};
        add_asr(Speaker::doctor, doctor_next.text, *doctor_next.start_time, *doctor_next.end_time);
        ++k;
        break;
      }
      case StructureOp::miss:
        break;
    }
    if (turn.op != StructureOp::miss) turn.label = label_for(turn.edit);
    out.truth.entries.push_back(std::move(entry));
    out.turns.push_back(std::move(turn));
  }

  for (auto& e : out.truth.entries) align::finalize_entry(e, conv);
  return out;
}

std::vector<SyntheticConversation> synthetic_suite(std::uint64_t seed, int count) {
  std::vector<SyntheticConversation> out;
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "synth-%03d", i);
    const std::uint64_t s = substream_seed(seed, static_cast<std::uint64_t>(i));
    const int turns = 6 + static_cast<int>(s % 5);
    out.push_back(synthetic_conversation(s, id, turns));
  }
  return out;
}

std::vector<AnnotationRecord> synthetic_annotations(const std::vector<SyntheticConversation>& suite,
                                                    std::uint64_t seed, double disagreement) {
  SplitMix64 rng(substream_seed(seed, 0xA77A));
  std::vector<AnnotationRecord> out;
  std::int64_t ts = 1'700'000'000'000;
  for (const auto& sc : suite) {
    for (const auto& turn : sc.turns) {
      if (!turn.label) continue;
      const std::string id = example_id(sc.conversation.id, turn.gold_indices.front());
      const int a = *turn.label;
      int b = a;
      if (rng.unit() < disagreement) b = a == 0 ? 1 : a == 2 ? 1 : (rng.below(2) == 0 ? 0 : 2);
      for (const auto& [annotator, label] : {std::pair<std::string, int>{"annotator_a", a}, {"annotator_b", b}}) {
        AnnotationRecord r;
        r.example_id = id;
        r.annotator_id = annotator;
        r.label = label;
        if (label > 0) r.justification = std::string("synthetic ") + std::string(to_string(turn.edit)) + " error";
        r.created_at = ts++;
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

}  // namespace asrimpact::pipeline
