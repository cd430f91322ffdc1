#include "asrimpact/pipeline/curate.hpp"

#include <algorithm>
#include <map>

#include "asrimpact/align/align.hpp"
#include "asrimpact/core/random.hpp"
#include "asrimpact/metrics/metrics.hpp"
#include "asrimpact/pipeline/synthetic.hpp"

namespace asrimpact::pipeline {

std::vector<ContextTurn> context_window(const Conversation& conv, int first_gold, int doctor_turns) {
  std::vector<int> picked;
  int doctors = 0;
  bool patient = false;
  for (int i = first_gold - 1; i >= 0; --i) {
    const auto& u = conv.gold.at(static_cast<std::size_t>(i));
    if (u.speaker == Speaker::doctor && doctors < doctor_turns) {
      ++doctors;
      picked.push_back(i);
    } else if (u.speaker == Speaker::patient && !patient) {
      patient = true;
      picked.push_back(i);
    }
    if (doctors == doctor_turns && patient) break;
  }
  std::sort(picked.begin(), picked.end());
  std::vector<ContextTurn> out;
  for (int i : picked) {
    const auto& u = conv.gold[static_cast<std::size_t>(i)];
    out.push_back({u.speaker, u.text});
  }
  return out;
}

CurationResult curate(const std::vector<Conversation>& conversations, const std::vector<Alignment>& alignments,
                      const PipelineConfig& config) {
  std::map<std::string, const Conversation*> by_id;
  for (const auto& c : conversations) by_id[c.id] = &c;
  const auto& cc = config.curation;
  const auto standard = config.standard_normalization();
  const auto without_fillers = config.metrics_normalization();

  CurationResult r;
  std::map<std::string, std::vector<CuratedPair>> bands;
  for (const auto& a : alignments) {
    auto it = by_id.find(a.conversation_id);
    if (it == by_id.end()) throw InputError("alignment for unknown conversation '" + a.conversation_id + "'");
    const Conversation& conv = *it->second;
    for (const auto& e : a.entries) {
      ++r.stats.entries;
      if (e.asr_indices.empty() || e.gold_indices.empty()) {
        ++r.stats.missing;
        continue;
      }
      CuratedPair p;
      p.example.id = example_id(conv.id, e.gold_indices.front());
      p.example.conversation_id = conv.id;
      p.example.source = conv.source;
      p.example.gold_final = align::joined_text(conv.gold, e.gold_indices);
      p.example.hyp_final = align::joined_text(conv.hypothesis, e.asr_indices);
      p.example.context = context_window(conv, e.gold_indices.front(), cc.context_doctor_turns);
      p.wer = metrics::wer(p.example.gold_final, p.example.hyp_final, standard).raw;
      p.wer_without_fillers = metrics::wer(p.example.gold_final, p.example.hyp_final, without_fillers).raw;
      if (p.wer == 0.0) {
        ++r.stats.perfect;
        continue;
      }
      if (cc.filter_non_lexical && p.wer_without_fillers == 0.0) {
        ++r.stats.fillers_only;
        continue;
      }
      if (p.wer < cc.high_band_low) {
        p.band = "low";
      } else if (p.wer < cc.high_band_high) {
        p.band = "high";
        if (!cc.include_high_band) {
          ++r.stats.high_band_excluded;
          continue;
        }
      } else {
        p.band = "above";
        if (!cc.include_above_high_band) {
          ++r.stats.above_band_excluded;
          continue;
        }
      }
      bands[p.band].push_back(std::move(p));
    }
  }

  std::uint64_t stream = 0;
  for (auto& [band, pairs] : bands) {
    ++stream;
    if (cc.max_per_band > 0 && pairs.size() > static_cast<std::size_t>(cc.max_per_band)) {
      SplitMix64 rng(substream_seed(config.seed, 0xC0 + stream));
      shuffle(pairs, rng);
      r.stats.sampled_out += static_cast<int>(pairs.size()) - cc.max_per_band;
      pairs.resize(static_cast<std::size_t>(cc.max_per_band));
    }
    r.stats.kept_by_band[band] = static_cast<int>(pairs.size());
    for (auto& p : pairs) r.pairs.push_back(std::move(p));
  }
  std::sort(r.pairs.begin(), r.pairs.end(),
            [](const CuratedPair& x, const CuratedPair& y) { return x.example.id < y.example.id; });
  r.stats.kept = static_cast<int>(r.pairs.size());
  if (r.pairs.empty()) throw InputError("curation left no examples");
  return r;
}

Json to_json_value(const CurationStats& s) {
  return Json{{"entries", s.entries},
              {"missing", s.missing},
              {"perfect", s.perfect},
              {"fillers_only", s.fillers_only},
              {"high_band_excluded", s.high_band_excluded},
              {"above_band_excluded", s.above_band_excluded},
              {"sampled_out", s.sampled_out},
              {"kept", s.kept},
              {"kept_by_band", s.kept_by_band}};
}

}  // namespace asrimpact::pipeline
