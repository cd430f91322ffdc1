#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace asrimpact::textnorm {

enum class NumberLocale { british_english };

struct NormalizationConfig {
  NumberLocale number_locale = NumberLocale::british_english;
  bool remove_non_lexical = false;
  std::set<std::string> non_lexical_lexicon;

  // Default pipeline without filler removal (the cleaning used for every metric).
  static NormalizationConfig standard();
  // Default pipeline plus filler removal with the built-in lexicon.
  static NormalizationConfig metrics_subset();
};

// The 43 built-in non-lexical tokens (fillers, backchannels, hesitations).
const std::set<std::string>& default_non_lexical_lexicon();

// One lowercase token per line; '#' starts a comment.
std::set<std::string> load_lexicon(const std::filesystem::path& path);
std::set<std::string> parse_lexicon(std::string_view contents);

// Throws std::invalid_argument if filler removal is on with an empty lexicon.
void check_config(const NormalizationConfig& cfg);

// Number words, lowercasing, hyphen to space, punctuation removal, whitespace
// collapse, then optional filler removal, in that order.
std::string normalize(std::string_view text, const NormalizationConfig& cfg);

std::vector<std::string> tokenize_words(std::string_view normalized);

// Cardinal words with British "and" placement; nullopt above 10^18 - 1.
std::optional<std::string> cardinal_words(std::uint64_t value);
std::optional<std::string> ordinal_words(std::uint64_t value);

// Replaces every numeric expression with its word form; the first pipeline step.
std::string convert_numbers(std::string_view text);

// UTF-8 decode; invalid bytes map to U+FFFD.
std::u32string utf8_decode(std::string_view text);
std::string utf8_encode(std::u32string_view text);

}  // namespace asrimpact::textnorm
