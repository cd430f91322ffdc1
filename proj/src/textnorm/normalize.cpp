#include "asrimpact/textnorm/normalize.hpp"

#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace asrimpact::textnorm {

namespace {

constexpr std::array<std::string_view, 20> kUnits = {
    "zero",    "one",     "two",       "three",    "four",     "five",    "six",
    "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
    "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen"};

constexpr std::array<std::string_view, 10> kTens = {"",      "",      "twenty",  "thirty", "forty",
                                                     "fifty", "sixty", "seventy", "eighty", "ninety"};

constexpr std::array<std::string_view, 6> kScales = {"",        "thousand",    "million",
                                                      "billion", "trillion",    "quadrillion"};

constexpr std::uint64_t kMaxConvertible = 999'999'999'999'999'999ULL;

std::string below_hundred(unsigned n) {
  if (n < 20) return std::string(kUnits[n]);
  std::string out(kTens[n / 10]);
  if (n % 10 != 0) {
    out += '-';
    out += kUnits[n % 10];
  }
  return out;
}

std::string below_thousand(unsigned n) {
  const unsigned hundreds = n / 100;
  const unsigned rest = n % 100;
  std::string out;
  if (hundreds != 0) {
    out = std::string(kUnits[hundreds]) + " hundred";
  }
  if (rest != 0) {
    if (!out.empty()) out += " and ";
    out += below_hundred(rest);
  }
  return out;
}

std::string ordinal_of_word(const std::string& word) {
  static const std::array<std::pair<std::string_view, std::string_view>, 10> kIrregular = {{
      {"one", "first"},
      {"two", "second"},
      {"three", "third"},
      {"four", "fourth"},
      {"five", "fifth"},
      {"six", "sixth"},
      {"seven", "seventh"},
      {"eight", "eighth"},
      {"nine", "ninth"},
      {"twelve", "twelfth"},
  }};
  for (const auto& [card, ord] : kIrregular) {
    if (word == card) return std::string(ord);
  }
  if (!word.empty() && word.back() == 'y') return word.substr(0, word.size() - 1) + "ieth";
  return word + "th";
}

bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f' ||
         c == 0x00A0 || (c >= 0x2000 && c <= 0x200A) || c == 0x202F || c == 0x3000;
}

bool is_hyphen(char32_t c) {
  return c == U'-' || (c >= 0x2010 && c <= 0x2015) || c == 0x2212;
}

// Latin letters kept verbatim; everything else non-alphanumeric is punctuation or symbol.
bool is_kept_letter(char32_t c) {
  if ((c >= U'a' && c <= U'z') || (c >= U'0' && c <= U'9')) return true;
  return c >= 0x00C0 && c <= 0x024F && c != 0x00D7 && c != 0x00F7;
}

char32_t to_lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c >= 0x00C0 && c <= 0x00DE && c != 0x00D7) return c + 32;
  return c;
}

}  // namespace

std::optional<std::string> cardinal_words(std::uint64_t value) {
  if (value > kMaxConvertible) return std::nullopt;
  if (value == 0) return std::string("zero");
  std::array<unsigned, kScales.size()> groups{};
  for (std::size_t g = 0; g < groups.size(); ++g) {
    groups[g] = static_cast<unsigned>(value % 1000);
    value /= 1000;
  }
  std::string out;
  bool higher = false;
  for (std::size_t g = groups.size(); g-- > 0;) {
    if (groups[g] == 0) continue;
    if (!out.empty()) out += ' ';
    if (g == 0 && higher && groups[0] < 100) out += "and ";
    out += below_thousand(groups[g]);
    if (g > 0) {
      out += ' ';
      out += kScales[g];
    }
    higher = true;
  }
  return out;
}

std::optional<std::string> ordinal_words(std::uint64_t value) {
  auto card = cardinal_words(value);
  if (!card) return std::nullopt;
  const auto cut = card->find_last_of(" -");
  const std::size_t start = cut == std::string::npos ? 0 : cut + 1;
  return card->substr(0, start) + ordinal_of_word(card->substr(start));
}

std::string convert_numbers(std::string_view text) {
  std::string out;
  out.reserve(text.size() + 16);
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_ascii_digit(text[i])) {
      out += text[i++];
      continue;
    }
    const std::size_t begin = i;
    std::string digits;
    while (i < text.size() && is_ascii_digit(text[i])) digits += text[i++];
    // Thousands separators: "1,234,567".
    if (digits.size() <= 3) {
      while (i + 3 < text.size() && text[i] == ',' && is_ascii_digit(text[i + 1]) &&
             is_ascii_digit(text[i + 2]) && is_ascii_digit(text[i + 3]) &&
             (i + 4 >= text.size() || !is_ascii_digit(text[i + 4]))) {
        digits.append(text.substr(i + 1, 3));
        i += 4;
      }
    }
    std::string fraction;
    if (i + 1 < text.size() && text[i] == '.' && is_ascii_digit(text[i + 1])) {
      ++i;
      while (i < text.size() && is_ascii_digit(text[i])) fraction += text[i++];
    }
    bool ordinal = false;
    if (fraction.empty() && i + 1 < text.size()) {
      const char a = static_cast<char>(text[i] | 0x20);
      const char b = static_cast<char>(text[i + 1] | 0x20);
      const bool suffix = (a == 's' && b == 't') || (a == 'n' && b == 'd') || (a == 'r' && b == 'd') ||
                          (a == 't' && b == 'h');
      if (suffix && (i + 2 >= text.size() || !is_ascii_alpha(text[i + 2]))) {
        ordinal = true;
        i += 2;
      }
    }

    const auto first_nonzero = digits.find_first_not_of('0');
    const std::string significant = first_nonzero == std::string::npos ? "0" : digits.substr(first_nonzero);
    std::optional<std::string> words;
    if (significant.size() <= 18) {
      const std::uint64_t value = std::stoull(significant);
      words = ordinal ? ordinal_words(value) : cardinal_words(value);
    }
    if (!words) {
      out.append(text.substr(begin, i - begin));
      continue;
    }
    if (!fraction.empty()) {
      *words += " point";
      for (char d : fraction) {
        *words += ' ';
        *words += kUnits[static_cast<std::size_t>(d - '0')];
      }
    }
    out += ' ';
    out += *words;
    out += ' ';
  }
  return out;
}

std::u32string utf8_decode(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    int extra = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      extra = 1;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      extra = 2;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      extra = 3;
    } else {
      out += 0xFFFD;
      ++i;
      continue;
    }
    if (extra > 0 && i + static_cast<std::size_t>(extra) >= text.size()) {
      out += 0xFFFD;
      ++i;
      continue;
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      const auto b = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out += 0xFFFD;
      ++i;
      continue;
    }
    out += cp;
    i += static_cast<std::size_t>(extra) + 1;
  }
  return out;
}

std::string utf8_encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }
  return out;
}

const std::set<std::string>& default_non_lexical_lexicon() {
  static const std::set<std::string> kLexicon = {
      "aah",  "ah",   "ahem", "ahh",   "eh",    "ehm",  "er",   "erm",   "err",  "errm", "ha",
      "hah",  "heh",  "hm",   "hmm",   "hmmm",  "hmph", "huh",  "mhm",   "mhmm", "mm",   "mmhm",
      "mmm",  "oh",   "ooh",  "ow",    "pff",   "psst", "shh",  "tsk",   "ugh",  "uh",   "uhh",
      "uhhh", "uhhuh", "uhm", "uhuh",  "uhum",  "um",   "umm",  "ummm",  "unhuh", "whoa"};
  return kLexicon;
}

NormalizationConfig NormalizationConfig::standard() { return {}; }

NormalizationConfig NormalizationConfig::metrics_subset() {
  NormalizationConfig cfg;
  cfg.remove_non_lexical = true;
  cfg.non_lexical_lexicon = default_non_lexical_lexicon();
  return cfg;
}

std::set<std::string> parse_lexicon(std::string_view contents) {
  std::set<std::string> out;
  std::istringstream in{std::string(contents)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.insert(line.substr(b, e - b + 1));
  }
  return out;
}

std::set<std::string> load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_lexicon(buf.str());
}

void check_config(const NormalizationConfig& cfg) {
  if (cfg.remove_non_lexical && cfg.non_lexical_lexicon.empty()) {
    throw std::invalid_argument("non-lexical removal requires a nonempty lexicon");
  }
}

std::string normalize(std::string_view text, const NormalizationConfig& cfg) {
  check_config(cfg);
  const std::u32string chars = utf8_decode(convert_numbers(text));

  std::u32string cleaned;
  cleaned.reserve(chars.size());
  bool pending_space = false;
  for (char32_t c : chars) {
    c = to_lower(c);
    if (is_hyphen(c) || is_space(c)) {
      pending_space = true;
      continue;
    }
    if (!is_kept_letter(c)) continue;
    if (pending_space && !cleaned.empty()) cleaned += U' ';
    pending_space = false;
    cleaned += c;
  }
  std::string collapsed = utf8_encode(cleaned);
  if (!cfg.remove_non_lexical) return collapsed;

  std::string filtered;
  for (const auto& token : tokenize_words(collapsed)) {
    if (cfg.non_lexical_lexicon.contains(token)) continue;
    if (!filtered.empty()) filtered += ' ';
    filtered += token;
  }
  return filtered;
}

std::vector<std::string> tokenize_words(std::string_view normalized) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start <= normalized.size()) {
    const auto space = normalized.find(' ', start);
    const auto end = space == std::string_view::npos ? normalized.size() : space;
    if (end > start) tokens.emplace_back(normalized.substr(start, end - start));
    if (space == std::string_view::npos) break;
    start = space + 1;
  }
  return tokens;
}

}  // namespace asrimpact::textnorm
