#include "asrimpact/llm/extract.hpp"

#include <optional>

namespace asrimpact::llm {

namespace {

std::optional<Json> try_parse(std::string_view s) {
  Json j = Json::parse(s.begin(), s.end(), nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

// End (exclusive) of the balanced document starting at `start`, if any.
std::optional<std::size_t> balanced_end(std::string_view text, std::size_t start) {
  std::string stack;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    switch (c) {
      case '"': in_string = true; break;
      case '{': stack += '}'; break;
      case '[': stack += ']'; break;
      case '}':
      case ']':
        if (stack.empty() || stack.back() != c) return std::nullopt;
        stack.pop_back();
        if (stack.empty()) return i + 1;
        break;
      default: break;
    }
  }
  return std::nullopt;
}

}  // namespace

Json extract_structured(std::string_view text) {
  // Fenced blocks first.
  std::size_t pos = 0;
  while ((pos = text.find("```", pos)) != std::string_view::npos) {
    const std::size_t line_end = text.find('\n', pos);
    if (line_end == std::string_view::npos) break;
    const std::size_t close = text.find("```", line_end);
    if (close == std::string_view::npos) break;
    if (auto j = try_parse(text.substr(line_end + 1, close - line_end - 1))) return *j;
    pos = close + 3;
  }

  std::optional<std::size_t> first_candidate;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{' && text[i] != '[') continue;
    if (!first_candidate) first_candidate = i;
    if (auto end = balanced_end(text, i)) {
      if (auto j = try_parse(text.substr(i, *end - i))) return *j;
    }
  }
  const std::size_t offset = first_candidate.value_or(text.size());
  throw ExtractionError(first_candidate ? "no well-formed document; first candidate at offset " + std::to_string(offset)
                                        : std::string("no structured document found"),
                        offset, std::string(text));
}

}  // namespace asrimpact::llm
