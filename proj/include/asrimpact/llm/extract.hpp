#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

#include "asrimpact/core/serialize.hpp"

namespace asrimpact::llm {

class ExtractionError : public std::runtime_error {
 public:
  ExtractionError(const std::string& message, std::size_t offset, std::string raw)
      : std::runtime_error(message), offset_(offset), raw_(std::move(raw)) {}

  // Where the first candidate document started, or the text length if none did.
  std::size_t offset() const { return offset_; }
  const std::string& raw() const { return raw_; }

 private:
  std::size_t offset_;
  std::string raw_;
};

// First well-formed JSON document in free text. Fenced code blocks are tried
// before bare objects and arrays.
Json extract_structured(std::string_view text);

}  // namespace asrimpact::llm
