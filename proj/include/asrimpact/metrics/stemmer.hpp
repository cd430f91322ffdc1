#pragma once

#include <string>
#include <string_view>

namespace asrimpact::metrics {

// The original Porter (1980) suffix-stripping stemmer for lowercase ASCII words.
std::string porter_stem(std::string_view word);

}  // namespace asrimpact::metrics
