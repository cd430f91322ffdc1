#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "asrimpact/core/model.hpp"

namespace asrimpact {

// One broken invariant. `side` is "gold", "hypothesis", "conversation" or
// "alignment"; `index` is the utterance index or entry position (-1 if none).
struct Violation {
  std::string side;
  int index = -1;
  std::string rule;
  std::string message;

  bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate_conversation(const Conversation& conv);

class PairingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Throws PairingError when the alignment belongs to another conversation.
std::vector<Violation> validate_alignment(const Alignment& alignment, const Conversation& conv);

// Patient utterances are the only ones aligned; doctor turns are context.
std::vector<const Utterance*> alignable_gold(const Conversation& conv);
std::vector<const Utterance*> alignable_hypothesis(const Conversation& conv);

}  // namespace asrimpact
