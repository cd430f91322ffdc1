#pragma once

// Pluggable learned-semantic scorers. Real neural models live outside this
// library; the mock here is deterministic and used for tests and dry runs.

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace asrimpact::metrics {

class UnsupportedCapability : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class SemanticScorer {
 public:
  virtual ~SemanticScorer() = default;

  virtual std::string name() const = 0;
  // Similarity of hypothesis to reference, in [0, 1].
  virtual double score(std::string_view ref, std::string_view hyp) const = 0;

  virtual bool can_embed() const { return false; }
  virtual std::vector<double> embed(std::string_view text) const;

  // Whether score/embed may be called from several threads at once.
  virtual bool concurrent_safe() const { return false; }
};

// Cosine similarity; vectors of different length are zero-padded. Zero vectors give 0.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

class MockSemanticScorer final : public SemanticScorer {
 public:
  enum class Mode {
    hashed,     // pseudo-random word vectors derived from a hash of the word
    identical,  // every text embeds to the same unit vector
    orthogonal  // every distinct word gets its own axis
  };

  explicit MockSemanticScorer(Mode mode = Mode::hashed, std::string name = "mock_semantic");

  std::string name() const override { return name_; }
  double score(std::string_view ref, std::string_view hyp) const override;
  bool can_embed() const override { return true; }
  std::vector<double> embed(std::string_view text) const override;
  bool concurrent_safe() const override { return true; }

 private:
  std::vector<double> embed_word(const std::string& word) const;

  Mode mode_;
  std::string name_;
  mutable std::mutex vocab_mutex_;
  mutable std::map<std::string, std::size_t> vocab_;
};

// "mock", "mock-identical", "mock-orthogonal". Throws std::invalid_argument otherwise.
std::unique_ptr<SemanticScorer> make_scorer(std::string_view name);

}  // namespace asrimpact::metrics
