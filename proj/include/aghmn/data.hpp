#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aghmn/tensor.hpp"

namespace aghmn::data {

/// Malformed corpus or embedding input. Messages carry the line number or record id.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Utterance {
  std::string speaker;
  std::vector<std::string> tokens;
  std::size_t label = 0;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Conversation {
  std::string id;
  std::vector<Utterance> utterances;

  friend bool operator==(const Conversation&, const Conversation&) = default;
};

std::size_t utterance_count(const std::vector<Conversation>& convs);

/// Lowercases, splits on whitespace, and emits each ASCII punctuation mark as its own token.
std::vector<std::string> tokenize(std::string_view text);

/// Maps label strings to indices in list order. Duplicates or an empty list are rejected.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names);

  std::size_t index(const std::string& name) const;
  const std::string& name(std::size_t index) const { return names_.at(index); }
  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  friend bool operator==(const LabelSet& a, const LabelSet& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
};

/// One JSON record per line: {conv_id, turn, speaker, text, label}.
/// Conversations come back sorted by id, utterances by turn.
std::vector<Conversation> parse_conversations(std::istream& in, const LabelSet& labels,
                                              const std::string& source = "<stream>");
std::vector<Conversation> load_conversations(const std::string& path, const LabelSet& labels);

void write_conversations(std::ostream& out, const std::vector<Conversation>& convs, const LabelSet& labels);
void save_conversations(const std::string& path, const std::vector<Conversation>& convs, const LabelSet& labels);

class Vocabulary {
 public:
  static constexpr std::size_t kUnknown = 0;

  /// Frequency >= min_freq; sorted by descending count, then lexicographically.
  static Vocabulary build(const std::vector<Conversation>& convs, std::size_t min_freq = 1);
  static Vocabulary from_words(std::vector<std::string> words);

  std::size_t index(const std::string& word) const;
  const std::string& word(std::size_t index) const { return words_.at(index); }
  /// Includes the unknown slot.
  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_{"<unk>"};
  std::map<std::string, std::size_t> index_;
};

struct EmbeddingTable {
  Tensor vectors;                // |V| x d_w
  std::vector<bool> pretrained;  // per row

  std::size_t rows() const { return vectors.dim(0); }
  std::size_t dim() const { return vectors.dim(1); }
  /// Fraction of non-unknown rows copied from the embedding file.
  double coverage() const;
};

/// Rows uniform in [-0.25, 0.25]; the unknown row is zero.
EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed);

/// word2vec-style text vectors, optional "count dim" header. Missing words keep their random row.
EmbeddingTable load_embeddings(std::istream& in, const Vocabulary& vocab, std::size_t dim, std::uint64_t seed);
EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, std::size_t dim,
                               std::uint64_t seed);

struct EncodedUtterance {
  std::string speaker;
  std::vector<std::size_t> ids;
  std::size_t label = 0;
};

struct EncodedConversation {
  std::string id;
  std::vector<EncodedUtterance> utterances;
};

EncodedConversation encode(const Conversation& conv, const Vocabulary& vocab);
std::vector<EncodedConversation> encode(const std::vector<Conversation>& convs, const Vocabulary& vocab);

struct SyntheticOptions {
  std::size_t n_conversations = 120;
  std::size_t min_len = 4;
  std::size_t max_len = 12;
  std::size_t n_classes = 4;
  double carry_prob = 0.3;
  std::size_t keywords_per_class = 4;
  std::size_t filler_words = 40;
  std::uint64_t seed = 7;
};

/// Bookkeeping emitted alongside a synthetic corpus.
struct SyntheticSpec {
  SyntheticOptions options;
  std::vector<std::string> labels;
  std::vector<std::vector<std::string>> keywords;  // per class, disjoint
  std::size_t n_utterances = 0;
  std::size_t n_carried = 0;
  /// Expected accuracy of a history-blind keyword classifier: carried labels are
  /// only guessable at chance.
  double keyword_ceiling = 0.0;
};

struct SyntheticCorpus {
  std::vector<Conversation> conversations;
  SyntheticSpec spec;
};

/// Two alternating speakers. Each class owns a keyword set; with probability
/// carry_prob an utterance that has an earlier same-speaker turn copies that
/// turn's label and carries filler words only.
SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

std::string spec_to_json(const SyntheticSpec& spec);

}  // namespace aghmn::data
