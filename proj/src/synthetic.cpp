#include <cstdio>

#include <json.hpp>

#include "aghmn/data.hpp"
#include "aghmn/rng.hpp"

namespace aghmn::data {

namespace {

std::string padded(const char* prefix, std::size_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, n);
  return std::string(prefix) + buf;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticOptions& o) {
  if (o.n_classes < 2) throw DataError("synthetic: n_classes must be >= 2");
  if (o.min_len < 1 || o.max_len < o.min_len) throw DataError("synthetic: invalid length range");
  if (o.carry_prob < 0.0 || o.carry_prob > 1.0) throw DataError("synthetic: carry_prob must lie in [0,1]");
  if (o.keywords_per_class < 1 || o.filler_words < 1) throw DataError("synthetic: empty word pools");

  SyntheticCorpus corpus;
  SyntheticSpec& spec = corpus.spec;
  spec.options = o;
  for (std::size_t c = 0; c < o.n_classes; ++c) {
    spec.labels.push_back(padded("emo", c, 1));
    std::vector<std::string> words;
    for (std::size_t k = 0; k < o.keywords_per_class; ++k) words.push_back("k" + std::to_string(c) + "w" + std::to_string(k));
    spec.keywords.push_back(std::move(words));
  }
  std::vector<std::string> filler;
  for (std::size_t f = 0; f < o.filler_words; ++f) filler.push_back(padded("f", f, 2));

  Rng rng(o.seed);
  const char* speakers[] = {"A", "B"};
  for (std::size_t n = 0; n < o.n_conversations; ++n) {
    Conversation conv{padded("conv", n, 5), {}};
    const std::size_t len = o.min_len + rng.below(o.max_len - o.min_len + 1);
    for (std::size_t t = 0; t < len; ++t) {
      Utterance utt;
      utt.speaker = speakers[t % 2];
      const bool has_prior_turn = t >= 2;
      const bool carried = has_prior_turn && rng.bernoulli(o.carry_prob);
      const std::size_t filler_count = 3 + rng.below(4);
      for (std::size_t i = 0; i < filler_count; ++i) utt.tokens.push_back(filler[rng.below(filler.size())]);
      if (carried) {
        utt.label = conv.utterances[t - 2].label;
        ++spec.n_carried;
      } else {
        utt.label = rng.below(o.n_classes);
        const auto& pool = spec.keywords[utt.label];
        const std::size_t keyword_count = 1 + rng.below(2);
        for (std::size_t i = 0; i < keyword_count; ++i) {
          const std::size_t pos = rng.below(utt.tokens.size() + 1);
          utt.tokens.insert(utt.tokens.begin() + static_cast<std::ptrdiff_t>(pos), pool[rng.below(pool.size())]);
        }
      }
      conv.utterances.push_back(std::move(utt));
    }
    spec.n_utterances += len;
    corpus.conversations.push_back(std::move(conv));
  }
  const double n = static_cast<double>(spec.n_utterances);
  const double miss = static_cast<double>(spec.n_carried) * (1.0 - 1.0 / static_cast<double>(o.n_classes));
  spec.keyword_ceiling = n > 0 ? (n - miss) / n : 0.0;
  return corpus;
}

std::string spec_to_json(const SyntheticSpec& spec) {
  const auto& o = spec.options;
  nlohmann::json j = {
      {"seed", o.seed},
      {"n_conversations", o.n_conversations},
      {"min_len", o.min_len},
      {"max_len", o.max_len},
      {"n_classes", o.n_classes},
      {"carry_prob", o.carry_prob},
      {"keywords_per_class", o.keywords_per_class},
      {"filler_words", o.filler_words},
      {"labels", spec.labels},
      {"keywords", spec.keywords},
      {"n_utterances", spec.n_utterances},
      {"n_carried", spec.n_carried},
      {"keyword_ceiling", spec.keyword_ceiling},
  };
  return j.dump(2);
}

}  // namespace aghmn::data
