#include "aghmn/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "aghmn/rng.hpp"

namespace aghmn::data {

using nlohmann::json;

std::size_t utterance_count(const std::vector<Conversation>& convs) {
  std::size_t n = 0;
  for (const auto& c : convs) n += c.utterances.size();
  return n;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto ch = static_cast<unsigned char>(raw);
    if (std::isspace(ch)) {
      flush();
    } else if (std::ispunct(ch)) {
      flush();
      tokens.emplace_back(1, raw);
    } else {
      current.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  flush();
  return tokens;
}

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw DataError("labels: list is empty");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], i).second) throw DataError("labels: duplicate label '" + names_[i] + "'");
  }
}

std::size_t LabelSet::index(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw DataError("labels: unknown label '" + name + "'");
  return it->second;
}

std::vector<Conversation> parse_conversations(std::istream& in, const LabelSet& labels, const std::string& source) {
  struct Turn {
    long turn;
    Utterance utt;
  };
  std::map<std::string, std::vector<Turn>> grouped;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": malformed record (" + e.what() + ")");
    }
    std::string conv_id, speaker, text, label;
    long turn = 0;
    try {
      conv_id = rec.at("conv_id").get<std::string>();
      turn = rec.at("turn").get<long>();
      speaker = rec.at("speaker").get<std::string>();
      text = rec.at("text").get<std::string>();
      label = rec.at("label").get<std::string>();
    } catch (const json::exception& e) {
      throw DataError(where + ": malformed record (" + e.what() + ")");
    }
    if (turn < 1) throw DataError(where + ": turn must be >= 1, got " + std::to_string(turn));
    Utterance utt{speaker, tokenize(text), 0};
    if (utt.tokens.empty()) {
      throw DataError(where + ": conversation '" + conv_id + "' turn " + std::to_string(turn) +
                      " is empty after tokenization");
    }
    try {
      utt.label = labels.index(label);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    grouped[conv_id].push_back({turn, std::move(utt)});
  }

  std::vector<Conversation> out;
  out.reserve(grouped.size());
  for (auto& [id, turns] : grouped) {
    std::stable_sort(turns.begin(), turns.end(), [](const Turn& a, const Turn& b) { return a.turn < b.turn; });
    for (std::size_t i = 1; i < turns.size(); ++i) {
      if (turns[i].turn == turns[i - 1].turn) {
        throw DataError(source + ": conversation '" + id + "' repeats turn " + std::to_string(turns[i].turn));
      }
    }
    Conversation conv{id, {}};
    for (auto& t : turns) conv.utterances.push_back(std::move(t.utt));
    out.push_back(std::move(conv));
  }
  return out;
}

std::vector<Conversation> load_conversations(const std::string& path, const LabelSet& labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus '" + path + "'");
  return parse_conversations(in, labels, path);
}

void write_conversations(std::ostream& out, const std::vector<Conversation>& convs, const LabelSet& labels) {
  for (const auto& conv : convs) {
    for (std::size_t t = 0; t < conv.utterances.size(); ++t) {
      const auto& utt = conv.utterances[t];
      std::string text;
      for (std::size_t i = 0; i < utt.tokens.size(); ++i) {
        if (i) text += ' ';
        text += utt.tokens[i];
      }
      json rec = {{"conv_id", conv.id},
                  {"turn", t + 1},
                  {"speaker", utt.speaker},
                  {"text", text},
                  {"label", labels.name(utt.label)}};
      out << rec.dump() << '\n';
    }
  }
}

void save_conversations(const std::string& path, const std::vector<Conversation>& convs, const LabelSet& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus '" + path + "'");
  write_conversations(out, convs, labels);
}

Vocabulary Vocabulary::build(const std::vector<Conversation>& convs, std::size_t min_freq) {
  if (min_freq < 1) throw DataError("vocabulary: min_freq must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& c : convs)
    for (const auto& u : c.utterances)
      for (const auto& tok : u.tokens) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [word, n] : counts)
    if (n >= min_freq) ranked.emplace_back(word, n);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [word, _] : ranked) words.push_back(word);
  return from_words(std::move(words));
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  Vocabulary v;
  for (auto& w : words) {
    if (v.index_.count(w)) throw DataError("vocabulary: duplicate word '" + w + "'");
    v.index_.emplace(w, v.words_.size());
    v.words_.push_back(std::move(w));
  }
  return v;
}

std::size_t Vocabulary::index(const std::string& word) const {
  const auto it = index_.find(word);
  return it == index_.end() ? kUnknown : it->second;
}

double EmbeddingTable::coverage() const {
  if (pretrained.size() <= 1) return 0.0;
  const auto hits = std::count(pretrained.begin() + 1, pretrained.end(), true);
  return static_cast<double>(hits) / static_cast<double>(pretrained.size() - 1);
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw DataError("embeddings: dimension must be positive");
  EmbeddingTable table{Tensor({vocab.size(), dim}, 0.0), std::vector<bool>(vocab.size(), false)};
  Rng rng(seed);
  for (std::size_t r = 1; r < vocab.size(); ++r)
    for (std::size_t j = 0; j < dim; ++j) table.vectors.at(r, j) = rng.uniform(-0.25, 0.25);
  return table;
}

EmbeddingTable load_embeddings(std::istream& in, const Vocabulary& vocab, std::size_t dim, std::uint64_t seed) {
  EmbeddingTable table = random_embeddings(vocab, dim, seed);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<std::string> rest;
    for (std::string f; fields >> f;) rest.push_back(f);
    if (first) {
      first = false;
      const auto is_int = [](const std::string& s) {
        return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
      };
      if (rest.size() == 1 && is_int(word) && is_int(rest[0])) continue;
    }
    if (rest.size() != dim) {
      throw DataError("embeddings: word '" + word + "' has " + std::to_string(rest.size()) +
                      " values, expected " + std::to_string(dim));
    }
    const std::size_t id = vocab.index(word);
    if (id == Vocabulary::kUnknown) continue;
    for (std::size_t j = 0; j < dim; ++j) {
      try {
        table.vectors.at(id, j) = std::stod(rest[j]);
      } catch (const std::exception&) {
        throw DataError("embeddings: word '" + word + "' has non-numeric value '" + rest[j] + "'");
      }
    }
    table.pretrained[id] = true;
  }
  return table;
}

EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, std::size_t dim,
                               std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings '" + path + "'");
  return load_embeddings(in, vocab, dim, seed);
}

EncodedConversation encode(const Conversation& conv, const Vocabulary& vocab) {
  EncodedConversation out{conv.id, {}};
  out.utterances.reserve(conv.utterances.size());
  for (const auto& u : conv.utterances) {
    EncodedUtterance e{u.speaker, {}, u.label};
    e.ids.reserve(u.tokens.size());
    for (const auto& tok : u.tokens) e.ids.push_back(vocab.index(tok));
    out.utterances.push_back(std::move(e));
  }
  return out;
}

std::vector<EncodedConversation> encode(const std::vector<Conversation>& convs, const Vocabulary& vocab) {
  std::vector<EncodedConversation> out;
  out.reserve(convs.size());
  for (const auto& c : convs) out.push_back(encode(c, vocab));
  return out;
}

}  // namespace aghmn::data
