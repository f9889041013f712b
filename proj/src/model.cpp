#include "aghmn/model.hpp"

#include <algorithm>
#include <cmath>

namespace aghmn::model {

using ad::Var;

const char* to_string(Reader r) { return r == Reader::bigru ? "bigru" : "cnn"; }
const char* to_string(Fusion f) { return f == Fusion::unif ? "unif" : "bif"; }
const char* to_string(Summarizer s) {
  switch (s) {
    case Summarizer::soft: return "soft";
    case Summarizer::agru: return "agru";
    case Summarizer::biagru: return "biagru";
  }
  return "?";
}

Reader parse_reader(const std::string& s) {
  if (s == "bigru") return Reader::bigru;
  if (s == "cnn") return Reader::cnn;
  throw ContractError("reader must be one of {bigru, cnn}, got '" + s + "'");
}

Fusion parse_fusion(const std::string& s) {
  if (s == "unif") return Fusion::unif;
  if (s == "bif") return Fusion::bif;
  throw ContractError("fusion must be one of {unif, bif}, got '" + s + "'");
}

Summarizer parse_summarizer(const std::string& s) {
  if (s == "soft") return Summarizer::soft;
  if (s == "agru") return Summarizer::agru;
  if (s == "biagru") return Summarizer::biagru;
  throw ContractError("summarizer must be one of {soft, agru, biagru}, got '" + s + "'");
}

void ModelConfig::validate() const {
  if (word_dim == 0) throw ContractError("word_dim must be positive");
  if (hidden == 0) throw ContractError("hidden must be positive");
  if (n_classes == 0) throw ContractError("n_classes must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout must lie in [0,1)");
  if (reader == Reader::cnn) {
    if (cnn_maps == 0) throw ContractError("cnn_maps must be positive");
    if (cnn_widths.empty() || std::count(cnn_widths.begin(), cnn_widths.end(), 0u) != 0) {
      throw ContractError("cnn_widths must be a nonempty list of positive widths");
    }
  }
}

std::string ModelConfig::variant_name() const {
  std::string name = fusion == Fusion::unif ? "UniF" : "BiF";
  switch (summarizer) {
    case Summarizer::soft: name += "-Soft"; break;
    case Summarizer::agru: name += "-AGRU"; break;
    case Summarizer::biagru: name += "-BiAGRU"; break;
  }
  return name;
}

Var read_utterance_bigru(const Var& words, const BigruReaderParams& p) {
  if (words.value().rank() != 2) throw DimensionError("read_utterance_bigru: words must be [N,d_w]");
  const std::size_t n = words.value().dim(0);
  std::vector<Var> seq;
  seq.reserve(n);
  for (std::size_t i = 0; i < n; ++i) seq.push_back(ad::row(words, i));
  const cells::BiStates states = cells::bigru_encode(seq, p.fwd, p.bwd);
  std::vector<Var> joined;
  joined.reserve(n);
  for (std::size_t i = 0; i < n; ++i) joined.push_back(ad::concat(states.fwd[i], states.bwd[i]));
  const Var pooled = ad::max_over_time(ad::stack_rows(joined));
  return ad::tanh(ad::add(ad::matmul(p.W_u, pooled), p.b_u));
}

Var read_utterance_cnn(const Var& words, const CnnReaderParams& p) {
  if (words.value().rank() != 2) throw DimensionError("read_utterance_cnn: words must be [N,d_w]");
  if (p.filters.empty() || p.filters.size() != p.biases.size()) {
    throw ContractError("read_utterance_cnn: filter/bias lists are inconsistent");
  }
  std::size_t widest = 0;
  for (const auto& f : p.filters) widest = std::max(widest, f.shape()[1]);
  const std::size_t n = words.value().dim(0);
  const std::size_t d = words.value().dim(1);
  Var input = words;
  if (n < widest) {
    std::vector<Var> rows;
    for (std::size_t i = 0; i < n; ++i) rows.push_back(ad::row(words, i));
    const Var pad = Var::constant(Tensor({d}, 0.0));
    while (rows.size() < widest) rows.push_back(pad);
    input = ad::stack_rows(rows);
  }
  std::vector<Var> pooled;
  for (std::size_t i = 0; i < p.filters.size(); ++i) {
    pooled.push_back(ad::max_over_time(ad::conv1d_valid(input, p.filters[i], p.biases[i])));
  }
  return ad::relu(ad::add(ad::matmul(p.W_u, ad::concat(pooled)), p.b_u));
}

MemoryBank build_memory_bank(std::span<const Var> history, Fusion fusion, const FusionParams& p) {
  MemoryBank bank;
  if (history.empty()) return bank;
  if (fusion == Fusion::unif) {
    const auto states = cells::gru_encode(history, p.fwd);
    for (std::size_t k = 0; k < history.size(); ++k) bank.vectors.push_back(ad::add(states[k], history[k]));
  } else {
    if (!p.bwd) throw ContractError("build_memory_bank: BiF needs backward fusion parameters");
    const auto states = cells::bigru_encode(history, p.fwd, *p.bwd);
    for (std::size_t k = 0; k < history.size(); ++k) {
      bank.vectors.push_back(ad::add(ad::add(states.fwd[k], states.bwd[k]), history[k]));
    }
  }
  return bank;
}

Var attention_weights(const Var& query, const MemoryBank& bank) {
  if (bank.empty()) throw ContractError("attention_weights: empty memory bank");
  return ad::softmax(ad::matmul(ad::stack_rows(bank.vectors), query));
}

Var soft_attention(const MemoryBank& bank, const Var& weights) {
  if (bank.empty()) throw ContractError("soft_attention: empty memory bank");
  if (!weights.defined() || weights.shape() != Shape{bank.size()}) {
    throw DimensionError("soft_attention: " + std::to_string(bank.size()) + " memories but weights " +
                         (weights.defined() ? shape_str(weights.shape()) : std::string("undefined")));
  }
  return ad::matmul(weights, ad::stack_rows(bank.vectors));
}

Var refine_query(const Var& query, std::span<const Var> contexts) {
  Var o = query;
  for (const auto& c : contexts) o = ad::add(o, c);
  return o;
}

Var classify(const Var& o, const Var& W_o, const Var& b_o) {
  return ad::softmax(ad::add(ad::matmul(W_o, o), b_o));
}

Var nll_loss(std::span<const Var> probs, std::span<const std::size_t> gold) {
  if (probs.empty() || probs.size() != gold.size()) {
    throw ContractError("nll_loss: need one gold label per prediction (got " + std::to_string(probs.size()) +
                        " vs " + std::to_string(gold.size()) + ")");
  }
  std::vector<Var> terms;
  terms.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (gold[i] >= probs[i].numel()) throw ContractError("nll_loss: gold label outside class range");
    terms.push_back(ad::neg_log(probs[i], gold[i], kLogFloor));
  }
  return ad::mean(ad::concat(terms));
}

double nll_value(const std::vector<std::vector<double>>& probs, std::span<const std::size_t> gold) {
  if (probs.empty() || probs.size() != gold.size()) throw ContractError("nll_value: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (gold[i] >= probs[i].size()) throw ContractError("nll_value: gold label outside class range");
    total -= std::log(std::max(probs[i][gold[i]], kLogFloor));
  }
  return total / static_cast<double>(probs.size());
}

AghmnModel::AghmnModel(ModelConfig config, const data::EmbeddingTable& embeddings, std::uint64_t seed)
    : config_(std::move(config)), params_(seed) {
  config_.validate();
  if (embeddings.dim() != config_.word_dim) {
    throw DimensionError("AghmnModel: embedding table has dimension " + std::to_string(embeddings.dim()) +
                         ", config word_dim is " + std::to_string(config_.word_dim));
  }
  Rng rng(seed);
  const std::size_t d1 = config_.hidden;
  const std::size_t dw = config_.word_dim;
  embedding_ = params_.add("embedding", embeddings.vectors);

  if (config_.reader == Reader::bigru) {
    BigruReaderParams r;
    r.fwd = cells::GruParams::create(params_, "reader.fwd", dw, d1, rng);
    r.bwd = cells::GruParams::create(params_, "reader.bwd", dw, d1, rng);
    r.W_u = params_.add("reader.W_u", cells::uniform_init({d1, 2 * d1}, d1, rng));
    r.b_u = params_.add("reader.b_u", cells::uniform_init({d1}, d1, rng));
    bigru_reader_ = std::move(r);
  } else {
    CnnReaderParams r;
    for (std::size_t w : config_.cnn_widths) {
      const std::string tag = "reader.conv" + std::to_string(w);
      r.filters.push_back(params_.add(tag + ".W", cells::uniform_init({config_.cnn_maps, w, dw}, w * dw, rng)));
      r.biases.push_back(params_.add(tag + ".b", cells::uniform_init({config_.cnn_maps}, w * dw, rng)));
    }
    const std::size_t pooled = config_.cnn_maps * config_.cnn_widths.size();
    r.W_u = params_.add("reader.W_u", cells::uniform_init({d1, pooled}, pooled, rng));
    r.b_u = params_.add("reader.b_u", cells::uniform_init({d1}, pooled, rng));
    cnn_reader_ = std::move(r);
  }

  if (config_.window > 0) {
    FusionParams f;
    f.fwd = cells::GruParams::create(params_, "fusion.fwd", d1, d1, rng);
    if (config_.fusion == Fusion::bif) f.bwd = cells::GruParams::create(params_, "fusion.bwd", d1, d1, rng);
    fusion_ = std::move(f);
    if (config_.summarizer != Summarizer::soft) {
      SummarizerParams s;
      s.fwd = cells::AgruParams::create(params_, "agru.fwd", d1, d1, rng);
      if (config_.summarizer == Summarizer::biagru) s.bwd = cells::AgruParams::create(params_, "agru.bwd", d1, d1, rng);
      summarizer_ = std::move(s);
    }
  }

  W_o_ = params_.add("classifier.W_o", cells::uniform_init({config_.n_classes, d1}, d1, rng));
  b_o_ = params_.add("classifier.b_o", cells::uniform_init({config_.n_classes}, d1, rng));
}

Var AghmnModel::read_utterance(std::span<const std::size_t> ids, bool train, Rng& rng) const {
  if (ids.empty()) throw ContractError("read_utterance: empty utterance");
  Var words = ad::embedding_lookup(embedding_, ids, data::Vocabulary::kUnknown);
  words = ad::dropout(words, config_.dropout, train, rng);
  return bigru_reader_ ? read_utterance_bigru(words, *bigru_reader_) : read_utterance_cnn(words, *cnn_reader_);
}

ForwardResult AghmnModel::forward(const data::EncodedConversation& conv, bool train, Rng& rng) const {
  if (conv.utterances.empty()) throw ContractError("conversation_forward: conversation '" + conv.id + "' is empty");
  ForwardResult out;
  std::vector<Var> embedded;
  embedded.reserve(conv.utterances.size());
  for (std::size_t t = 0; t < conv.utterances.size(); ++t) {
    const auto& utt = conv.utterances[t];
    if (utt.label >= config_.n_classes) {
      throw ContractError("conversation '" + conv.id + "': label " + std::to_string(utt.label) + " outside " +
                          std::to_string(config_.n_classes) + " classes");
    }
    const Var q = read_utterance(utt.ids, train, rng);

    const std::size_t history = std::min(config_.window, t);
    std::vector<Var> contexts;
    StepTrace trace;
    trace.t = t + 1;
    trace.speaker = utt.speaker;
    trace.gold = utt.label;
    if (history > 0) {
      const std::span<const Var> window(embedded.data() + (t - history), history);
      const MemoryBank bank = build_memory_bank(window, config_.fusion, *fusion_);
      const Var weights = attention_weights(q, bank);
      trace.weights.assign(weights.value().data().begin(), weights.value().data().end());
      switch (config_.summarizer) {
        case Summarizer::soft:
          contexts.push_back(soft_attention(bank, weights));
          break;
        case Summarizer::agru:
          contexts.push_back(cells::agru_summarize(bank.vectors, weights, summarizer_->fwd));
          break;
        case Summarizer::biagru: {
          const auto bi = cells::biagru_summarize(bank.vectors, weights, summarizer_->fwd, *summarizer_->bwd);
          contexts.push_back(bi.forward);
          contexts.push_back(bi.backward);
          break;
        }
      }
    }
    Var o = refine_query(q, contexts);
    o = ad::dropout(o, config_.dropout, train, rng);
    const Var probs = classify(o, W_o_, b_o_);

    const auto& pv = probs.value().storage();
    trace.probs = pv;
    trace.predicted = static_cast<std::size_t>(std::max_element(pv.begin(), pv.end()) - pv.begin());
    out.steps.push_back(std::move(trace));
    out.probs.push_back(probs);
    embedded.push_back(q);
  }
  return out;
}

double AghmnModel::loss_value(const data::EncodedConversation& conv) const {
  Rng unused(0);
  const ForwardResult r = forward(conv, false, unused);
  std::vector<std::size_t> gold;
  for (const auto& u : conv.utterances) gold.push_back(u.label);
  return nll_loss(r.probs, gold).value()[0];
}

ForwardResult conversation_forward(const data::EncodedConversation& conv, const AghmnModel& model, bool train,
                                   Rng& rng) {
  return model.forward(conv, train, rng);
}

}  // namespace aghmn::model
