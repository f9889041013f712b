#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aghmn/autodiff.hpp"
#include "aghmn/cells.hpp"
#include "aghmn/data.hpp"

namespace aghmn::model {

enum class Reader { bigru, cnn };
enum class Fusion { unif, bif };
enum class Summarizer { soft, agru, biagru };

const char* to_string(Reader r);
const char* to_string(Fusion f);
const char* to_string(Summarizer s);
Reader parse_reader(const std::string& s);
Fusion parse_fusion(const std::string& s);
Summarizer parse_summarizer(const std::string& s);

inline constexpr double kLogFloor = 1e-12;

struct ModelConfig {
  std::size_t word_dim = 300;
  std::size_t hidden = 100;
  /// Context window K. Zero disables the memory path entirely (o_t = q_t).
  std::size_t window = 40;
  std::size_t n_classes = 6;
  Reader reader = Reader::bigru;
  Fusion fusion = Fusion::unif;
  Summarizer summarizer = Summarizer::agru;
  double dropout = 0.3;
  std::size_t cnn_maps = 64;
  std::vector<std::size_t> cnn_widths{3, 4, 5};

  void validate() const;
  /// e.g. "BiF-AGRU".
  std::string variant_name() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct BigruReaderParams {
  cells::GruParams fwd, bwd;
  ad::Var W_u, b_u;  // [d1, 2 d1], [d1]
};

struct CnnReaderParams {
  std::vector<ad::Var> filters;  // [maps, width, d_w]
  std::vector<ad::Var> biases;   // [maps]
  ad::Var W_u, b_u;              // [d1, maps * widths], [d1]
};

struct FusionParams {
  cells::GruParams fwd;
  std::optional<cells::GruParams> bwd;  // BiF only
};

struct SummarizerParams {
  cells::AgruParams fwd;
  std::optional<cells::AgruParams> bwd;  // BiAGRU only
};

/// Fused history vectors, oldest first.
struct MemoryBank {
  std::vector<ad::Var> vectors;
  bool empty() const noexcept { return vectors.empty(); }
  std::size_t size() const noexcept { return vectors.size(); }
};

struct StepTrace {
  std::size_t t = 0;  // 1-based position in the conversation
  std::string speaker;
  std::vector<double> weights;
  std::vector<double> probs;
  std::size_t predicted = 0;
  std::size_t gold = 0;

  friend bool operator==(const StepTrace&, const StepTrace&) = default;
};

struct ForwardResult {
  std::vector<StepTrace> steps;
  std::vector<ad::Var> probs;
};

ad::Var read_utterance_bigru(const ad::Var& words, const BigruReaderParams& p);
/// Zero-pads to the widest filter when the utterance is shorter.
ad::Var read_utterance_cnn(const ad::Var& words, const CnnReaderParams& p);

MemoryBank build_memory_bank(std::span<const ad::Var> history, Fusion fusion, const FusionParams& p);
ad::Var attention_weights(const ad::Var& query, const MemoryBank& bank);
ad::Var soft_attention(const MemoryBank& bank, const ad::Var& weights);
/// o = q + sum(contexts). An empty list means no history.
ad::Var refine_query(const ad::Var& query, std::span<const ad::Var> contexts);
ad::Var classify(const ad::Var& o, const ad::Var& W_o, const ad::Var& b_o);

/// Mean of -log(max(p[gold], floor)) over the steps.
ad::Var nll_loss(std::span<const ad::Var> probs, std::span<const std::size_t> gold);
double nll_value(const std::vector<std::vector<double>>& probs, std::span<const std::size_t> gold);

/// Owns every trainable tensor of one variant.
class AghmnModel {
 public:
  AghmnModel(ModelConfig config, const data::EmbeddingTable& embeddings, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  ad::ParamSet& params() noexcept { return params_; }
  const ad::ParamSet& params() const noexcept { return params_; }

  ad::Var read_utterance(std::span<const std::size_t> ids, bool train, Rng& rng) const;

  /// Runs the conversation step by step. Each step sees only earlier utterances.
  ForwardResult forward(const data::EncodedConversation& conv, bool train, Rng& rng) const;

  /// Eval-mode mean loss over one conversation.
  double loss_value(const data::EncodedConversation& conv) const;

 private:
  ModelConfig config_;
  ad::ParamSet params_;
  ad::Var embedding_;
  std::optional<BigruReaderParams> bigru_reader_;
  std::optional<CnnReaderParams> cnn_reader_;
  std::optional<FusionParams> fusion_;
  std::optional<SummarizerParams> summarizer_;
  ad::Var W_o_, b_o_;
};

ForwardResult conversation_forward(const data::EncodedConversation& conv, const AghmnModel& model, bool train,
                                   Rng& rng);

}  // namespace aghmn::model
