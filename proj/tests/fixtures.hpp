#pragma once

#include <array>
#include <memory>
#include <vector>

#include "aghmn/data.hpp"
#include "aghmn/model.hpp"

namespace aghmn::testkit {

/// Rows are gold classes, columns predictions. 20 utterances; class 3 never
/// occurs in either.
inline constexpr std::array<std::array<std::size_t, 4>, 4> kConfusion{{
    {5, 1, 1, 0},
    {2, 6, 0, 0},
    {0, 2, 3, 0},
    {0, 0, 0, 0},
}};

/// A history-blind CNN model whose prediction for a one-word utterance with
/// id c+1 is class c: one-hot embeddings, identity filters and projections.
inline std::unique_ptr<model::AghmnModel> routing_model() {
  model::ModelConfig cfg;
  cfg.word_dim = 4;
  cfg.hidden = 4;
  cfg.window = 0;
  cfg.n_classes = 4;
  cfg.reader = model::Reader::cnn;
  cfg.cnn_maps = 4;
  cfg.cnn_widths = {3};
  cfg.dropout = 0.0;
  data::EmbeddingTable table{Tensor({5, 4}), std::vector<bool>(5, false)};
  for (std::size_t c = 0; c < 4; ++c) table.vectors.at(c + 1, c) = 1.0;
  auto m = std::make_unique<model::AghmnModel>(cfg, table, 1);
  for (auto& [name, v] : m->params().entries()) {
    ad::Var h = v;
    Tensor& t = h.mutable_value();
    if (name == "embedding") continue;
    t.fill(0.0);
    if (name == "reader.conv3.W") {
      for (std::size_t f = 0; f < 4; ++f) t[(f * 3 + 0) * 4 + f] = 1.0;
    } else if (name == "reader.W_u") {
      for (std::size_t i = 0; i < 4; ++i) t.at(i, i) = 1.0;
    } else if (name == "classifier.W_o") {
      for (std::size_t i = 0; i < 4; ++i) t.at(i, i) = 10.0;
    }
  }
  return m;
}

/// The confusion matrix spread over four conversations of five utterances.
inline std::vector<data::EncodedConversation> confusion_dataset() {
  std::vector<data::EncodedUtterance> utts;
  for (std::size_t g = 0; g < 4; ++g)
    for (std::size_t p = 0; p < 4; ++p)
      for (std::size_t n = 0; n < kConfusion[g][p]; ++n) utts.push_back({"A", {p + 1}, g});
  std::vector<data::EncodedConversation> out;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    if (i % 5 == 0) out.push_back({"m" + std::to_string(i / 5), {}});
    // Interleave so each conversation mixes classes.
    out.back().utterances.push_back(utts[(i * 7) % utts.size()]);
  }
  return out;
}

}  // namespace aghmn::testkit
