#include "aghmn/grad_check.hpp"

#include <algorithm>

#include "aghmn/autodiff.hpp"
#include "aghmn/rng.hpp"

namespace aghmn::cli {

using model::Fusion;
using model::Reader;
using model::Summarizer;

model::ModelConfig tiny_config(Reader reader, Fusion fusion, Summarizer summarizer) {
  model::ModelConfig cfg;
  cfg.word_dim = 4;
  cfg.hidden = 3;
  cfg.window = 3;
  cfg.n_classes = 2;
  cfg.reader = reader;
  cfg.fusion = fusion;
  cfg.summarizer = summarizer;
  cfg.dropout = 0.0;
  cfg.cnn_maps = 2;
  cfg.cnn_widths = {3, 4, 5};
  return cfg;
}

std::size_t tiny_vocab_size() { return 7; }

data::EncodedConversation tiny_conversation(std::uint64_t seed) {
  Rng rng(seed * 7919 + 3);
  data::EncodedConversation conv{"tiny", {}};
  for (std::size_t t = 0; t < 3; ++t) {
    data::EncodedUtterance u;
    u.speaker = t % 2 ? "B" : "A";
    const std::size_t n = 1 + rng.below(4);
    for (std::size_t i = 0; i < n; ++i) u.ids.push_back(1 + rng.below(tiny_vocab_size() - 1));
    u.label = rng.below(2);
    conv.utterances.push_back(std::move(u));
  }
  return conv;
}

GradCheckRow check_variant(const model::ModelConfig& cfg, std::uint64_t seed, double tol, double eps) {
  const auto vocab = data::Vocabulary::from_words({"a", "b", "c", "d", "e", "f"});
  const auto table = data::random_embeddings(vocab, cfg.word_dim, seed + 11);
  model::AghmnModel model(cfg, table, seed);
  const auto conv = tiny_conversation(seed);

  std::vector<std::size_t> gold;
  for (const auto& u : conv.utterances) gold.push_back(u.label);
  Rng unused(0);
  const auto fwd = model.forward(conv, false, unused);
  const ad::Var loss = model::nll_loss(fwd.probs, gold);
  model.params().zero_grad();
  ad::backward(loss);
  const ad::GradMap analytic = model.params().gradients();

  const ad::GradMap numeric = ad::finite_diff_grad(
      [&](const ad::ParamSet&) { return model.loss_value(conv); }, model.params(), eps);

  GradCheckRow row;
  row.reader = model::to_string(cfg.reader);
  row.variant = cfg.variant_name();
  row.scalars = model.params().scalar_count();
  for (const auto& [name, a] : analytic) {
    const Tensor& n = numeric.at(name);
    for (std::size_t i = 0; i < a.numel(); ++i) {
      const double err = ad::relative_error(a[i], n[i]);
      if (row.worst_param.empty() || err > row.max_rel_error) {
        row.max_rel_error = err;
        row.worst_param = name;
        row.worst_index = i;
      }
    }
  }
  row.pass = row.max_rel_error < tol;
  return row;
}

GradCheckReport run_grad_check(std::uint64_t seed, double tol, double eps) {
  GradCheckReport report;
  report.tolerance = tol;
  for (Reader r : {Reader::bigru, Reader::cnn})
    for (Fusion f : {Fusion::unif, Fusion::bif})
      for (Summarizer s : {Summarizer::soft, Summarizer::agru, Summarizer::biagru}) {
        report.rows.push_back(check_variant(tiny_config(r, f, s), seed, tol, eps));
      }
  return report;
}

bool GradCheckReport::all_pass() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.pass; });
}

}  // namespace aghmn::cli
