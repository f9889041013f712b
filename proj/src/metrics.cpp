#include "aghmn/train.hpp"

namespace aghmn::train {

MetricsReport compute_metrics(std::span<const std::size_t> gold, std::span<const std::size_t> predicted,
                              std::size_t n_classes) {
  if (gold.size() != predicted.size()) throw ContractError("compute_metrics: gold/prediction length mismatch");
  if (n_classes == 0) throw ContractError("compute_metrics: no classes");
  MetricsReport r;
  r.per_class.resize(n_classes);
  r.total = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= n_classes || predicted[i] >= n_classes) throw ContractError("compute_metrics: label out of range");
    ++r.per_class[gold[i]].support;
    ++r.per_class[predicted[i]].predicted;
    if (gold[i] == predicted[i]) ++r.per_class[gold[i]].true_positive;
  }
  std::size_t correct = 0;
  double weighted = 0.0;
  double macro = 0.0;
  for (auto& c : r.per_class) {
    const auto tp = static_cast<double>(c.true_positive);
    c.precision = c.predicted ? tp / static_cast<double>(c.predicted) : 0.0;
    c.recall = c.support ? tp / static_cast<double>(c.support) : 0.0;
    const double denom = c.precision + c.recall;
    c.f1 = denom > 0.0 ? 2.0 * c.precision * c.recall / denom : 0.0;
    correct += c.true_positive;
    weighted += static_cast<double>(c.support) * c.f1;
    macro += c.f1;
  }
  if (r.total > 0) {
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
    r.weighted_f1 = weighted / static_cast<double>(r.total);
  }
  r.macro_f1 = macro / static_cast<double>(n_classes);
  return r;
}

std::vector<model::StepTrace> predict(const model::AghmnModel& model,
                                      const std::vector<data::EncodedConversation>& dataset) {
  std::vector<model::StepTrace> out;
  Rng unused(0);
  for (const auto& conv : dataset) {
    auto r = model.forward(conv, false, unused);
    for (auto& s : r.steps) out.push_back(std::move(s));
  }
  return out;
}

MetricsReport evaluate(const model::AghmnModel& model, const std::vector<data::EncodedConversation>& dataset) {
  if (dataset.empty()) throw ContractError("evaluate: empty dataset");
  std::vector<std::size_t> gold, pred;
  for (const auto& s : predict(model, dataset)) {
    gold.push_back(s.gold);
    pred.push_back(s.predicted);
  }
  return compute_metrics(gold, pred, model.config().n_classes);
}

double dataset_loss(const model::AghmnModel& model, const std::vector<data::EncodedConversation>& dataset) {
  if (dataset.empty()) throw ContractError("dataset_loss: empty dataset");
  std::vector<std::vector<double>> probs;
  std::vector<std::size_t> gold;
  for (const auto& s : predict(model, dataset)) {
    probs.push_back(s.probs);
    gold.push_back(s.gold);
  }
  return model::nll_value(probs, gold);
}

}  // namespace aghmn::train
