#include <json.hpp>

#include "aghmn/train.hpp"

namespace aghmn::train {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ContractError("lr must be positive");
  if (!(clip_norm > 0.0)) throw ContractError("clip_norm must be positive");
  if (!(decay > 0.0 && decay < 1.0)) throw ContractError("decay must lie in (0,1)");
  if (patience == 0) throw ContractError("patience must be positive");
  if (max_epochs == 0) throw ContractError("max_epochs must be positive");
}

std::string to_json_line(const EpochRecord& rec) {
  nlohmann::ordered_json j = {{"epoch", rec.epoch},     {"train_loss", rec.train_loss}, {"val_acc", rec.val_acc},
                              {"val_f1", rec.val_f1},   {"val_mf1", rec.val_mf1},       {"lr", rec.lr}};
  return j.dump();
}

bool PlateauSchedule::observe(double score) {
  if (!seen_ || score > best_) {
    seen_ = true;
    best_ = score;
    stale_ = 0;
    return true;
  }
  lr_ *= decay_;
  ++stale_;
  return false;
}

FitResult fit(model::AghmnModel& model, const std::vector<data::EncodedConversation>& train_set,
              const std::vector<data::EncodedConversation>& val_set, const TrainConfig& cfg,
              const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("fit: empty training split");
  if (val_set.empty()) throw ContractError("fit: empty validation split");

  Rng order_rng(cfg.seed);
  Rng dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  ad::ParamSet& params = model.params();
  OptState opt;
  PlateauSchedule schedule(cfg.lr, cfg.decay, cfg.patience);
  FitResult result;
  result.best_params = params.snapshot();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    opt.lr = schedule.lr();
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t idx : order) {
      const auto& conv = train_set[idx];
      const auto fwd = model.forward(conv, true, dropout_rng);
      std::vector<std::size_t> gold;
      gold.reserve(conv.utterances.size());
      for (const auto& u : conv.utterances) gold.push_back(u.label);
      const ad::Var loss = model::nll_loss(fwd.probs, gold);
      params.zero_grad();
      ad::backward(loss);
      ad::GradMap grads = params.gradients();
      clip_gradients(grads, cfg.clip_norm);
      adam_step(params, grads, opt);
      loss_sum += loss.value()[0] * static_cast<double>(gold.size());
      steps += gold.size();
    }

    const MetricsReport val = evaluate(model, val_set);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(steps), val.accuracy, val.weighted_f1, val.macro_f1,
                    opt.lr};
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (schedule.observe(val.macro_f1)) {
      result.best_epoch = epoch;
      result.best_val_mf1 = val.macro_f1;
      result.best_params = params.snapshot();
    }
    if (schedule.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }
  params.restore(result.best_params);
  return result;
}

Split split_80_20(std::vector<data::Conversation> convs, std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(convs);
  const std::size_t n_train = convs.size() - convs.size() / 5;
  Split s;
  s.train.assign(std::make_move_iterator(convs.begin()),
                 std::make_move_iterator(convs.begin() + static_cast<std::ptrdiff_t>(n_train)));
  s.val.assign(std::make_move_iterator(convs.begin() + static_cast<std::ptrdiff_t>(n_train)),
               std::make_move_iterator(convs.end()));
  return s;
}

}  // namespace aghmn::train
