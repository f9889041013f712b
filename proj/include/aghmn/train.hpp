#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "aghmn/autodiff.hpp"
#include "aghmn/data.hpp"
#include "aghmn/model.hpp"

namespace aghmn::train {

struct TrainConfig {
  double lr = 5e-4;
  double clip_norm = 5.0;
  double decay = 0.95;
  std::size_t patience = 10;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 1;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Adam with bias correction; defaults from the original optimizer.
struct OptState {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  ad::GradMap m;
  ad::GradMap v;
};

/// Global L2 norm over every tensor in grads.
double global_norm(const ad::GradMap& grads);

/// Rescales all gradients by max_norm / norm when the global norm exceeds max_norm.
/// Returns the norm before clipping.
double clip_gradients(ad::GradMap& grads, double max_norm);

/// One Adam update of params from grads. Moment tensors are created on first use.
void adam_step(ad::ParamSet& params, const ad::GradMap& grads, OptState& state);

struct ClassMetrics {
  std::size_t support = 0;
  std::size_t predicted = 0;
  std::size_t true_positive = 0;
  double precision = 0.0;
  double recall = 0.0;  // reported as the per-class accuracy
  double f1 = 0.0;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;     // support-weighted per-class accuracy (= overall accuracy)
  double weighted_f1 = 0.0;  // support-weighted F1
  double macro_f1 = 0.0;     // unweighted mean over all classes
  std::size_t total = 0;
};

/// Classes without any gold or predicted instance score zero and still count
/// towards macro_f1.
MetricsReport compute_metrics(std::span<const std::size_t> gold, std::span<const std::size_t> predicted,
                              std::size_t n_classes);

std::vector<model::StepTrace> predict(const model::AghmnModel& model,
                                      const std::vector<data::EncodedConversation>& dataset);

MetricsReport evaluate(const model::AghmnModel& model, const std::vector<data::EncodedConversation>& dataset);

/// Mean per-utterance loss with dropout off.
double dataset_loss(const model::AghmnModel& model, const std::vector<data::EncodedConversation>& dataset);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double val_f1 = 0.0;
  double val_mf1 = 0.0;
  double lr = 0.0;  // rate in effect during this epoch

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

std::string to_json_line(const EpochRecord& rec);

struct FitResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_val_mf1 = -1.0;
  bool early_stopped = false;
  ad::GradMap best_params;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// One conversation per optimizer step. After each epoch the validation mF1 is
/// compared to the best so far; a non-improving epoch multiplies lr by decay and
/// `patience` consecutive ones stop training. The model is left holding the best
/// parameters.
FitResult fit(model::AghmnModel& model, const std::vector<data::EncodedConversation>& train_set,
              const std::vector<data::EncodedConversation>& val_set, const TrainConfig& cfg,
              const EpochCallback& on_epoch = {});

/// Learning-rate schedule and stopping rule without the model, for testing the policy.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, double decay, std::size_t patience) : lr_(lr), decay_(decay), patience_(patience) {}

  /// Returns true when the score was a new best.
  bool observe(double score);
  double lr() const noexcept { return lr_; }
  bool should_stop() const noexcept { return stale_ >= patience_; }
  double best() const noexcept { return best_; }

 private:
  double lr_;
  double decay_;
  std::size_t patience_;
  std::size_t stale_ = 0;
  double best_ = -1.0;
  bool seen_ = false;
};

struct Split {
  std::vector<data::Conversation> train;
  std::vector<data::Conversation> val;
};

/// Seeded shuffle, then the first 80% train and the rest validation.
Split split_80_20(std::vector<data::Conversation> convs, std::uint64_t seed);

}  // namespace aghmn::train
