#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "aghmn/autodiff.hpp"
#include "aghmn/data.hpp"
#include "aghmn/model.hpp"

namespace aghmn::cli {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

/// Named flat parameter container plus everything needed to rebuild the model.
struct Checkpoint {
  model::ModelConfig model;
  std::vector<std::string> labels;
  std::vector<std::string> vocab;  // index order, without the unknown slot
  ad::GradMap params;
  std::string digest;
};

/// FNV-1a over a canonical rendering of the model config, labels and vocabulary.
std::string config_digest(const model::ModelConfig& cfg, const std::vector<std::string>& labels,
                          const std::vector<std::string>& vocab);

Checkpoint make_checkpoint(const model::AghmnModel& model, const data::LabelSet& labels,
                           const data::Vocabulary& vocab);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Rejects unknown versions and digest mismatches.
Checkpoint load_checkpoint(const std::string& path);

/// Rebuilds the model; fails when parameter names or shapes disagree with the config.
std::unique_ptr<model::AghmnModel> instantiate(const Checkpoint& ckpt);

}  // namespace aghmn::cli
