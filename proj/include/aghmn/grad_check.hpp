#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aghmn/data.hpp"
#include "aghmn/model.hpp"

namespace aghmn::cli {

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckEps = 1e-5;

/// d_w=4, d1=3, K=3, two classes, small CNN banks so finite differences stay cheap.
model::ModelConfig tiny_config(model::Reader reader, model::Fusion fusion, model::Summarizer summarizer);

/// Three utterances of at most four words over a six-word vocabulary.
data::EncodedConversation tiny_conversation(std::uint64_t seed);
std::size_t tiny_vocab_size();

struct GradCheckRow {
  std::string reader;
  std::string variant;
  std::size_t scalars = 0;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double tolerance = kGradCheckTolerance;
  bool all_pass() const;
};

/// Analytic gradient of the eval-mode mean conversation loss vs central differences.
GradCheckRow check_variant(const model::ModelConfig& cfg, std::uint64_t seed, double tol = kGradCheckTolerance,
                           double eps = kGradCheckEps);

/// Every reader x fusion x summarizer combination.
GradCheckReport run_grad_check(std::uint64_t seed, double tol = kGradCheckTolerance, double eps = kGradCheckEps);

}  // namespace aghmn::cli
