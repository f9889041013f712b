#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aghmn/autodiff.hpp"
#include "aghmn/config.hpp"
#include "aghmn/data.hpp"
#include "aghmn/train.hpp"

namespace aghmn::cli {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2 };

struct PreparedData {
  data::LabelSet labels;
  data::Vocabulary vocab;
  data::EmbeddingTable embeddings;
  std::vector<data::EncodedConversation> train;
  std::vector<data::EncodedConversation> val;
  std::vector<data::EncodedConversation> test;
};

/// Loads corpora, builds the vocabulary from the training file, and splits off a
/// validation set when none is configured.
PreparedData prepare_data(const RunConfig& cfg);

struct TrainOutcome {
  train::FitResult fit;
  train::MetricsReport test;
};

/// Trains one seed and writes checkpoint.json, train_log.jsonl, test_report.json
/// and test_report.txt into dir.
TrainOutcome train_once(const RunConfig& cfg, const PreparedData& prepared, const std::string& dir);

std::string report_to_json(const train::MetricsReport& report, const data::LabelSet& labels,
                           const std::string& model_name);
/// Per-class Acc./F1 column pairs followed by the weighted average and mF1, in percent.
std::string format_report_table(const train::MetricsReport& report, const data::LabelSet& labels,
                                const std::string& model_name);
std::string trace_to_json_line(const std::string& conversation_id, const model::StepTrace& step,
                               const data::LabelSet& labels);

int cmd_train(const RunConfig& cfg, std::size_t repeat, std::ostream& out, std::ostream& err);
int cmd_eval(const std::string& checkpoint, const std::string& corpus, const std::string& report_path,
             std::ostream& out, std::ostream& err);
int cmd_export_attention(const std::string& checkpoint, const std::string& corpus, const std::string& out_path,
                         std::ostream& out, std::ostream& err);
int cmd_sweep_k(const RunConfig& cfg, const std::vector<std::size_t>& ks, std::ostream& out, std::ostream& err);
int cmd_grad_check(std::uint64_t seed, std::optional<ad::OpKind> corrupt, std::ostream& out, std::ostream& err);
/// split empty: one corpus.jsonl; otherwise train/val/test files with those
/// conversation counts plus a quickstart.cfg.
int cmd_gen_synthetic(const data::SyntheticOptions& options, const std::vector<std::size_t>& split,
                      const std::string& out_dir, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace aghmn::cli
