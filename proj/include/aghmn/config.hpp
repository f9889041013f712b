#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "aghmn/model.hpp"
#include "aghmn/train.hpp"

namespace aghmn::cli {

/// Invalid run configuration; field() names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

inline constexpr std::size_t kLongProfileWindow = 40;
inline constexpr std::size_t kShortProfileWindow = 10;

struct RunConfig {
  std::string profile = "long";  // "long" (K=40) or "short" (K=10)
  model::ModelConfig model;
  train::TrainConfig train;
  std::uint64_t seed = 1;
  std::size_t min_freq = 1;
  std::string train_path;
  std::string val_path;  // empty: seeded 80:20 split of train_path
  std::string test_path;
  std::string embeddings_path;  // empty: random initialization
  std::string out_dir = "runs";
  std::vector<std::string> labels;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Flat key=value lines; '#' starts a comment. Unknown keys are errors.
/// `profile` is applied before any explicit `window`.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Every key, one per line, in a fixed order; parse_config(to_config_text(c)) == c.
std::string to_config_text(const RunConfig& cfg);

/// Field checks plus, when check_paths is set, existence of referenced files.
void validate(const RunConfig& cfg, bool check_paths = true);

}  // namespace aghmn::cli
