#include "aghmn/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace aghmn::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename Fn>
T wrap(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ContractError& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no), "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second) throw ConfigError(key, "given more than once");
  }

  RunConfig cfg;
  if (auto it = kv.find("profile"); it != kv.end()) {
    cfg.profile = it->second;
    if (cfg.profile == "long") {
      cfg.model.window = kLongProfileWindow;
    } else if (cfg.profile == "short") {
      cfg.model.window = kShortProfileWindow;
    } else {
      throw ConfigError("profile", "must be 'long' or 'short', got '" + cfg.profile + "'");
    }
    kv.erase(it);
  }

  for (const auto& [key, value] : kv) {
    auto& m = cfg.model;
    auto& t = cfg.train;
    if (key == "reader") {
      m.reader = wrap<model::Reader>(key, [&] { return model::parse_reader(value); });
    } else if (key == "fusion") {
      m.fusion = wrap<model::Fusion>(key, [&] { return model::parse_fusion(value); });
    } else if (key == "summarizer") {
      m.summarizer = wrap<model::Summarizer>(key, [&] { return model::parse_summarizer(value); });
    } else if (key == "word_dim") {
      m.word_dim = to_uint(key, value);
    } else if (key == "hidden") {
      m.hidden = to_uint(key, value);
    } else if (key == "window") {
      m.window = to_uint(key, value);
    } else if (key == "dropout") {
      m.dropout = to_double(key, value);
    } else if (key == "cnn_maps") {
      m.cnn_maps = to_uint(key, value);
    } else if (key == "cnn_widths") {
      m.cnn_widths.clear();
      for (const auto& w : split_list(value)) m.cnn_widths.push_back(to_uint(key, w));
    } else if (key == "lr") {
      t.lr = to_double(key, value);
    } else if (key == "clip_norm") {
      t.clip_norm = to_double(key, value);
    } else if (key == "decay") {
      t.decay = to_double(key, value);
    } else if (key == "patience") {
      t.patience = to_uint(key, value);
    } else if (key == "max_epochs") {
      t.max_epochs = to_uint(key, value);
    } else if (key == "seed") {
      cfg.seed = to_uint(key, value);
    } else if (key == "min_freq") {
      cfg.min_freq = to_uint(key, value);
    } else if (key == "train_path") {
      cfg.train_path = value;
    } else if (key == "val_path") {
      cfg.val_path = value;
    } else if (key == "test_path") {
      cfg.test_path = value;
    } else if (key == "embeddings_path") {
      cfg.embeddings_path = value;
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else if (key == "labels") {
      cfg.labels = split_list(value);
    } else {
      throw ConfigError(key, "unknown key");
    }
  }
  cfg.train.seed = cfg.seed;
  if (!cfg.labels.empty()) cfg.model.n_classes = cfg.labels.size();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_config_text(const RunConfig& cfg) {
  std::ostringstream out;
  const auto& m = cfg.model;
  const auto& t = cfg.train;
  std::string widths;
  for (std::size_t i = 0; i < m.cnn_widths.size(); ++i) widths += (i ? "," : "") + std::to_string(m.cnn_widths[i]);
  std::string labels;
  for (std::size_t i = 0; i < cfg.labels.size(); ++i) labels += (i ? "," : "") + cfg.labels[i];
  out << "profile=" << cfg.profile << '\n'
      << "reader=" << model::to_string(m.reader) << '\n'
      << "fusion=" << model::to_string(m.fusion) << '\n'
      << "summarizer=" << model::to_string(m.summarizer) << '\n'
      << "word_dim=" << m.word_dim << '\n'
      << "hidden=" << m.hidden << '\n'
      << "window=" << m.window << '\n'
      << "dropout=" << fmt_double(m.dropout) << '\n'
      << "cnn_maps=" << m.cnn_maps << '\n'
      << "cnn_widths=" << widths << '\n'
      << "lr=" << fmt_double(t.lr) << '\n'
      << "clip_norm=" << fmt_double(t.clip_norm) << '\n'
      << "decay=" << fmt_double(t.decay) << '\n'
      << "patience=" << t.patience << '\n'
      << "max_epochs=" << t.max_epochs << '\n'
      << "seed=" << cfg.seed << '\n'
      << "min_freq=" << cfg.min_freq << '\n'
      << "train_path=" << cfg.train_path << '\n'
      << "val_path=" << cfg.val_path << '\n'
      << "test_path=" << cfg.test_path << '\n'
      << "embeddings_path=" << cfg.embeddings_path << '\n'
      << "out_dir=" << cfg.out_dir << '\n'
      << "labels=" << labels << '\n';
  return out.str();
}

void validate(const RunConfig& cfg, bool check_paths) {
  const auto& m = cfg.model;
  const auto& t = cfg.train;
  if (cfg.labels.empty()) throw ConfigError("labels", "list is empty");
  if (std::set<std::string>(cfg.labels.begin(), cfg.labels.end()).size() != cfg.labels.size()) {
    throw ConfigError("labels", "contains duplicates");
  }
  if (m.n_classes != cfg.labels.size()) throw ConfigError("labels", "count disagrees with n_classes");
  if (m.word_dim == 0) throw ConfigError("word_dim", "must be positive");
  if (m.hidden == 0) throw ConfigError("hidden", "must be positive");
  if (!(m.dropout >= 0.0 && m.dropout < 1.0)) throw ConfigError("dropout", "must lie in [0,1)");
  if (m.reader == model::Reader::cnn) {
    if (m.cnn_maps == 0) throw ConfigError("cnn_maps", "must be positive");
    if (m.cnn_widths.empty()) throw ConfigError("cnn_widths", "must list at least one width");
    for (auto w : m.cnn_widths)
      if (w == 0) throw ConfigError("cnn_widths", "widths must be positive");
  }
  if (!(t.lr > 0.0)) throw ConfigError("lr", "must be positive");
  if (!(t.clip_norm > 0.0)) throw ConfigError("clip_norm", "must be positive");
  if (!(t.decay > 0.0 && t.decay < 1.0)) throw ConfigError("decay", "must lie in (0,1)");
  if (t.patience == 0) throw ConfigError("patience", "must be positive");
  if (t.max_epochs == 0) throw ConfigError("max_epochs", "must be positive");
  if (cfg.min_freq == 0) throw ConfigError("min_freq", "must be >= 1");
  if (cfg.train_path.empty()) throw ConfigError("train_path", "is required");
  if (cfg.test_path.empty()) throw ConfigError("test_path", "is required");
  if (!check_paths) return;
  namespace fs = std::filesystem;
  const std::pair<const char*, const std::string*> paths[] = {{"train_path", &cfg.train_path},
                                                              {"val_path", &cfg.val_path},
                                                              {"test_path", &cfg.test_path},
                                                              {"embeddings_path", &cfg.embeddings_path}};
  for (const auto& [field, path] : paths) {
    if (!path->empty() && !fs::exists(*path)) throw ConfigError(field, "file '" + *path + "' does not exist");
  }
}

}  // namespace aghmn::cli
