#include "aghmn/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "aghmn/checkpoint.hpp"
#include "aghmn/grad_check.hpp"

namespace aghmn::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string lpad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
}

struct LoadedCheckpoint {
  Checkpoint ckpt;
  std::unique_ptr<model::AghmnModel> model;
  data::LabelSet labels;
  data::Vocabulary vocab;
};

LoadedCheckpoint open_checkpoint(const std::string& path) {
  LoadedCheckpoint l;
  l.ckpt = load_checkpoint(path);
  l.model = instantiate(l.ckpt);
  l.labels = data::LabelSet(l.ckpt.labels);
  l.vocab = data::Vocabulary::from_words(l.ckpt.vocab);
  return l;
}

std::vector<data::EncodedConversation> load_for_checkpoint(const LoadedCheckpoint& l, const std::string& corpus) {
  std::vector<data::Conversation> convs;
  try {
    convs = data::load_conversations(corpus, l.labels);
  } catch (const data::DataError& e) {
    const std::string what = e.what();
    if (what.find("unknown label") != std::string::npos) {
      throw data::DataError("label set mismatch with checkpoint: " + what);
    }
    throw;
  }
  if (convs.empty()) throw data::DataError("corpus '" + corpus + "' contains no conversations");
  return data::encode(convs, l.vocab);
}

std::optional<ad::OpKind> parse_op(const std::string& name) {
  for (int k = static_cast<int>(ad::OpKind::leaf); k <= static_cast<int>(ad::OpKind::neg_log); ++k) {
    const auto kind = static_cast<ad::OpKind>(k);
    if (name == ad::op_name(kind)) return kind;
  }
  return std::nullopt;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData p;
  p.labels = data::LabelSet(cfg.labels);
  auto train_convs = data::load_conversations(cfg.train_path, p.labels);
  if (train_convs.empty()) throw ConfigError("train_path", "corpus '" + cfg.train_path + "' is empty");
  std::vector<data::Conversation> val_convs;
  if (cfg.val_path.empty()) {
    auto split = train::split_80_20(std::move(train_convs), cfg.seed);
    train_convs = std::move(split.train);
    val_convs = std::move(split.val);
  } else {
    val_convs = data::load_conversations(cfg.val_path, p.labels);
  }
  if (val_convs.empty()) throw ConfigError("val_path", "validation split is empty");
  auto test_convs = data::load_conversations(cfg.test_path, p.labels);
  if (test_convs.empty()) throw ConfigError("test_path", "corpus '" + cfg.test_path + "' is empty");

  p.vocab = data::Vocabulary::build(train_convs, cfg.min_freq);
  p.embeddings = cfg.embeddings_path.empty()
                     ? data::random_embeddings(p.vocab, cfg.model.word_dim, cfg.seed)
                     : data::load_embeddings(cfg.embeddings_path, p.vocab, cfg.model.word_dim, cfg.seed);
  p.train = data::encode(train_convs, p.vocab);
  p.val = data::encode(val_convs, p.vocab);
  p.test = data::encode(test_convs, p.vocab);
  return p;
}

TrainOutcome train_once(const RunConfig& cfg, const PreparedData& prepared, const std::string& dir) {
  fs::create_directories(dir);
  model::AghmnModel model(cfg.model, prepared.embeddings, cfg.seed);
  std::ofstream log(fs::path(dir) / "train_log.jsonl", std::ios::binary);
  if (!log) throw std::runtime_error("cannot write training log in '" + dir + "'");
  TrainOutcome outcome;
  outcome.fit = train::fit(model, prepared.train, prepared.val, cfg.train,
                           [&](const train::EpochRecord& rec) { log << train::to_json_line(rec) << '\n' << std::flush; });
  save_checkpoint((fs::path(dir) / "checkpoint.json").string(), make_checkpoint(model, prepared.labels, prepared.vocab));
  outcome.test = train::evaluate(model, prepared.test);
  const std::string name = cfg.model.variant_name();
  write_file(fs::path(dir) / "test_report.json", report_to_json(outcome.test, prepared.labels, name) + "\n");
  write_file(fs::path(dir) / "test_report.txt", format_report_table(outcome.test, prepared.labels, name));
  return outcome;
}

std::string report_to_json(const train::MetricsReport& report, const data::LabelSet& labels,
                           const std::string& model_name) {
  ordered_json classes = ordered_json::array();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& m = report.per_class[c];
    classes.push_back({{"label", labels.name(c)},
                       {"support", m.support},
                       {"predicted", m.predicted},
                       {"accuracy", m.recall},
                       {"precision", m.precision},
                       {"f1", m.f1}});
  }
  const ordered_json j = {{"model", model_name},
                          {"total", report.total},
                          {"accuracy", report.accuracy},
                          {"weighted_f1", report.weighted_f1},
                          {"macro_f1", report.macro_f1},
                          {"classes", classes}};
  return j.dump(2);
}

std::string format_report_table(const train::MetricsReport& report, const data::LabelSet& labels,
                                const std::string& model_name) {
  const std::size_t name_w = std::max<std::size_t>(model_name.size(), 8) + 2;
  const std::size_t col_w = 7;
  std::ostringstream top, sub, row;
  top << pad("", name_w);
  sub << pad("Model", name_w);
  row << pad(model_name, name_w);
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    top << "| " << pad(labels.name(c), 2 * col_w) << ' ';
    sub << "| " << lpad("Acc.", col_w) << lpad("F1", col_w) << ' ';
    row << "| " << lpad(pct(report.per_class[c].recall), col_w) << lpad(pct(report.per_class[c].f1), col_w) << ' ';
  }
  top << "| " << pad("Average", 3 * col_w);
  sub << "| " << lpad("Acc.", col_w) << lpad("F1", col_w) << lpad("mF1", col_w);
  row << "| " << lpad(pct(report.accuracy), col_w) << lpad(pct(report.weighted_f1), col_w)
      << lpad(pct(report.macro_f1), col_w);
  std::ostringstream out;
  out << top.str() << '\n' << sub.str() << '\n' << row.str() << '\n';
  return out.str();
}

std::string trace_to_json_line(const std::string& conversation_id, const model::StepTrace& step,
                               const data::LabelSet& labels) {
  const ordered_json j = {{"conversation_id", conversation_id},
                          {"t", step.t},
                          {"speaker", step.speaker},
                          {"gold", labels.name(step.gold)},
                          {"pred", labels.name(step.predicted)},
                          {"probs", step.probs},
                          {"weights", step.weights}};
  return j.dump();
}

int cmd_train(const RunConfig& cfg, std::size_t repeat, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (repeat == 0) throw ConfigError("repeat", "must be >= 1");
    validate(cfg);
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "config.txt", to_config_text(cfg));
    const std::string name = cfg.model.variant_name();
    if (repeat == 1) {
      const PreparedData prepared = prepare_data(cfg);
      const auto outcome = train_once(cfg, prepared, cfg.out_dir);
      out << "best epoch " << outcome.fit.best_epoch << ", val mF1 " << pct(outcome.fit.best_val_mf1) << "\n";
      out << format_report_table(outcome.test, prepared.labels, name);
      return kExitOk;
    }
    std::vector<train::MetricsReport> reports;
    data::LabelSet labels(cfg.labels);
    ordered_json runs = ordered_json::array();
    for (std::size_t i = 0; i < repeat; ++i) {
      RunConfig run_cfg = cfg;
      run_cfg.seed = cfg.seed + i;
      run_cfg.train.seed = run_cfg.seed;
      const std::string dir = (fs::path(cfg.out_dir) / ("run_" + std::to_string(i + 1))).string();
      const PreparedData prepared = prepare_data(run_cfg);
      const auto outcome = train_once(run_cfg, prepared, dir);
      reports.push_back(outcome.test);
      runs.push_back({{"seed", run_cfg.seed}, {"dir", dir}, {"macro_f1", outcome.test.macro_f1}});
      out << "run " << (i + 1) << "/" << repeat << " seed " << run_cfg.seed << ": test mF1 "
          << pct(outcome.test.macro_f1) << "\n";
    }
    // Mean of every reported metric across runs.
    train::MetricsReport mean = reports.front();
    const double n = static_cast<double>(reports.size());
    for (std::size_t c = 0; c < mean.per_class.size(); ++c) {
      double acc = 0.0, f1 = 0.0, prec = 0.0;
      for (const auto& r : reports) {
        acc += r.per_class[c].recall;
        f1 += r.per_class[c].f1;
        prec += r.per_class[c].precision;
      }
      mean.per_class[c].recall = acc / n;
      mean.per_class[c].f1 = f1 / n;
      mean.per_class[c].precision = prec / n;
    }
    double acc = 0.0, wf1 = 0.0, mf1 = 0.0;
    for (const auto& r : reports) {
      acc += r.accuracy;
      wf1 += r.weighted_f1;
      mf1 += r.macro_f1;
    }
    mean.accuracy = acc / n;
    mean.weighted_f1 = wf1 / n;
    mean.macro_f1 = mf1 / n;
    ordered_json agg = ordered_json::parse(report_to_json(mean, labels, name));
    agg["repeats"] = repeat;
    agg["runs"] = runs;
    write_file(fs::path(cfg.out_dir) / "aggregate_report.json", agg.dump(2) + "\n");
    out << "mean over " << repeat << " runs\n" << format_report_table(mean, labels, name);
    return kExitOk;
  });
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus, const std::string& report_path,
             std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (checkpoint.empty()) throw ConfigError("checkpoint", "is required");
    if (corpus.empty()) throw ConfigError("corpus", "is required");
    const auto loaded = open_checkpoint(checkpoint);
    const auto dataset = load_for_checkpoint(loaded, corpus);
    const auto report = train::evaluate(*loaded.model, dataset);
    const std::string name = loaded.ckpt.model.variant_name();
    out << format_report_table(report, loaded.labels, name);
    if (!report_path.empty()) write_file(report_path, report_to_json(report, loaded.labels, name) + "\n");
    return kExitOk;
  });
}

int cmd_export_attention(const std::string& checkpoint, const std::string& corpus, const std::string& out_path,
                         std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (checkpoint.empty()) throw ConfigError("checkpoint", "is required");
    if (corpus.empty()) throw ConfigError("corpus", "is required");
    if (out_path.empty()) throw ConfigError("out", "is required");
    const auto loaded = open_checkpoint(checkpoint);
    const auto dataset = load_for_checkpoint(loaded, corpus);
    std::ofstream file(out_path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write '" + out_path + "'");
    Rng unused(0);
    std::size_t records = 0;
    for (const auto& conv : dataset) {
      for (const auto& step : loaded.model->forward(conv, false, unused).steps) {
        file << trace_to_json_line(conv.id, step, loaded.labels) << '\n';
        ++records;
      }
    }
    out << "wrote " << records << " attention records to " << out_path << "\n";
    return kExitOk;
  });
}

int cmd_sweep_k(const RunConfig& cfg, const std::vector<std::size_t>& ks, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (ks.empty()) throw ConfigError("k", "list is empty");
    std::set<std::size_t> seen;
    for (auto k : ks) {
      if (k == 0) throw ConfigError("k", "values must be positive");
      if (!seen.insert(k).second) throw ConfigError("k", "duplicate value " + std::to_string(k));
    }
    validate(cfg);
    const PreparedData prepared = prepare_data(cfg);
    std::ostringstream table;
    table << "K\tacc\tweighted_f1\tmacro_f1\n";
    for (auto k : ks) {
      RunConfig run = cfg;
      run.model.window = k;
      const auto outcome = train_once(run, prepared, (fs::path(cfg.out_dir) / ("k_" + std::to_string(k))).string());
      char line[128];
      std::snprintf(line, sizeof line, "%zu\t%.6f\t%.6f\t%.6f\n", k, outcome.test.accuracy, outcome.test.weighted_f1,
                    outcome.test.macro_f1);
      table << line;
      err << "K=" << k << " done\n";
    }
    write_file(fs::path(cfg.out_dir) / "sweep_k.tsv", table.str());
    out << table.str();
    return kExitOk;
  });
}

int cmd_grad_check(std::uint64_t seed, std::optional<ad::OpKind> corrupt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ad::debug::corrupt_backward(corrupt);
    GradCheckReport report;
    try {
      report = run_grad_check(seed);
    } catch (...) {
      ad::debug::corrupt_backward(std::nullopt);
      throw;
    }
    ad::debug::corrupt_backward(std::nullopt);
    out << pad("reader", 8) << pad("variant", 14) << lpad("params", 8) << lpad("max_rel_err", 14) << "  status\n";
    for (const auto& r : report.rows) {
      char err_buf[32];
      std::snprintf(err_buf, sizeof err_buf, "%.3e", r.max_rel_error);
      out << pad(r.reader, 8) << pad(r.variant, 14) << lpad(std::to_string(r.scalars), 8) << lpad(err_buf, 14) << "  "
          << (r.pass ? "ok" : "FAIL") << '\n';
    }
    if (report.all_pass()) {
      out << "all " << report.rows.size() << " variants within " << report.tolerance << "\n";
      return kExitOk;
    }
    for (const auto& r : report.rows) {
      if (!r.pass) {
        err << "gradient mismatch: " << r.reader << " " << r.variant << " parameter " << r.worst_param << "["
            << r.worst_index << "]\n";
      }
    }
    return kExitRuntime;
  });
}

int cmd_gen_synthetic(const data::SyntheticOptions& options, const std::vector<std::size_t>& split,
                      const std::string& out_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (out_dir.empty()) throw ConfigError("out", "is required");
    data::SyntheticOptions opts = options;
    if (!split.empty()) {
      if (split.size() != 3) throw ConfigError("split", "expects three counts train,val,test");
      opts.n_conversations = split[0] + split[1] + split[2];
    }
    data::SyntheticCorpus corpus;
    try {
      corpus = data::generate_synthetic(opts);
    } catch (const data::DataError& e) {
      throw ConfigError("synthetic", e.what());
    }
    fs::create_directories(out_dir);
    const data::LabelSet labels(corpus.spec.labels);
    const fs::path dir(out_dir);
    write_file(dir / "spec.json", data::spec_to_json(corpus.spec) + "\n");
    if (split.empty()) {
      data::save_conversations((dir / "corpus.jsonl").string(), corpus.conversations, labels);
      out << "wrote " << corpus.conversations.size() << " conversations to " << (dir / "corpus.jsonl").string() << "\n";
      return kExitOk;
    }
    const auto& convs = corpus.conversations;
    auto slice = [&](std::size_t from, std::size_t count) {
      return std::vector<data::Conversation>(convs.begin() + static_cast<std::ptrdiff_t>(from),
                                             convs.begin() + static_cast<std::ptrdiff_t>(from + count));
    };
    data::save_conversations((dir / "train.jsonl").string(), slice(0, split[0]), labels);
    data::save_conversations((dir / "val.jsonl").string(), slice(split[0], split[1]), labels);
    data::save_conversations((dir / "test.jsonl").string(), slice(split[0] + split[1], split[2]), labels);

    RunConfig quick;
    quick.profile = "short";
    quick.model.word_dim = 16;
    quick.model.hidden = 32;
    quick.model.window = 5;
    quick.train.max_epochs = 50;
    quick.labels = corpus.spec.labels;
    quick.model.n_classes = quick.labels.size();
    quick.train_path = (dir / "train.jsonl").string();
    quick.val_path = (dir / "val.jsonl").string();
    quick.test_path = (dir / "test.jsonl").string();
    quick.out_dir = (dir / "run").string();
    write_file(dir / "quickstart.cfg", to_config_text(quick));
    out << "wrote " << split[0] << "/" << split[1] << "/" << split[2] << " conversations and quickstart.cfg to "
        << out_dir << "\n";
    return kExitOk;
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention gated hierarchical memory networks for real-time emotion recognition"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t repeat = 1;
  std::string out_path;
  bool print_config = false;
  app.add_option("--config", config_path, "Run configuration (key=value lines)");
  app.add_option("--seed", seed, "Override the configured seed");
  app.add_option("--repeat", repeat, "Train this many seeds and report mean metrics");
  app.add_option("--out", out_path, "Output directory or file");
  app.add_flag("--print-config", print_config, "Print the effective configuration and exit");

  auto* train_cmd = app.add_subcommand("train", "Fit a model and report test metrics");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  std::string checkpoint, corpus, report_path;
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--corpus", corpus)->required();
  eval_cmd->add_option("--report", report_path, "Write the metrics as JSON");

  auto* export_cmd = app.add_subcommand("export-attention", "Write per-step attention traces");
  export_cmd->add_option("--checkpoint", checkpoint)->required();
  export_cmd->add_option("--corpus", corpus)->required();

  auto* sweep_cmd = app.add_subcommand("sweep-k", "Train and test across context-window sizes");
  std::vector<std::size_t> ks;
  sweep_cmd->add_option("--k", ks, "Window sizes")->delimiter(',')->required();

  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference check of every model variant");
  std::string corrupt;
  grad_cmd->add_option("--corrupt", corrupt, "Scale one op's backward (negative control)")->group("");

  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Generate a synthetic contextual-emotion corpus");
  data::SyntheticOptions synth;
  std::vector<std::size_t> split;
  gen_cmd->add_option("--n", synth.n_conversations, "Conversations")->capture_default_str();
  gen_cmd->add_option("--min-len", synth.min_len)->capture_default_str();
  gen_cmd->add_option("--max-len", synth.max_len)->capture_default_str();
  gen_cmd->add_option("--classes", synth.n_classes)->capture_default_str();
  gen_cmd->add_option("--carry", synth.carry_prob, "Context-carry probability")->capture_default_str();
  gen_cmd->add_option("--split", split, "train,val,test conversation counts")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitConfig;
  }

  auto load_run_config = [&]() {
    if (config_path.empty()) throw ConfigError("config", "--config is required");
    RunConfig cfg = load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.train.seed = *seed;
    }
    if (!out_path.empty()) cfg.out_dir = out_path;
    return cfg;
  };

  if (*train_cmd || *sweep_cmd) {
    RunConfig cfg;
    const int rc = guarded(err, [&] {
      cfg = load_run_config();
      return kExitOk;
    });
    if (rc != kExitOk) return rc;
    if (print_config) {
      out << to_config_text(cfg);
      return kExitOk;
    }
    return *train_cmd ? cmd_train(cfg, repeat, out, err) : cmd_sweep_k(cfg, ks, out, err);
  }
  if (*eval_cmd) return cmd_eval(checkpoint, corpus, report_path, out, err);
  if (*export_cmd) return cmd_export_attention(checkpoint, corpus, out_path, out, err);
  if (*grad_cmd) {
    std::optional<ad::OpKind> kind;
    if (!corrupt.empty()) {
      kind = parse_op(corrupt);
      if (!kind) {
        err << "config error: corrupt: unknown op '" << corrupt << "'\n";
        return kExitConfig;
      }
    }
    return cmd_grad_check(seed.value_or(1), kind, out, err);
  }
  if (*gen_cmd) {
    synth.seed = seed.value_or(synth.seed);
    return cmd_gen_synthetic(synth, split, out_path, out, err);
  }
  return kExitConfig;
}

}  // namespace aghmn::cli
