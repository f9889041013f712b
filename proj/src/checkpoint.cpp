#include "aghmn/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace aghmn::cli {

using nlohmann::ordered_json;

namespace {

ordered_json model_to_json(const model::ModelConfig& m) {
  return {{"word_dim", m.word_dim},
          {"hidden", m.hidden},
          {"window", m.window},
          {"n_classes", m.n_classes},
          {"reader", model::to_string(m.reader)},
          {"fusion", model::to_string(m.fusion)},
          {"summarizer", model::to_string(m.summarizer)},
          {"dropout", m.dropout},
          {"cnn_maps", m.cnn_maps},
          {"cnn_widths", m.cnn_widths}};
}

model::ModelConfig model_from_json(const ordered_json& j) {
  model::ModelConfig m;
  m.word_dim = j.at("word_dim").get<std::size_t>();
  m.hidden = j.at("hidden").get<std::size_t>();
  m.window = j.at("window").get<std::size_t>();
  m.n_classes = j.at("n_classes").get<std::size_t>();
  m.reader = model::parse_reader(j.at("reader").get<std::string>());
  m.fusion = model::parse_fusion(j.at("fusion").get<std::string>());
  m.summarizer = model::parse_summarizer(j.at("summarizer").get<std::string>());
  m.dropout = j.at("dropout").get<double>();
  m.cnn_maps = j.at("cnn_maps").get<std::size_t>();
  m.cnn_widths = j.at("cnn_widths").get<std::vector<std::size_t>>();
  return m;
}

}  // namespace

std::string config_digest(const model::ModelConfig& cfg, const std::vector<std::string>& labels,
                          const std::vector<std::string>& vocab) {
  const ordered_json canon = {{"model", model_to_json(cfg)}, {"labels", labels}, {"vocab", vocab}};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Checkpoint make_checkpoint(const model::AghmnModel& model, const data::LabelSet& labels,
                           const data::Vocabulary& vocab) {
  Checkpoint c;
  c.model = model.config();
  c.labels = labels.names();
  c.vocab.assign(vocab.words().begin() + 1, vocab.words().end());
  c.params = model.params().snapshot();
  c.digest = config_digest(c.model, c.labels, c.vocab);
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ordered_json params = ordered_json::array();
  for (const auto& [name, t] : ckpt.params) {
    params.push_back({{"name", name}, {"shape", t.shape()}, {"data", t.storage()}});
  }
  const ordered_json j = {{"format", "aghmn-checkpoint"},
                          {"version", kCheckpointVersion},
                          {"digest", ckpt.digest},
                          {"model", model_to_json(ckpt.model)},
                          {"labels", ckpt.labels},
                          {"vocab", ckpt.vocab},
                          {"params", params}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  Checkpoint c;
  try {
    if (j.at("format").get<std::string>() != "aghmn-checkpoint") throw CheckpointError("unrecognized format");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) throw CheckpointError("unsupported version " + std::to_string(version));
    c.model = model_from_json(j.at("model"));
    c.labels = j.at("labels").get<std::vector<std::string>>();
    c.vocab = j.at("vocab").get<std::vector<std::string>>();
    c.digest = j.at("digest").get<std::string>();
    for (const auto& p : j.at("params")) {
      c.params.emplace(p.at("name").get<std::string>(),
                       Tensor(p.at("shape").get<Shape>(), p.at("data").get<std::vector<double>>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint '" + path + "' is malformed: " + e.what());
  } catch (const ContractError& e) {
    throw CheckpointError("checkpoint '" + path + "' is malformed: " + e.what());
  }
  if (config_digest(c.model, c.labels, c.vocab) != c.digest) {
    throw CheckpointError("checkpoint '" + path + "' config digest mismatch");
  }
  return c;
}

std::unique_ptr<model::AghmnModel> instantiate(const Checkpoint& ckpt) {
  const auto emb = ckpt.params.find("embedding");
  if (emb == ckpt.params.end()) throw CheckpointError("checkpoint has no embedding table");
  if (emb->second.rank() != 2 || emb->second.dim(0) != ckpt.vocab.size() + 1) {
    throw CheckpointError("embedding table does not match vocabulary size");
  }
  data::EmbeddingTable table{emb->second, std::vector<bool>(emb->second.dim(0), false)};
  auto model = std::make_unique<model::AghmnModel>(ckpt.model, table, 0);
  try {
    model->params().restore(ckpt.params);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint parameters do not fit the configured variant: ") + e.what());
  }
  return model;
}

}  // namespace aghmn::cli
