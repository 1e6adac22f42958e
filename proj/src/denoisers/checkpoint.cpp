#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "difflab/core/errors.hpp"
#include "difflab/denoisers/checkpoint.hpp"
#include "difflab/denoisers/mlp.hpp"
#include "difflab/denoisers/tabular.hpp"

namespace difflab {

namespace {

constexpr int kVersion = 1;

std::string double_to_hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double hex_to_double(const std::string& s) {
  return std::strtod(s.c_str(), nullptr);
}

std::string schedule_name(ScheduleKind kind) {
  return kind == ScheduleKind::linear ? "linear" : "cosine";
}

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw ArtifactError("checkpoint: unknown schedule kind '" + name + "'");
}

}  // namespace

void atomic_write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open for writing: " + tmp);
    out << content;
    if (!out.good()) throw ConfigError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::string& path, const Denoiser& model, const CheckpointMeta& meta) {
  nlohmann::json doc;
  doc["format"] = "difflab-checkpoint";
  doc["version"] = kVersion;
  doc["vocab"] = {{"size_k", model.vocab().size_k}, {"mask_index", model.vocab().mask_index}};
  doc["schedule"] = schedule_name(meta.schedule);
  doc["objective"] = meta.objective;

  nlohmann::json arch;
  arch["type"] = model.architecture_name();
  if (const auto* mlp = dynamic_cast<const MlpDenoiser*>(&model)) {
    const MlpConfig& cfg = mlp->config();
    arch["length"] = cfg.length;
    arch["hidden"] = cfg.hidden;
    arch["time_features"] = cfg.time_features;
    arch["time_conditioned"] = cfg.time_conditioned;
    arch["init_seed"] = cfg.init_seed;
    arch["init_scale"] = cfg.init_scale;
  } else if (const auto* tab = dynamic_cast<const TabularDenoiser*>(&model)) {
    arch["length"] = tab->length();
    arch["scope"] = static_cast<int>(tab->scope());
    arch["time_conditioned"] = tab->time_conditioned();
    arch["frozen"] = tab->frozen();
    arch["bucket_times"] = tab->bucket_times();
  } else {
    throw ArtifactError("save_checkpoint: unsupported architecture " + model.architecture_name());
  }
  doc["architecture"] = arch;

  std::vector<std::string> params;
  params.reserve(model.parameter_count());
  for (double v : model.parameters()) params.push_back(double_to_hex(v));
  doc["parameters_hex"] = std::move(params);

  atomic_write_text(path, doc.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("checkpoint not found: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError("checkpoint parse failure: " + std::string(e.what()));
  }
  if (doc.value("format", "") != "difflab-checkpoint") {
    throw ArtifactError("not a difflab checkpoint: " + path);
  }
  if (doc.value("version", -1) != kVersion) {
    throw ArtifactError("unsupported checkpoint version in " + path);
  }
  const Vocab vocab(doc["vocab"]["size_k"].get<int>(), doc["vocab"]["mask_index"].get<int>());
  CheckpointMeta meta{doc.value("objective", ""), parse_schedule(doc["schedule"].get<std::string>())};

  const auto& arch = doc["architecture"];
  const std::string type = arch["type"].get<std::string>();
  std::unique_ptr<Denoiser> model;
  if (type == "mlp") {
    MlpConfig cfg;
    cfg.vocab = vocab;
    cfg.length = arch["length"].get<int>();
    cfg.hidden = arch["hidden"].get<std::vector<int>>();
    cfg.time_features = arch["time_features"].get<int>();
    cfg.time_conditioned = arch["time_conditioned"].get<bool>();
    cfg.init_seed = arch["init_seed"].get<std::uint64_t>();
    cfg.init_scale = arch["init_scale"].get<double>();
    model = std::make_unique<MlpDenoiser>(cfg);
  } else if (type == "tabular") {
    auto table = std::make_unique<TabularDenoiser>(
        vocab, arch["length"].get<int>(), arch["bucket_times"].get<std::vector<double>>(),
        static_cast<TabularScope>(arch["scope"].get<int>()),
        arch["time_conditioned"].get<bool>());
    if (arch.value("frozen", false)) table->freeze_as_probabilities();
    model = std::move(table);
  } else {
    throw ArtifactError("checkpoint: unknown architecture type '" + type + "'");
  }

  const auto& params = doc["parameters_hex"];
  if (params.size() != model->parameter_count()) {
    throw ArtifactError("checkpoint: parameter count mismatch");
  }
  auto dst = model->parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = hex_to_double(params[i].get<std::string>());
  }
  return {std::move(model), std::move(meta)};
}

}  // namespace difflab
