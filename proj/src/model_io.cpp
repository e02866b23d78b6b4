#include <cstdio>
#include <fstream>
#include <sstream>

#include "dbdiag/detector.hpp"
#include "dbdiag/error.hpp"

namespace dbdiag::detector {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "dbdiag-model";

json tensor_to_json(const Tensor& t) { return {{"shape", t.shape()}, {"values", t.values()}}; }

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                j.at("values").get<std::vector<double>>());
}

json named_tensors(const std::vector<nn::Parameter>& params) {
  json out = json::object();
  for (const auto& p : params) out[p.name] = tensor_to_json(p.value);
  return out;
}

void load_named(std::vector<nn::Parameter>& params, const json& j, std::size_t layer) {
  for (auto& p : params) {
    if (!j.contains(p.name)) {
      throw ModelError("layer " + std::to_string(layer) + " is missing '" + p.name + "'");
    }
    Tensor t = tensor_from_json(j.at(p.name));
    if (t.shape() != p.value.shape()) {
      throw ModelError("layer " + std::to_string(layer) + " '" + p.name + "' has the wrong shape");
    }
    p.value = std::move(t);
  }
}

}  // namespace

std::string model_checksum(const json& doc) {
  const std::string text = doc.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json model_to_json(const Model& model) {
  json doc;
  doc["format"] = kFormatName;
  doc["version"] = kModelFormatVersion;
  doc["architecture"] = model.architecture.text;
  doc["steps"] = model.steps;
  doc["features"] = model.norm.names;
  doc["normalization"] = {{"mean", model.norm.mean}, {"std", model.norm.stdev}};

  json layers = json::array();
  for (std::size_t i = 0; i < model.network.layer_count(); ++i) {
    const nn::Layer& l = model.network.layer(i);
    json lj;
    lj["kind"] = std::string(nn::kind_name(l.kind()));
    lj["input_width"] = l.input_width();
    lj["output_width"] = l.output_width();
    lj["parameters"] = named_tensors(l.parameters());
    lj["buffers"] = named_tensors(l.buffers());
    layers.push_back(std::move(lj));
  }
  doc["layers"] = std::move(layers);

  const TrainingMetadata& t = model.training;
  doc["training"] = {
      {"seed", t.seed},
      {"epochs_run", t.epochsRun},
      {"best_epoch", t.bestEpoch},
      {"final_train_mse", t.finalTrainLoss},
      {"final_validation_mse", t.finalValidationLoss},
      {"test_mse", t.testMse},
      {"learning_rate", t.config.learningRate},
      {"l2_lambda", t.config.l2Lambda},
      {"batch_size", t.config.batchSize},
      {"max_epochs", t.config.maxEpochs},
      {"patience", t.config.patience},
      {"baseline", {{"center", t.baselineCenter}, {"sigma", t.baselineSigma}}},
  };
  doc["checksum"] = model_checksum(doc);
  return doc;
}

Model model_from_json(const json& input) {
  try {
    if (!input.is_object() || input.value("format", "") != kFormatName) {
      throw ModelError("not a dbdiag model file");
    }
    const int version = input.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw ModelError("unsupported model format version " + std::to_string(version) +
                       " (expected " + std::to_string(kModelFormatVersion) + ")");
    }
    json body = input;
    const std::string stored = body.at("checksum").get<std::string>();
    body.erase("checksum");
    if (model_checksum(body) != stored) throw ModelError("model checksum mismatch");

    Model m;
    m.architecture = parse_architecture(body.at("architecture").get<std::string>());
    m.steps = body.at("steps").get<std::size_t>();
    m.norm.names = body.at("features").get<std::vector<std::string>>();
    m.norm.mean = body.at("normalization").at("mean").get<std::vector<double>>();
    m.norm.stdev = body.at("normalization").at("std").get<std::vector<double>>();
    if (m.norm.mean.size() != m.norm.names.size() || m.norm.stdev.size() != m.norm.names.size()) {
      throw ModelError("normalization moments do not match the feature list");
    }
    m.network = build_network(m.architecture, m.shape(), 0);
    const json& layers = body.at("layers");
    if (layers.size() != m.network.layer_count()) {
      throw ModelError("layer count does not match architecture '" + m.architecture.text + "'");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      nn::Layer& l = m.network.layer(i);
      if (layers[i].at("kind").get<std::string>() != nn::kind_name(l.kind())) {
        throw ModelError("layer " + std::to_string(i) + " kind does not match the architecture");
      }
      load_named(l.parameters(), layers[i].at("parameters"), i);
      load_named(l.buffers(), layers[i].at("buffers"), i);
    }

    const json& t = body.at("training");
    TrainingMetadata& meta = m.training;
    meta.seed = t.at("seed").get<std::uint64_t>();
    meta.epochsRun = t.at("epochs_run").get<std::size_t>();
    meta.bestEpoch = t.at("best_epoch").get<std::size_t>();
    meta.finalTrainLoss = t.at("final_train_mse").get<double>();
    meta.finalValidationLoss = t.at("final_validation_mse").get<double>();
    meta.testMse = t.at("test_mse").get<double>();
    meta.config.learningRate = t.at("learning_rate").get<double>();
    meta.config.l2Lambda = t.at("l2_lambda").get<double>();
    meta.config.batchSize = t.at("batch_size").get<std::size_t>();
    meta.config.maxEpochs = t.at("max_epochs").get<std::size_t>();
    meta.config.patience = t.at("patience").get<std::size_t>();
    meta.config.seed = meta.seed;
    meta.config.steps = m.steps;
    meta.baselineCenter = t.at("baseline").at("center").get<std::vector<double>>();
    meta.baselineSigma = t.at("baseline").at("sigma").get<std::vector<double>>();
    return m;
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw ModelError(std::string("invalid model file: ") + e.what());
  }
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ModelError("cannot write model file " + path.string());
  out << model_to_json(model).dump(1) << '\n';
  if (!out) throw ModelError("failed writing model file " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ModelError("model file " + path.string() + " is truncated or malformed: " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace dbdiag::detector
