#ifndef DOCTRIAGE_CONFIG_HPP
#define DOCTRIAGE_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctriage/aggregate.hpp"
#include "doctriage/error.hpp"
#include "doctriage/fsutil.hpp"
#include "doctriage/model.hpp"
#include "doctriage/ocr.hpp"
#include "doctriage/train.hpp"

namespace doctriage {

// One JSON config file drives the whole pipeline; CLI flags override fields.
struct PipelineConfig {
  std::filesystem::path dataset_root = ".";
  std::uint64_t seed = 42;
  int jobs = 1;

  OcrConfig ocr;

  std::string backbone_model = "stub";  // path to an ONNX file, or "stub"
  std::string backbone_layer;           // output layer name, empty = network output
  int image_dim = 4096;
  std::filesystem::path feature_cache_dir = ".feat-cache";

  std::filesystem::path embeddings;  // word-vector text file
  EncoderDims encoder;
  int l_max = kDefaultMaxTokens;
  bool finetune_embeddings = false;
  int fusion_dim = 256;

  TrainConfig train;
  CorrectionConfig correction;

  ModelDims model_dims() const {
    ModelDims dims;
    dims.encoder = encoder;
    dims.image_dim = image_dim;
    dims.fusion_dim = fusion_dim;
    return dims;
  }
};

inline nlohmann::json pipeline_config_to_json(const PipelineConfig& c) {
  nlohmann::json rules = nlohmann::json::array();
  if (c.correction.enable_catalog_maps) rules.push_back("catalog_maps");
  if (c.correction.enable_article_thesis) rules.push_back("article_thesis");
  return nlohmann::json{
      {"dataset_root", c.dataset_root.string()},
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"ocr",
       {{"binary", c.ocr.binary},
        {"langs", c.ocr.langs},
        {"timeout_s", c.ocr.timeout_s},
        {"lenient", c.ocr.lenient},
        {"cache_dir", c.ocr.cache_dir.string()}}},
      {"backbone_model", c.backbone_model},
      {"backbone_layer", c.backbone_layer},
      {"image_dim", c.image_dim},
      {"feature_cache_dir", c.feature_cache_dir.string()},
      {"embeddings", c.embeddings.string()},
      {"encoder",
       {{"d_emb", c.encoder.d_emb},
        {"hidden", c.encoder.hidden},
        {"attention", c.encoder.attention},
        {"l_max", c.l_max},
        {"finetune_embeddings", c.finetune_embeddings}}},
      {"fusion_dim", c.fusion_dim},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"epsilon", c.train.epsilon},
        {"batch_size", c.train.batch_size},
        {"max_epochs", c.train.max_epochs},
        {"patience", c.train.patience},
        {"dropout", c.train.dropout},
        {"seed", c.train.seed}}},
      {"correction",
       {{"tau_low", c.correction.tau_low},
        {"delta_margin", c.correction.delta_margin},
        {"rules", rules}}},
  };
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  c.dataset_root = j.value("dataset_root", c.dataset_root.string());
  c.seed = j.value("seed", c.seed);
  c.jobs = j.value("jobs", c.jobs);
  if (j.contains("ocr")) {
    const auto& o = j.at("ocr");
    c.ocr.binary = o.value("binary", c.ocr.binary);
    if (o.contains("langs")) c.ocr.langs = o.at("langs").get<std::vector<std::string>>();
    c.ocr.timeout_s = o.value("timeout_s", c.ocr.timeout_s);
    c.ocr.lenient = o.value("lenient", c.ocr.lenient);
    c.ocr.cache_dir = o.value("cache_dir", c.ocr.cache_dir.string());
  }
  c.backbone_model = j.value("backbone_model", c.backbone_model);
  c.backbone_layer = j.value("backbone_layer", c.backbone_layer);
  c.image_dim = j.value("image_dim", c.image_dim);
  c.feature_cache_dir = j.value("feature_cache_dir", c.feature_cache_dir.string());
  c.embeddings = j.value("embeddings", c.embeddings.string());
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    c.encoder.d_emb = e.value("d_emb", c.encoder.d_emb);
    c.encoder.hidden = e.value("hidden", c.encoder.hidden);
    c.encoder.attention = e.value("attention", c.encoder.attention);
    c.l_max = e.value("l_max", c.l_max);
    c.finetune_embeddings = e.value("finetune_embeddings", c.finetune_embeddings);
  }
  c.fusion_dim = j.value("fusion_dim", c.fusion_dim);
  c.train.seed = c.seed;  // single config seed unless train.seed overrides
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
    c.train.beta1 = t.value("beta1", c.train.beta1);
    c.train.beta2 = t.value("beta2", c.train.beta2);
    c.train.epsilon = t.value("epsilon", c.train.epsilon);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
    c.train.patience = t.value("patience", c.train.patience);
    c.train.dropout = t.value("dropout", c.train.dropout);
    c.train.seed = t.value("seed", c.train.seed);
  }
  if (j.contains("correction")) {
    const auto& r = j.at("correction");
    c.correction.tau_low = r.value("tau_low", c.correction.tau_low);
    c.correction.delta_margin = r.value("delta_margin", c.correction.delta_margin);
    if (r.contains("rules")) {
      const auto rules = r.at("rules").get<std::vector<std::string>>();
      c.correction.enable_catalog_maps = false;
      c.correction.enable_article_thesis = false;
      for (const auto& rule : rules) {
        if (rule == "catalog_maps") {
          c.correction.enable_catalog_maps = true;
        } else if (rule == "article_thesis") {
          c.correction.enable_article_thesis = true;
        } else {
          throw ConfigError("unknown correction rule: " + rule);
        }
      }
    }
  }
  if (c.jobs < 1) throw ConfigError("jobs must be >= 1");
  return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("config file not found: " + path.string());
  }
  try {
    return pipeline_config_from_json(nlohmann::json::parse(read_file_bytes(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
}

// Effective-config provenance dropped next to every output artifact.
inline void write_config_lock(const PipelineConfig& config,
                              const std::filesystem::path& out_dir) {
  write_file_atomic(out_dir / "config.lock.json",
                    pipeline_config_to_json(config).dump(2) + "\n");
}

}  // namespace doctriage

#endif  // DOCTRIAGE_CONFIG_HPP
