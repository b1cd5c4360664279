#ifndef DOCTRIAGE_PIPELINE_HPP
#define DOCTRIAGE_PIPELINE_HPP

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctriage/aggregate.hpp"
#include "doctriage/config.hpp"
#include "doctriage/embeddings.hpp"
#include "doctriage/image.hpp"
#include "doctriage/manifest.hpp"
#include "doctriage/model.hpp"
#include "doctriage/ocr.hpp"
#include "doctriage/parallel.hpp"
#include "doctriage/train.hpp"

namespace doctriage {

// page_id -> raw OCR text, as produced by the ocr subcommand.
using TextStore = std::map<std::string, std::string>;

inline TextStore text_store_from_json(const nlohmann::json& j) {
  TextStore store;
  for (const auto& [key, value] : j.items()) store[key] = value.get<std::string>();
  return store;
}

inline nlohmann::json text_store_to_json(const TextStore& store) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [key, value] : store) out[key] = value;
  return out;
}

inline std::shared_ptr<ImageExtractor> make_extractor(const PipelineConfig& config) {
  if (config.backbone_model == "stub") {
    return std::make_shared<StubExtractor>(config.image_dim);
  }
  return std::make_shared<OnnxExtractor>(config.backbone_model, config.backbone_layer,
                                         config.image_dim);
}

// Assembles model-ready features for manifest pages: cached frozen image
// features plus embedded OCR tokens. A run uses exactly one extractor, so
// extractor ids cannot mix; a stale cache entry from another extractor is
// keyed away by id.
class FeaturePipeline {
 public:
  FeaturePipeline(const PipelineConfig& config, Mode mode)
      : config_(config),
        mode_(mode),
        ocr_(config.ocr),
        feature_cache_(config.feature_cache_dir) {
    if (mode_ != Mode::text_only) extractor_ = make_extractor(config);
    if (mode_ != Mode::image_only) {
      if (config.embeddings.empty()) {
        throw ConfigError("embeddings file required for text branch");
      }
      table_ = load_embeddings(config.embeddings, config.encoder.d_emb);
    }
  }

  void set_texts(TextStore texts) { texts_ = std::move(texts); }
  std::string extractor_id() const { return extractor_ ? extractor_->id() : std::string(); }

  // Per-page feature assembly; safe to call from parallel workers.
  TrainSample build_sample(const PageRecord& page,
                           std::vector<OcrWarning>* warnings = nullptr) const {
    TrainSample sample;
    sample.label = page.label;
    if (mode_ != Mode::text_only) {
      sample.image = image_feature(page.image_path);
    }
    if (mode_ != Mode::image_only) {
      const std::string raw = page_text(page, warnings);
      const TokenSequence seq = normalize_text(raw, config_.l_max);
      sample.tokens = embed_tokens(seq.tokens, *table_);
      sample.token_rows.reserve(seq.tokens.size());
      for (const auto& token : seq.tokens) {
        sample.token_rows.push_back(table_->vocab_row(token));
      }
    } else {
      sample.tokens = Mat(0, config_.encoder.d_emb);
    }
    return sample;
  }

  std::vector<TrainSample> build_samples(const DatasetManifest& manifest, Split split,
                                         std::vector<OcrWarning>* warnings = nullptr) const {
    std::vector<const PageRecord*> selected;
    for (const auto& page : manifest.pages) {
      if (!page.source_doc && page.split == split) selected.push_back(&page);
    }
    std::vector<TrainSample> samples(selected.size());
    std::vector<std::vector<OcrWarning>> local(selected.size());
    parallel_for(selected.size(), config_.jobs, [&](std::size_t i) {
      samples[i] = build_sample(*selected[i], warnings ? &local[i] : nullptr);
    });
    if (warnings) {
      for (auto& chunk : local) {
        warnings->insert(warnings->end(), chunk.begin(), chunk.end());
      }
    }
    return samples;
  }

  Vec image_feature(const std::filesystem::path& image_path) const {
    const std::string bytes = read_file_bytes(image_path);
    const std::string hash = sha256_hex(bytes);
    if (auto cached = feature_cache_.get(hash, extractor_->id())) return *cached;
    const ImageTensor tensor = preprocess_image(bytes);
    Vec feature = extractor_->extract(tensor);
    // round through the cache's f32 precision so hit and miss paths agree
    for (Eigen::Index i = 0; i < feature.size(); ++i) {
      feature[i] = static_cast<double>(static_cast<float>(feature[i]));
    }
    feature_cache_.put(hash, extractor_->id(), feature);
    return feature;
  }

  const EmbeddingTable& table() const { return *table_; }
  const OcrEngine& ocr() const { return ocr_; }

 private:
  std::string page_text(const PageRecord& page, std::vector<OcrWarning>* warnings) const {
    const auto it = texts_.find(page.page_id);
    if (it != texts_.end()) return it->second;
    try {
      return ocr_.extract_text(page.image_path, page.page_id, warnings).raw_text;
    } catch (const ConfigError&) {
      // no engine resolvable: lenient pipelines treat text as absent
      if (!config_.ocr.lenient) throw;
      if (warnings) warnings->push_back({page.page_id, "no OCR engine, using empty text"});
      return "";
    }
  }

  PipelineConfig config_;
  Mode mode_;
  OcrEngine ocr_;
  FeatureCache feature_cache_;
  std::shared_ptr<ImageExtractor> extractor_;
  std::optional<EmbeddingTable> table_;
  TextStore texts_;
};

// Runs the full per-page pipeline over an ordered document and aggregates.
// In lenient mode a failing page is skipped with an audit note; strict mode
// rethrows.
inline DocumentPrediction classify_document(const std::string& doc_id,
                                            const std::vector<std::filesystem::path>& pages,
                                            const ModelParams& params,
                                            const FeaturePipeline& pipeline,
                                            const CorrectionConfig& correction,
                                            bool lenient, int jobs = 1) {
  if (pages.empty()) throw DataError("document has no pages: " + doc_id);

  std::vector<std::optional<Prediction>> slots(pages.size());
  std::vector<std::string> notes(pages.size());
  parallel_for(pages.size(), jobs, [&](std::size_t i) {
    try {
      PageRecord record;
      record.page_id = doc_id + "/" + pages[i].filename().string();
      record.image_path = pages[i];
      record.label = ClassLabel(0);  // unused for inference
      const TrainSample sample = pipeline.build_sample(record);
      slots[i] = predict_sample(params, sample);
    } catch (const std::exception& e) {
      if (!lenient) throw;
      notes[i] = "page " + pages[i].filename().string() + " skipped: " + e.what();
    }
  });

  std::vector<Prediction> predictions;
  std::vector<std::string> audit;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) {
      predictions.push_back(std::move(*slots[i]));
    } else if (!notes[i].empty()) {
      audit.push_back(notes[i]);
    }
  }
  if (predictions.empty()) {
    throw DataError("no page of document " + doc_id + " could be classified");
  }
  DocumentPrediction doc = aggregate_document(doc_id, std::move(predictions), correction);
  doc.notes = std::move(audit);
  return doc;
}

}  // namespace doctriage

#endif  // DOCTRIAGE_PIPELINE_HPP
