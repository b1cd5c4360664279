// doc-triage: document-type classification pipeline for digital-library
// ingestion. Subcommands: ingest, ocr, train, eval, classify, report.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "doctriage/aggregate.hpp"
#include "doctriage/checkpoint.hpp"
#include "doctriage/config.hpp"
#include "doctriage/manifest.hpp"
#include "doctriage/metrics.hpp"
#include "doctriage/ocr.hpp"
#include "doctriage/pipeline.hpp"
#include "doctriage/train.hpp"

namespace {

using namespace doctriage;
namespace fs = std::filesystem;

struct GlobalOpts {
  std::string config_path;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  bool json_errors = false;
};

PipelineConfig effective_config(const GlobalOpts& global) {
  PipelineConfig config;
  if (!global.config_path.empty()) config = load_pipeline_config(global.config_path);
  if (global.jobs) {
    if (*global.jobs < 1) throw UsageError("--jobs must be >= 1");
    config.jobs = *global.jobs;
  }
  if (global.seed) {
    config.seed = *global.seed;
    config.train.seed = *global.seed;
  }
  return config;
}

fs::path out_dir_of(const fs::path& out_file) {
  const fs::path parent = out_file.parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

void print_warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

int cmd_ingest(const GlobalOpts& global, const std::string& root,
               const std::string& out_path) {
  PipelineConfig config = effective_config(global);
  if (!root.empty()) config.dataset_root = root;

  LoadOptions options;
  options.jobs = config.jobs;
  options.warn = print_warn;
  DatasetManifest manifest = load_manifest(config.dataset_root, options);
  manifest = split_dataset(std::move(manifest), SplitRatios{}, config.seed, print_warn);

  const ValidationReport report = validate_manifest(manifest);
  for (const auto& issue : report.issues) {
    std::cerr << "validation: " << issue.kind << ": " << issue.detail << "\n";
  }

  save_manifest(manifest, out_path);
  write_config_lock(config, out_dir_of(out_path));
  std::cout << "manifest: " << manifest.pages.size() << " pages ("
            << manifest.single_page_count() << " single-page), "
            << manifest.documents.size() << " documents, "
            << report.issues.size() << " validation issues\n";
  return 0;
}

int cmd_ocr(const GlobalOpts& global, const std::string& manifest_path,
            std::string out_path) {
  PipelineConfig config = effective_config(global);
  const DatasetManifest manifest = load_manifest_file(manifest_path);
  if (out_path.empty()) {
    out_path = (out_dir_of(manifest_path) / "texts.json").string();
  }

  bool engine_available = true;
  try {
    resolve_ocr_binary(config.ocr);
  } catch (const ConfigError& e) {
    if (!config.ocr.lenient) throw;
    print_warn(std::string(e.what()) + "; emitting empty transcripts");
    engine_available = false;
  }

  const OcrEngine engine(config.ocr);
  std::vector<std::string> texts(manifest.pages.size());
  std::vector<std::vector<OcrWarning>> warnings(manifest.pages.size());
  if (engine_available) {
    parallel_for(manifest.pages.size(), config.jobs, [&](std::size_t i) {
      texts[i] =
          engine.extract_text(manifest.pages[i].image_path, manifest.pages[i].page_id,
                              &warnings[i])
              .raw_text;
    });
  }

  TextStore store;
  for (std::size_t i = 0; i < manifest.pages.size(); ++i) {
    store[manifest.pages[i].page_id] = texts[i];
    for (const auto& w : warnings[i]) print_warn(w.page_id + ": " + w.message);
  }
  write_file_atomic(out_path, text_store_to_json(store).dump(2) + "\n");
  write_config_lock(config, out_dir_of(out_path));

  std::size_t nonempty = 0;
  for (const auto& [id, text] : store) {
    if (!text.empty()) ++nonempty;
  }
  std::cout << "ocr: " << store.size() << " pages, " << nonempty << " with text\n";
  return 0;
}

TextStore load_texts(const std::string& path) {
  if (path.empty()) return {};
  if (!fs::exists(path)) throw DataError("texts file not found: " + path);
  return text_store_from_json(nlohmann::json::parse(read_file_bytes(path)));
}

int cmd_train(const GlobalOpts& global, const std::string& manifest_path,
              const std::string& mode_name_arg, const std::string& out_path,
              const std::string& texts_path, bool finetune_flag) {
  PipelineConfig config = effective_config(global);
  if (finetune_flag) config.finetune_embeddings = true;
  const Mode mode = mode_from_name(mode_name_arg);
  const DatasetManifest manifest = load_manifest_file(manifest_path);

  FeaturePipeline pipeline(config, mode);
  pipeline.set_texts(load_texts(texts_path));

  std::vector<OcrWarning> warnings;
  const auto train_set = pipeline.build_samples(manifest, Split::train, &warnings);
  const auto val_set = pipeline.build_samples(manifest, Split::val, &warnings);
  for (const auto& w : warnings) print_warn(w.page_id + ": " + w.message);

  const bool tune = config.finetune_embeddings && mode != Mode::image_only;
  std::optional<EmbeddingTable> tuned;
  if (tune) tuned = pipeline.table();  // mutable copy, updated in place

  const TrainResult result =
      train(train_set, val_set, config.model_dims(), mode, config.train, config.jobs,
            tune ? &*tuned : nullptr);

  save_checkpoint(out_path, result.params, pipeline_config_to_json(config)["train"]);
  write_file_atomic(out_path + ".history.csv", history_to_csv(result.history));
  if (tune) save_embeddings(*tuned, out_path + ".embeddings.txt");
  write_config_lock(config, out_dir_of(out_path));

  std::cout << "trained " << mode_name(mode) << " model: " << result.history.size()
            << " epochs, best epoch " << result.best_epoch << ", checkpoint " << out_path
            << "\n";
  return 0;
}

int cmd_eval(const GlobalOpts& global, const std::string& model_path,
             const std::string& manifest_path, const std::string& split_arg,
             const std::string& report_dir, const std::string& texts_path) {
  PipelineConfig config = effective_config(global);
  const Checkpoint ckpt = load_checkpoint(model_path);

  // the checkpoint is authoritative for model dimensions
  config.encoder = ckpt.params.dims.encoder;
  config.image_dim = ckpt.params.dims.image_dim;
  config.fusion_dim = ckpt.params.dims.fusion_dim;

  const DatasetManifest manifest = load_manifest_file(manifest_path);
  const Split split = split_from_name(split_arg);

  FeaturePipeline pipeline(config, ckpt.params.mode);
  pipeline.set_texts(load_texts(texts_path));

  std::vector<OcrWarning> warnings;
  const auto samples = pipeline.build_samples(manifest, split, &warnings);
  for (const auto& w : warnings) print_warn(w.page_id + ": " + w.message);

  const EvalResult result = evaluate(ckpt.params, samples, config.jobs);
  const EvalReport report = summarize(result.confusion);
  export_report(result.confusion, report, report_dir);

  // per-page predictions in manifest order, for auditing and diffing
  nlohmann::json preds = nlohmann::json::object();
  std::size_t k = 0;
  for (const auto& page : manifest.pages) {
    if (page.source_doc || page.split != split) continue;
    const Prediction& p = result.predictions[k++];
    preds[page.page_id] = {{"top1", std::string(p.top1.name())},
                           {"top1_conf", p.top1_conf},
                           {"top2", std::string(p.top2.name())},
                           {"top2_conf", p.top2_conf},
                           {"true", std::string(page.label.name())}};
  }
  write_file_atomic(fs::path(report_dir) / "predictions.json", preds.dump(2) + "\n");
  write_config_lock(config, report_dir);

  std::cout << "eval " << split_arg << ": accuracy " << report.accuracy << " over "
            << report.total << " pages; report in " << report_dir << "\n";
  return 0;
}

int cmd_classify(const GlobalOpts& global, const std::string& model_path,
                 const std::string& doc_dir, const std::string& out_path,
                 bool no_corrections, std::optional<double> tau_low,
                 std::optional<double> delta, const std::string& texts_path) {
  PipelineConfig config = effective_config(global);
  const Checkpoint ckpt = load_checkpoint(model_path);
  config.encoder = ckpt.params.dims.encoder;
  config.image_dim = ckpt.params.dims.image_dim;
  config.fusion_dim = ckpt.params.dims.fusion_dim;

  CorrectionConfig correction = config.correction;
  if (no_corrections) {
    correction.enable_catalog_maps = false;
    correction.enable_article_thesis = false;
  }
  if (tau_low) correction.tau_low = *tau_low;
  if (delta) correction.delta_margin = *delta;

  if (!fs::is_directory(doc_dir)) throw DataError("document directory not found: " + doc_dir);
  std::vector<fs::path> pages;
  for (const auto& entry : fs::directory_iterator(doc_dir)) {
    if (entry.is_regular_file() && detail::has_image_extension(entry.path())) {
      pages.push_back(entry.path());
    }
  }
  std::sort(pages.begin(), pages.end());
  if (pages.empty()) throw DataError("no page images in " + doc_dir);

  FeaturePipeline pipeline(config, ckpt.params.mode);
  pipeline.set_texts(load_texts(texts_path));

  const DocumentPrediction doc =
      classify_document(fs::path(doc_dir).filename().string(), pages, ckpt.params,
                        pipeline, correction, config.ocr.lenient, config.jobs);

  write_file_atomic(out_path, document_prediction_to_json(doc).dump(2) + "\n");
  write_config_lock(config, out_dir_of(out_path));

  std::cout << "document " << doc.doc_id << ": raw " << doc.raw_label.name()
            << ", corrected " << doc.corrected_label.name() << " ("
            << doc.applied_rules.size() << " rules applied)\n";
  return 0;
}

int cmd_report(const GlobalOpts& global, const std::string& confusion_csv,
               const std::string& out_dir) {
  PipelineConfig config = effective_config(global);
  if (!fs::exists(confusion_csv)) {
    throw DataError("confusion csv not found: " + confusion_csv);
  }
  const ConfusionMatrix matrix = confusion_from_csv(read_file_bytes(confusion_csv));
  export_report(matrix, summarize(matrix), out_dir);
  write_config_lock(config, out_dir);
  std::cout << "report rebuilt in " << out_dir << "\n";
  return 0;
}

int error_exit(const GlobalOpts& global, const char* kind, const std::string& message,
               int code) {
  if (global.json_errors) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
  } else {
    std::cerr << "error: " << message << "\n";
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"document-type classification pipeline for digital-library ingestion"};
  app.require_subcommand(1);

  GlobalOpts global;
  app.add_option("--config", global.config_path, "pipeline config JSON file");
  int jobs_flag = 0;
  std::uint64_t seed_flag = 0;
  auto* jobs_opt = app.add_option("--jobs", jobs_flag, "worker pool size for all stages");
  auto* seed_opt = app.add_option("--seed", seed_flag, "override the config seed");
  app.add_flag("--json-errors", global.json_errors, "machine-readable errors on stderr");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "scan a dataset root into manifest.json");
  std::string root, out_manifest = "manifest.json";
  ingest->add_option("--root", root, "dataset root directory")->required();
  ingest->add_option("--out", out_manifest, "output manifest path");

  // ocr
  auto* ocr = app.add_subcommand("ocr", "extract page transcripts into texts.json");
  std::string manifest_path, texts_out;
  ocr->add_option("--manifest", manifest_path, "manifest.json path")->required();
  ocr->add_option("--out", texts_out, "output texts.json path");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a classifier checkpoint");
  std::string train_manifest, train_mode = "full", model_out = "model.ckpt", train_texts;
  bool finetune_flag = false;
  train_cmd->add_option("--manifest", train_manifest, "manifest.json path")->required();
  train_cmd->add_option("--mode", train_mode, "full | image | text");
  train_cmd->add_option("--out", model_out, "checkpoint output path");
  train_cmd->add_option("--texts", train_texts, "texts.json from the ocr step");
  train_cmd->add_flag("--finetune-embeddings", finetune_flag,
                      "also train touched embedding rows");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string eval_model, eval_manifest, eval_split = "test", report_dir = "report",
              eval_texts;
  eval_cmd->add_option("--model", eval_model, "checkpoint path")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "manifest.json path")->required();
  eval_cmd->add_option("--split", eval_split, "train | val | test");
  eval_cmd->add_option("--report", report_dir, "report output directory");
  eval_cmd->add_option("--texts", eval_texts, "texts.json from the ocr step");

  // classify
  auto* classify_cmd = app.add_subcommand("classify", "classify a multi-page document");
  std::string cls_model, cls_doc, cls_out = "prediction.json", cls_texts;
  bool no_corrections = false;
  double tau_low_flag = -1.0, delta_flag = -1.0;
  classify_cmd->add_option("--model", cls_model, "checkpoint path")->required();
  classify_cmd->add_option("--doc", cls_doc, "directory of ordered page images")->required();
  classify_cmd->add_option("--out", cls_out, "prediction output path");
  classify_cmd->add_flag("--no-corrections", no_corrections, "majority vote only");
  auto* tau_opt = classify_cmd->add_option("--tau-low", tau_low_flag,
                                           "low-confidence threshold");
  auto* delta_opt = classify_cmd->add_option("--delta", delta_flag,
                                             "comparable-confidence margin");
  classify_cmd->add_option("--texts", cls_texts, "texts.json from the ocr step");

  // report
  auto* report_cmd = app.add_subcommand("report", "rebuild report files from a confusion csv");
  std::string report_csv, report_out = "report";
  report_cmd->add_option("--confusion", report_csv, "confusion.csv path")->required();
  report_cmd->add_option("--out", report_out, "output directory");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // --help exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the usage message
    return 1;
  }

  if (*jobs_opt) global.jobs = jobs_flag;
  if (*seed_opt) global.seed = seed_flag;

  try {
    if (*ingest) return cmd_ingest(global, root, out_manifest);
    if (*ocr) return cmd_ocr(global, manifest_path, texts_out);
    if (*train_cmd) {
      return cmd_train(global, train_manifest, train_mode, model_out, train_texts,
                       finetune_flag);
    }
    if (*eval_cmd) {
      return cmd_eval(global, eval_model, eval_manifest, eval_split, report_dir,
                      eval_texts);
    }
    if (*classify_cmd) {
      return cmd_classify(global, cls_model, cls_doc, cls_out, no_corrections,
                          *tau_opt ? std::optional<double>(tau_low_flag) : std::nullopt,
                          *delta_opt ? std::optional<double>(delta_flag) : std::nullopt,
                          cls_texts);
    }
    if (*report_cmd) return cmd_report(global, report_csv, report_out);
    return error_exit(global, "usage", "no subcommand given", 1);
  } catch (const UsageError& e) {
    return error_exit(global, "usage", e.what(), 1);
  } catch (const ConfigError& e) {
    return error_exit(global, "config", e.what(), 2);
  } catch (const DataError& e) {
    return error_exit(global, "data", e.what(), 2);
  } catch (const TimeoutError& e) {
    return error_exit(global, "timeout", e.what(), 3);
  } catch (const EngineError& e) {
    return error_exit(global, "engine", e.what(), 3);
  } catch (const std::exception& e) {
    return error_exit(global, "runtime", e.what(), 3);
  }
}
