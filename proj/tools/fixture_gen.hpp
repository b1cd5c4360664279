#ifndef DOCTRIAGE_TOOLS_FIXTURE_GEN_HPP
#define DOCTRIAGE_TOOLS_FIXTURE_GEN_HPP

// Synthetic dataset generator shared by the fixture tool and the test suite.
// Classes use real label names; images are deterministic patterns that the
// grid-mean stub extractor separates easily.

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <json.hpp>

#include "doctriage/config.hpp"

namespace doctriage::fixture {

namespace fs = std::filesystem;

inline void write_pattern_png(const fs::path& path, int cls, int sample, int size = 64) {
  cv::Mat img(size, size, CV_8UC1);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      // class-specific half plus a small deterministic per-sample square
      bool bright = cls % 2 == 0 ? x < size / 2 : x >= size / 2;
      if (cls >= 2) bright = cls % 2 == 0 ? y < size / 2 : y >= size / 2;
      unsigned char v = bright ? 230 : 25;
      const int sx = (sample * 7) % (size - 8);
      const int sy = (sample * 13) % (size - 8);
      if (x >= sx && x < sx + 8 && y >= sy && y < sy + 8) v = 128;
      img.at<unsigned char>(y, x) = v;
    }
  }
  fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), img)) {
    throw std::runtime_error("failed to write " + path.string());
  }
}

inline void write_embeddings_file(const fs::path& path, int d_emb = 8) {
  const std::vector<std::string> vocab = {"map",    "atlas",  "thesis", "chapter",
                                          "figure", "survey", "plate",  "index",
                                          "degree", "report", "1891",   "law"};
  std::ofstream out(path);
  for (std::size_t w = 0; w < vocab.size(); ++w) {
    out << vocab[w];
    for (int d = 0; d < d_emb; ++d) {
      const double v = 0.1 * static_cast<double>((w * 31 + d * 7) % 19) - 0.9;
      out << ' ' << v;
    }
    out << '\n';
  }
}

struct FixtureSpec {
  std::vector<std::string> classes = {"maps", "thesis"};
  int per_class = 3;
  bool with_document = true;
  int doc_pages = 3;
  int d_emb = 8;
};

// Layout produced under root:
//   single_page/<class>/<class>_NNN.png
//   multi_page/doc001/{label.txt, 0000.png..}    (optional)
//   embeddings.txt, config.json
inline void generate(const fs::path& root, const FixtureSpec& spec = {}) {
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    for (int s = 0; s < spec.per_class; ++s) {
      char name[32];
      std::snprintf(name, sizeof(name), "%s_%03d.png", spec.classes[c].c_str(), s);
      write_pattern_png(root / "single_page" / spec.classes[c] / name,
                        static_cast<int>(c), s);
    }
  }
  if (spec.with_document) {
    const fs::path doc = root / "multi_page" / "doc001";
    fs::create_directories(doc);
    std::ofstream(doc / "label.txt") << spec.classes.front() << '\n';
    for (int p = 0; p < spec.doc_pages; ++p) {
      char name[16];
      std::snprintf(name, sizeof(name), "%04d.png", p);
      write_pattern_png(doc / name, 0, 100 + p);
    }
  }
  write_embeddings_file(root / "embeddings.txt", spec.d_emb);

  PipelineConfig config;
  config.dataset_root = root.string();
  config.backbone_model = "stub";
  config.image_dim = 64;  // grid means truncated to a small feature
  config.embeddings = (root / "embeddings.txt").string();
  config.encoder.d_emb = spec.d_emb;
  config.encoder.hidden = 8;
  config.encoder.attention = 4;
  config.fusion_dim = 16;
  config.train.max_epochs = 60;
  config.train.patience = 60;
  config.ocr.cache_dir = (root / ".ocr-cache").string();
  config.feature_cache_dir = (root / ".feat-cache").string();
  write_file_atomic(root / "config.json", pipeline_config_to_json(config).dump(2) + "\n");
}

}  // namespace doctriage::fixture

#endif  // DOCTRIAGE_TOOLS_FIXTURE_GEN_HPP
