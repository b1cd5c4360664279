#ifndef DOCTRIAGE_IMAGE_HPP
#define DOCTRIAGE_IMAGE_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>
#include <opencv2/imgcodecs.hpp>

#include "doctriage/error.hpp"
#include "doctriage/fsutil.hpp"

namespace doctriage {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr int kInputSize = 224;

// Channel-wise normalization constants published with the ImageNet-pretrained
// backbones (RGB order, applied to [0,1] inputs).
inline constexpr std::array<double, 3> kChannelMean = {0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kChannelStd = {0.229, 0.224, 0.225};

// 224x224x3 channels-last float tensor, normalized per the backbone contract.
struct ImageTensor {
  int height = kInputSize;
  int width = kInputSize;
  std::vector<float> data;  // height * width * 3, index = (y*width + x)*3 + c

  float at(int y, int x, int c) const {
    return data[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
};

struct ImageFeature {
  Vec vector;
  std::string extractor_id;
};

namespace detail {

// Decoded RGB image in [0,1], channels-last doubles.
struct RawImage {
  int height = 0;
  int width = 0;
  std::vector<double> rgb;
};

inline RawImage decode_rgb(std::string_view bytes) {
  const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1,
                    const_cast<char*>(bytes.data()));
  cv::Mat bgr = cv::imdecode(raw, cv::IMREAD_COLOR);  // grayscale comes back 3-channel
  if (bgr.empty()) throw DataError("image bytes do not decode");
  RawImage img;
  img.height = bgr.rows;
  img.width = bgr.cols;
  img.rgb.resize(static_cast<std::size_t>(bgr.rows) * bgr.cols * 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * bgr.cols + x) * 3;
      img.rgb[base + 0] = row[x][2] / 255.0;
      img.rgb[base + 1] = row[x][1] / 255.0;
      img.rgb[base + 2] = row[x][0] / 255.0;
    }
  }
  return img;
}

// Bilinear resize without antialiasing, half-pixel-center convention:
// src = (dst + 0.5) * (in/out) - 0.5, edges clamped. This is the sampling
// the stock backbone preprocessing uses; numbers are reproducible from it.
inline RawImage bilinear_resize(const RawImage& src, int out_h, int out_w) {
  RawImage dst;
  dst.height = out_h;
  dst.width = out_w;
  dst.rgb.resize(static_cast<std::size_t>(out_h) * out_w * 3);
  const double scale_y = static_cast<double>(src.height) / out_h;
  const double scale_x = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double sy = (y + 0.5) * scale_y - 0.5;
    const double cy = std::clamp(sy, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(std::floor(cy));
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double fy = cy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double sx = (x + 0.5) * scale_x - 0.5;
      const double cx = std::clamp(sx, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(std::floor(cx));
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double fx = cx - x0;
      for (int c = 0; c < 3; ++c) {
        auto px = [&](int yy, int xx) {
          return src.rgb[(static_cast<std::size_t>(yy) * src.width + xx) * 3 + c];
        };
        const double top = px(y0, x0) * (1.0 - fx) + px(y0, x1) * fx;
        const double bot = px(y1, x0) * (1.0 - fx) + px(y1, x1) * fx;
        dst.rgb[(static_cast<std::size_t>(y) * out_w + x) * 3 + c] =
            top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return dst;
}

}  // namespace detail

inline ImageTensor preprocess_image(std::string_view image_bytes) {
  detail::RawImage img = detail::decode_rgb(image_bytes);
  if (img.height != kInputSize || img.width != kInputSize) {
    img = detail::bilinear_resize(img, kInputSize, kInputSize);
  }
  ImageTensor tensor;
  tensor.data.resize(img.rgb.size());
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    const int c = static_cast<int>(i % 3);
    tensor.data[i] =
        static_cast<float>((img.rgb[i] - kChannelMean[c]) / kChannelStd[c]);
  }
  return tensor;
}

inline ImageTensor preprocess_image_file(const std::filesystem::path& path) {
  return preprocess_image(read_file_bytes(path));
}

inline bool can_decode(const std::filesystem::path& path) {
  try {
    detail::decode_rgb(read_file_bytes(path));
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

class ImageExtractor {
 public:
  virtual ~ImageExtractor() = default;
  virtual Vec extract(const ImageTensor& tensor) const = 0;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
};

// Offline test double: per-cell mean intensity (channel average of the
// normalized tensor) over a 64x64 grid, padded with zeros up to dim.
class StubExtractor final : public ImageExtractor {
 public:
  static constexpr int kGrid = 64;

  explicit StubExtractor(int dim = kGrid * kGrid) : dim_(dim) {
    if (dim < 1) throw ConfigError("stub extractor dimension must be positive");
  }

  Vec extract(const ImageTensor& tensor) const override {
    Vec out = Vec::Zero(dim_);
    const int cells = std::min(dim_, kGrid * kGrid);
    for (int cell = 0; cell < cells; ++cell) {
      const int gy = cell / kGrid;
      const int gx = cell % kGrid;
      const int y0 = gy * tensor.height / kGrid;
      const int y1 = (gy + 1) * tensor.height / kGrid;
      const int x0 = gx * tensor.width / kGrid;
      const int x1 = (gx + 1) * tensor.width / kGrid;
      double sum = 0.0;
      int n = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          sum += (tensor.at(y, x, 0) + tensor.at(y, x, 1) + tensor.at(y, x, 2)) / 3.0;
          ++n;
        }
      }
      out[cell] = n > 0 ? sum / n : 0.0;
    }
    return out;
  }

  std::string id() const override { return "stub-grid64"; }
  int dim() const override { return dim_; }

 private:
  int dim_;
};

// Frozen pretrained backbone consumed as an ONNX file through the OpenCV DNN
// runtime. `output_layer` selects the penultimate fully connected activations
// (empty = network output). The handle is read-only after construction.
class OnnxExtractor final : public ImageExtractor {
 public:
  OnnxExtractor(const std::filesystem::path& model_path, std::string output_layer = {},
                int expected_dim = 4096)
      : output_layer_(std::move(output_layer)), dim_(expected_dim) {
    if (!std::filesystem::exists(model_path)) {
      throw ConfigError("backbone model file not found: " + model_path.string());
    }
    try {
      net_ = cv::dnn::readNetFromONNX(model_path.string());
    } catch (const cv::Exception& e) {
      throw EngineError("failed to load backbone model " + model_path.string() + ": " +
                        e.what());
    }
    id_ = "onnx:" + model_path.filename().string() +
          (output_layer_.empty() ? "" : ":" + output_layer_);
  }

  Vec extract(const ImageTensor& tensor) const override {
    // channels-last -> NCHW blob
    const int size[] = {1, 3, tensor.height, tensor.width};
    cv::Mat blob(4, size, CV_32F);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < tensor.height; ++y) {
        for (int x = 0; x < tensor.width; ++x) {
          blob.ptr<float>(0, c, y)[x] = tensor.at(y, x, c);
        }
      }
    }
    cv::Mat result;
    {
      std::lock_guard<std::mutex> lock(mutex_);  // cv::dnn::Net::forward mutates caches
      net_.setInput(blob);
      result = output_layer_.empty() ? net_.forward() : net_.forward(output_layer_);
    }
    const cv::Mat flat = result.reshape(1, 1);
    if (flat.cols != dim_) {
      throw EngineError("backbone output dimension " + std::to_string(flat.cols) +
                        " does not match expected " + std::to_string(dim_));
    }
    Vec out(dim_);
    for (int i = 0; i < dim_; ++i) out[i] = flat.at<float>(0, i);
    if (!out.allFinite()) throw NumericError("backbone produced non-finite features");
    return out;
  }

  std::string id() const override { return id_; }
  int dim() const override { return dim_; }

 private:
  mutable cv::dnn::Net net_;
  mutable std::mutex mutex_;
  std::string output_layer_;
  std::string id_;
  int dim_;
};

// Binary feature cache entry: 8-byte little-endian dimension header followed
// by little-endian f32 values.
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::optional<Vec> get(const std::string& content_hash,
                         const std::string& extractor_id) const {
    const auto path = entry_path(content_hash, extractor_id);
    if (!std::filesystem::exists(path)) return std::nullopt;
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() < 8) throw DataError("corrupt feature cache entry: " + path.string());
    std::uint64_t dim = 0;
    std::memcpy(&dim, bytes.data(), 8);
    if (bytes.size() != 8 + dim * 4) {
      throw DataError("corrupt feature cache entry: " + path.string());
    }
    Vec out(static_cast<Eigen::Index>(dim));
    const char* p = bytes.data() + 8;
    for (std::uint64_t i = 0; i < dim; ++i) {
      float v;
      std::memcpy(&v, p + i * 4, 4);
      out[static_cast<Eigen::Index>(i)] = v;
    }
    return out;
  }

  void put(const std::string& content_hash, const std::string& extractor_id,
           const Vec& feature) const {
    std::string bytes;
    const std::uint64_t dim = static_cast<std::uint64_t>(feature.size());
    bytes.resize(8 + dim * 4);
    std::memcpy(bytes.data(), &dim, 8);
    for (std::uint64_t i = 0; i < dim; ++i) {
      const float v = static_cast<float>(feature[static_cast<Eigen::Index>(i)]);
      std::memcpy(bytes.data() + 8 + i * 4, &v, 4);
    }
    write_file_atomic(entry_path(content_hash, extractor_id), bytes);
  }

 private:
  std::filesystem::path entry_path(const std::string& content_hash,
                                   const std::string& extractor_id) const {
    std::string tag = extractor_id;
    for (char& c : tag) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    return dir_ / (content_hash + "." + tag + ".feat");
  }

  std::filesystem::path dir_;
};

}  // namespace doctriage

#endif  // DOCTRIAGE_IMAGE_HPP
