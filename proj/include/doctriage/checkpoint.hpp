#ifndef DOCTRIAGE_CHECKPOINT_HPP
#define DOCTRIAGE_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctriage/error.hpp"
#include "doctriage/fsutil.hpp"
#include "doctriage/labels.hpp"
#include "doctriage/model.hpp"

namespace doctriage {

// Checkpoint container: an 8-byte little-endian header length, a JSON header
// (shapes, mode, class order, training config), then the tensors as
// little-endian f32 in header-declared order, column-major.
inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                            const nlohmann::json& train_config = nlohmann::json::object()) {
  nlohmann::json tensors = nlohmann::json::array();
  std::string blob;
  visit_tensors(const_cast<ModelParams&>(params), [&](const char* name, Mat& t) {
    tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    const std::size_t offset = blob.size();
    blob.resize(offset + static_cast<std::size_t>(t.size()) * 4);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const float v = static_cast<float>(t.data()[i]);
      std::memcpy(blob.data() + offset + static_cast<std::size_t>(i) * 4, &v, 4);
    }
  });

  nlohmann::json class_order = nlohmann::json::array();
  for (const auto& name : kClassNames) class_order.push_back(std::string(name));

  const nlohmann::json header{
      {"format", "doc-triage-checkpoint"},
      {"version", kCheckpointVersion},
      {"mode", mode_name(params.mode)},
      {"class_order", class_order},
      {"dims",
       {{"d_emb", params.dims.encoder.d_emb},
        {"hidden", params.dims.encoder.hidden},
        {"attention", params.dims.encoder.attention},
        {"image_dim", params.dims.image_dim},
        {"fusion_dim", params.dims.fusion_dim},
        {"classes", params.dims.classes}}},
      {"layout", "f32_le_colmajor"},
      {"tensors", tensors},
      {"train_config", train_config},
  };

  const std::string header_bytes = header.dump();
  std::string file;
  file.resize(8);
  const std::uint64_t header_len = header_bytes.size();
  std::memcpy(file.data(), &header_len, 8);
  file += header_bytes;
  file += blob;
  write_file_atomic(path, file);
}

struct Checkpoint {
  ModelParams params;
  nlohmann::json train_config;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError("checkpoint file not found: " + path.string());
  }
  const std::string file = read_file_bytes(path);
  if (file.size() < 8) throw DataError("checkpoint truncated: " + path.string());
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, file.data(), 8);
  if (file.size() < 8 + header_len) throw DataError("checkpoint truncated: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(file.substr(8, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header parse error: ") + e.what());
  }
  if (header.value("format", "") != "doc-triage-checkpoint") {
    throw DataError("not a checkpoint file: " + path.string());
  }

  const auto class_order = header.at("class_order").get<std::vector<std::string>>();
  if (class_order.size() != ClassLabel::count()) {
    throw DataError("checkpoint class order does not match this build");
  }
  for (std::size_t i = 0; i < class_order.size(); ++i) {
    if (class_order[i] != kClassNames[i]) {
      throw DataError("checkpoint class order does not match this build");
    }
  }

  Checkpoint ckpt;
  ckpt.train_config = header.value("train_config", nlohmann::json::object());
  ModelDims dims;
  const auto& jd = header.at("dims");
  dims.encoder.d_emb = jd.at("d_emb").get<int>();
  dims.encoder.hidden = jd.at("hidden").get<int>();
  dims.encoder.attention = jd.at("attention").get<int>();
  dims.image_dim = jd.at("image_dim").get<int>();
  dims.fusion_dim = jd.at("fusion_dim").get<int>();
  dims.classes = jd.at("classes").get<int>();

  Rng dummy(0);
  ckpt.params = init_model_params(dims, mode_from_name(header.at("mode").get<std::string>()),
                                  dummy);

  const char* blob = file.data() + 8 + header_len;
  const std::size_t blob_size = file.size() - 8 - header_len;
  std::size_t offset = 0;
  std::size_t tensor_index = 0;
  const auto& tensor_list = header.at("tensors");
  visit_tensors(ckpt.params, [&](const char* name, Mat& t) {
    if (tensor_index >= tensor_list.size()) {
      throw DataError("checkpoint is missing tensor " + std::string(name));
    }
    const auto& meta = tensor_list[tensor_index++];
    if (meta.at("name").get<std::string>() != name ||
        meta.at("rows").get<Eigen::Index>() != t.rows() ||
        meta.at("cols").get<Eigen::Index>() != t.cols()) {
      throw DataError("checkpoint tensor mismatch at " + std::string(name));
    }
    const std::size_t bytes = static_cast<std::size_t>(t.size()) * 4;
    if (offset + bytes > blob_size) throw DataError("checkpoint data truncated");
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      float v;
      std::memcpy(&v, blob + offset + static_cast<std::size_t>(i) * 4, 4);
      t.data()[i] = v;
    }
    offset += bytes;
  });
  if (tensor_index != tensor_list.size()) {
    throw DataError("checkpoint declares extra tensors");
  }
  return ckpt;
}

}  // namespace doctriage

#endif  // DOCTRIAGE_CHECKPOINT_HPP
