#ifndef DOCTRIAGE_MANIFEST_HPP
#define DOCTRIAGE_MANIFEST_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctriage/error.hpp"
#include "doctriage/fsutil.hpp"
#include "doctriage/image.hpp"
#include "doctriage/labels.hpp"
#include "doctriage/parallel.hpp"
#include "doctriage/rng.hpp"

namespace doctriage {

enum class Split { train, val, test };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  throw DataError("invalid split value");
}

inline Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw DataError("unknown split name: " + name);
}

struct PageRecord {
  std::string page_id;
  std::filesystem::path image_path;
  ClassLabel label;
  Split split = Split::train;
  std::optional<std::string> source_doc;  // set for multi-page document pages
  std::optional<int> page_index;
};

struct DocumentRecord {
  std::string doc_id;
  ClassLabel label;
  std::vector<std::string> pages;  // ordered, page 0 is the title page
};

struct DatasetManifest {
  std::vector<PageRecord> pages;
  std::vector<DocumentRecord> documents;
  // Counts over the single-page corpus (pages without a source document);
  // document pages are fixed to the multi-page test set and not counted here.
  std::array<std::uint64_t, 11> class_counts{};

  std::uint64_t single_page_count() const {
    std::uint64_t n = 0;
    for (auto c : class_counts) n += c;
    return n;
  }

  const PageRecord* find_page(const std::string& page_id) const {
    for (const auto& p : pages) {
      if (p.page_id == page_id) return &p;
    }
    return nullptr;
  }
};

using WarnFn = std::function<void(const std::string&)>;

namespace detail {

inline bool has_image_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" ||
         ext == ".tiff";
}

inline void warn(const WarnFn& fn, const std::string& msg) {
  if (fn) fn(msg);
}

}  // namespace detail

struct LoadOptions {
  int jobs = 1;
  bool verify_decode = true;  // decode every image, exclude unreadable ones
  WarnFn warn;
};

// Expected layout under root:
//   single_page/<class_name>/<image files>
//   multi_page/<doc_id>/label.txt + zero-padded page image files   (optional)
inline DatasetManifest load_manifest(const std::filesystem::path& root,
                                     const LoadOptions& options = {}) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw ConfigError("dataset root does not exist: " + root.string());
  }

  DatasetManifest manifest;
  const fs::path single_root = root / "single_page";
  if (!fs::is_directory(single_root)) {
    throw DataError("no classes found under " + single_root.string());
  }

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(single_root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) {
    throw DataError("no classes found under " + single_root.string());
  }

  for (const auto& dir : class_dirs) {
    const std::string class_name = dir.filename().string();
    const ClassLabel label = ClassLabel::from_name(class_name);  // unknown -> hard error
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      if (!detail::has_image_extension(entry.path())) {
        detail::warn(options.warn, "skipping non-image file: " + entry.path().string());
        continue;
      }
      files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      PageRecord record;
      record.page_id = class_name + "/" + file.filename().string();
      record.image_path = fs::absolute(file);
      record.label = label;
      record.split = Split::train;
      manifest.pages.push_back(std::move(record));
    }
  }

  const fs::path multi_root = root / "multi_page";
  if (fs::is_directory(multi_root)) {
    std::vector<fs::path> doc_dirs;
    for (const auto& entry : fs::directory_iterator(multi_root)) {
      if (entry.is_directory()) doc_dirs.push_back(entry.path());
    }
    std::sort(doc_dirs.begin(), doc_dirs.end());
    for (const auto& dir : doc_dirs) {
      const std::string doc_id = dir.filename().string();
      const fs::path label_file = dir / "label.txt";
      if (!fs::exists(label_file)) {
        detail::warn(options.warn, "document without label.txt skipped: " + dir.string());
        continue;
      }
      std::string label_name = read_file_bytes(label_file);
      while (!label_name.empty() &&
             (label_name.back() == '\n' || label_name.back() == '\r' ||
              label_name.back() == ' ')) {
        label_name.pop_back();
      }
      const ClassLabel label = ClassLabel::from_name(label_name);

      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && detail::has_image_extension(entry.path())) {
          files.push_back(entry.path());
        }
      }
      std::sort(files.begin(), files.end());  // zero-padded names give page order
      if (files.empty()) {
        detail::warn(options.warn, "document without pages skipped: " + dir.string());
        continue;
      }

      DocumentRecord doc;
      doc.doc_id = doc_id;
      doc.label = label;
      int index = 0;
      for (const auto& file : files) {
        PageRecord record;
        record.page_id = doc_id + "/" + file.filename().string();
        record.image_path = fs::absolute(file);
        record.label = label;
        record.split = Split::test;  // documents live only in the multi-page test set
        record.source_doc = doc_id;
        record.page_index = index++;
        doc.pages.push_back(record.page_id);
        manifest.pages.push_back(std::move(record));
      }
      manifest.documents.push_back(std::move(doc));
    }
  }

  if (options.verify_decode) {
    std::vector<char> decodable(manifest.pages.size(), 1);
    parallel_for(manifest.pages.size(), options.jobs, [&](std::size_t i) {
      decodable[i] = can_decode(manifest.pages[i].image_path) ? 1 : 0;
    });
    std::vector<PageRecord> kept;
    kept.reserve(manifest.pages.size());
    std::set<std::string> dropped;
    for (std::size_t i = 0; i < manifest.pages.size(); ++i) {
      if (decodable[i]) {
        kept.push_back(std::move(manifest.pages[i]));
      } else {
        detail::warn(options.warn,
                     "unreadable image excluded: " + manifest.pages[i].image_path.string());
        dropped.insert(manifest.pages[i].page_id);
      }
    }
    manifest.pages = std::move(kept);
    if (!dropped.empty()) {
      for (auto& doc : manifest.documents) {
        std::erase_if(doc.pages, [&](const std::string& id) { return dropped.count(id) > 0; });
      }
      std::erase_if(manifest.documents,
                    [&](const DocumentRecord& d) { return d.pages.empty(); });
    }
  }

  manifest.class_counts.fill(0);
  for (const auto& page : manifest.pages) {
    if (!page.source_doc) ++manifest.class_counts[page.label.index()];
  }
  return manifest;
}

struct SplitRatios {
  int train = 15;
  int val = 4;
  int test = 10;
};

namespace detail {

// Largest-remainder apportionment of n items to the three splits. Remainder
// ties go train > val > test.
inline std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios& ratios) {
  const std::array<double, 3> weights = {static_cast<double>(ratios.train),
                                         static_cast<double>(ratios.val),
                                         static_cast<double>(ratios.test)};
  const double total = weights[0] + weights[1] + weights[2];
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double exact = n * weights[s] / total;
    counts[s] = static_cast<std::size_t>(std::floor(exact));
    remainders[s] = exact - static_cast<double>(counts[s]);
    assigned += counts[s];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (std::size_t left = n - assigned, k = 0; left > 0; --left, ++k) {
    ++counts[order[k % 3]];
  }
  return counts;
}

}  // namespace detail

// Per-class stratified reassignment of the single-page corpus. Document pages
// are left untouched (always test). Deterministic for a fixed seed.
inline DatasetManifest split_dataset(DatasetManifest manifest, const SplitRatios& ratios,
                                     std::uint64_t seed, const WarnFn& warn = {}) {
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0) {
    throw ConfigError("split ratios must be positive");
  }
  Rng base(seed);
  for (std::size_t c = 0; c < ClassLabel::count(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < manifest.pages.size(); ++i) {
      const auto& p = manifest.pages[i];
      if (!p.source_doc && p.label.index() == c) members.push_back(i);
    }
    if (members.empty()) continue;
    // stable ordering independent of scan order, then a seeded shuffle
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return manifest.pages[a].page_id < manifest.pages[b].page_id;
    });
    Rng rng = base.stream(c);
    rng.shuffle(members);

    if (members.size() < 3) {
      detail::warn(warn, std::string("class ") + std::string(kClassNames[c]) +
                             " has fewer than 3 samples; all assigned to train");
      for (auto i : members) manifest.pages[i].split = Split::train;
      continue;
    }
    const auto counts = detail::apportion(members.size(), ratios);
    std::size_t cursor = 0;
    for (int s = 0; s < 3; ++s) {
      const Split split = s == 0 ? Split::train : (s == 1 ? Split::val : Split::test);
      for (std::size_t k = 0; k < counts[s]; ++k) {
        manifest.pages[members[cursor++]].split = split;
      }
    }
  }
  return manifest;
}

struct ValidationIssue {
  std::string kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool clean() const { return issues.empty(); }
  std::size_t count(const std::string& kind) const {
    std::size_t n = 0;
    for (const auto& i : issues) {
      if (i.kind == kind) ++n;
    }
    return n;
  }
};

// Report-only: duplicate ids, unresolvable paths, empty documents, dangling
// page references, and content overlap between the single-page corpus and
// document pages (matched by image byte digest).
inline ValidationReport validate_manifest(const DatasetManifest& manifest) {
  ValidationReport report;

  std::set<std::string> seen, duplicated;
  for (const auto& page : manifest.pages) {
    if (!seen.insert(page.page_id).second && duplicated.insert(page.page_id).second) {
      report.issues.push_back({"duplicate_id", page.page_id});
    }
  }

  for (const auto& page : manifest.pages) {
    if (!std::filesystem::exists(page.image_path)) {
      report.issues.push_back({"missing_path", page.image_path.string()});
    }
  }

  for (const auto& doc : manifest.documents) {
    if (doc.pages.empty()) {
      report.issues.push_back({"empty_document", doc.doc_id});
      continue;
    }
    for (const auto& page_id : doc.pages) {
      if (!manifest.find_page(page_id)) {
        report.issues.push_back({"dangling_reference", doc.doc_id + " -> " + page_id});
      }
    }
  }

  // single-page vs document-page content overlap
  std::map<std::string, std::string> single_hashes;
  for (const auto& page : manifest.pages) {
    if (page.source_doc || !std::filesystem::exists(page.image_path)) continue;
    single_hashes[sha256_file_hex(page.image_path)] = page.page_id;
  }
  for (const auto& page : manifest.pages) {
    if (!page.source_doc || !std::filesystem::exists(page.image_path)) continue;
    const auto it = single_hashes.find(sha256_file_hex(page.image_path));
    if (it != single_hashes.end()) {
      report.issues.push_back({"overlap", page.page_id + " duplicates " + it->second});
    }
  }
  return report;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::json pages = nlohmann::json::array();
  for (const auto& p : manifest.pages) {
    nlohmann::json rec{{"page_id", p.page_id},
                       {"image_path", p.image_path.string()},
                       {"label", std::string(p.label.name())},
                       {"split", split_name(p.split)}};
    if (p.source_doc) rec["source_doc"] = *p.source_doc;
    if (p.page_index) rec["page_index"] = *p.page_index;
    pages.push_back(std::move(rec));
  }
  nlohmann::json documents = nlohmann::json::array();
  for (const auto& d : manifest.documents) {
    documents.push_back({{"doc_id", d.doc_id},
                         {"label", std::string(d.label.name())},
                         {"pages", d.pages}});
  }
  nlohmann::json counts = nlohmann::json::object();
  for (std::size_t c = 0; c < ClassLabel::count(); ++c) {
    if (manifest.class_counts[c] > 0) {
      counts[std::string(kClassNames[c])] = manifest.class_counts[c];
    }
  }
  return nlohmann::json{
      {"pages", pages}, {"documents", documents}, {"class_counts", counts}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest manifest;
  for (const auto& rec : j.at("pages")) {
    PageRecord p;
    p.page_id = rec.at("page_id").get<std::string>();
    p.image_path = rec.at("image_path").get<std::string>();
    p.label = ClassLabel::from_name(rec.at("label").get<std::string>());
    p.split = split_from_name(rec.at("split").get<std::string>());
    if (rec.contains("source_doc")) p.source_doc = rec.at("source_doc").get<std::string>();
    if (rec.contains("page_index")) p.page_index = rec.at("page_index").get<int>();
    manifest.pages.push_back(std::move(p));
  }
  for (const auto& rec : j.at("documents")) {
    DocumentRecord d;
    d.doc_id = rec.at("doc_id").get<std::string>();
    d.label = ClassLabel::from_name(rec.at("label").get<std::string>());
    d.pages = rec.at("pages").get<std::vector<std::string>>();
    manifest.documents.push_back(std::move(d));
  }
  manifest.class_counts.fill(0);
  for (const auto& page : manifest.pages) {
    if (!page.source_doc) ++manifest.class_counts[page.label.index()];
  }
  return manifest;
}

inline void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  write_file_atomic(path, manifest_to_json(manifest).dump(2) + "\n");
}

inline DatasetManifest load_manifest_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError("manifest file not found: " + path.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest parse error in " + path.string() + ": " + e.what());
  }
  try {
    return manifest_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest schema error in " + path.string() + ": " + e.what());
  }
}

}  // namespace doctriage

#endif  // DOCTRIAGE_MANIFEST_HPP
