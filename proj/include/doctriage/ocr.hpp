#ifndef DOCTRIAGE_OCR_HPP
#define DOCTRIAGE_OCR_HPP

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "doctriage/error.hpp"
#include "doctriage/fsutil.hpp"
#include "doctriage/subprocess.hpp"

namespace doctriage {

struct PageText {
  std::string page_id;
  std::string raw_text;  // empty string is a valid transcript
  std::string engine_id;
  std::string content_hash;  // sha256 of the image bytes
};

struct TokenSequence {
  std::vector<std::string> tokens;  // lowercase, never empty strings
  bool truncated = false;
};

struct OcrConfig {
  std::string binary;  // empty -> resolve from env / PATH
  std::vector<std::string> langs = {"eng"};
  double timeout_s = 60.0;
  bool lenient = true;  // degrade engine failure and timeout to empty text
  std::filesystem::path cache_dir = ".ocr-cache";
};

inline constexpr int kDefaultMaxTokens = 300;

// Resolution order: explicit config path, DOC_TRIAGE_OCR, then `tesseract`
// on PATH.
inline std::filesystem::path resolve_ocr_binary(const OcrConfig& config) {
  if (!config.binary.empty()) {
    const auto found = find_on_path(config.binary);
    if (found.empty()) {
      throw ConfigError("configured OCR binary not executable: " + config.binary);
    }
    return found;
  }
  if (const char* env = std::getenv("DOC_TRIAGE_OCR"); env && *env) {
    const auto found = find_on_path(env);
    if (found.empty()) {
      throw ConfigError(std::string("DOC_TRIAGE_OCR not executable: ") + env);
    }
    return found;
  }
  const auto found = find_on_path("tesseract");
  if (found.empty()) {
    throw ConfigError("no OCR engine found (config, DOC_TRIAGE_OCR, PATH)");
  }
  return found;
}

namespace detail {

inline std::string join_langs(const std::vector<std::string>& langs) {
  std::string out;
  for (const auto& l : langs) {
    if (!out.empty()) out.push_back('+');
    out += l;
  }
  return out.empty() ? "eng" : out;
}

inline std::string engine_tag(const std::filesystem::path& binary,
                              const std::vector<std::string>& langs) {
  std::string tag = binary.filename().string() + ":" + join_langs(langs);
  return tag;
}

inline std::string cache_file_name(const std::string& content_hash,
                                   const std::string& engine_id) {
  std::string tag = engine_id;
  for (char& c : tag) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return content_hash + "." + tag + ".txt";
}

// Replace invalid UTF-8 sequences with U+FFFD so raw_text is always valid
// text in one canonical encoding.
inline std::string sanitize_utf8(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  std::size_t i = 0;
  while (i < in.size()) {
    const unsigned char b = static_cast<unsigned char>(in[i]);
    std::size_t len = 0;
    if (b < 0x80) {
      len = 1;
    } else if ((b & 0xE0) == 0xC0 && b >= 0xC2) {
      len = 2;
    } else if ((b & 0xF0) == 0xE0) {
      len = 3;
    } else if ((b & 0xF8) == 0xF0 && b <= 0xF4) {
      len = 4;
    }
    bool ok = len > 0 && i + len <= in.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      ok = (static_cast<unsigned char>(in[i + k]) & 0xC0) == 0x80;
    }
    if (ok) {
      out.append(in.substr(i, len));
      i += len;
    } else {
      out += "\xEF\xBF\xBD";
      ++i;
    }
  }
  return out;
}

}  // namespace detail

struct OcrWarning {
  std::string page_id;
  std::string message;
};

class OcrEngine {
 public:
  explicit OcrEngine(OcrConfig config) : config_(std::move(config)) {}

  const OcrConfig& config() const { return config_; }

  // Cached subprocess OCR. A cache hit (keyed by image digest + engine id)
  // returns without invoking the engine; empty output is a valid success.
  PageText extract_text(const std::filesystem::path& image_path,
                        const std::string& page_id = {},
                        std::vector<OcrWarning>* warnings = nullptr) const {
    const std::string bytes = read_file_bytes(image_path);
    const std::string content_hash = sha256_hex(bytes);

    const std::filesystem::path binary = resolve_ocr_binary(config_);
    const std::string engine_id = detail::engine_tag(binary, config_.langs);

    PageText page{page_id.empty() ? image_path.string() : page_id, "", engine_id,
                  content_hash};

    const std::filesystem::path cache_path =
        config_.cache_dir / detail::cache_file_name(content_hash, engine_id);
    if (std::filesystem::exists(cache_path)) {
      page.raw_text = read_file_bytes(cache_path);
      return page;
    }

    const std::vector<std::string> argv = {binary.string(), image_path.string(), "stdout",
                                           "-l", detail::join_langs(config_.langs)};
    const RunResult run = run_command(argv, config_.timeout_s);

    if (run.timed_out) {
      if (!config_.lenient) {
        throw TimeoutError("OCR timed out after " + std::to_string(config_.timeout_s) +
                           "s on " + image_path.string());
      }
      if (warnings) warnings->push_back({page.page_id, "OCR timeout, using empty text"});
      return page;  // not cached: a retry may succeed
    }
    if (run.exit_code != 0) {
      if (!config_.lenient) {
        throw EngineError("OCR engine exited with " + std::to_string(run.exit_code) +
                              " on " + image_path.string(),
                          run.exit_code, run.err);
      }
      if (warnings) {
        warnings->push_back({page.page_id, "OCR exit " + std::to_string(run.exit_code) +
                                               ", using empty text"});
      }
      return page;
    }

    page.raw_text = detail::sanitize_utf8(run.out);
    write_file_atomic(cache_path, page.raw_text);
    return page;
  }

 private:
  OcrConfig config_;
};

// Lowercased tokens split on ASCII whitespace and punctuation; digits kept;
// multi-byte UTF-8 sequences pass through as token characters. Sequences
// longer than max_tokens are cut with truncated=true.
inline TokenSequence normalize_text(std::string_view raw_text,
                                    int max_tokens = kDefaultMaxTokens) {
  TokenSequence seq;
  std::string current;
  auto flush = [&] {
    if (current.empty()) return;
    if (static_cast<int>(seq.tokens.size()) < max_tokens) {
      seq.tokens.push_back(current);
    } else {
      seq.truncated = true;
    }
    current.clear();
  };
  for (const char ch : raw_text) {
    const unsigned char b = static_cast<unsigned char>(ch);
    if (b < 0x80 && (std::isspace(b) || std::ispunct(b))) {
      flush();
    } else {
      current.push_back(b < 0x80 ? static_cast<char>(std::tolower(b)) : ch);
    }
  }
  flush();
  return seq;
}

}  // namespace doctriage

#endif  // DOCTRIAGE_OCR_HPP
