#ifndef DOCTRIAGE_LABELS_HPP
#define DOCTRIAGE_LABELS_HPP

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "doctriage/error.hpp"

namespace doctriage {

// Fixed alphabetical class order; the index doubles as the softmax slot.
inline constexpr std::array<std::string_view, 11> kClassNames = {
    "catalog",        "handwritten",     "law_reports",        "maps",
    "music_notations", "newspaper_articles", "paintings",      "presentation",
    "question_paper", "scientific_articles", "thesis",
};

class ClassLabel {
 public:
  static constexpr std::size_t count() { return kClassNames.size(); }

  constexpr ClassLabel() = default;

  explicit ClassLabel(std::size_t index) : index_(index) {
    if (index >= count()) {
      throw DataError("class index out of range: " + std::to_string(index));
    }
  }

  static std::optional<ClassLabel> try_from_name(std::string_view name) {
    for (std::size_t i = 0; i < count(); ++i) {
      if (kClassNames[i] == name) return ClassLabel(i);
    }
    return std::nullopt;
  }

  static ClassLabel from_name(std::string_view name) {
    if (auto label = try_from_name(name)) return *label;
    throw DataError("unknown class name: " + std::string(name));
  }

  std::size_t index() const { return index_; }
  std::string_view name() const { return kClassNames[index_]; }

  friend bool operator==(ClassLabel a, ClassLabel b) { return a.index_ == b.index_; }
  friend bool operator!=(ClassLabel a, ClassLabel b) { return a.index_ != b.index_; }
  friend bool operator<(ClassLabel a, ClassLabel b) { return a.index_ < b.index_; }

 private:
  std::size_t index_ = 0;
};

inline ClassLabel label_catalog() { return ClassLabel(0); }
inline ClassLabel label_maps() { return ClassLabel(3); }
inline ClassLabel label_scientific_articles() { return ClassLabel(9); }
inline ClassLabel label_thesis() { return ClassLabel(10); }

}  // namespace doctriage

#endif  // DOCTRIAGE_LABELS_HPP
