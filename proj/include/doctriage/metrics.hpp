#ifndef DOCTRIAGE_METRICS_HPP
#define DOCTRIAGE_METRICS_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctriage/error.hpp"
#include "doctriage/fsutil.hpp"
#include "doctriage/labels.hpp"

namespace doctriage {

// Row = true class, column = predicted class, class order = ClassLabel order.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = ClassLabel::count())
      : classes_(classes), cells_(classes * classes, 0) {}

  std::size_t classes() const { return classes_; }

  void accumulate(std::size_t true_class, std::size_t predicted_class) {
    check(true_class);
    check(predicted_class);
    ++cells_[true_class * classes_ + predicted_class];
  }

  std::uint64_t count(std::size_t true_class, std::size_t predicted_class) const {
    check(true_class);
    check(predicted_class);
    return cells_[true_class * classes_ + predicted_class];
  }

  std::uint64_t total() const {
    std::uint64_t sum = 0;
    for (auto c : cells_) sum += c;
    return sum;
  }

  std::uint64_t trace() const {
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < classes_; ++i) sum += cells_[i * classes_ + i];
    return sum;
  }

  std::uint64_t row_sum(std::size_t row) const {
    check(row);
    std::uint64_t sum = 0;
    for (std::size_t j = 0; j < classes_; ++j) sum += cells_[row * classes_ + j];
    return sum;
  }

  std::uint64_t col_sum(std::size_t col) const {
    check(col);
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < classes_; ++i) sum += cells_[i * classes_ + col];
    return sum;
  }

  // Cell-wise addition; associative and commutative, so parallel shards can
  // merge in any order.
  void merge(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw ShapeError("confusion matrix size mismatch");
    for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] += other.cells_[i];
  }

  bool operator==(const ConfusionMatrix& other) const {
    return classes_ == other.classes_ && cells_ == other.cells_;
  }

 private:
  void check(std::size_t i) const {
    if (i >= classes_) throw DataError("class index out of range: " + std::to_string(i));
  }

  std::size_t classes_;
  std::vector<std::uint64_t> cells_;
};

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct EvalReport {
  double accuracy = 0.0;
  std::uint64_t total = 0;
  std::vector<ClassStats> per_class;
};

inline EvalReport summarize(const ConfusionMatrix& matrix) {
  const std::uint64_t total = matrix.total();
  if (total == 0) throw DataError("cannot summarize an empty confusion matrix");
  EvalReport report;
  report.total = total;
  report.accuracy = static_cast<double>(matrix.trace()) / static_cast<double>(total);
  report.per_class.resize(matrix.classes());
  for (std::size_t c = 0; c < matrix.classes(); ++c) {
    const std::uint64_t diag = matrix.count(c, c);
    const std::uint64_t rs = matrix.row_sum(c);
    const std::uint64_t cs = matrix.col_sum(c);
    ClassStats& s = report.per_class[c];
    s.support = rs;
    s.precision = cs == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(cs);
    s.recall = rs == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(rs);
    s.f1 = (s.precision + s.recall) == 0.0
               ? 0.0
               : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return report;
}

inline std::string confusion_to_csv(const ConfusionMatrix& matrix) {
  std::ostringstream out;
  out << "true\\predicted";
  for (std::size_t j = 0; j < matrix.classes(); ++j) out << ',' << kClassNames[j];
  out << '\n';
  for (std::size_t i = 0; i < matrix.classes(); ++i) {
    out << kClassNames[i];
    for (std::size_t j = 0; j < matrix.classes(); ++j) out << ',' << matrix.count(i, j);
    out << '\n';
  }
  return std::move(out).str();
}

inline ConfusionMatrix confusion_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty confusion csv");
  ConfusionMatrix matrix;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= matrix.classes()) throw DataError("confusion csv has too many rows");
    std::istringstream cells(line);
    std::string cell;
    if (!std::getline(cells, cell, ',')) throw DataError("confusion csv row missing label");
    if (cell != kClassNames[row]) {
      throw DataError("confusion csv row label mismatch: " + cell);
    }
    for (std::size_t j = 0; j < matrix.classes(); ++j) {
      if (!std::getline(cells, cell, ',')) throw DataError("confusion csv row too short");
      const std::uint64_t n = std::stoull(cell);
      for (std::uint64_t k = 0; k < n; ++k) matrix.accumulate(row, j);
    }
    ++row;
  }
  if (row != matrix.classes()) throw DataError("confusion csv has too few rows");
  return matrix;
}

// Plain (P2) grayscale heat map, one pixel per cell, intensity proportional
// to the row-normalized count. Zero rows render black.
inline std::string confusion_to_pgm(const ConfusionMatrix& matrix) {
  std::ostringstream out;
  out << "P2\n" << matrix.classes() << ' ' << matrix.classes() << "\n255\n";
  for (std::size_t i = 0; i < matrix.classes(); ++i) {
    const std::uint64_t rs = matrix.row_sum(i);
    for (std::size_t j = 0; j < matrix.classes(); ++j) {
      long value = 0;
      if (rs > 0) {
        value = std::lround(255.0 * static_cast<double>(matrix.count(i, j)) /
                            static_cast<double>(rs));
      }
      out << value << (j + 1 == matrix.classes() ? '\n' : ' ');
    }
  }
  return std::move(out).str();
}

inline nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const ClassStats& s = report.per_class[c];
    per_class[std::string(kClassNames[c])] = {
        {"precision", s.precision},
        {"recall", s.recall},
        {"f1", s.f1},
        {"support", s.support},
    };
  }
  return nlohmann::json{{"accuracy", report.accuracy},
                        {"total", report.total},
                        {"per_class", per_class}};
}

// Writes confusion.csv, report.json and confusion.pgm under out_dir.
inline void export_report(const ConfusionMatrix& matrix, const EvalReport& report,
                          const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_file_atomic(out_dir / "confusion.csv", confusion_to_csv(matrix));
  write_file_atomic(out_dir / "confusion.pgm", confusion_to_pgm(matrix));
  write_file_atomic(out_dir / "report.json", report_to_json(report).dump(2) + "\n");
}

}  // namespace doctriage

#endif  // DOCTRIAGE_METRICS_HPP
