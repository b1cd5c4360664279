#ifndef DOCTRIAGE_EMBEDDINGS_HPP
#define DOCTRIAGE_EMBEDDINGS_HPP

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "doctriage/error.hpp"

namespace doctriage {

// Pretrained word vectors, one `token v1 ... v_d` line per row. Lookup of an
// out-of-vocabulary token yields the zero vector (virtual row, not stored).
struct EmbeddingTable {
  std::unordered_map<std::string, Eigen::Index> vocab;
  Eigen::MatrixXd matrix;  // |V| x d_emb
  int dim = 0;
  std::size_t skipped_lines = 0;

  std::size_t size() const { return vocab.size(); }

  Eigen::RowVectorXd lookup(const std::string& token) const {
    const auto it = vocab.find(token);
    if (it == vocab.end()) return Eigen::RowVectorXd::Zero(dim);
    return matrix.row(it->second);
  }

  // Row index of a token, -1 when out of vocabulary.
  Eigen::Index vocab_row(const std::string& token) const {
    const auto it = vocab.find(token);
    return it == vocab.end() ? Eigen::Index(-1) : it->second;
  }
};

inline EmbeddingTable load_embeddings(const std::filesystem::path& path, int d_emb) {
  if (d_emb <= 0) throw ConfigError("embedding dimension must be positive");
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embedding file: " + path.string());

  EmbeddingTable table;
  table.dim = d_emb;
  std::vector<double> values;
  values.reserve(1 << 20);
  std::string line;
  std::vector<double> row(static_cast<std::size_t>(d_emb));

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t pos = line.find(' ');
    if (pos == std::string::npos || pos == 0) {
      ++table.skipped_lines;
      continue;
    }
    const std::string token = line.substr(0, pos);
    int parsed = 0;
    bool bad = false;
    const char* p = line.data() + pos;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      if (parsed >= d_emb) {
        bad = true;  // too many columns
        break;
      }
      double v = 0.0;
      const auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) {
        bad = true;
        break;
      }
      row[static_cast<std::size_t>(parsed++)] = v;
      p = next;
    }
    if (bad || parsed != d_emb || table.vocab.count(token)) {
      ++table.skipped_lines;
      continue;
    }
    table.vocab.emplace(token, static_cast<Eigen::Index>(table.vocab.size()));
    values.insert(values.end(), row.begin(), row.end());
  }

  if (table.vocab.empty()) {
    throw DataError("no usable embedding rows in " + path.string());
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(table.vocab.size());
  table.matrix.resize(rows, d_emb);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int c = 0; c < d_emb; ++c) {
      table.matrix(r, c) = values[static_cast<std::size_t>(r) * d_emb + c];
    }
  }
  return table;
}

// Row t = embedding of tokens[t]; OOV rows are zero; empty input gives a
// 0 x d_emb matrix.
inline Eigen::MatrixXd embed_tokens(const std::vector<std::string>& tokens,
                                    const EmbeddingTable& table) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(tokens.size()), table.dim);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    out.row(static_cast<Eigen::Index>(t)) = table.lookup(tokens[t]);
  }
  return out;
}

// Writes the table back in the `token v1 ... v_d` text format (row order),
// full double precision so a tuned table reloads exactly.
inline void save_embeddings(const EmbeddingTable& table,
                            const std::filesystem::path& path) {
  std::vector<const std::string*> by_row(table.size(), nullptr);
  for (const auto& [token, row] : table.vocab) {
    by_row[static_cast<std::size_t>(row)] = &token;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write embedding file: " + path.string());
  out.precision(17);
  for (std::size_t r = 0; r < by_row.size(); ++r) {
    out << *by_row[r];
    for (int c = 0; c < table.dim; ++c) {
      out << ' ' << table.matrix(static_cast<Eigen::Index>(r), c);
    }
    out << '\n';
  }
}

}  // namespace doctriage

#endif  // DOCTRIAGE_EMBEDDINGS_HPP
