#pragma once

// Word embedding tables and word frequency tables, with their text formats.
//
// Embedding file (word2vec text):
//   line 1:        "<vocab_size> <dim>"
//   lines 2..V+1:  "<token> <v1> ... <vd>"
// Values are written with 17 significant digits so doubles round-trip exactly.
//
// Frequency file: one "<token>\t<count>" per line.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xlingmap/error.hpp"
#include "xlingmap/numerics.hpp"

namespace xlingmap {

namespace detail {

/// True if `s` contains an ASCII or Unicode White_Space code point (UTF-8).
inline bool contains_whitespace(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') return true;
    auto at = [&](std::size_t j) {
      return j < s.size() ? static_cast<unsigned char>(s[j]) : 0u;
    };
    if (c == 0xC2 && (at(i + 1) == 0x85 || at(i + 1) == 0xA0)) return true;
    if (c == 0xE1 && at(i + 1) == 0x9A && at(i + 2) == 0x80) return true;  // U+1680
    if (c == 0xE2 && at(i + 1) == 0x80) {
      const unsigned t = at(i + 2);
      if ((t >= 0x80 && t <= 0x8A) || t == 0xA8 || t == 0xA9 || t == 0xAF) return true;
    }
    if (c == 0xE2 && at(i + 1) == 0x81 && at(i + 2) == 0x9F) return true;  // U+205F
    if (c == 0xE3 && at(i + 1) == 0x80 && at(i + 2) == 0x80) return true;  // U+3000
  }
  return false;
}

/// Splits on runs of spaces/tabs; tolerates a trailing '\r'.
inline std::vector<std::string_view> split_fields(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline bool parse_u64(std::string_view s, std::uint64_t& out) {
  if (s.empty() || s.front() == '+' || s.front() == '-') return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::string format_double(double v) {
  char buf[40];
  int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  return in;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace detail

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw FormatError("empty token at row " + std::to_string(i));
      if (!index_.emplace(tokens_[i], i).second) {
        throw FormatError("duplicate token '" + tokens_[i] + "'");
      }
    }
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(std::size_t i) const { return tokens_.at(i); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::optional<std::size_t> find(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view tok) const { return find(tok).has_value(); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EmbeddingTable {
  Vocabulary vocab;
  Matrix matrix;  // |vocab| × dim

  EmbeddingTable() = default;
  EmbeddingTable(Vocabulary v, Matrix m) : vocab(std::move(v)), matrix(std::move(m)) {
    if (matrix.rows() != vocab.size()) {
      throw ShapeError("embedding table has " + std::to_string(matrix.rows()) + " rows for " +
                       std::to_string(vocab.size()) + " tokens");
    }
    if (!matrix.all_finite()) throw NumericError("embedding table contains non-finite values");
  }

  std::size_t size() const noexcept { return vocab.size(); }
  std::size_t dim() const noexcept { return matrix.cols(); }
  std::span<const double> row(std::size_t i) const { return matrix.row(i); }

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

/// Counts aligned with the rows of a Vocabulary.
struct FrequencyTable {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  static FrequencyTable uniform(std::size_t n) {
    return FrequencyTable{std::vector<std::uint64_t>(n, 1), n};
  }

  friend bool operator==(const FrequencyTable&, const FrequencyTable&) = default;
};

// ---------------------------------------------------------------------------

inline EmbeddingTable parse_embeddings(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw FormatError("empty embedding file", 1);
  ++lineno;
  auto header = detail::split_fields(line);
  std::uint64_t vocab_size = 0;
  std::uint64_t dim = 0;
  if (header.size() != 2 || !detail::parse_u64(header[0], vocab_size) ||
      !detail::parse_u64(header[1], dim)) {
    throw FormatError("header must be '<vocab_size> <dim>'", lineno);
  }
  if (vocab_size == 0 || dim == 0) throw FormatError("vocab size and dim must be positive", lineno);

  std::vector<std::string> tokens;
  tokens.reserve(vocab_size);
  std::unordered_map<std::string, std::size_t> seen;
  std::vector<double> data;
  data.reserve(vocab_size * dim);

  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_fields(line);
    if (fields.empty()) continue;
    if (tokens.size() == vocab_size) {
      throw FormatError("more rows than the declared vocab size " + std::to_string(vocab_size),
                        lineno);
    }
    if (fields.size() != dim + 1) {
      throw FormatError("dimension mismatch: expected " + std::to_string(dim) + " values, got " +
                            std::to_string(fields.size() - 1),
                        lineno);
    }
    std::string tok(fields[0]);
    if (!seen.emplace(tok, tokens.size()).second) {
      throw FormatError("duplicate token '" + tok + "'", lineno);
    }
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      if (!detail::parse_double(fields[j], v)) {
        throw FormatError("cannot parse value '" + std::string(fields[j]) + "'", lineno);
      }
      if (!std::isfinite(v)) throw FormatError("non-finite value", lineno);
      data.push_back(v);
    }
    tokens.push_back(std::move(tok));
  }
  if (tokens.size() != vocab_size) {
    throw FormatError("header declares " + std::to_string(vocab_size) + " rows but file has " +
                          std::to_string(tokens.size()),
                      lineno);
  }
  return EmbeddingTable(Vocabulary(std::move(tokens)),
                        Matrix(vocab_size, dim, std::move(data)));
}

inline EmbeddingTable load_embeddings(const std::string& path) {
  auto in = detail::open_in(path);
  try {
    return parse_embeddings(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline std::string format_embeddings(const EmbeddingTable& table) {
  for (const auto& tok : table.vocab.tokens()) {
    if (tok.empty() || detail::contains_whitespace(tok)) {
      throw FormatError("token '" + tok + "' is empty or contains whitespace");
    }
  }
  std::string out;
  out += std::to_string(table.size()) + " " + std::to_string(table.dim()) + "\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += table.vocab.token(i);
    for (double v : table.row(i)) {
      out += ' ';
      out += detail::format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline void save_embeddings(const EmbeddingTable& table, const std::string& path) {
  detail::write_file(path, format_embeddings(table));
}

inline FrequencyTable parse_frequencies(std::istream& in, const Vocabulary& vocab) {
  FrequencyTable freq;
  freq.counts.assign(vocab.size(), 0);
  std::vector<bool> listed(vocab.size(), false);
  std::string line;
  std::size_t lineno = 0;
  std::size_t nonblank = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++nonblank;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("expected '<token>\\t<count>'", lineno);
    std::string_view tok(line.data(), tab);
    std::string_view count_str(line.data() + tab + 1, line.size() - tab - 1);
    std::uint64_t count = 0;
    if (!detail::parse_u64(count_str, count)) {
      throw FormatError("count must be a non-negative integer, got '" + std::string(count_str) + "'",
                        lineno);
    }
    auto idx = vocab.find(tok);
    if (!idx) continue;
    if (listed[*idx]) throw FormatError("token '" + std::string(tok) + "' listed twice", lineno);
    listed[*idx] = true;
    freq.counts[*idx] = count;
  }
  if (nonblank == 0) throw FormatError("empty frequency file");
  // Floor of 1 so every embedding can be sampled.
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (!listed[i] || freq.counts[i] == 0) freq.counts[i] = 1;
    freq.total += freq.counts[i];
  }
  return freq;
}

inline FrequencyTable load_frequencies(const std::string& path, const Vocabulary& vocab) {
  auto in = detail::open_in(path);
  try {
    return parse_frequencies(in, vocab);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline std::string format_frequencies(const FrequencyTable& freq, const Vocabulary& vocab) {
  if (freq.counts.size() != vocab.size()) throw ShapeError("frequency table / vocab size mismatch");
  std::string out;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out += vocab.token(i);
    out += '\t';
    out += std::to_string(freq.counts[i]);
    out += '\n';
  }
  return out;
}

inline void save_frequencies(const FrequencyTable& freq, const Vocabulary& vocab,
                             const std::string& path) {
  detail::write_file(path, format_frequencies(freq, vocab));
}

inline EmbeddingTable normalize_rows(EmbeddingTable table) {
  for (std::size_t i = 0; i < table.matrix.rows(); ++i) {
    auto r = table.matrix.row(i);
    const double n = norm(r);
    if (!(n > 0.0)) {
      throw NumericError("cannot normalize zero row '" + table.vocab.token(i) + "'");
    }
    for (double& v : r) v /= n;
  }
  return table;
}

// ---------------------------------------------------------------------------
// Plain matrix text files ("<rows> <cols>" header, one row per line). Used for
// dumping and loading bare encoder weights.

inline void save_matrix(const Matrix& m, const std::string& path) {
  std::string out = std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out += ' ';
      out += detail::format_double(m(i, j));
    }
    out += '\n';
  }
  detail::write_file(path, out);
}

inline Matrix load_matrix(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw FormatError(path + ": empty matrix file", 1);
  auto header = detail::split_fields(line);
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  if (header.size() != 2 || !detail::parse_u64(header[0], rows) ||
      !detail::parse_u64(header[1], cols)) {
    throw FormatError(path + ": header must be '<rows> <cols>'", 1);
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  std::size_t got_rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() != cols || got_rows == rows) {
      throw FormatError(path + ": malformed matrix row", lineno);
    }
    for (auto f : fields) {
      double v = 0.0;
      if (!detail::parse_double(f, v) || !std::isfinite(v)) {
        throw FormatError(path + ": bad value '" + std::string(f) + "'", lineno);
      }
      data.push_back(v);
    }
    ++got_rows;
  }
  if (got_rows != rows) throw FormatError(path + ": row count mismatch", lineno);
  return Matrix(rows, cols, std::move(data));
}

}  // namespace xlingmap
