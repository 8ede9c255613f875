#pragma once

// Nearest-neighbour queries, dictionary precision, collapse diagnostics,
// distribution matching reports, and the synthetic isomorphism benchmark.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlingmap/embed_io.hpp"
#include "xlingmap/error.hpp"
#include "xlingmap/models.hpp"
#include "xlingmap/numerics.hpp"

namespace xlingmap {

enum class SimilarityMetric { cosine, euclidean };

struct Neighbor {
  std::size_t index;
  std::string token;
  double similarity;  // cosine, or negated Euclidean distance
};

struct KBestResult {
  std::string query;
  std::vector<Neighbor> neighbors;
};

/// Exact scan over a target table with precomputed row norms.
class NeighborIndex {
 public:
  explicit NeighborIndex(const EmbeddingTable& tgt, SimilarityMetric metric = SimilarityMetric::cosine)
      : table_(&tgt), metric_(metric), norms_(tgt.size()) {
    for (std::size_t i = 0; i < tgt.size(); ++i) norms_[i] = norm(tgt.row(i));
  }

  /// Scores for every target row. Zero target rows score 0 under cosine.
  std::vector<double> scores(std::span<const double> query) const {
    if (query.size() != table_->dim()) throw ShapeError("knn: query dimension mismatch");
    const double qn = norm(query);
    if (!(qn > 0.0)) throw NumericError("knn: zero query vector");
    std::vector<double> s(table_->size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto row = table_->row(i);
      if (metric_ == SimilarityMetric::cosine) {
        s[i] = norms_[i] > 0.0 ? std::clamp(dot(query, row) / (qn * norms_[i]), -1.0, 1.0) : 0.0;
      } else {
        double d2 = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
          const double diff = query[j] - row[j];
          d2 += diff * diff;
        }
        s[i] = -std::sqrt(d2);
      }
    }
    return s;
  }

  /// Top-k by score; ties go to the lower row index.
  std::vector<Neighbor> top_k(std::span<const double> query, std::size_t k) const {
    if (k == 0 || k > table_->size()) throw Error("knn: k must lie in [1, |vocab|]");
    const auto s = scores(query);
    std::vector<std::size_t> order(s.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto better = [&](std::size_t a, std::size_t b) { return s[a] > s[b] || (s[a] == s[b] && a < b); };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
    std::vector<Neighbor> out;
    out.reserve(k);
    for (std::size_t r = 0; r < k; ++r) out.push_back({order[r], table_->vocab.token(order[r]), s[order[r]]});
    return out;
  }

  /// 1-based rank of the best-ranked row among `candidates` under the same
  /// ordering as top_k.
  std::size_t best_rank(std::span<const double> query, const std::vector<std::size_t>& candidates) const {
    const auto s = scores(query);
    std::size_t best = candidates.front();
    for (std::size_t c : candidates)
      if (s[c] > s[best] || (s[c] == s[best] && c < best)) best = c;
    std::size_t rank = 1;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] > s[best] || (s[i] == s[best] && i < best)) ++rank;
    return rank;
  }

  const EmbeddingTable& table() const noexcept { return *table_; }

 private:
  const EmbeddingTable* table_;
  SimilarityMetric metric_;
  std::vector<double> norms_;
};

inline KBestResult knn(std::span<const double> query, const EmbeddingTable& tgt, std::size_t k,
                       SimilarityMetric metric = SimilarityMetric::cosine) {
  return KBestResult{"", NeighborIndex(tgt, metric).top_k(query, k)};
}

// ---------------------------------------------------------------------------
// Bilingual dictionaries: "src<TAB>tgt" per line, several lines per source
// allowed. Sources keep first-appearance order.

struct BilingualDictionary {
  struct Entry {
    std::string source;
    std::vector<std::string> targets;
    friend bool operator==(const Entry&, const Entry&) = default;
  };
  std::vector<Entry> entries;

  void add(const std::string& src, const std::string& tgt) {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const Entry& e) { return e.source == src; });
    if (it == entries.end()) {
      entries.push_back({src, {tgt}});
    } else if (std::find(it->targets.begin(), it->targets.end(), tgt) == it->targets.end()) {
      it->targets.push_back(tgt);
    }
  }

  std::size_t size() const noexcept { return entries.size(); }
  friend bool operator==(const BilingualDictionary&, const BilingualDictionary&) = default;
};

inline BilingualDictionary load_dictionary(const std::string& path) {
  auto in = detail::open_in(path);
  BilingualDictionary dict;
  std::unordered_map<std::string, std::size_t> pos;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
        line.find('\t', tab + 1) != std::string::npos) {
      throw FormatError(path + ": expected '<src>\\t<tgt>'", lineno);
    }
    std::string src = line.substr(0, tab);
    std::string tgt = line.substr(tab + 1);
    auto [it, fresh] = pos.emplace(src, dict.entries.size());
    if (fresh) {
      dict.entries.push_back({std::move(src), {std::move(tgt)}});
    } else {
      auto& targets = dict.entries[it->second].targets;
      if (std::find(targets.begin(), targets.end(), tgt) == targets.end()) targets.push_back(std::move(tgt));
    }
  }
  if (dict.entries.empty()) throw FormatError(path + ": empty dictionary");
  return dict;
}

inline void save_dictionary(const BilingualDictionary& dict, const std::string& path) {
  std::string out;
  for (const auto& e : dict.entries)
    for (const auto& t : e.targets) out += e.source + '\t' + t + '\n';
  detail::write_file(path, out);
}

// ---------------------------------------------------------------------------

struct PrecisionReport {
  std::size_t k = 0;
  std::size_t resolvable = 0;
  std::size_t unresolvable = 0;
  std::vector<double> precision;  // precision[j] = P@(j+1), j < k
  struct Hit {
    std::string source;
    std::size_t rank;  // 1-based rank of the best acceptable target
  };
  std::vector<Hit> hits;

  double at(std::size_t kk) const { return precision.at(kk - 1); }
};

/// P@1..P@k of mapped source vectors against the target table. An entry is
/// resolvable when its source is in `mapped_src` and at least one of its
/// targets is in `tgt`.
inline PrecisionReport precision_at_k(const EmbeddingTable& mapped_src, const EmbeddingTable& tgt,
                                      const BilingualDictionary& dict, std::size_t k,
                                      SimilarityMetric metric = SimilarityMetric::cosine) {
  if (mapped_src.dim() != tgt.dim()) throw ShapeError("precision_at_k: dimension mismatch");
  if (k == 0 || k > tgt.size()) throw Error("precision_at_k: k must lie in [1, |target vocab|]");
  NeighborIndex index(tgt, metric);
  PrecisionReport rep;
  rep.k = k;
  std::vector<std::size_t> hits_at(k + 1, 0);
  for (const auto& e : dict.entries) {
    auto src = mapped_src.vocab.find(e.source);
    std::vector<std::size_t> cands;
    for (const auto& t : e.targets)
      if (auto ti = tgt.vocab.find(t)) cands.push_back(*ti);
    if (!src || cands.empty()) {
      ++rep.unresolvable;
      continue;
    }
    ++rep.resolvable;
    const std::size_t rank = index.best_rank(mapped_src.row(*src), cands);
    rep.hits.push_back({e.source, rank});
    if (rank <= k) ++hits_at[rank];
  }
  if (rep.resolvable == 0) throw Error("precision_at_k: no resolvable dictionary entries");
  std::size_t cum = 0;
  for (std::size_t j = 1; j <= k; ++j) {
    cum += hits_at[j];
    rep.precision.push_back(static_cast<double>(cum) / static_cast<double>(rep.resolvable));
  }
  return rep;
}

/// Applies an encoder to every row of a table, keeping its vocabulary.
inline EmbeddingTable map_table(const EncoderDecoder& enc, const EmbeddingTable& src) {
  if (src.dim() != enc.dim()) {
    throw ShapeError("encoder dimension " + std::to_string(enc.dim()) + " does not match table dimension " +
                     std::to_string(src.dim()));
  }
  return EmbeddingTable(src.vocab, enc.encode(src.matrix));
}

// ---------------------------------------------------------------------------

struct CollapseReport {
  double mean_pairwise_cosine = 0.0;
  double mean_dim_std = 0.0;
  std::size_t m = 0;
};

/// Mean cosine over all m(m−1)/2 row pairs, via |Σ u_i|² on unit rows.
inline CollapseReport collapse_metric(const Matrix& outputs) {
  const std::size_t m = outputs.rows();
  const std::size_t d = outputs.cols();
  if (m < 2) throw Error("collapse_metric: need at least 2 rows");
  std::vector<double> unit_sum(d, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    auto r = outputs.row(i);
    const double n = norm(r);
    if (!(n > 0.0)) throw NumericError("collapse_metric: zero row " + std::to_string(i));
    for (std::size_t j = 0; j < d; ++j) unit_sum[j] += r[j] / n;
  }
  double s2 = 0.0;
  for (double v : unit_sum) s2 += v * v;
  const double md = static_cast<double>(m);
  CollapseReport rep;
  rep.m = m;
  rep.mean_pairwise_cosine = std::clamp((s2 - md) / (md * (md - 1.0)), -1.0, 1.0);
  double std_sum = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += outputs(i, j);
    mean /= md;
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) var += (outputs(i, j) - mean) * (outputs(i, j) - mean);
    std_sum += std::sqrt(var / md);
  }
  rep.mean_dim_std = std_sum / static_cast<double>(d);
  return rep;
}

// ---------------------------------------------------------------------------

inline Matrix sample_mean(const Matrix& x) {
  Matrix mu = column_sums(x);
  mu *= 1.0 / static_cast<double>(x.rows());
  return mu;
}

/// Unbiased sample covariance (d×d).
inline Matrix sample_covariance(const Matrix& x) {
  if (x.rows() < 2) throw Error("sample_covariance: need at least 2 rows");
  const Matrix mu = sample_mean(x);
  Matrix centered = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) centered(i, j) -= mu(0, j);
  Matrix cov = matmul_tn(centered, centered);
  cov *= 1.0 / static_cast<double>(x.rows() - 1);
  return cov;
}

struct DistributionMatchReport {
  double mean_diff = 0.0;           // ‖μ_m − μ_t‖/‖μ_t‖, or absolute when ‖μ_t‖ < 1e-9
  bool mean_diff_relative = true;
  double covariance_rel_error = 0.0;  // ‖Σ_m − Σ_t‖_F/‖Σ_t‖_F, or absolute when ‖Σ_t‖_F < 1e-12
  bool covariance_relative = true;
  double monitor_accuracy = 0.0;    // target rows are positives; p = 0.5 counts as negative
};

/// Compares generator outputs with a target sample. The monitor is evaluated
/// in inference mode on a copy, so its state is left untouched.
inline DistributionMatchReport distribution_match_report(const Matrix& mapped, const Matrix& target_sample,
                                                         const Discriminator& monitor) {
  if (mapped.cols() != target_sample.cols()) throw ShapeError("distribution_match_report: dimension mismatch");
  if (mapped.rows() < 2 || target_sample.rows() < 2) throw Error("distribution_match_report: need ≥ 2 rows each");
  DistributionMatchReport rep;

  const Matrix mu_m = sample_mean(mapped);
  const Matrix mu_t = sample_mean(target_sample);
  const double diff = frobenius_norm(mu_m - mu_t);
  const double mt = frobenius_norm(mu_t);
  rep.mean_diff_relative = mt >= 1e-9;
  rep.mean_diff = rep.mean_diff_relative ? diff / mt : diff;

  const Matrix cov_m = sample_covariance(mapped);
  const Matrix cov_t = sample_covariance(target_sample);
  const double cdiff = frobenius_norm(cov_m - cov_t);
  const double ct = frobenius_norm(cov_t);
  rep.covariance_relative = ct >= 1e-12;
  rep.covariance_rel_error = rep.covariance_relative ? cdiff / ct : cdiff;

  Discriminator judge = monitor;
  judge.set_mode(Mode::inference);
  Rng unused(0);
  const Matrix p_pos = judge.forward(target_sample, unused);
  const Matrix p_neg = judge.forward(mapped, unused);
  std::size_t correct = 0;
  for (double p : p_pos.data()) correct += p > 0.5 ? 1 : 0;
  for (double p : p_neg.data()) correct += p > 0.5 ? 0 : 1;
  rep.monitor_accuracy = static_cast<double>(correct) / static_cast<double>(p_pos.size() + p_neg.size());
  return rep;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark: a Gaussian-mixture source cloud and a target cloud that
// is an exact rotation of it (plus optional noise).

struct SyntheticSpec {
  std::size_t d = 16;
  std::size_t vocab_src = 2000;
  std::size_t vocab_tgt = 2000;
  std::size_t components = 5;
  double mean_scale = 1.0;     // component means ~ N(0, mean_scale² I)
  double component_std = 0.5;  // within-component spread
  double noise_sigma = 0.0;
  double zipf_exponent = 1.0;
  double zipf_max_count = 1e6;  // count of the most frequent word
  std::uint64_t seed = 1;

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

struct SyntheticData {
  EmbeddingTable src;
  EmbeddingTable tgt;
  FrequencyTable src_freq;
  FrequencyTable tgt_freq;
  BilingualDictionary truth;
  Matrix rotation;  // hidden map Q: tgt row i = src row i · Q (+ noise)
};

inline std::string synth_token(char prefix, std::size_t i, std::size_t vocab) {
  const std::size_t width = std::max<std::size_t>(4, std::to_string(vocab).size());
  std::string num = std::to_string(i + 1);
  return std::string(1, prefix) + std::string(width - std::min(width, num.size()), '0') + num;
}

/// Zipf counts for ranks 1..n: max(1, round(c_max / rank^s)).
inline FrequencyTable zipf_frequencies(std::size_t n, double exponent, double max_count) {
  FrequencyTable f;
  f.counts.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = std::round(max_count / std::pow(static_cast<double>(i + 1), exponent));
    f.counts[i] = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(c));
    f.total += f.counts[i];
  }
  return f;
}

inline SyntheticData synth_generate(const SyntheticSpec& spec) {
  if (spec.d == 0 || spec.vocab_src == 0 || spec.vocab_tgt == 0 || spec.components == 0) {
    throw Error("synth: d, vocab sizes and component count must be positive");
  }
  if (spec.noise_sigma < 0.0) throw Error("synth: noise sigma must be non-negative");
  const Rng root(spec.seed);
  Rng mean_rng = root.substream("synth.means");
  Rng row_rng = root.substream("synth.rows");
  Rng noise_rng = root.substream("synth.noise");
  Rng q_rng = root.substream("synth.rotation");

  const Matrix means = random_normal(spec.components, spec.d, mean_rng, spec.mean_scale);
  auto draw_cloud = [&](std::size_t n) {
    Matrix x(n, spec.d);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = row_rng.below(spec.components);
      for (std::size_t j = 0; j < spec.d; ++j) x(i, j) = means(c, j) + spec.component_std * row_rng.normal();
    }
    return x;
  };

  const std::size_t shared = std::min(spec.vocab_src, spec.vocab_tgt);
  Matrix src_rows = draw_cloud(spec.vocab_src);
  Matrix q = init_orthogonal(spec.d, q_rng);

  // Target words beyond the source vocabulary come from fresh mixture draws.
  Matrix pre_image(spec.vocab_tgt, spec.d);
  for (std::size_t i = 0; i < shared; ++i)
    std::copy(src_rows.row(i).begin(), src_rows.row(i).end(), pre_image.row(i).begin());
  if (spec.vocab_tgt > shared) {
    Matrix extra = draw_cloud(spec.vocab_tgt - shared);
    for (std::size_t i = 0; i < extra.rows(); ++i)
      std::copy(extra.row(i).begin(), extra.row(i).end(), pre_image.row(shared + i).begin());
  }
  Matrix tgt_rows = matmul(pre_image, q);
  if (spec.noise_sigma > 0.0) {
    for (double& v : tgt_rows.data()) v += spec.noise_sigma * noise_rng.normal();
  }

  std::vector<std::string> src_tokens;
  std::vector<std::string> tgt_tokens;
  for (std::size_t i = 0; i < spec.vocab_src; ++i) src_tokens.push_back(synth_token('s', i, spec.vocab_src));
  for (std::size_t i = 0; i < spec.vocab_tgt; ++i) tgt_tokens.push_back(synth_token('t', i, spec.vocab_tgt));

  SyntheticData out;
  out.src = EmbeddingTable(Vocabulary(src_tokens), std::move(src_rows));
  out.tgt = EmbeddingTable(Vocabulary(tgt_tokens), std::move(tgt_rows));
  out.src_freq = zipf_frequencies(spec.vocab_src, spec.zipf_exponent, spec.zipf_max_count);
  out.tgt_freq = zipf_frequencies(spec.vocab_tgt, spec.zipf_exponent, spec.zipf_max_count);
  for (std::size_t i = 0; i < shared; ++i) out.truth.add(src_tokens[i], tgt_tokens[i]);
  out.rotation = std::move(q);
  return out;
}

}  // namespace xlingmap
