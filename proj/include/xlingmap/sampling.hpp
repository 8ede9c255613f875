#pragma once

// Frequency-weighted embedding batches with word2vec-style subsampling of
// frequent words.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "xlingmap/embed_io.hpp"
#include "xlingmap/error.hpp"
#include "xlingmap/numerics.hpp"

namespace xlingmap {

enum class SubsampleRule {
  /// keep(w) = min(1, (√(f_w/t) + 1)·t/f_w), as in the word2vec C code.
  word2vec_code,
  /// keep(w) = min(1, √(t/f_w)), i.e. 1 − P_discard of the word2vec article.
  discard_sqrt,
};

struct SamplerConfig {
  double subsample_threshold = 1e-5;
  std::size_t batch_size = 128;
  SubsampleRule rule = SubsampleRule::word2vec_code;

  void validate() const {
    if (!(subsample_threshold > 0.0)) throw Error("sampler: subsample threshold must be positive");
    if (batch_size < 2) throw Error("sampler: batch size must be at least 2");
  }

  friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

inline double keep_weight(double rel_freq, double threshold, SubsampleRule rule) {
  if (rule == SubsampleRule::discard_sqrt) return std::min(1.0, std::sqrt(threshold / rel_freq));
  return std::min(1.0, (std::sqrt(rel_freq / threshold) + 1.0) * threshold / rel_freq);
}

struct AdjustedDistribution {
  std::vector<double> probabilities;
  std::vector<double> cumulative;  // cumulative.back() == 1 exactly

  std::size_t size() const noexcept { return probabilities.size(); }
};

/// p_w ∝ count_w · keep(w). Every count must be positive.
inline AdjustedDistribution build_adjusted(const FrequencyTable& freq, const SamplerConfig& cfg) {
  if (freq.counts.empty() || freq.total == 0) throw Error("build_adjusted: empty frequency table");
  if (!(cfg.subsample_threshold > 0.0)) throw Error("build_adjusted: threshold must be positive");
  const double total = static_cast<double>(freq.total);
  AdjustedDistribution dist;
  dist.probabilities.resize(freq.counts.size());
  double mass = 0.0;
  for (std::size_t i = 0; i < freq.counts.size(); ++i) {
    const double c = static_cast<double>(freq.counts[i]);
    if (c <= 0.0) throw Error("build_adjusted: zero count at row " + std::to_string(i));
    const double w = c * keep_weight(c / total, cfg.subsample_threshold, cfg.rule);
    dist.probabilities[i] = w;
    mass += w;
  }
  dist.cumulative.resize(dist.probabilities.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.probabilities.size(); ++i) {
    dist.probabilities[i] /= mass;
    acc += dist.probabilities[i];
    dist.cumulative[i] = acc;
  }
  dist.cumulative.back() = 1.0;
  return dist;
}

struct SampledBatch {
  Matrix rows;                       // n × d
  std::vector<std::size_t> indices;  // table row of each sample
};

inline std::size_t sample_index(const AdjustedDistribution& dist, Rng& rng) {
  const double u = rng.uniform();
  auto it = std::upper_bound(dist.cumulative.begin(), dist.cumulative.end(), u);
  auto idx = static_cast<std::size_t>(it - dist.cumulative.begin());
  return std::min(idx, dist.size() - 1);
}

/// n i.i.d. draws with replacement.
inline SampledBatch sample_batch(const AdjustedDistribution& dist, const EmbeddingTable& table,
                                 std::size_t n, Rng& rng) {
  if (dist.size() != table.size()) throw ShapeError("sample_batch: distribution/table size mismatch");
  if (n == 0) throw Error("sample_batch: n must be positive");
  SampledBatch batch{Matrix(n, table.dim()), std::vector<std::size_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx = sample_index(dist, rng);
    batch.indices[i] = idx;
    auto src = table.row(idx);
    std::copy(src.begin(), src.end(), batch.rows.row(i).begin());
  }
  return batch;
}

}  // namespace xlingmap
