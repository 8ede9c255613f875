#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "xlingmap/evaluation.hpp"
#include "xlingmap/sha256.hpp"

using namespace xlingmap;
using xlingmap::testing::random_matrix;
using xlingmap::testing::TempDir;

namespace {

EmbeddingTable make_table(const Matrix& m, char prefix = 'w') {
  std::vector<std::string> toks;
  for (std::size_t i = 0; i < m.rows(); ++i) toks.push_back(std::string(1, prefix) + std::to_string(i));
  return EmbeddingTable(Vocabulary(toks), m);
}

// Full sort by (cosine desc, index asc), computed from scratch.
std::vector<std::size_t> sorted_by_cosine(std::span<const double> q, const Matrix& m) {
  std::vector<std::pair<double, std::size_t>> s;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double d = 0.0, nq = 0.0, nr = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      d += q[j] * m(i, j);
      nq += q[j] * q[j];
      nr += m(i, j) * m(i, j);
    }
    s.push_back({d / std::sqrt(nq * nr), i});
  }
  std::sort(s.begin(), s.end(), [](auto a, auto b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<std::size_t> out;
  for (auto& p : s) out.push_back(p.second);
  return out;
}

Matrix naive_covariance(const Matrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> mu(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x(i, j) / static_cast<double>(n);
  Matrix c(d, d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += (x(i, a) - mu[a]) * (x(i, b) - mu[b]);
      c(a, b) = s / static_cast<double>(n - 1);
    }
  return c;
}

}  // namespace

TEST(Knn, QueryEqualToARowRanksItFirst) {
  const EmbeddingTable t = make_table(random_matrix(20, 6, 1));
  const auto res = knn(t.row(7), t, 3);
  EXPECT_EQ(res.neighbors[0].index, 7u);
  EXPECT_EQ(res.neighbors[0].token, "w7");
  EXPECT_NEAR(res.neighbors[0].similarity, 1.0, 1e-15);
}

TEST(Knn, FullRankingIsAPermutation) {
  const EmbeddingTable t = make_table(random_matrix(20, 6, 2));
  const auto res = knn(t.row(0), t, 20);
  std::vector<std::size_t> idx;
  for (const auto& n : res.neighbors) idx.push_back(n.index);
  std::sort(idx.begin(), idx.end());
  std::vector<std::size_t> all(20);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(idx, all);
}

TEST(Knn, MatchesFullSortOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Matrix m = random_matrix(20, 5, seed);
    const EmbeddingTable t = make_table(m);
    const Matrix q = random_matrix(1, 5, seed + 50);
    const auto expect = sorted_by_cosine(q.row(0), m);
    const auto res = knn(q.row(0), t, 20);
    for (std::size_t r = 0; r < 20; ++r) EXPECT_EQ(res.neighbors[r].index, expect[r]);
  }
}

TEST(Knn, TiesGoToTheLowerIndex) {
  const EmbeddingTable t = make_table(Matrix{{1, 0}, {2, 0}, {0, 1}, {3, 0}});
  const auto res = knn(std::vector<double>{5, 0}, t, 3);
  EXPECT_EQ(res.neighbors[0].index, 0u);
  EXPECT_EQ(res.neighbors[1].index, 1u);
  EXPECT_EQ(res.neighbors[2].index, 3u);
}

TEST(Knn, InvariantToQueryScale) {
  const EmbeddingTable t = make_table(random_matrix(30, 4, 3));
  const Matrix q = random_matrix(1, 4, 4);
  const auto a = knn(q.row(0), t, 10);
  const auto b = knn((q * 123.5).row(0), t, 10);
  for (std::size_t r = 0; r < 10; ++r) {
    EXPECT_EQ(a.neighbors[r].index, b.neighbors[r].index);
    EXPECT_NEAR(a.neighbors[r].similarity, b.neighbors[r].similarity, 1e-12);
  }
}

TEST(Knn, EuclideanMetric) {
  const EmbeddingTable t = make_table(Matrix{{0, 0}, {10, 0}, {1, 1}});
  const auto res = knn(std::vector<double>{9, 0}, t, 3, SimilarityMetric::euclidean);
  EXPECT_EQ(res.neighbors[0].index, 1u);
  EXPECT_DOUBLE_EQ(res.neighbors[0].similarity, -1.0);
}

TEST(Knn, Errors) {
  const EmbeddingTable t = make_table(random_matrix(5, 3, 5));
  EXPECT_THROW(knn(std::vector<double>{0, 0, 0}, t, 1), NumericError);
  EXPECT_THROW(knn(std::vector<double>{1, 0}, t, 1), ShapeError);
  EXPECT_THROW(knn(std::vector<double>{1, 0, 0}, t, 6), Error);
  EXPECT_THROW(knn(std::vector<double>{1, 0, 0}, t, 0), Error);
}

TEST(Precision, IdentityMappingIsPerfect) {
  const EmbeddingTable t = make_table(random_matrix(25, 6, 6));
  BilingualDictionary dict;
  for (const auto& tok : t.vocab.tokens()) dict.add(tok, tok);
  const auto rep = precision_at_k(t, t, dict, 3);
  EXPECT_EQ(rep.at(1), 1.0);
  EXPECT_EQ(rep.resolvable, 25u);
}

TEST(Precision, AbsentTargetsGiveZero) {
  // Each source points exactly away from its listed target.
  const EmbeddingTable src = make_table(Matrix{{1, 0}, {0, 1}}, 's');
  const EmbeddingTable tgt = make_table(Matrix{{-1, 0}, {0, -1}, {1, 0.1}, {0.1, 1}}, 't');
  BilingualDictionary dict;
  dict.add("s0", "t0");
  dict.add("s1", "t1");
  const auto rep = precision_at_k(src, tgt, dict, 2);
  EXPECT_EQ(rep.at(1), 0.0);
  EXPECT_EQ(rep.at(2), 0.0);
}

TEST(Precision, MonotoneInKAndCountsUnresolvable) {
  const EmbeddingTable src = make_table(random_matrix(40, 5, 7), 's');
  const EmbeddingTable tgt = make_table(random_matrix(40, 5, 8), 't');
  BilingualDictionary dict;
  for (int i = 0; i < 40; ++i) dict.add("s" + std::to_string(i), "t" + std::to_string(i));
  dict.add("missing", "t0");
  dict.add("s0", "nowhere");
  const auto rep = precision_at_k(src, tgt, dict, 40);
  EXPECT_EQ(rep.resolvable, 40u);
  EXPECT_EQ(rep.unresolvable, 1u);
  for (std::size_t k = 2; k <= 40; ++k) EXPECT_GE(rep.at(k), rep.at(k - 1));
  EXPECT_EQ(rep.at(40), 1.0);
}

TEST(Precision, AnyAcceptableTargetCounts) {
  const EmbeddingTable src = make_table(Matrix{{1, 0}}, 's');
  const EmbeddingTable tgt = make_table(Matrix{{0, 1}, {1, 0}}, 't');
  BilingualDictionary dict;
  dict.add("s0", "t0");
  dict.add("s0", "t1");
  EXPECT_EQ(precision_at_k(src, tgt, dict, 1).at(1), 1.0);
}

TEST(Precision, NoResolvableEntriesThrows) {
  const EmbeddingTable t = make_table(random_matrix(3, 2, 9));
  BilingualDictionary dict;
  dict.add("x", "y");
  EXPECT_THROW(precision_at_k(t, t, dict, 1), Error);
}

TEST(Dictionary, LoadSaveRoundTripAndOrder) {
  TempDir dir;
  {
    std::ofstream out(dir.file("d.tsv"), std::ios::binary);
    out << "b\tx\na\ty\nb\tz\r\n\nb\tx\n";
  }
  const auto dict = load_dictionary(dir.file("d.tsv"));
  ASSERT_EQ(dict.size(), 2u);
  EXPECT_EQ(dict.entries[0].source, "b");
  EXPECT_EQ(dict.entries[0].targets, (std::vector<std::string>{"x", "z"}));
  EXPECT_EQ(dict.entries[1].source, "a");
  save_dictionary(dict, dir.file("e.tsv"));
  EXPECT_EQ(load_dictionary(dir.file("e.tsv")), dict);
  save_dictionary(load_dictionary(dir.file("e.tsv")), dir.file("f.tsv"));
  EXPECT_EQ(read_file(dir.file("e.tsv")), read_file(dir.file("f.tsv")));
}

TEST(Dictionary, Errors) {
  TempDir dir;
  for (const char* bad : {"a b\n", "a\tb\tc\n", "\tb\n", "a\t\n", ""}) {
    std::ofstream(dir.file("bad.tsv"), std::ios::binary) << bad;
    EXPECT_THROW(load_dictionary(dir.file("bad.tsv")), FormatError) << bad;
  }
}

TEST(Collapse, IdenticalRows) {
  Matrix m(10, 4);
  for (std::size_t i = 0; i < 10; ++i) m.row(i)[0] = 1.0, m.row(i)[2] = -2.0;
  const auto rep = collapse_metric(m);
  EXPECT_NEAR(rep.mean_pairwise_cosine, 1.0, 1e-12);
  EXPECT_EQ(rep.mean_dim_std, 0.0);
  EXPECT_EQ(rep.m, 10u);
}

TEST(Collapse, OrthonormalBasisIsZero) {
  EXPECT_NEAR(collapse_metric(Matrix::identity(7)).mean_pairwise_cosine, 0.0, 1e-15);
}

TEST(Collapse, RandomGaussianRowsAreSpread) {
  Rng rng(10);
  EXPECT_LT(collapse_metric(random_normal(100, 50, rng)).mean_pairwise_cosine, 0.2);
}

TEST(Collapse, MatchesPairwiseLoopAndIsInvariant) {
  const Matrix m = random_matrix(30, 5, 11, -0.5, 1.0);
  double s = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t j = i + 1; j < 30; ++j, ++pairs) s += cosine(m.row(i), m.row(j));
  const double direct = s / pairs;
  EXPECT_NEAR(collapse_metric(m).mean_pairwise_cosine, direct, 1e-12);

  Matrix shuffled(30, 5);
  Rng rng(12);
  for (std::size_t i = 0; i < 30; ++i) {
    const std::size_t src = (i * 7) % 30;
    const double scale = rng.uniform(0.1, 10.0);
    for (std::size_t j = 0; j < 5; ++j) shuffled(i, j) = m(src, j) * scale;
  }
  EXPECT_NEAR(collapse_metric(shuffled).mean_pairwise_cosine, direct, 1e-12);
}

TEST(Collapse, Errors) {
  EXPECT_THROW(collapse_metric(Matrix(1, 3, 1.0)), Error);
  EXPECT_THROW(collapse_metric(Matrix{{1, 0}, {0, 0}}), NumericError);
}

TEST(Synth, NoiseFreeTargetIsExactRotation) {
  SyntheticSpec spec;
  spec.vocab_src = spec.vocab_tgt = 300;
  const auto data = synth_generate(spec);
  EXPECT_EQ(data.tgt.matrix, matmul(data.src.matrix, data.rotation));
  EXPECT_LT(max_abs(matmul_tn(data.rotation, data.rotation) - Matrix::identity(spec.d)), 1e-10);
  EXPECT_EQ(data.src.vocab.token(0), "s0001");
  EXPECT_EQ(data.tgt.vocab.token(299), "t0300");
  EXPECT_EQ(data.truth.size(), 300u);
  EXPECT_EQ(data.truth.entries[4].source, "s0005");
  EXPECT_EQ(data.truth.entries[4].targets, (std::vector<std::string>{"t0005"}));
}

TEST(Synth, OracleEncoderGivesPerfectPrecision) {
  SyntheticSpec spec;
  spec.vocab_src = spec.vocab_tgt = 500;
  const auto data = synth_generate(spec);
  const EmbeddingTable mapped = map_table(EncoderDecoder(data.rotation), data.src);
  EXPECT_EQ(precision_at_k(mapped, data.tgt, data.truth, 1).at(1), 1.0);
}

TEST(Synth, SameSeedBitIdenticalDifferentSeedDiffers) {
  SyntheticSpec spec;
  spec.vocab_src = 100;
  spec.vocab_tgt = 120;
  spec.noise_sigma = 0.1;
  const auto a = synth_generate(spec);
  const auto b = synth_generate(spec);
  EXPECT_EQ(a.src, b.src);
  EXPECT_EQ(a.tgt, b.tgt);
  EXPECT_EQ(a.rotation, b.rotation);
  EXPECT_EQ(a.tgt.size(), 120u);
  EXPECT_EQ(a.truth.size(), 100u);
  spec.seed = 2;
  EXPECT_NE(synth_generate(spec).src, a.src);
}

TEST(Synth, ZipfCounts) {
  const auto f = zipf_frequencies(4, 1.0, 12);
  EXPECT_EQ(f.counts, (std::vector<std::uint64_t>{12, 6, 4, 3}));
  EXPECT_EQ(f.total, 25u);
  EXPECT_EQ(zipf_frequencies(3, 2.0, 1).counts, (std::vector<std::uint64_t>{1, 1, 1}));
}

TEST(DistributionMatch, IdenticalSamplesHaveZeroError) {
  Rng rng(13);
  Discriminator monitor(ModelConfig{.d = 4, .k = 3, .T = 1}, rng, "m");
  const Matrix x = random_matrix(50, 4, 14);
  const auto rep = distribution_match_report(x, x, monitor);
  EXPECT_EQ(rep.covariance_rel_error, 0.0);
  EXPECT_EQ(rep.mean_diff, 0.0);
}

TEST(DistributionMatch, UntrainedMonitorTieRule) {
  // Every output is exactly 0.5 and counts as negative: all mapped rows are
  // classified correctly, all target rows incorrectly.
  Rng rng(15);
  Discriminator monitor(ModelConfig{.d = 4, .k = 3, .T = 2}, rng, "m");
  const auto rep = distribution_match_report(random_matrix(30, 4, 16), random_matrix(10, 4, 17), monitor);
  EXPECT_DOUBLE_EQ(rep.monitor_accuracy, 30.0 / 40.0);
  const auto even = distribution_match_report(random_matrix(20, 4, 18), random_matrix(20, 4, 19), monitor);
  EXPECT_DOUBLE_EQ(even.monitor_accuracy, 0.5);
}

TEST(DistributionMatch, PointMassesAgainstNaiveCovariance) {
  // Two disjoint point masses on each side.
  Matrix mapped(10, 3), target(8, 3);
  for (std::size_t i = 0; i < 10; ++i) {
    mapped(i, 0) = i < 4 ? 1.0 : -2.0;
    mapped(i, 2) = i < 4 ? 0.5 : 3.0;
  }
  for (std::size_t i = 0; i < 8; ++i) {
    target(i, 1) = i < 5 ? 2.0 : -1.0;
    target(i, 2) = i < 5 ? 1.0 : 4.0;
  }
  Rng rng(20);
  Discriminator monitor(ModelConfig{.d = 3, .k = 2, .T = 1}, rng, "m");
  const auto rep = distribution_match_report(mapped, target, monitor);
  const Matrix cm = naive_covariance(mapped), ct = naive_covariance(target);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    num += std::pow(cm.data()[i] - ct.data()[i], 2);
    den += std::pow(ct.data()[i], 2);
  }
  EXPECT_NEAR(rep.covariance_rel_error, std::sqrt(num / den), 1e-12);
  EXPECT_TRUE(rep.covariance_relative);
  EXPECT_LT(max_abs(sample_covariance(mapped) - cm), 1e-14);
}

TEST(DistributionMatch, ZeroTargetMeanFallsBackToAbsolute) {
  Rng rng(21);
  Discriminator monitor(ModelConfig{.d = 2, .k = 2, .T = 1}, rng, "m");
  const Matrix target{{1, -1}, {-1, 1}};
  const Matrix mapped{{3, 4}, {3, 4}};
  const auto rep = distribution_match_report(mapped, target, monitor);
  EXPECT_FALSE(rep.mean_diff_relative);
  EXPECT_DOUBLE_EQ(rep.mean_diff, 5.0);
}

TEST(DistributionMatch, DoesNotDisturbTheMonitor) {
  Rng rng(22);
  Discriminator monitor(ModelConfig{.d = 4, .k = 3, .T = 2}, rng, "m");
  const auto buffers_before = *monitor.buffers()[0].second;
  distribution_match_report(random_matrix(20, 4, 23), random_matrix(20, 4, 24), monitor);
  EXPECT_EQ(*monitor.buffers()[0].second, buffers_before);
  EXPECT_EQ(monitor.mode(), Mode::training);
}
