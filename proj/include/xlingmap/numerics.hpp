#pragma once

// Dense row-major matrices, cosine geometry, the splittable RNG, and the
// finite-difference gradient checker.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "xlingmap/error.hpp"

namespace xlingmap {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data size " + std::to_string(data_.size()) + " != " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Matrix& operator+=(const Matrix& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    require_same_shape(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Matrix& operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

  std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

 private:
  void require_same_shape(const Matrix& o, const char* op) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) {
      throw ShapeError(std::string("shape mismatch in ") + op + ": " + shape_str() + " vs " +
                       o.shape_str());
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Threading. Work is split by output rows only, so every output entry is
// reduced by a single thread in a fixed order and results do not depend on the
// thread count.

namespace detail {
inline std::size_t& thread_setting() {
  static std::size_t n = [] {
    if (const char* env = std::getenv("XLINGMAP_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (end != env && v >= 1) return static_cast<std::size_t>(v);
    }
    return std::size_t{1};
  }();
  return n;
}

template <class Fn>
void parallel_rows(std::size_t rows, std::size_t work, Fn&& fn) {
  std::size_t threads = std::min(thread_setting(), rows);
  constexpr std::size_t kMinWorkPerThread = 1u << 18;
  if (threads > 1) threads = std::min(threads, std::max<std::size_t>(1, work / kMinWorkPerThread));
  if (threads <= 1) {
    fn(std::size_t{0}, rows);
    return;
  }
  std::vector<std::jthread> pool;
  std::size_t chunk = (rows + threads - 1) / threads;
  for (std::size_t begin = 0; begin < rows; begin += chunk) {
    pool.emplace_back([&fn, begin, end = std::min(rows, begin + chunk)] { fn(begin, end); });
  }
}
}  // namespace detail

/// Caps internal parallelism. Defaults to $XLINGMAP_THREADS or 1.
inline void set_num_threads(std::size_t n) { detail::thread_setting() = std::max<std::size_t>(1, n); }
inline std::size_t num_threads() { return detail::thread_setting(); }

// ---------------------------------------------------------------------------
// Products. Each output entry is accumulated left to right over the inner
// dimension.

namespace detail {
// c[r0..r1) += a[r0..r1) * b for row-major a (rows x inner), b (inner x n).
// Built for AVX2 and baseline; both evaluate the same IEEE operations in the
// same order, so results are identical.
__attribute__((target_clones("avx2", "default"))) inline void gemm_rows(
    const double* __restrict a, const double* __restrict b, double* __restrict c, std::size_t r0,
    std::size_t r1, std::size_t inner, std::size_t n) noexcept {
  for (std::size_t i = r0; i < r1; ++i) {
    double* out = c + i * n;
    const double* arow = a + i * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = arow[k];
      const double* brow = b + k * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
    }
  }
}
}  // namespace detail

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_str() + " * " + b.shape_str());
  }
  Matrix c(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  if (c.empty()) return c;
  detail::parallel_rows(a.rows(), a.rows() * inner * n, [&](std::size_t r0, std::size_t r1) {
    detail::gemm_rows(a.data().data(), b.data().data(), c.data().data(), r0, r1, inner, n);
  });
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// aᵀ · b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn shape mismatch: " + a.shape_str() + "^T * " + b.shape_str());
  }
  return matmul(transpose(a), b);
}

/// a · bᵀ
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt shape mismatch: " + a.shape_str() + " * " + b.shape_str() + "^T");
  }
  return matmul(a, transpose(b));
}

inline Matrix hadamard(Matrix a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("hadamard shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  }
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] *= bd[i];
  return a;
}

/// Sum over rows, returning a 1×cols matrix.
inline Matrix column_sums(const Matrix& a) {
  Matrix s(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s(0, j) += a(i, j);
  return s;
}

inline Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.cols() != bottom.cols()) throw ShapeError("vstack column mismatch");
  std::vector<double> data(top.values());
  data.insert(data.end(), bottom.values().begin(), bottom.values().end());
  return Matrix(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Vector geometry.

inline double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double norm(std::span<const double> u) { return std::sqrt(dot(u, u)); }

inline double cosine(std::span<const double> u, std::span<const double> v) {
  const double nu = norm(u);
  const double nv = norm(v);
  if (!(nu > 0.0) || !(nv > 0.0)) throw NumericError("cosine of a zero-norm vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Random numbers.

namespace detail {
inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

/// Counter-based SplitMix64 generator.
///
/// Output i of a stream with key K is mix64(K + (i+1)·γ). The whole state is
/// the (key, counter) pair, so streams serialize exactly. Named substreams
/// derive their key from the root seed and the name only; they are independent
/// of each other and of how far any other stream has been advanced.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "splitmix64-ctr-v1";

  explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed), key_(detail::mix64(seed)) {}

  static Rng from_state(std::uint64_t seed, std::uint64_t key, std::uint64_t counter) noexcept {
    Rng r(seed);
    r.key_ = key;
    r.counter_ = counter;
    return r;
  }

  Rng substream(std::string_view name) const noexcept {
    Rng r(seed_);
    r.key_ = detail::mix64(detail::mix64(seed_) ^ detail::mix64(detail::fnv1a64(name)));
    return r;
  }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; always consumes exactly two draws.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

inline Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

inline Matrix random_uniform(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

// ---------------------------------------------------------------------------
// Gradient checking.

/// Compares an analytic gradient against central differences.
///
/// `value(x)` returns f(x); `gradient(x)` returns ∇f(x) as a vector of the same
/// length. Returns max_i |g_i − c_i| / max(1, |g_i|, |c_i|) where c is the
/// central difference estimate with step `eps`.
template <class ValueFn, class GradFn>
double grad_check(ValueFn&& value, GradFn&& gradient, std::vector<double> x0, double eps = 1e-5) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) throw Error("grad_check: eps must lie in [1e-7, 1e-4]");
  const std::vector<double> analytic = gradient(std::span<const double>(x0));
  if (analytic.size() != x0.size()) throw ShapeError("grad_check: gradient length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double saved = x0[i];
    x0[i] = saved + eps;
    const double fp = value(std::span<const double>(x0));
    x0[i] = saved - eps;
    const double fm = value(std::span<const double>(x0));
    x0[i] = saved;
    const double central = (fp - fm) / (2.0 * eps);
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(analytic[i])) {
      throw NumericError("grad_check: non-finite value at coordinate " + std::to_string(i));
    }
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(central)});
    worst = std::max(worst, std::abs(analytic[i] - central) / denom);
  }
  return worst;
}

}  // namespace xlingmap
