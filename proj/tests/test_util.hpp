#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xlingmap/numerics.hpp"

namespace xlingmap::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  Rng rng(seed);
  return random_uniform(rows, cols, rng, lo, hi);
}

inline Matrix from_span(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return Matrix(rows, cols, std::vector<double>(v.begin(), v.end()));
}

/// Central-difference check of a scalar function of one matrix against its
/// analytic gradient.
template <class Loss, class Grad>
double check_matrix_grad(const Matrix& x0, Loss&& loss, Grad&& grad, double eps = 1e-5) {
  const std::size_t r = x0.rows();
  const std::size_t c = x0.cols();
  return grad_check([&](std::span<const double> x) { return loss(from_span(x, r, c)); },
                    [&](std::span<const double> x) { return grad(from_span(x, r, c)).values(); },
                    x0.values(), eps);
}

/// Textbook triple loop, kept separate from the library kernel.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

/// Σ_ij r_ij y_ij, the usual way to turn a matrix output into a scalar for
/// gradient checks.
inline double weighted_sum(const Matrix& r, const Matrix& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += r.data()[i] * y.data()[i];
  return s;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("xlingmap-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace xlingmap::testing
