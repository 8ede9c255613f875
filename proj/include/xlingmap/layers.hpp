#pragma once

// Differentiable building blocks: linear maps (optionally tied), leaky ReLU,
// batch normalization, dropout, the residual block, sigmoid, and the losses.
//
// Batch index = row index everywhere. Layers that need activations for the
// backward pass cache them on forward; call backward right after the forward
// it belongs to. Parameter gradients accumulate into Param::grad.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "xlingmap/error.hpp"
#include "xlingmap/numerics.hpp"

namespace xlingmap {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }

  friend bool operator==(const Param& a, const Param& b) {
    return a.name == b.name && a.value == b.value;
  }
};

enum class Mode { training, inference };

// ---------------------------------------------------------------------------
// Linear maps (no bias). `transposed` applies the weight as Wᵀ, which is how a
// tied layer reuses another layer's storage.

inline Matrix linear_forward(const Matrix& x, const Matrix& weight, bool transposed = false) {
  return transposed ? matmul_nt(x, weight) : matmul(x, weight);
}

/// Returns dL/dx and accumulates dL/dW into `weight.grad`.
inline Matrix linear_backward(const Matrix& x, const Matrix& dy, Param& weight,
                              bool transposed = false) {
  if (transposed) {
    weight.grad += matmul_tn(dy, x);
    return matmul(dy, weight.value);
  }
  weight.grad += matmul_tn(x, dy);
  return matmul_nt(dy, weight.value);
}

/// A linear layer owning its weight (in_dim × out_dim).
class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(std::string name, Matrix weight) : weight_(std::move(name), std::move(weight)) {}

  Matrix forward(const Matrix& x) {
    input_ = x;
    return linear_forward(x, weight_.value);
  }
  Matrix backward(const Matrix& dy) { return linear_backward(input_, dy, weight_); }

  Param& weight() noexcept { return weight_; }
  const Param& weight() const noexcept { return weight_; }

 private:
  Param weight_;
  Matrix input_;
};

/// A linear layer with no storage of its own: it applies the transpose of a
/// weight owned elsewhere and accumulates its gradient into that same Param.
class TiedLinearLayer {
 public:
  Matrix forward(const Param& source, const Matrix& x) {
    input_ = x;
    return linear_forward(x, source.value, /*transposed=*/true);
  }
  Matrix backward(Param& source, const Matrix& dy) {
    return linear_backward(input_, dy, source, /*transposed=*/true);
  }

 private:
  Matrix input_;
};

// ---------------------------------------------------------------------------
// Leaky ReLU.

inline Matrix leaky_relu(Matrix x, double slope) {
  for (double& v : x.data())
    if (v < 0.0) v *= slope;
  return x;
}

inline Matrix leaky_relu_backward(const Matrix& x, Matrix dy, double slope) {
  auto xd = x.data();
  auto gd = dy.data();
  for (std::size_t i = 0; i < gd.size(); ++i)
    if (xd[i] < 0.0) gd[i] *= slope;
  return dy;
}

// ---------------------------------------------------------------------------
// Batch normalization over the batch (row) dimension.

class BatchNorm {
 public:
  static constexpr double kDefaultEps = 1e-5;
  static constexpr double kDefaultMomentum = 0.1;

  BatchNorm() = default;
  BatchNorm(const std::string& prefix, std::size_t features, double eps = kDefaultEps,
            double momentum = kDefaultMomentum)
      : gamma(prefix + ".gamma", Matrix(1, features, 1.0)),
        beta(prefix + ".beta", Matrix(1, features, 0.0)),
        running_mean(1, features, 0.0),
        running_var(1, features, 1.0),
        eps(eps),
        momentum(momentum) {}

  Matrix forward(const Matrix& x) {
    const std::size_t n = x.rows();
    const std::size_t k = x.cols();
    if (k != features()) {
      throw ShapeError("batchnorm expects " + std::to_string(features()) + " columns, got " +
                       x.shape_str());
    }
    xhat_ = Matrix(n, k);
    inv_std_ = Matrix(1, k);
    Matrix y(n, k);
    if (mode == Mode::training) {
      if (n < 2) throw ShapeError("batchnorm in training mode needs at least 2 rows");
      for (std::size_t j = 0; j < k; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double c = x(i, j) - mean;
          var += c * c;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std_(0, j) = inv;
        for (std::size_t i = 0; i < n; ++i) {
          xhat_(i, j) = (x(i, j) - mean) * inv;
          y(i, j) = gamma.value(0, j) * xhat_(i, j) + beta.value(0, j);
        }
        const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
        running_mean(0, j) = (1.0 - momentum) * running_mean(0, j) + momentum * mean;
        running_var(0, j) = (1.0 - momentum) * running_var(0, j) + momentum * unbiased;
      }
    } else {
      for (std::size_t j = 0; j < k; ++j) {
        const double inv = 1.0 / std::sqrt(running_var(0, j) + eps);
        inv_std_(0, j) = inv;
        for (std::size_t i = 0; i < n; ++i) {
          xhat_(i, j) = (x(i, j) - running_mean(0, j)) * inv;
          y(i, j) = gamma.value(0, j) * xhat_(i, j) + beta.value(0, j);
        }
      }
    }
    cached_mode_ = mode;
    return y;
  }

  Matrix backward(const Matrix& dy) {
    const std::size_t n = dy.rows();
    const std::size_t k = dy.cols();
    Matrix dx(n, k);
    for (std::size_t j = 0; j < k; ++j) {
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_dy += dy(i, j);
        sum_dy_xhat += dy(i, j) * xhat_(i, j);
      }
      gamma.grad(0, j) += sum_dy_xhat;
      beta.grad(0, j) += sum_dy;
      const double g = gamma.value(0, j);
      const double inv = inv_std_(0, j);
      if (cached_mode_ == Mode::training) {
        const double nn = static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          dx(i, j) = g * inv * (dy(i, j) - sum_dy / nn - xhat_(i, j) * sum_dy_xhat / nn);
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) dx(i, j) = g * inv * dy(i, j);
      }
    }
    return dx;
  }

  std::size_t features() const noexcept { return gamma.value.cols(); }

  Param gamma;
  Param beta;
  Matrix running_mean;
  Matrix running_var;
  double eps = kDefaultEps;
  double momentum = kDefaultMomentum;
  Mode mode = Mode::training;

 private:
  Matrix xhat_;
  Matrix inv_std_;
  Mode cached_mode_ = Mode::training;
};

// ---------------------------------------------------------------------------
// Inverted dropout.

class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double rate) : rate(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout rate must lie in [0, 1)");
  }

  Matrix forward(Matrix x, Rng& rng) {
    if (mode == Mode::inference || rate == 0.0) {
      mask_ = Matrix();
      return x;
    }
    const double scale = 1.0 / (1.0 - rate);
    mask_ = Matrix(x.rows(), x.cols());
    auto md = mask_.data();
    auto xd = x.data();
    for (std::size_t i = 0; i < xd.size(); ++i) {
      md[i] = rng.uniform() < rate ? 0.0 : scale;
      xd[i] *= md[i];
    }
    return x;
  }

  Matrix backward(Matrix dy) const {
    if (mask_.empty()) return dy;
    return hadamard(std::move(dy), mask_);
  }

  double rate = 0.0;
  Mode mode = Mode::training;

 private:
  Matrix mask_;
};

// ---------------------------------------------------------------------------
// Residual block: h ↦ dropout(lrelu(bn(h · W))) + h. The passthrough is a
// plain identity.

class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(const std::string& prefix, Matrix weight, double leaky_slope, double dropout_rate,
           double bn_eps = BatchNorm::kDefaultEps, double bn_momentum = BatchNorm::kDefaultMomentum)
      : weight(prefix + ".weight", std::move(weight)),
        bn(prefix + ".bn", this->weight.value.cols(), bn_eps, bn_momentum),
        dropout(dropout_rate),
        leaky_slope(leaky_slope) {
    if (this->weight.value.rows() != this->weight.value.cols()) {
      throw ShapeError("residual block weight must be square, got " + this->weight.value.shape_str());
    }
    if (!(leaky_slope > 0.0)) throw Error("leaky slope must be positive");
  }

  std::size_t dim() const noexcept { return weight.value.rows(); }

  Matrix forward(const Matrix& h, Rng& rng) {
    if (h.cols() != dim()) {
      throw ShapeError("residual block of width " + std::to_string(dim()) + " got " + h.shape_str());
    }
    input_ = h;
    pre_act_ = bn.forward(matmul(h, weight.value));
    Matrix out = dropout.forward(leaky_relu(pre_act_, leaky_slope), rng);
    out += h;
    return out;
  }

  Matrix backward(const Matrix& dout) {
    Matrix d = dropout.backward(dout);
    d = leaky_relu_backward(pre_act_, std::move(d), leaky_slope);
    d = bn.backward(d);
    Matrix dh = linear_backward(input_, d, weight);
    dh += dout;
    return dh;
  }

  void set_mode(Mode m) {
    bn.mode = m;
    dropout.mode = m;
  }

  Param weight;
  BatchNorm bn;
  Dropout dropout;
  double leaky_slope = 0.01;

 private:
  Matrix input_;
  Matrix pre_act_;
};

// ---------------------------------------------------------------------------
// Logistic sigmoid.

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Matrix sigmoid(Matrix x) {
  for (double& v : x.data()) v = sigmoid(v);
  return x;
}

/// Gradient through the sigmoid given its output p and dL/dp.
inline Matrix sigmoid_backward(const Matrix& p, Matrix dp) {
  auto pd = p.data();
  auto gd = dp.data();
  for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= pd[i] * (1.0 - pd[i]);
  return dp;
}

// ---------------------------------------------------------------------------
// Losses.

inline constexpr double kProbClamp = 1e-12;

/// Mean over rows of 1 − cos(a_i, b_i).
inline double cosine_dissim_loss(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("cosine_dissim_loss shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += 1.0 - cosine(a.row(i), b.row(i));
  return s / static_cast<double>(a.rows());
}

/// (dL/da, dL/db) for cosine_dissim_loss. Uses the unclamped cosine.
inline std::pair<Matrix, Matrix> cosine_dissim_grad(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("cosine_dissim_grad shape mismatch");
  const std::size_t n = a.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix da(n, a.cols());
  Matrix db(n, a.cols());
  for (std::size_t i = 0; i < n; ++i) {
    auto ar = a.row(i);
    auto br = b.row(i);
    const double na = norm(ar);
    const double nb = norm(br);
    if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("cosine loss on a zero row");
    const double ab = dot(ar, br);
    const double c = ab / (na * nb);
    for (std::size_t j = 0; j < a.cols(); ++j) {
      da(i, j) = -inv_n * (br[j] / (na * nb) - c * ar[j] / (na * na));
      db(i, j) = -inv_n * (ar[j] / (na * nb) - c * br[j] / (nb * nb));
    }
  }
  return {std::move(da), std::move(db)};
}

/// −mean(log p), with p clamped below at 1e-12.
inline double adversarial_loss(const Matrix& p) {
  double s = 0.0;
  for (double v : p.data()) s -= std::log(std::max(v, kProbClamp));
  return s / static_cast<double>(p.size());
}

/// dL/dp; zero where the clamp is active.
inline Matrix adversarial_loss_grad(const Matrix& p) {
  Matrix g(p.rows(), p.cols());
  const double inv_n = 1.0 / static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double v = p.data()[i];
    g.data()[i] = v > kProbClamp ? -inv_n / v : 0.0;
  }
  return g;
}

/// dL/dlogit for p = sigmoid(logit): −(1 − p)/n. Does not saturate where the
/// clamp would.
inline Matrix adversarial_loss_logit_grad(const Matrix& p) {
  Matrix g(p.rows(), p.cols());
  const double inv_n = 1.0 / static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g.data()[i] = -inv_n * (1.0 - p.data()[i]);
  return g;
}

/// Binary cross-entropy averaged over all positive and negative samples.
inline double bce_loss(const Matrix& p_pos, const Matrix& p_neg) {
  double s = 0.0;
  for (double v : p_pos.data()) s -= std::log(std::clamp(v, kProbClamp, 1.0 - kProbClamp));
  for (double v : p_neg.data()) s -= std::log(1.0 - std::clamp(v, kProbClamp, 1.0 - kProbClamp));
  return s / static_cast<double>(p_pos.size() + p_neg.size());
}

/// (dL/dp_pos, dL/dp_neg); zero where the clamp is active.
inline std::pair<Matrix, Matrix> bce_grad(const Matrix& p_pos, const Matrix& p_neg) {
  const double inv_n = 1.0 / static_cast<double>(p_pos.size() + p_neg.size());
  Matrix gp(p_pos.rows(), p_pos.cols());
  Matrix gn(p_neg.rows(), p_neg.cols());
  for (std::size_t i = 0; i < p_pos.size(); ++i) {
    const double v = p_pos.data()[i];
    gp.data()[i] = (v > kProbClamp && v < 1.0 - kProbClamp) ? -inv_n / v : 0.0;
  }
  for (std::size_t i = 0; i < p_neg.size(); ++i) {
    const double v = p_neg.data()[i];
    gn.data()[i] = (v > kProbClamp && v < 1.0 - kProbClamp) ? inv_n / (1.0 - v) : 0.0;
  }
  return {std::move(gp), std::move(gn)};
}

/// (dL/dlogit_pos, dL/dlogit_neg) for sigmoid outputs.
inline std::pair<Matrix, Matrix> bce_logit_grad(const Matrix& p_pos, const Matrix& p_neg) {
  const double inv_n = 1.0 / static_cast<double>(p_pos.size() + p_neg.size());
  Matrix gp(p_pos.rows(), p_pos.cols());
  Matrix gn(p_neg.rows(), p_neg.cols());
  for (std::size_t i = 0; i < p_pos.size(); ++i) gp.data()[i] = -inv_n * (1.0 - p_pos.data()[i]);
  for (std::size_t i = 0; i < p_neg.size(); ++i) gn.data()[i] = inv_n * p_neg.data()[i];
  return {std::move(gp), std::move(gn)};
}

struct LossWeights {
  double reconstruction = 1.0;  // λ_r
  double adversarial = 1.0;     // λ_a
  double target_cosine = 1.0;   // λ_c

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct EncoderLossParts {
  double reconstruction = 0.0;  // L_r(f, recon)
  double adversarial = 0.0;     // −mean log p
  double target_cosine = 0.0;   // L_r(e, ê)
  double total = 0.0;           // L_GR
};

/// L_GR = λ_r·L_r(f, recon) + λ_a·L_a(p) + λ_c·L_r(e, ê).
inline EncoderLossParts combined_encoder_loss(const Matrix& f, const Matrix& e, const Matrix& ehat,
                                              const Matrix& recon, const Matrix& p,
                                              const LossWeights& w) {
  EncoderLossParts parts;
  parts.reconstruction = cosine_dissim_loss(f, recon);
  parts.adversarial = adversarial_loss(p);
  parts.target_cosine = cosine_dissim_loss(e, ehat);
  parts.total = w.reconstruction * parts.reconstruction + w.adversarial * parts.adversarial +
                w.target_cosine * parts.target_cosine;
  return parts;
}

}  // namespace xlingmap
