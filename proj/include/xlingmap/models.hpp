#pragma once

// The tied linear encoder/decoder and the residual-network discriminator.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "xlingmap/error.hpp"
#include "xlingmap/layers.hpp"
#include "xlingmap/numerics.hpp"

namespace xlingmap {

struct ModelConfig {
  std::size_t d = 100;  // embedding dimension
  std::size_t k = 40;   // residual block width
  std::size_t T = 10;   // residual block count
  double leaky_slope = 0.01;
  double dropout_rate = 0.1;
  double bn_eps = BatchNorm::kDefaultEps;
  double bn_momentum = BatchNorm::kDefaultMomentum;
  bool encoder_bias = false;

  static ModelConfig en_it() { return ModelConfig{.d = 100, .k = 40, .T = 10}; }
  static ModelConfig de_en() { return ModelConfig{.d = 40, .k = 40, .T = 4}; }

  void validate() const {
    if (d == 0 || k == 0 || T == 0) throw Error("model config: d, k and T must be positive");
    if (!(leaky_slope > 0.0)) throw Error("model config: leaky slope must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error("model config: dropout rate must lie in [0, 1)");
    if (!(bn_eps > 0.0)) throw Error("model config: bn eps must be positive");
    if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) throw Error("model config: bn momentum must lie in (0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Uniformly random orthogonal d×d matrix: Gram-Schmidt QR of a Gaussian
/// matrix. Gram-Schmidt yields a positive R diagonal, which is the sign
/// convention that makes Q Haar-distributed. Each column is orthogonalized
/// twice.
inline Matrix init_orthogonal(std::size_t d, Rng& rng) {
  if (d == 0) throw Error("init_orthogonal: d must be positive");
  Matrix a = random_normal(d, d, rng);
  Matrix q(d, d);
  std::vector<double> col(d);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < d; ++i) col[i] = a(i, j);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < j; ++p) {
        double proj = 0.0;
        for (std::size_t i = 0; i < d; ++i) proj += q(i, p) * col[i];
        for (std::size_t i = 0; i < d; ++i) col[i] -= proj * q(i, p);
      }
    }
    double nrm = 0.0;
    for (double v : col) nrm += v * v;
    nrm = std::sqrt(nrm);
    if (!(nrm > 0.0)) throw NumericError("init_orthogonal: degenerate Gaussian draw");
    for (std::size_t i = 0; i < d; ++i) q(i, j) = col[i] / nrm;
  }
  return q;
}

/// rows×cols block of a random orthogonal matrix: orthonormal columns when
/// rows ≥ cols, orthonormal rows otherwise.
inline Matrix init_semi_orthogonal(std::size_t rows, std::size_t cols, Rng& rng) {
  const Matrix q = init_orthogonal(std::max(rows, cols), rng);
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = q(i, j);
  return out;
}

// ---------------------------------------------------------------------------

/// G(x) = x·W (+ b) and R(z) = (z − b)·Wᵀ, sharing the single matrix W.
class EncoderDecoder {
 public:
  EncoderDecoder() = default;
  explicit EncoderDecoder(Matrix weight, bool with_bias = false)
      : weight("encoder.weight", std::move(weight)), has_bias(with_bias) {
    if (this->weight.value.rows() != this->weight.value.cols()) {
      throw ShapeError("encoder weight must be square, got " + this->weight.value.shape_str());
    }
    if (has_bias) bias = Param("encoder.bias", Matrix(1, dim()));
  }

  std::size_t dim() const noexcept { return weight.value.rows(); }

  Matrix encode(const Matrix& f) const {
    Matrix z = linear_forward(f, weight.value);
    if (has_bias) add_bias(z, bias.value, 1.0);
    return z;
  }

  Matrix decode(const Matrix& z) const {
    if (!has_bias) return linear_forward(z, weight.value, /*transposed=*/true);
    Matrix shifted = z;
    add_bias(shifted, bias.value, -1.0);
    return linear_forward(shifted, weight.value, /*transposed=*/true);
  }

  /// Accumulates dL/dW (and dL/db) for ê = encode(f).
  void encode_backward(const Matrix& f, const Matrix& d_ehat) {
    linear_backward(f, d_ehat, weight);
    if (has_bias) bias.grad += column_sums(d_ehat);
  }

  /// Accumulates the decoder's contribution into W (and b); returns dL/dz.
  Matrix decode_backward(const Matrix& z, const Matrix& d_recon) {
    if (!has_bias) return linear_backward(z, d_recon, weight, /*transposed=*/true);
    Matrix shifted = z;
    add_bias(shifted, bias.value, -1.0);
    Matrix dz = linear_backward(shifted, d_recon, weight, /*transposed=*/true);
    bias.grad -= column_sums(dz);
    return dz;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out{&weight};
    if (has_bias) out.push_back(&bias);
    return out;
  }
  std::vector<const Param*> params() const {
    std::vector<const Param*> out{&weight};
    if (has_bias) out.push_back(&bias);
    return out;
  }

  void zero_grad() {
    for (Param* p : params()) p->zero_grad();
  }

  Param weight;
  Param bias;
  bool has_bias = false;

 private:
  static void add_bias(Matrix& z, const Matrix& b, double sign) {
    if (z.cols() != b.cols()) throw ShapeError("encoder bias width mismatch");
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += sign * b(0, j);
  }
};

// ---------------------------------------------------------------------------

/// x ↦ sigmoid(block_T(…block_1(x·P)…)·w + b).
///
/// P is a bias-free d×k projection into the block state. The output layer is
/// the only layer with a bias and starts at zero, so a fresh discriminator
/// outputs exactly 0.5.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const ModelConfig& cfg, Rng& init_rng, const std::string& prefix)
      : input_proj(prefix + ".input_proj", init_semi_orthogonal(cfg.d, cfg.k, init_rng)),
        out_weight(prefix + ".output.weight", Matrix(cfg.k, 1)),
        out_bias(prefix + ".output.bias", Matrix(1, 1)) {
    cfg.validate();
    blocks.reserve(cfg.T);
    for (std::size_t t = 0; t < cfg.T; ++t) {
      blocks.emplace_back(prefix + ".block" + std::to_string(t), init_orthogonal(cfg.k, init_rng),
                          cfg.leaky_slope, cfg.dropout_rate, cfg.bn_eps, cfg.bn_momentum);
    }
  }

  std::size_t input_dim() const noexcept { return input_proj.value.rows(); }

  /// Returns n×1 probabilities. Training mode needs n ≥ 2.
  Matrix forward(const Matrix& x, Rng& dropout_rng) {
    if (x.cols() != input_dim()) {
      throw ShapeError("discriminator expects " + std::to_string(input_dim()) + " columns, got " +
                       x.shape_str());
    }
    input_ = x;
    Matrix h = matmul(x, input_proj.value);
    for (auto& b : blocks) h = b.forward(h, dropout_rng);
    last_hidden_ = h;
    Matrix logits = matmul(h, out_weight.value);
    for (std::size_t i = 0; i < logits.rows(); ++i) logits(i, 0) += out_bias.value(0, 0);
    probs_ = sigmoid(std::move(logits));
    return probs_;
  }

  /// Backward from dL/dlogit; returns dL/dx.
  Matrix backward_logits(const Matrix& dlogit) {
    out_bias.grad(0, 0) += column_sums(dlogit)(0, 0);
    Matrix dh = linear_backward(last_hidden_, dlogit, out_weight);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) dh = it->backward(dh);
    return linear_backward(input_, dh, input_proj);
  }

  /// Backward from dL/dp through the sigmoid.
  Matrix backward(const Matrix& dp) { return backward_logits(sigmoid_backward(probs_, dp)); }

  void set_mode(Mode m) {
    mode_ = m;
    for (auto& b : blocks) b.set_mode(m);
  }
  Mode mode() const noexcept { return mode_; }

  std::vector<Param*> params() {
    std::vector<Param*> out{&input_proj};
    for (auto& b : blocks) {
      out.push_back(&b.weight);
      out.push_back(&b.bn.gamma);
      out.push_back(&b.bn.beta);
    }
    out.push_back(&out_weight);
    out.push_back(&out_bias);
    return out;
  }

  /// Non-trainable state (batch-norm running statistics), by name.
  std::vector<std::pair<std::string, Matrix*>> buffers() {
    std::vector<std::pair<std::string, Matrix*>> out;
    for (auto& b : blocks) {
      const std::string prefix = b.weight.name.substr(0, b.weight.name.size() - 7);  // strip ".weight"
      out.emplace_back(prefix + ".bn.running_mean", &b.bn.running_mean);
      out.emplace_back(prefix + ".bn.running_var", &b.bn.running_var);
    }
    return out;
  }

  void zero_grad() {
    for (Param* p : params()) p->zero_grad();
  }

  Param input_proj;
  std::vector<ResBlock> blocks;
  Param out_weight;
  Param out_bias;

 private:
  Mode mode_ = Mode::training;
  Matrix input_;
  Matrix last_hidden_;
  Matrix probs_;
};

inline Matrix discriminate(Discriminator& disc, const Matrix& x, Rng& rng) {
  return disc.forward(x, rng);
}

struct Models {
  EncoderDecoder encoder;
  Discriminator disc_train;
  Discriminator disc_monitor;
};

/// Orthogonal encoder plus two identically shaped discriminators drawn from
/// distinct substreams of `rng`.
inline Models build_models(const ModelConfig& cfg, const Rng& rng) {
  cfg.validate();
  Rng enc_rng = rng.substream("init.encoder");
  Rng train_rng = rng.substream("init.disc_train");
  Rng monitor_rng = rng.substream("init.disc_monitor");
  return Models{EncoderDecoder(init_orthogonal(cfg.d, enc_rng), cfg.encoder_bias),
                Discriminator(cfg, train_rng, "disc_train"),
                Discriminator(cfg, monitor_rng, "disc_monitor")};
}

}  // namespace xlingmap
