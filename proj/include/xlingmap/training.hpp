#pragma once

// The plain GAN loop and the adversarial autoencoder loop, with a second
// "monitoring" discriminator, metrics, and exact checkpoint/resume.
//
// One step, either mode:
//   1. sample {f}_n from the source table
//   2. ê = G(f)
//   3. p = D_train(ê)
//   4. update G on L_a (gan) or on L_GR (aae)
//   5. sample {e}_n from the target table
//   6. update D_train and D_monitor on BCE({e} positive, G(f) negative),
//      where G(f) is recomputed with the updated encoder and no gradient
//      reaches G.
// D_monitor never feeds a gradient to G; its pre-update accuracy on each
// batch is logged as a held-out estimate.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "xlingmap/checkpoint.hpp"
#include "xlingmap/embed_io.hpp"
#include "xlingmap/error.hpp"
#include "xlingmap/evaluation.hpp"
#include "xlingmap/layers.hpp"
#include "xlingmap/models.hpp"
#include "xlingmap/numerics.hpp"
#include "xlingmap/optim.hpp"
#include "xlingmap/sampling.hpp"

namespace xlingmap {

enum class TrainMode { gan, aae };

NLOHMANN_JSON_SERIALIZE_ENUM(TrainMode, {{TrainMode::gan, "gan"}, {TrainMode::aae, "aae"}})
NLOHMANN_JSON_SERIALIZE_ENUM(SubsampleRule, {{SubsampleRule::word2vec_code, "word2vec_code"},
                                             {SubsampleRule::discard_sqrt, "discard_sqrt"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelConfig, d, k, T, leaky_slope, dropout_rate, bn_eps, bn_momentum,
                                   encoder_bias)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SamplerConfig, subsample_threshold, batch_size, rule)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossWeights, reconstruction, adversarial, target_cosine)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AdamConfig, learning_rate, beta1, beta2, eps)

struct TrainConfig {
  TrainMode mode = TrainMode::aae;
  LossWeights lambdas;
  double lr_gen = 0.001;
  double lr_disc = 0.01;
  std::uint64_t max_steps = 50000;
  std::uint64_t eval_every = 1000;
  std::uint64_t checkpoint_every = 5000;
  std::uint64_t seed = 1;
  SamplerConfig sampler;
  ModelConfig model;
  std::size_t probe_size = 256;         // generator outputs behind the per-step collapse statistic
  std::size_t eval_sample_size = 1024;  // per side, for periodic distribution reports

  std::size_t batch_size() const noexcept { return sampler.batch_size; }

  void validate() const {
    if (lambdas.reconstruction < 0.0 || lambdas.adversarial < 0.0 || lambdas.target_cosine < 0.0) {
      throw Error("train config: loss weights must be non-negative");
    }
    if (!(lr_gen > 0.0) || !(lr_disc > 0.0)) throw Error("train config: learning rates must be positive");
    if (max_steps < 1) throw Error("train config: max_steps must be at least 1");
    if (probe_size < 2 || eval_sample_size < 2) throw Error("train config: probe and eval sizes must be ≥ 2");
    sampler.validate();
    model.validate();
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainConfig, mode, lambdas, lr_gen, lr_disc, max_steps, eval_every,
                                   checkpoint_every, seed, sampler, model, probe_size, eval_sample_size)

struct StepMetrics {
  std::uint64_t step = 0;
  double loss_reconstruction = 0.0;  // L_r(f, R(G(f)))
  double loss_adversarial = 0.0;     // L_a on D_train before the update
  double loss_target_cosine = 0.0;   // L_r(e, G(f))
  double loss_total = 0.0;           // objective G was updated on
  double disc_bce = 0.0;
  double monitor_bce = 0.0;
  double monitor_accuracy = 0.0;  // D_monitor on this batch before its update
  double collapse = 0.0;          // mean pairwise cosine of G(probe)
  double collapse_std = 0.0;      // mean per-dimension std of G(probe)
  double elapsed_seconds = 0.0;

  bool all_finite() const {
    for (double v : {loss_reconstruction, loss_adversarial, loss_target_cosine, loss_total, disc_bce, monitor_bce,
                     monitor_accuracy, collapse, collapse_std}) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  /// Equality ignoring wall-clock time.
  bool same_values(const StepMetrics& o) const {
    return step == o.step && loss_reconstruction == o.loss_reconstruction &&
           loss_adversarial == o.loss_adversarial && loss_target_cosine == o.loss_target_cosine &&
           loss_total == o.loss_total && disc_bce == o.disc_bce && monitor_bce == o.monitor_bce &&
           monitor_accuracy == o.monitor_accuracy && collapse == o.collapse && collapse_std == o.collapse_std;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(StepMetrics, step, loss_reconstruction, loss_adversarial, loss_target_cosine,
                                   loss_total, disc_bce, monitor_bce, monitor_accuracy, collapse, collapse_std,
                                   elapsed_seconds)

struct EvalSummary {
  std::uint64_t step = 0;
  double collapse = 0.0;
  double collapse_std = 0.0;
  double mean_diff = 0.0;
  double covariance_rel_error = 0.0;
  double monitor_accuracy = 0.0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalSummary, step, collapse, collapse_std, mean_diff, covariance_rel_error,
                                   monitor_accuracy)

// ---------------------------------------------------------------------------

/// Every random stream the trainer consumes, each an independent substream of
/// the run seed.
struct RngStreams {
  Rng sample_src;
  Rng sample_tgt;
  Rng dropout_train;
  Rng dropout_monitor;
  Rng eval;

  static RngStreams from_seed(std::uint64_t seed) {
    const Rng root(seed);
    return RngStreams{root.substream("sampler.src"), root.substream("sampler.tgt"),
                      root.substream("dropout.disc_train"), root.substream("dropout.disc_monitor"),
                      root.substream("eval")};
  }

  std::vector<std::pair<std::string, Rng*>> named() {
    return {{"sampler.src", &sample_src},
            {"sampler.tgt", &sample_tgt},
            {"dropout.disc_train", &dropout_train},
            {"dropout.disc_monitor", &dropout_monitor},
            {"eval", &eval}};
  }
};

struct Optimizers {
  Adam gen;
  Adam disc_train;
  Adam disc_monitor;
};

struct TrainingState {
  Models models;
  Optimizers opt;
  RngStreams rng;
  std::uint64_t step = 0;
};

/// An embedding table with its sampling distribution.
struct Corpus {
  const EmbeddingTable* table = nullptr;
  AdjustedDistribution dist;

  SampledBatch sample(std::size_t n, Rng& rng) const { return sample_batch(dist, *table, n, rng); }
};

// ---------------------------------------------------------------------------
// Sub-updates. Each touches only the parameters it names.

struct DiscUpdate {
  double bce = 0.0;
  double accuracy = 0.0;  // at threshold 0.5 (0.5 itself is negative), before the update
};

/// One Adam step of a discriminator on BCE(real positive, fake negative).
/// Real and fake batches go through separate forward passes.
inline DiscUpdate update_discriminator(Discriminator& disc, Adam& opt, const Matrix& real, const Matrix& fake,
                                       Rng& dropout_rng) {
  disc.zero_grad();
  const double inv = 1.0 / static_cast<double>(real.rows() + fake.rows());

  const Matrix p_pos = disc.forward(real, dropout_rng);
  Matrix g_pos(p_pos.rows(), 1);
  for (std::size_t i = 0; i < p_pos.rows(); ++i) g_pos(i, 0) = -inv * (1.0 - p_pos(i, 0));
  disc.backward_logits(g_pos);

  const Matrix p_neg = disc.forward(fake, dropout_rng);
  Matrix g_neg(p_neg.rows(), 1);
  for (std::size_t i = 0; i < p_neg.rows(); ++i) g_neg(i, 0) = inv * p_neg(i, 0);
  disc.backward_logits(g_neg);

  DiscUpdate out;
  out.bce = bce_loss(p_pos, p_neg);
  std::size_t correct = 0;
  for (double p : p_pos.data()) correct += p > 0.5 ? 1 : 0;
  for (double p : p_neg.data()) correct += p > 0.5 ? 0 : 1;
  out.accuracy = static_cast<double>(correct) * inv;

  const auto params = disc.params();
  opt.step(params);
  return out;
}

/// Gradient of L_a = −mean log D(G(f)) with respect to the encoder, plus the
/// loss value. Leaves gradients in the encoder; D's parameter gradients are
/// scratch.
inline double generator_adversarial_grad(EncoderDecoder& enc, Discriminator& disc, const Matrix& f,
                                         Rng& dropout_rng) {
  enc.zero_grad();
  const Matrix ehat = enc.encode(f);
  const Matrix p = disc.forward(ehat, dropout_rng);
  const Matrix d_ehat = disc.backward_logits(adversarial_loss_logit_grad(p));
  enc.encode_backward(f, d_ehat);
  return adversarial_loss(p);
}

/// Gradient of L_GR with respect to the encoder (single tied matrix).
inline EncoderLossParts generator_aae_grad(EncoderDecoder& enc, Discriminator& disc, const Matrix& f,
                                           const Matrix& e, const LossWeights& w, Rng& dropout_rng) {
  enc.zero_grad();
  const Matrix ehat = enc.encode(f);
  const Matrix recon = enc.decode(ehat);
  const Matrix p = disc.forward(ehat, dropout_rng);
  const EncoderLossParts parts = combined_encoder_loss(f, e, ehat, recon, p, w);

  Matrix d_ehat = disc.backward_logits(adversarial_loss_logit_grad(p) * w.adversarial);
  auto [unused_df, d_recon] = cosine_dissim_grad(f, recon);
  d_ehat += enc.decode_backward(ehat, d_recon * w.reconstruction);
  auto [unused_de, d_ehat_c] = cosine_dissim_grad(e, ehat);
  d_ehat += d_ehat_c * w.target_cosine;
  enc.encode_backward(f, d_ehat);
  return parts;
}

namespace detail {
inline void finish_step(TrainingState& st, StepMetrics& m, const Matrix& f, const Matrix& e, const Matrix& probe) {
  const Matrix fake = st.models.encoder.encode(f);
  const DiscUpdate dt = update_discriminator(st.models.disc_train, st.opt.disc_train, e, fake, st.rng.dropout_train);
  const DiscUpdate dm =
      update_discriminator(st.models.disc_monitor, st.opt.disc_monitor, e, fake, st.rng.dropout_monitor);
  m.disc_bce = dt.bce;
  m.monitor_bce = dm.bce;
  m.monitor_accuracy = dm.accuracy;
  const CollapseReport c = collapse_metric(st.models.encoder.encode(probe));
  m.collapse = c.mean_pairwise_cosine;
  m.collapse_std = c.mean_dim_std;
  m.step = ++st.step;
}
}  // namespace detail

/// Plain GAN step. λ weights are ignored; L_r and L_c are logged as
/// diagnostics only.
inline StepMetrics gan_step(TrainingState& st, const Corpus& src, const Corpus& tgt, const Matrix& probe,
                            const TrainConfig& cfg) {
  auto& enc = st.models.encoder;
  const std::size_t n = cfg.batch_size();
  const Matrix f = src.sample(n, st.rng.sample_src).rows;
  const Matrix ehat = enc.encode(f);

  StepMetrics m;
  m.loss_adversarial = generator_adversarial_grad(enc, st.models.disc_train, f, st.rng.dropout_train);
  m.loss_total = m.loss_adversarial;
  const auto gen_params = enc.params();
  st.opt.gen.step(gen_params);

  const Matrix e = tgt.sample(n, st.rng.sample_tgt).rows;
  m.loss_reconstruction = cosine_dissim_loss(f, enc.decode(ehat));
  m.loss_target_cosine = cosine_dissim_loss(e, ehat);
  detail::finish_step(st, m, f, e, probe);
  return m;
}

/// Adversarial autoencoder step on L_GR.
inline StepMetrics aae_step(TrainingState& st, const Corpus& src, const Corpus& tgt, const Matrix& probe,
                            const TrainConfig& cfg) {
  auto& enc = st.models.encoder;
  const std::size_t n = cfg.batch_size();
  const Matrix f = src.sample(n, st.rng.sample_src).rows;
  const Matrix e = tgt.sample(n, st.rng.sample_tgt).rows;

  const EncoderLossParts parts = generator_aae_grad(enc, st.models.disc_train, f, e, cfg.lambdas, st.rng.dropout_train);
  const auto gen_params = enc.params();
  st.opt.gen.step(gen_params);

  StepMetrics m;
  m.loss_reconstruction = parts.reconstruction;
  m.loss_adversarial = parts.adversarial;
  m.loss_target_cosine = parts.target_cosine;
  m.loss_total = parts.total;
  detail::finish_step(st, m, f, e, probe);
  return m;
}

// ---------------------------------------------------------------------------

/// Owns the full training state for one run and knows how to checkpoint it.
class Trainer {
 public:
  Trainer(TrainConfig cfg, const EmbeddingTable& src, const EmbeddingTable& tgt, const FrequencyTable& src_freq,
          const FrequencyTable& tgt_freq)
      : cfg_(std::move(cfg)) {
    cfg_.validate();
    check_table(src, "source");
    check_table(tgt, "target");
    if (src.dim() != cfg_.model.d || tgt.dim() != cfg_.model.d) {
      throw ShapeError("embedding dimension mismatch: config d=" + std::to_string(cfg_.model.d) + ", source d=" +
                       std::to_string(src.dim()) + ", target d=" + std::to_string(tgt.dim()));
    }
    if (src_freq.counts.size() != src.size() || tgt_freq.counts.size() != tgt.size()) {
      throw ShapeError("frequency table does not match its embedding table");
    }
    src_ = Corpus{&src, build_adjusted(src_freq, cfg_.sampler)};
    tgt_ = Corpus{&tgt, build_adjusted(tgt_freq, cfg_.sampler)};

    const Rng root(cfg_.seed);
    Rng probe_rng = root.substream("probe");
    probe_ = src_.sample(cfg_.probe_size, probe_rng).rows;

    state_.models = build_models(cfg_.model, root);
    state_.opt.gen = Adam(AdamConfig{.learning_rate = cfg_.lr_gen});
    state_.opt.disc_train = Adam(AdamConfig{.learning_rate = cfg_.lr_disc});
    state_.opt.disc_monitor = Adam(AdamConfig{.learning_rate = cfg_.lr_disc});
    state_.rng = RngStreams::from_seed(cfg_.seed);
  }

  StepMetrics step() {
    const auto t0 = std::chrono::steady_clock::now();
    StepMetrics m = cfg_.mode == TrainMode::gan ? gan_step(state_, src_, tgt_, probe_, cfg_)
                                                : aae_step(state_, src_, tgt_, probe_, cfg_);
    m.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!m.all_finite()) throw NumericError("non-finite metric at step " + std::to_string(m.step));
    return m;
  }

  /// Distribution report on fresh draws from the eval stream, with the
  /// monitor in inference mode.
  EvalSummary evaluate() {
    const Matrix f = src_.sample(cfg_.eval_sample_size, state_.rng.eval).rows;
    const Matrix e = tgt_.sample(cfg_.eval_sample_size, state_.rng.eval).rows;
    const Matrix mapped = state_.models.encoder.encode(f);
    const DistributionMatchReport rep = distribution_match_report(mapped, e, state_.models.disc_monitor);
    const CollapseReport c = collapse_metric(state_.models.encoder.encode(probe_));
    return EvalSummary{state_.step, c.mean_pairwise_cosine, c.mean_dim_std, rep.mean_diff, rep.covariance_rel_error,
                       rep.monitor_accuracy};
  }

  CheckpointFile checkpoint() const {
    TrainingState st = state_;
    CheckpointFile ck;
    ck.header["kind"] = "xlingmap.trainer";
    ck.header["config"] = cfg_;
    ck.header["step"] = st.step;
    nlohmann::json streams = nlohmann::json::object();
    for (auto& [name, r] : st.rng.named()) {
      streams[name] = {{"seed", r->seed()}, {"key", r->key()}, {"counter", r->counter()}};
    }
    ck.header["rng"] = {{"algorithm", std::string(Rng::kAlgorithm)}, {"streams", streams}};

    for (Param* p : st.models.encoder.params()) ck.arrays.push_back(NamedArray::from_matrix(p->name, p->value));
    for (Discriminator* d : {&st.models.disc_train, &st.models.disc_monitor}) {
      for (Param* p : d->params()) ck.arrays.push_back(NamedArray::from_matrix(p->name, p->value));
      for (auto& [name, buf] : d->buffers()) ck.arrays.push_back(NamedArray::from_matrix(name, *buf));
    }
    nlohmann::json adam = nlohmann::json::object();
    for (auto& [name, opt] : named_optimizers(st.opt)) {
      adam[name] = {{"config", opt->config}, {"t", opt->t}, {"params", opt->names}};
      for (std::size_t i = 0; i < opt->names.size(); ++i) {
        ck.arrays.push_back(NamedArray::from_matrix("adam." + name + ".m:" + opt->names[i], opt->m[i]));
        ck.arrays.push_back(NamedArray::from_matrix("adam." + name + ".v:" + opt->names[i], opt->v[i]));
      }
    }
    ck.header["adam"] = adam;
    ck.header["extra"] = extra;
    return ck;
  }

  /// Rebuilds a trainer from a checkpoint and the same input tables.
  static Trainer resume(const CheckpointFile& ck, const EmbeddingTable& src, const EmbeddingTable& tgt,
                        const FrequencyTable& src_freq, const FrequencyTable& tgt_freq) {
    if (ck.header.value("kind", "") != "xlingmap.trainer") throw CheckpointError("not a trainer checkpoint");
    const auto& rng = ck.header.at("rng");
    if (rng.at("algorithm").get<std::string>() != Rng::kAlgorithm) {
      throw CheckpointError("checkpoint RNG algorithm '" + rng.at("algorithm").get<std::string>() +
                            "' is not supported by this build");
    }
    Trainer tr(ck.header.at("config").get<TrainConfig>(), src, tgt, src_freq, tgt_freq);
    TrainingState& st = tr.state_;
    st.step = ck.header.at("step").get<std::uint64_t>();
    for (auto& [name, r] : st.rng.named()) {
      const auto& s = rng.at("streams").at(name);
      *r = Rng::from_state(s.at("seed").get<std::uint64_t>(), s.at("key").get<std::uint64_t>(),
                           s.at("counter").get<std::uint64_t>());
    }
    auto restore = [&](const std::string& name, Matrix& into) {
      Matrix m = ck.array(name).to_matrix();
      if (m.rows() != into.rows() || m.cols() != into.cols()) {
        throw CheckpointError("array '" + name + "' has shape " + m.shape_str() + ", expected " + into.shape_str());
      }
      into = std::move(m);
    };
    for (Param* p : st.models.encoder.params()) restore(p->name, p->value);
    for (Discriminator* d : {&st.models.disc_train, &st.models.disc_monitor}) {
      for (Param* p : d->params()) restore(p->name, p->value);
      for (auto& [name, buf] : d->buffers()) restore(name, *buf);
    }
    for (auto& [name, opt] : named_optimizers(st.opt)) {
      const auto& a = ck.header.at("adam").at(name);
      opt->config = a.at("config").get<AdamConfig>();
      opt->t = a.at("t").get<std::uint64_t>();
      opt->names = a.at("params").get<std::vector<std::string>>();
      opt->m.clear();
      opt->v.clear();
      for (const auto& pname : opt->names) {
        opt->m.push_back(ck.array("adam." + name + ".m:" + pname).to_matrix());
        opt->v.push_back(ck.array("adam." + name + ".v:" + pname).to_matrix());
      }
    }
    if (ck.header.contains("extra")) tr.extra = ck.header.at("extra");
    return tr;
  }

  const TrainConfig& config() const noexcept { return cfg_; }
  TrainConfig& mutable_config() noexcept { return cfg_; }
  TrainingState& state() noexcept { return state_; }
  const TrainingState& state() const noexcept { return state_; }
  const Matrix& probe() const noexcept { return probe_; }
  const Corpus& source() const noexcept { return src_; }
  const Corpus& target() const noexcept { return tgt_; }

  /// Free-form JSON stored alongside the state (input digests etc.).
  nlohmann::json extra = nlohmann::json::object();

 private:
  static std::vector<std::pair<std::string, Adam*>> named_optimizers(Optimizers& o) {
    return {{"gen", &o.gen}, {"disc_train", &o.disc_train}, {"disc_monitor", &o.disc_monitor}};
  }

  static void check_table(const EmbeddingTable& t, const char* which) {
    if (t.size() == 0) throw Error(std::string(which) + " table is empty");
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!(norm(t.row(i)) > 0.0)) {
        throw NumericError(std::string(which) + " table has a zero row for '" + t.vocab.token(i) +
                           "'; cosine losses are undefined for it");
      }
    }
  }

  TrainConfig cfg_;
  Corpus src_;
  Corpus tgt_;
  Matrix probe_;
  TrainingState state_;
};

/// Rebuilds just the encoder stored in a trainer checkpoint.
inline EncoderDecoder encoder_from_checkpoint(const CheckpointFile& ck) {
  const auto cfg = ck.header.at("config").get<TrainConfig>();
  EncoderDecoder enc(ck.array("encoder.weight").to_matrix(), cfg.model.encoder_bias);
  if (enc.dim() != cfg.model.d) throw CheckpointError("encoder weight does not match the configured d");
  if (enc.has_bias) enc.bias.value = ck.array("encoder.bias").to_matrix();
  return enc;
}

// ---------------------------------------------------------------------------

struct TrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(const EvalSummary&)> on_eval;
  /// Called every checkpoint_every steps and once at the end (final = true).
  std::function<void(const CheckpointFile&, std::uint64_t step, bool final)> on_checkpoint;
};

struct TrainOutcome {
  bool numeric_failure = false;
  std::string message;
  std::uint64_t steps_run = 0;
  CheckpointFile final_checkpoint;
};

/// Runs until the trainer's step counter reaches cfg.max_steps. On a
/// non-finite value it stops, and the final checkpoint is the diagnostic one.
inline TrainOutcome run_training(Trainer& tr, const TrainHooks& hooks = {}) {
  TrainOutcome out;
  const auto& cfg = tr.config();
  try {
    while (tr.state().step < cfg.max_steps) {
      const StepMetrics m = tr.step();
      ++out.steps_run;
      if (hooks.on_step) hooks.on_step(m);
      if (cfg.eval_every && m.step % cfg.eval_every == 0 && hooks.on_eval) hooks.on_eval(tr.evaluate());
      if (cfg.checkpoint_every && m.step % cfg.checkpoint_every == 0 && m.step < cfg.max_steps &&
          hooks.on_checkpoint) {
        hooks.on_checkpoint(tr.checkpoint(), m.step, false);
      }
    }
  } catch (const NumericError& e) {
    out.numeric_failure = true;
    out.message = e.what();
  }
  out.final_checkpoint = tr.checkpoint();
  if (hooks.on_checkpoint) hooks.on_checkpoint(out.final_checkpoint, tr.state().step, true);
  return out;
}

inline TrainOutcome train(const TrainConfig& cfg, const EmbeddingTable& src, const EmbeddingTable& tgt,
                          const FrequencyTable& src_freq, const FrequencyTable& tgt_freq,
                          const TrainHooks& hooks = {}) {
  Trainer tr(cfg, src, tgt, src_freq, tgt_freq);
  return run_training(tr, hooks);
}

}  // namespace xlingmap
