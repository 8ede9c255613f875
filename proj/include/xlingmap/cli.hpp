#pragma once

// Command-line front end. Every command is a plain function over argv and a
// pair of output streams, so tests can drive it without spawning processes.
//
//   xlingmap train   --src A.vec --tgt B.vec [--src-freq ..] [--mode aae] --out DIR
//   xlingmap resume  --checkpoint DIR/final.ckpt --src .. --tgt .. --max-steps N --out DIR
//   xlingmap map     --checkpoint C | --matrix W.txt  --src A.vec --out mapped.vec
//   xlingmap nn      --checkpoint C | --matrix W.txt  --src A.vec --tgt B.vec --words w1,w2 [--k 10]
//   xlingmap eval    --checkpoint C | --matrix W.txt  --src A.vec --tgt B.vec --dict D.tsv [--k 5]
//   xlingmap synth   [--d 16 --vocab-src 2000 ...] --out DIR
//
// Exit status: 0 success, 1 usage or validation error, 2 numeric failure
// during training.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "xlingmap/checkpoint.hpp"
#include "xlingmap/embed_io.hpp"
#include "xlingmap/error.hpp"
#include "xlingmap/evaluation.hpp"
#include "xlingmap/models.hpp"
#include "xlingmap/sha256.hpp"
#include "xlingmap/training.hpp"

namespace xlingmap::cli {

inline constexpr std::string_view kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kNumeric = 2 };

namespace detail {

namespace fs = std::filesystem;

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json file_record(const std::string& path) {
  if (path.empty()) return nullptr;
  return {{"path", path}, {"sha256", sha256_file_hex(path)}};
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  xlingmap::detail::write_file(path.string(), j.dump(2) + "\n");
}

inline EmbeddingTable load_table(const std::string& path, bool normalize) {
  EmbeddingTable t = load_embeddings(path);
  return normalize ? normalize_rows(std::move(t)) : t;
}

inline FrequencyTable load_or_uniform(const std::string& path, const EmbeddingTable& table) {
  return path.empty() ? FrequencyTable::uniform(table.size()) : load_frequencies(path, table.vocab);
}

inline SimilarityMetric parse_metric(const std::string& s) {
  if (s == "cosine") return SimilarityMetric::cosine;
  if (s == "euclidean") return SimilarityMetric::euclidean;
  throw Error("unknown metric '" + s + "' (expected cosine or euclidean)");
}

/// Where an encoder comes from: a trainer checkpoint or a raw d×d matrix.
struct EncoderSource {
  std::string checkpoint;
  std::string matrix;

  void attach(CLI::App& cmd) {
    auto* c = cmd.add_option("--checkpoint", checkpoint, "trainer checkpoint holding the encoder");
    auto* m = cmd.add_option("--matrix", matrix, "plain-text d x d mapping matrix (rows cols header)");
    c->excludes(m);
  }

  EncoderDecoder load() const {
    if (!checkpoint.empty()) return encoder_from_checkpoint(load_checkpoint_file(checkpoint));
    if (!matrix.empty()) {
      Matrix w = load_matrix(matrix);
      if (w.rows() != w.cols()) throw ShapeError("mapping matrix must be square, got " + w.shape_str());
      return EncoderDecoder(std::move(w), false);
    }
    throw Error("one of --checkpoint or --matrix is required");
  }
};

struct TrainFlags {
  std::string src, tgt, src_freq, tgt_freq, out;
  std::string mode = "aae";
  std::string preset;
  std::optional<std::size_t> k, T;
  double lr_gen = 0.001;
  double lr_disc = 0.01;
  double lambda_r = 1.0, lambda_a = 1.0, lambda_c = 1.0;
  std::size_t batch_size = 128;
  double subsample = 1e-5;
  std::string subsample_rule = "word2vec_code";
  std::uint64_t max_steps = 50000;
  std::uint64_t eval_every = 1000;
  std::uint64_t checkpoint_every = 5000;
  std::uint64_t seed = 1;
  bool normalize = false;
};

inline void attach_inputs(CLI::App& cmd, TrainFlags& f) {
  cmd.add_option("--src", f.src, "source embeddings (word2vec text)")->required();
  cmd.add_option("--tgt", f.tgt, "target embeddings (word2vec text)")->required();
  cmd.add_option("--src-freq", f.src_freq, "source word counts, token<TAB>count");
  cmd.add_option("--tgt-freq", f.tgt_freq, "target word counts, token<TAB>count");
}

inline TrainConfig resolve_config(const TrainFlags& f, std::size_t d) {
  TrainConfig cfg;
  if (f.mode == "gan") {
    cfg.mode = TrainMode::gan;
  } else if (f.mode == "aae") {
    cfg.mode = TrainMode::aae;
  } else {
    throw Error("unknown --mode '" + f.mode + "' (expected gan or aae)");
  }
  if (f.preset == "en-it") {
    cfg.model = ModelConfig::en_it();
  } else if (f.preset == "de-en") {
    cfg.model = ModelConfig::de_en();
  } else if (!f.preset.empty()) {
    throw Error("unknown --preset '" + f.preset + "' (expected en-it or de-en)");
  }
  if (!f.preset.empty() && cfg.model.d != d) {
    throw ShapeError("preset " + f.preset + " expects d=" + std::to_string(cfg.model.d) +
                     " but the embedding files have d=" + std::to_string(d));
  }
  cfg.model.d = d;
  if (f.k) cfg.model.k = *f.k;
  if (f.T) cfg.model.T = *f.T;
  cfg.lr_gen = f.lr_gen;
  cfg.lr_disc = f.lr_disc;
  cfg.lambdas = LossWeights{f.lambda_r, f.lambda_a, f.lambda_c};
  cfg.sampler.batch_size = f.batch_size;
  cfg.sampler.subsample_threshold = f.subsample;
  if (f.subsample_rule == "word2vec_code") {
    cfg.sampler.rule = SubsampleRule::word2vec_code;
  } else if (f.subsample_rule == "discard_sqrt") {
    cfg.sampler.rule = SubsampleRule::discard_sqrt;
  } else {
    throw Error("unknown --subsample-rule '" + f.subsample_rule + "'");
  }
  cfg.max_steps = f.max_steps;
  cfg.eval_every = f.eval_every;
  cfg.checkpoint_every = f.checkpoint_every;
  cfg.seed = f.seed;
  cfg.validate();
  return cfg;
}

inline std::string checkpoint_name(std::uint64_t step) {
  std::ostringstream s;
  s << "step-" << std::setw(8) << std::setfill('0') << step << ".ckpt";
  return s.str();
}

/// Drives a trainer and writes metrics, evaluations and checkpoints into
/// `out`. Metrics are appended, so a resumed run extends the same log.
inline int drive(Trainer& tr, const fs::path& out, nlohmann::json manifest, std::ostream& os, std::ostream& es) {
  std::ofstream metrics(out / "metrics.jsonl", std::ios::app | std::ios::binary);
  std::ofstream evals(out / "eval.jsonl", std::ios::app | std::ios::binary);
  if (!metrics || !evals) throw IoError("cannot open log files in " + out.string());

  const std::uint64_t flush_every = tr.config().eval_every ? tr.config().eval_every : 1000;
  TrainHooks hooks;
  hooks.on_step = [&](const StepMetrics& m) {
    metrics << nlohmann::json(m).dump() << '\n';
    if (m.step % flush_every == 0) metrics.flush();
  };
  hooks.on_eval = [&](const EvalSummary& e) {
    evals << nlohmann::json(e).dump() << '\n';
    evals.flush();
    os << "step " << e.step << ": collapse " << e.collapse << ", covariance error " << e.covariance_rel_error
       << ", monitor accuracy " << e.monitor_accuracy << '\n';
  };
  hooks.on_checkpoint = [&](const CheckpointFile& ck, std::uint64_t step, bool final) {
    if (!final) save_checkpoint_file(ck, (out / checkpoint_name(step)).string());
  };

  const TrainOutcome res = run_training(tr, hooks);
  metrics.flush();

  manifest["finished_at"] = utc_now();
  manifest["final_step"] = tr.state().step;
  if (res.numeric_failure) {
    save_checkpoint_file(res.final_checkpoint, (out / "diagnostic.ckpt").string());
    manifest["status"] = "numeric_failure";
    manifest["error"] = res.message;
    write_json(out / "manifest.json", manifest);
    es << "error: " << res.message << "; diagnostic checkpoint written to " << (out / "diagnostic.ckpt").string()
       << '\n';
    return kNumeric;
  }
  save_checkpoint_file(res.final_checkpoint, (out / "final.ckpt").string());
  manifest["status"] = "completed";
  write_json(out / "manifest.json", manifest);
  os << "trained " << res.steps_run << " steps; final checkpoint " << (out / "final.ckpt").string() << '\n';
  return kOk;
}

inline nlohmann::json input_digests(const TrainFlags& f) {
  return {{"src", sha256_file_hex(f.src)},
          {"tgt", sha256_file_hex(f.tgt)},
          {"src_freq", f.src_freq.empty() ? nlohmann::json(nullptr) : nlohmann::json(sha256_file_hex(f.src_freq))},
          {"tgt_freq", f.tgt_freq.empty() ? nlohmann::json(nullptr) : nlohmann::json(sha256_file_hex(f.tgt_freq))}};
}

inline nlohmann::json base_manifest(const std::string& command, const TrainConfig& cfg, const TrainFlags& f) {
  return {{"tool", "xlingmap"},
          {"version", std::string(kVersion)},
          {"command", command},
          {"config", cfg},
          {"seed", cfg.seed},
          {"rng_algorithm", std::string(Rng::kAlgorithm)},
          {"inputs",
           {{"src", file_record(f.src)},
            {"tgt", file_record(f.tgt)},
            {"src_freq", file_record(f.src_freq)},
            {"tgt_freq", file_record(f.tgt_freq)}}},
          {"started_at", utc_now()}};
}

inline void make_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_train(const detail::TrainFlags& f, std::ostream& os, std::ostream& es) {
  const EmbeddingTable src = detail::load_table(f.src, f.normalize);
  const EmbeddingTable tgt = detail::load_table(f.tgt, f.normalize);
  if (src.dim() != tgt.dim()) {
    throw ShapeError("source d=" + std::to_string(src.dim()) + " but target d=" + std::to_string(tgt.dim()));
  }
  const TrainConfig cfg = detail::resolve_config(f, src.dim());
  const FrequencyTable sf = detail::load_or_uniform(f.src_freq, src);
  const FrequencyTable tf = detail::load_or_uniform(f.tgt_freq, tgt);

  detail::make_out_dir(f.out);
  const detail::fs::path out(f.out);
  for (const char* log : {"metrics.jsonl", "eval.jsonl"}) detail::fs::remove(out / log);
  nlohmann::json manifest = detail::base_manifest("train", cfg, f);
  manifest["normalize_rows"] = f.normalize;
  detail::write_json(out / "manifest.json", manifest);

  Trainer tr(cfg, src, tgt, sf, tf);
  tr.extra["inputs"] = detail::input_digests(f);
  tr.extra["normalize_rows"] = f.normalize;
  return detail::drive(tr, out, std::move(manifest), os, es);
}

inline int cmd_resume(const std::string& checkpoint, const detail::TrainFlags& f, std::optional<std::uint64_t> max_steps,
                      std::ostream& os, std::ostream& es) {
  const CheckpointFile ck = load_checkpoint_file(checkpoint);
  const bool normalize = ck.header.value("extra", nlohmann::json::object()).value("normalize_rows", false);
  const EmbeddingTable src = detail::load_table(f.src, normalize);
  const EmbeddingTable tgt = detail::load_table(f.tgt, normalize);
  const FrequencyTable sf = detail::load_or_uniform(f.src_freq, src);
  const FrequencyTable tf = detail::load_or_uniform(f.tgt_freq, tgt);

  if (ck.header.contains("extra") && ck.header["extra"].contains("inputs")) {
    const nlohmann::json& want = ck.header["extra"]["inputs"];
    const nlohmann::json have = detail::input_digests(f);
    for (const auto& key : {"src", "tgt", "src_freq", "tgt_freq"}) {
      if (want.value(key, nlohmann::json()) != have.at(key)) {
        throw Error(std::string("input '") + key + "' differs from the one the checkpoint was trained on");
      }
    }
  }

  Trainer tr = Trainer::resume(ck, src, tgt, sf, tf);
  if (max_steps) {
    if (*max_steps < tr.state().step) {
      throw Error("--max-steps " + std::to_string(*max_steps) + " is below the checkpoint step " +
                  std::to_string(tr.state().step));
    }
    tr.mutable_config().max_steps = *max_steps;
  }

  detail::make_out_dir(f.out);
  const detail::fs::path out(f.out);
  nlohmann::json manifest = detail::base_manifest("resume", tr.config(), f);
  manifest["normalize_rows"] = normalize;
  manifest["resumed_from"] = {{"path", checkpoint}, {"sha256", sha256_file_hex(checkpoint)}, {"step", tr.state().step}};
  detail::write_json(out / "manifest.json", manifest);
  return detail::drive(tr, out, std::move(manifest), os, es);
}

inline int cmd_map(const detail::EncoderSource& enc_src, const std::string& src_path, bool normalize,
                   const std::string& out_path, std::ostream& os) {
  const EncoderDecoder enc = enc_src.load();
  const EmbeddingTable src = detail::load_table(src_path, normalize);
  const EmbeddingTable mapped = map_table(enc, src);
  save_embeddings(mapped, out_path);
  os << "mapped " << mapped.size() << " vectors to " << out_path << '\n';
  return kOk;
}

inline int cmd_nn(const detail::EncoderSource& enc_src, bool identity, bool normalize, const std::string& src_path,
                  const std::string& tgt_path, const std::vector<std::string>& words, std::size_t k,
                  const std::string& metric, const std::string& out_path, std::ostream& os, std::ostream& es) {
  const EmbeddingTable src = detail::load_table(src_path, normalize);
  const EmbeddingTable tgt = detail::load_table(tgt_path, normalize);
  const EmbeddingTable mapped = identity ? src : map_table(enc_src.load(), src);
  if (mapped.dim() != tgt.dim()) throw ShapeError("mapped source and target dimensions differ");
  const NeighborIndex index(tgt, detail::parse_metric(metric));
  if (k == 0 || k > tgt.size()) throw Error("--k must lie in [1, " + std::to_string(tgt.size()) + "]");

  std::ostringstream table;
  std::size_t answered = 0;
  for (const auto& w : words) {
    const auto i = mapped.vocab.find(w);
    if (!i) {
      es << "warning: '" << w << "' is not in the source vocabulary\n";
      continue;
    }
    ++answered;
    std::size_t rank = 1;
    for (const Neighbor& nb : index.top_k(mapped.row(*i), k)) {
      table << w << '\t' << rank++ << '\t' << nb.token << '\t' << xlingmap::detail::format_double(nb.similarity)
            << '\n';
    }
  }
  os << table.str();
  if (!out_path.empty()) xlingmap::detail::write_file(out_path, table.str());
  if (answered == 0) {
    es << "error: none of the query words are in the source vocabulary\n";
    return kUsage;
  }
  return kOk;
}

inline int cmd_eval(const detail::EncoderSource& enc_src, bool identity, bool normalize, const std::string& src_path,
                    const std::string& tgt_path, const std::string& dict_path, std::size_t k,
                    const std::string& metric, const std::string& out_path, std::ostream& os) {
  const EmbeddingTable src = detail::load_table(src_path, normalize);
  const EmbeddingTable tgt = detail::load_table(tgt_path, normalize);
  const BilingualDictionary dict = load_dictionary(dict_path);
  const EmbeddingTable mapped = identity ? src : map_table(enc_src.load(), src);
  const PrecisionReport rep = precision_at_k(mapped, tgt, dict, k, detail::parse_metric(metric));

  nlohmann::json j;
  j["k"] = rep.k;
  j["resolvable"] = rep.resolvable;
  j["unresolvable"] = rep.unresolvable;
  nlohmann::json p = nlohmann::json::object();
  for (std::size_t i = 1; i <= rep.k; ++i) p["P@" + std::to_string(i)] = rep.at(i);
  j["precision"] = p;
  const std::string text = j.dump(2) + "\n";
  os << text;
  if (!out_path.empty()) xlingmap::detail::write_file(out_path, text);
  return kOk;
}

inline int cmd_synth(const SyntheticSpec& spec, const std::string& out, std::ostream& os) {
  const SyntheticData data = synth_generate(spec);
  detail::make_out_dir(out);
  const detail::fs::path dir(out);
  save_embeddings(data.src, (dir / "src.vec").string());
  save_embeddings(data.tgt, (dir / "tgt.vec").string());
  save_frequencies(data.src_freq, data.src.vocab, (dir / "src.freq").string());
  save_frequencies(data.tgt_freq, data.tgt.vocab, (dir / "tgt.freq").string());
  save_dictionary(data.truth, (dir / "truth.dict").string());
  save_matrix(data.rotation, (dir / "Q.txt").string());
  detail::write_json(dir / "spec.json", {{"d", spec.d},
                                         {"vocab_src", spec.vocab_src},
                                         {"vocab_tgt", spec.vocab_tgt},
                                         {"components", spec.components},
                                         {"mean_scale", spec.mean_scale},
                                         {"component_std", spec.component_std},
                                         {"noise_sigma", spec.noise_sigma},
                                         {"zipf_exponent", spec.zipf_exponent},
                                         {"zipf_max_count", spec.zipf_max_count},
                                         {"seed", spec.seed}});
  os << "wrote synthetic benchmark (d=" << spec.d << ", " << spec.vocab_src << "/" << spec.vocab_tgt
     << " words) to " << out << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

/// Parses argv and dispatches. Never throws; errors become exit codes.
inline int run(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& es = std::cerr) {
  CLI::App app{"Unsupervised cross-lingual embedding mapping with adversarial training", "xlingmap"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  detail::TrainFlags tf;
  auto* train = app.add_subcommand("train", "train a mapping from source to target embeddings");
  detail::attach_inputs(*train, tf);
  train->add_option("--out", tf.out, "output directory")->required();
  train->add_option("--mode", tf.mode, "gan or aae")->capture_default_str();
  train->add_option("--preset", tf.preset, "en-it (d=100,k=40,T=10) or de-en (d=40,k=40,T=4)");
  train->add_option("--k", tf.k, "residual block width [40]");
  train->add_option("--T", tf.T, "number of residual blocks [10]");
  train->add_option("--lr-gen", tf.lr_gen, "encoder learning rate")->capture_default_str();
  train->add_option("--lr-disc", tf.lr_disc, "discriminator learning rate")->capture_default_str();
  train->add_option("--lambda-r", tf.lambda_r, "reconstruction weight")->capture_default_str();
  train->add_option("--lambda-a", tf.lambda_a, "adversarial weight")->capture_default_str();
  train->add_option("--lambda-c", tf.lambda_c, "target cosine weight")->capture_default_str();
  train->add_option("--batch-size", tf.batch_size, "samples per side per step")->capture_default_str();
  train->add_option("--subsample", tf.subsample, "frequent-word subsampling threshold")->capture_default_str();
  train->add_option("--subsample-rule", tf.subsample_rule, "word2vec_code or discard_sqrt")->capture_default_str();
  train->add_option("--max-steps", tf.max_steps, "number of training steps")->capture_default_str();
  train->add_option("--eval-every", tf.eval_every, "evaluation interval, 0 disables")->capture_default_str();
  train->add_option("--checkpoint-every", tf.checkpoint_every, "checkpoint interval, 0 disables")
      ->capture_default_str();
  train->add_option("--seed", tf.seed, "random seed")->capture_default_str();
  train->add_flag("--normalize", tf.normalize, "scale every embedding to unit length before training");

  detail::TrainFlags rf;
  std::string resume_ckpt;
  std::optional<std::uint64_t> resume_max;
  auto* resume = app.add_subcommand("resume", "continue training from a checkpoint");
  resume->add_option("--checkpoint", resume_ckpt, "checkpoint to resume from")->required();
  detail::attach_inputs(*resume, rf);
  resume->add_option("--out", rf.out, "output directory (metrics are appended)")->required();
  resume->add_option("--max-steps", resume_max, "new total step count");

  detail::EncoderSource map_enc;
  std::string map_src, map_out;
  bool map_normalize = false;
  auto* map = app.add_subcommand("map", "apply a trained encoder to a source table");
  map_enc.attach(*map);
  map->add_option("--src", map_src, "source embeddings")->required();
  map->add_option("--out", map_out, "mapped embeddings output")->required();
  map->add_flag("--normalize", map_normalize, "scale source vectors to unit length before mapping");

  detail::EncoderSource nn_enc;
  bool nn_identity = false;
  bool nn_normalize = false;
  std::string nn_src, nn_tgt, nn_metric = "cosine", nn_out;
  std::vector<std::string> nn_words;
  std::size_t nn_k = 10;
  auto* nn = app.add_subcommand("nn", "k-best target words for mapped source words");
  nn_enc.attach(*nn);
  nn->add_flag("--identity", nn_identity, "compare the raw source vectors, no encoder");
  nn->add_flag("--normalize", nn_normalize, "scale both tables to unit length first");
  nn->add_option("--src", nn_src, "source embeddings")->required();
  nn->add_option("--tgt", nn_tgt, "target embeddings")->required();
  nn->add_option("--words", nn_words, "query words, comma separated")->required()->delimiter(',');
  nn->add_option("--k", nn_k, "neighbours per word")->capture_default_str();
  nn->add_option("--metric", nn_metric, "cosine or euclidean")->capture_default_str();
  nn->add_option("--out", nn_out, "also write the TSV here");

  detail::EncoderSource ev_enc;
  bool ev_identity = false;
  bool ev_normalize = false;
  std::string ev_src, ev_tgt, ev_dict, ev_metric = "cosine", ev_out;
  std::size_t ev_k = 5;
  auto* ev = app.add_subcommand("eval", "precision@k against a bilingual dictionary");
  ev_enc.attach(*ev);
  ev->add_flag("--identity", ev_identity, "evaluate the raw source vectors, no encoder");
  ev->add_flag("--normalize", ev_normalize, "scale both tables to unit length first");
  ev->add_option("--src", ev_src, "source embeddings")->required();
  ev->add_option("--tgt", ev_tgt, "target embeddings")->required();
  ev->add_option("--dict", ev_dict, "dictionary, source<TAB>target per line")->required();
  ev->add_option("--k", ev_k, "largest k reported")->capture_default_str();
  ev->add_option("--metric", ev_metric, "cosine or euclidean")->capture_default_str();
  ev->add_option("--out", ev_out, "also write the JSON here");

  SyntheticSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark with a hidden rotation");
  synth->add_option("--d", spec.d, "dimension")->capture_default_str();
  synth->add_option("--vocab-src", spec.vocab_src, "source vocabulary size")->capture_default_str();
  synth->add_option("--vocab-tgt", spec.vocab_tgt, "target vocabulary size")->capture_default_str();
  synth->add_option("--components", spec.components, "mixture components")->capture_default_str();
  synth->add_option("--mean-scale", spec.mean_scale, "spread of component means")->capture_default_str();
  synth->add_option("--component-std", spec.component_std, "within-component std")->capture_default_str();
  synth->add_option("--noise", spec.noise_sigma, "target noise sigma")->capture_default_str();
  synth->add_option("--zipf", spec.zipf_exponent, "Zipf exponent of the counts")->capture_default_str();
  synth->add_option("--zipf-max", spec.zipf_max_count, "count of the most frequent word")->capture_default_str();
  synth->add_option("--seed", spec.seed, "random seed")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, os, es);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(tf, os, es);
    if (*resume) return cmd_resume(resume_ckpt, rf, resume_max, os, es);
    if (*map) return cmd_map(map_enc, map_src, map_normalize, map_out, os);
    if (*nn) return cmd_nn(nn_enc, nn_identity, nn_normalize, nn_src, nn_tgt, nn_words, nn_k, nn_metric, nn_out, os, es);
    if (*ev) return cmd_eval(ev_enc, ev_identity, ev_normalize, ev_src, ev_tgt, ev_dict, ev_k, ev_metric, ev_out, os);
    if (*synth) return cmd_synth(spec, synth_out, os);
  } catch (const std::exception& e) {
    es << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace xlingmap::cli
