#include <gtest/gtest.h>

#include "test_util.hpp"
#include "xlingmap/checkpoint.hpp"
#include "xlingmap/training.hpp"

using namespace xlingmap;
using xlingmap::testing::TempDir;

namespace {

CheckpointFile sample_checkpoint() {
  CheckpointFile ck;
  ck.header["kind"] = "test";
  ck.header["note"] = "ünïcode";
  ck.arrays.push_back(NamedArray::from_matrix("a", xlingmap::testing::random_matrix(3, 4, 1)));
  ck.arrays.push_back(NamedArray::from_matrix("b", Matrix{{-0.0, 1e-310}}));
  return ck;
}

}  // namespace

TEST(Checkpoint, LayoutStartsWithMagicAndEndsWithDigest) {
  const std::string bytes = encode_checkpoint(sample_checkpoint());
  EXPECT_EQ(bytes.substr(0, 8), "XLAAE001");
  const std::string body = bytes.substr(0, bytes.size() - 32);
  const Digest d = sha256(body);
  EXPECT_EQ(bytes.substr(bytes.size() - 32), std::string(reinterpret_cast<const char*>(d.data()), 32));
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir;
  save_checkpoint_file(sample_checkpoint(), dir.file("a.ckpt"));
  const CheckpointFile back = load_checkpoint_file(dir.file("a.ckpt"));
  EXPECT_EQ(back.arrays, sample_checkpoint().arrays);
  save_checkpoint_file(back, dir.file("b.ckpt"));
  EXPECT_EQ(read_file(dir.file("a.ckpt")), read_file(dir.file("b.ckpt")));
}

TEST(Checkpoint, EveryFlippedByteIsDetected) {
  const std::string bytes = encode_checkpoint(sample_checkpoint());
  for (std::size_t i = 0; i < bytes.size(); i += 7) {
    std::string bad = bytes;
    bad[i] = static_cast<char>(bad[i] ^ 0x20);
    EXPECT_THROW(decode_checkpoint(bad), CheckpointError) << "offset " << i;
  }
}

TEST(Checkpoint, TruncationIsDetected) {
  const std::string bytes = encode_checkpoint(sample_checkpoint());
  for (std::size_t n : {std::size_t{0}, std::size_t{8}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, n)), CheckpointError) << n;
}

TEST(Checkpoint, UnsupportedFormatVersion) {
  // Re-sign a body whose header claims a future version.
  std::string bytes = encode_checkpoint(sample_checkpoint());
  std::string body = bytes.substr(0, bytes.size() - 32);
  const auto pos = body.find("\"format_version\":1");
  ASSERT_NE(pos, std::string::npos);
  body[pos + 17] = '2';
  const Digest d = sha256(body);
  body.append(reinterpret_cast<const char*>(d.data()), 32);
  try {
    decode_checkpoint(body);
    FAIL() << "expected a version error";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, MissingArrayIsNamed) {
  try {
    sample_checkpoint().array("nope");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
}

TEST(Checkpoint, TrainerCheckpointRoundTripsThroughDisk) {
  SyntheticSpec spec;
  spec.d = 6;
  spec.vocab_src = spec.vocab_tgt = 100;
  const auto data = synth_generate(spec);
  TrainConfig cfg;
  cfg.model = ModelConfig{.d = 6, .k = 5, .T = 2};
  cfg.sampler.batch_size = 16;
  cfg.probe_size = 32;
  Trainer tr(cfg, data.src, data.tgt, data.src_freq, data.tgt_freq);
  for (int i = 0; i < 40; ++i) tr.step();

  TempDir dir;
  save_checkpoint_file(tr.checkpoint(), dir.file("t.ckpt"));
  Trainer back = Trainer::resume(load_checkpoint_file(dir.file("t.ckpt")), data.src, data.tgt, data.src_freq,
                                 data.tgt_freq);
  save_checkpoint_file(back.checkpoint(), dir.file("u.ckpt"));
  EXPECT_EQ(read_file(dir.file("t.ckpt")), read_file(dir.file("u.ckpt")));

  for (int i = 0; i < 100; ++i) EXPECT_TRUE(tr.step().same_values(back.step()));
  EXPECT_EQ(encode_checkpoint(tr.checkpoint()), encode_checkpoint(back.checkpoint()));
}

TEST(Checkpoint, ResumeRejectsForeignCheckpoints) {
  SyntheticSpec spec;
  spec.d = 4;
  spec.vocab_src = spec.vocab_tgt = 20;
  const auto data = synth_generate(spec);
  EXPECT_THROW(Trainer::resume(sample_checkpoint(), data.src, data.tgt, data.src_freq, data.tgt_freq),
               CheckpointError);
}
