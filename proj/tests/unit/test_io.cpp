#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "tensorjump/io.hpp"

using namespace tensorjump;

namespace {

Trajectory sample_trajectory(std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 2.0);
  Trajectory t;
  t.spec = IrrepsSpec::parse("2x0+1x1+1x2");
  t.n_nodes = 4;
  t.labels = {3, -1, 0, 20};
  t.mask.assign(t.n_nodes * t.spec.channels(), 1);
  t.mask[1] = 0;
  t.mask[6] = 0;
  t.frame_interval = 0.02;
  for (std::size_t f = 0; f < frames; ++f) {
    auto c = t.blank();
    for (double& v : c.features()) v = normal(rng);
    for (double& v : c.positions()) v = normal(rng);
    c.apply_mask();
    t.frames.push_back(c);
  }
  io::quantize_f32(t);
  return t;
}

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "tensorjump_io_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST(Tct, RoundTripIsBitExact) {
  const auto t = sample_trajectory(7, 1);
  const auto bytes = io::encode_tct(t);
  const auto back = io::decode_tct(bytes);
  EXPECT_EQ(back.spec, t.spec);
  EXPECT_EQ(back.n_nodes, t.n_nodes);
  EXPECT_EQ(back.labels, t.labels);
  EXPECT_EQ(back.mask, t.mask);
  EXPECT_EQ(back.frame_interval, t.frame_interval);
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t f = 0; f < t.size(); ++f) EXPECT_TRUE(back.frames[f].bitwise_equal(t.frames[f]));
  EXPECT_EQ(io::encode_tct(back), bytes);

  const auto path = temp_path("rt.tct");
  io::write_tct(path, t);
  EXPECT_EQ(io::read_bytes(path), bytes);
  EXPECT_EQ(io::encode_tct(io::read_tct(path)), bytes);
}

TEST(Tct, HeaderLayout) {
  const auto t = sample_trajectory(0, 2);
  const auto b = io::encode_tct(t);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "TCTR");
  EXPECT_EQ(b[4], 1);     // version, little-endian
  EXPECT_EQ(b[8], 4);     // N
  EXPECT_EQ(b[12], 2);    // lmax
  EXPECT_EQ(b[13], 2);    // multiplicity of l = 0
  // magic 4, version 4, N 4, lmax 1, mults 12, frames 8, interval 8, labels 4, masks 16, checksum 8
  EXPECT_EQ(b.size(), 4u + 4 + 4 + 1 + 12 + 8 + 8 + 4 + 16 + 8);
  const auto back = io::decode_tct(b);
  EXPECT_EQ(back.size(), 0u);
  EXPECT_EQ(back.spec, t.spec);
}

TEST(Tct, EmptySpecAndNoLabels) {
  Trajectory t;
  t.n_nodes = 2;
  TensorCloud c(IrrepsSpec{}, 2);
  c.set_position(1, Vec3(1.5, -2.25, 0.0));
  t.frames = {c, c};
  const auto back = io::decode_tct(io::encode_tct(t));
  EXPECT_TRUE(back.spec.empty());
  EXPECT_TRUE(back.labels.empty());
  EXPECT_TRUE(back.mask.empty());
  EXPECT_TRUE(back.frames[1].bitwise_equal(c));
}

TEST(Tct, CorruptionIsDetected) {
  const auto bytes = io::encode_tct(sample_trajectory(2, 3));
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    for (std::uint8_t flip : {0x01, 0x80}) {
      auto bad = bytes;
      bad[i] ^= flip;
      EXPECT_THROW(io::decode_tct(bad), io::FormatError) << "byte " << i;
    }
  }
  auto cut = bytes;
  cut.resize(cut.size() - 9);
  EXPECT_THROW(io::decode_tct(cut), io::FormatError);
  EXPECT_THROW(io::read_tct(temp_path("does_not_exist.tct")), std::runtime_error);
}

TEST(Tct, RejectsUnencodableInput) {
  auto t = sample_trajectory(1, 4);
  t.labels[0] = 300;
  EXPECT_THROW(io::encode_tct(t), std::invalid_argument);
  t = sample_trajectory(1, 4);
  t.frames[0].features()[0] = std::nan("");
  EXPECT_THROW(io::encode_tct(t), std::invalid_argument);
}

TEST(Checkpoint, RoundTrip) {
  io::Checkpoint c;
  c.header = "[model]\nH = 8\n";
  c.step = 12;
  c.params = {0.5, -1.25, 3.0e-3};
  const auto back = io::decode_checkpoint(io::encode_checkpoint(c));
  EXPECT_EQ(back.header, c.header);
  EXPECT_EQ(back.step, 12u);
  ASSERT_EQ(back.params.size(), 3u);
  EXPECT_EQ(back.params[2], static_cast<double>(static_cast<float>(3.0e-3)));
  EXPECT_FALSE(back.resume);

  io::ResumeState s;
  s.params = {0.1, 0.2, 0.3};
  s.adam_m = {1e-9, 2e-9, 3e-9};
  s.adam_v = {4.0, 5.0, 6.0};
  s.adam_step = 12;
  s.rng_state = "123 456";
  s.caller_state = "acc 1.5 3";
  c.resume = s;
  const auto path = temp_path("ck.bin");
  io::write_checkpoint(path, c);
  const auto r = io::read_checkpoint(path);
  ASSERT_TRUE(r.resume);
  EXPECT_EQ(r.resume->params, s.params);
  EXPECT_EQ(r.resume->adam_m, s.adam_m);
  EXPECT_EQ(r.resume->rng_state, s.rng_state);
  EXPECT_EQ(r.resume->caller_state, s.caller_state);
  EXPECT_EQ(io::encode_checkpoint(r), io::encode_checkpoint(c));
  auto bytes = io::read_bytes(path);
  bytes[10] ^= 4;
  EXPECT_THROW(io::decode_checkpoint(bytes), io::FormatError);
}

TEST(Pairs, CsvRoundTrip) {
  std::vector<worlds::PairIndex> pairs{{0, 0, 1}, {2, 17, 5}, {4294967295u, 1ull << 40, 3}};
  const auto path = temp_path("pairs.csv");
  io::write_pairs(path, pairs);
  const auto back = io::read_pairs(path);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2].trajectory, pairs[2].trajectory);
  EXPECT_EQ(back[2].frame, pairs[2].frame);
  EXPECT_EQ(back[1].lag, 5u);
}
