#include "lap/checkpoint.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

using namespace lap;

namespace {

CheckpointErrorCode code_of(const std::vector<std::uint8_t>& bytes) {
  try {
    deserialize(bytes);
  } catch (const CheckpointError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return CheckpointErrorCode::Io;
}

std::vector<std::uint8_t> toy_bytes() {
  LapNet net(build_lap_config("toy"), 5);
  return serialize(capture(net, 3, 5));
}

void set_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

TEST(Checkpoint, CaptureHoldsEveryTensor) {
  LapNet net(build_lap_config("toy"), 5);
  const Checkpoint c = capture(net, 3, 5);
  EXPECT_EQ(c.tensors.size(), net.parameters().size());
  EXPECT_EQ(c.epoch, 3);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.config, net.config());
  ASSERT_NE(c.find("stem.conv.conv.weight"), nullptr);
  EXPECT_EQ(c.find("nope"), nullptr);
}

TEST(Checkpoint, SerializeRoundTripIsBitwise) {
  const std::vector<std::uint8_t> a = toy_bytes();
  EXPECT_EQ(std::string(a.begin(), a.begin() + 4), "LAPW");
  EXPECT_EQ(get_u32(a, 4), Checkpoint::kVersion);
  const Checkpoint c = deserialize(a);
  EXPECT_EQ(serialize(c), a);
  EXPECT_EQ(c.epoch, 3);
  EXPECT_EQ(c.seed, 5u);
}

TEST(Checkpoint, RestoreReproducesOutputs) {
  LapNet a(build_lap_config("toy"), 5);
  // Round parameters to f32 first so restore is exact.
  for (const ParamRef& p : a.parameters())
    for (std::int64_t i = 0; i < p.value->size(); ++i) (*p.value)[i] = static_cast<float>((*p.value)[i]);
  const auto path = std::filesystem::temp_directory_path() / "lap_test.lapw";
  save_checkpoint(capture(a, 1, 5), path.string());
  const std::unique_ptr<LapNet> b = instantiate(load_checkpoint(path.string()));
  std::filesystem::remove(path);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  Tensord x(Shape{1, 1, 64, 64});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = d(rng);
  EXPECT_EQ(a.forward(x, Mode::Eval)[0], b->forward(x, Mode::Eval)[0]);
}

TEST(Checkpoint, ErrorCodes) {
  const std::vector<std::uint8_t> good = toy_bytes();

  std::vector<std::uint8_t> b = good;
  b[0] = 'X';
  EXPECT_EQ(code_of(b), CheckpointErrorCode::BadMagic);

  b = good;
  set_u32(b, 4, 99);
  EXPECT_EQ(code_of(b), CheckpointErrorCode::BadVersion);

  for (std::size_t cut : {std::size_t{10}, good.size() / 2, good.size() - 3}) {
    b.assign(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_EQ(code_of(b), CheckpointErrorCode::Truncated) << cut;
  }

  const std::uint32_t count = get_u32(good, 8);
  b = good;
  set_u32(b, 8, count + 1);
  EXPECT_EQ(code_of(b), CheckpointErrorCode::CountMismatch);
  b = good;
  set_u32(b, 8, count - 1);
  EXPECT_EQ(code_of(b), CheckpointErrorCode::CountMismatch);

  b = good;
  b.push_back(0);
  EXPECT_EQ(code_of(b), CheckpointErrorCode::BadRecord);

  try {
    load_checkpoint("/nonexistent/dir/x.lapw");
    ADD_FAILURE();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.code(), CheckpointErrorCode::Io);
  }
}

TEST(Checkpoint, RestoreRejectsShapeMismatch) {
  const Checkpoint c = capture(*std::make_unique<LapNet>(build_lap_config("toy"), 1), 0, 1);
  NetworkConfig other = build_lap_config("toy");
  other.channels = 16;
  LapNet wrong(other, 1);
  try {
    restore(c, wrong);
    ADD_FAILURE();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.code(), CheckpointErrorCode::ShapeMismatch);
  }
  Checkpoint missing = c;
  missing.tensors.pop_back();
  LapNet same(build_lap_config("toy"), 1);
  EXPECT_THROW(restore(missing, same), CheckpointError);
}
