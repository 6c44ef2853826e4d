#include <doctest.h>

#include <filesystem>

#include "eesng/backend.hpp"
#include "eesng/checkpoint.hpp"
#include "eesng/error.hpp"
#include "eesng/trainer.hpp"

using namespace eesng;

namespace {

std::uint64_t fnv(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
  return h;
}

// Recomputes the trailing checksum so a deliberate edit reaches the parser.
std::string reseal(std::string bytes) {
  bytes.resize(bytes.size() - 8);
  const auto h = fnv(bytes);
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((h >> (8 * i)) & 0xff));
  return bytes;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInvalidArgument;  // sentinel: nothing thrown
}

SupernetConfig tiny_net() {
  SupernetConfig c;
  c.vocab_size = 8;
  c.embed_dim = 16;
  c.seq_len = 10;
  c.space = SearchSpace(3, {1, 2, 3}, {4, 2, 1}, {32, 16, 8});
  return c;
}

NeuralBackend neural(const SupernetConfig& c, std::uint64_t seed) {
  NeuralTrainOptions opts;
  opts.task = {TaskKind::kMajority, c.vocab_size, c.seq_len};
  opts.batch_size = 8;
  opts.adam.learning_rate = 3e-3;
  opts.adam.total_steps = 40;
  Rng rng(seed);
  return NeuralBackend(c, opts, init_weights(c, rng),
                       make_validation_set(opts.task, 1, 20, seed + 1));
}

TrainConfig neural_train() {
  TrainConfig tc;
  tc.epochs = 4;
  tc.steps_per_epoch = 10;
  tc.lambda = 2;
  return tc;
}

Checkpoint snapshot(const NeuralBackend& be, const TrainState& st) {
  Checkpoint c;
  c.settings = "[backend]\nkind = neural\n";
  c.net = be.net_config();
  c.state = st;
  c.weights = be.weights();
  c.adam = be.adam_state();
  return c;
}

}  // namespace

TEST_CASE("record set round trip and layout") {
  RecordSet rs;
  rs.add_text("note", "hello");
  rs.add_f64("x", {2, 2}, {1.0, -0.0, 1e-300, 3.5});
  rs.add_i64("n", {3}, {-1, 0, 1ll << 40});
  const auto bytes = rs.encode();
  CHECK(bytes.substr(0, 4) == "EESN");
  CHECK(bytes[4] == 1);  // u32 version, little-endian
  CHECK(bytes[5] == 0);
  const auto back = RecordSet::decode(bytes);
  CHECK(back.text("note") == "hello");
  const auto x = back.f64("x", 4);
  CHECK(x[2] == 1e-300);
  CHECK(std::signbit(x[1]));
  CHECK(back.i64("n", 3)[2] == (1ll << 40));
  CHECK(back.get("x").shape == std::vector<std::uint64_t>{2, 2});
  CHECK(back.encode() == bytes);
  CHECK_THROWS_AS(rs.add_f64("bad", {3}, {1.0}), Error);
  CHECK(code_of([&] { back.f64("n", 3); }) == ErrorCode::kCorruptCheckpoint);
  CHECK(code_of([&] { back.text("missing"); }) == ErrorCode::kCorruptCheckpoint);
}

TEST_CASE("corrupt inputs are rejected with the checkpoint error code") {
  RecordSet rs;
  rs.add_f64("x", {2}, {1.0, 2.0});
  const auto good = rs.encode();
  const auto rejects = [](const std::string& b) {
    return code_of([&] { RecordSet::decode(b); }) == ErrorCode::kCorruptCheckpoint;
  };
  CHECK(rejects(""));
  CHECK(rejects("EESN"));
  CHECK(rejects("XESN" + good.substr(4)));
  CHECK(rejects(good.substr(0, good.size() - 1)));
  for (std::size_t i = 0; i < good.size(); ++i) {
    auto flipped = good;
    flipped[i] ^= 0x10;
    CHECK(rejects(flipped));
  }
  auto v2 = good;
  v2[4] = 2;
  CHECK(rejects(reseal(v2)));
  auto short_payload = good;
  short_payload.insert(short_payload.size() - 8, "junk");
  CHECK(rejects(reseal(short_payload)));
  RecordSet dup;
  dup.add_text("a", "1");
  dup.add_text("a", "2");
  CHECK(rejects(dup.encode()));
}

TEST_CASE("tabular checkpoint round trip") {
  LandscapeConfig lc;
  lc.seed = 3;
  lc.noise_sigma = 0.1;
  TabularBackend be(TabularLandscape(SearchSpace::preset("desk"), lc), SupernetConfig::desk());
  TrainConfig tc;
  tc.epochs = 3;
  tc.steps_per_epoch = 7;
  auto st = initial_state(be.space(), tc, 11);
  train(be, tc, st);
  Checkpoint c;
  c.settings = "[backend]\nkind = tabular\n";
  c.net = be.net_config();
  c.state = st;
  const auto bytes = encode_checkpoint(c);
  const auto back = decode_checkpoint(bytes);
  CHECK(back == c);
  CHECK_FALSE(back.weights);
  CHECK(encode_checkpoint(back) == bytes);

  // Semantic damage behind a valid seal is still reported as corruption.
  auto rs = RecordSet::decode(bytes);
  RecordSet broken;
  for (const auto& r : rs.records()) {
    if (r.name == "theta.0.p") {
      broken.add_f64(r.name, r.shape, std::vector<double>(r.shape[0], 0.9));
    } else if (r.dtype == DType::kText) {
      broken.add_text(r.name, r.payload);
    } else if (r.dtype == DType::kF64) {
      broken.add_f64(r.name, r.shape, RecordSet::decode(bytes).f64(r.name, r.payload.size() / 8));
    } else {
      broken.add_i64(r.name, r.shape, RecordSet::decode(bytes).i64(r.name));
    }
  }
  CHECK(code_of([&] { decode_checkpoint(broken.encode()); }) ==
        ErrorCode::kCorruptCheckpoint);
}

TEST_CASE("atomic save and load through the filesystem") {
  const auto dir = std::filesystem::temp_directory_path() / "eesng_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "a.eesn").string();
  const auto c = tiny_net();
  auto be = neural(c, 5);
  auto st = initial_state(c.space, neural_train(), 5);
  const auto ck = snapshot(be, st);
  save_checkpoint(path, ck);
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  CHECK(load_checkpoint(path) == ck);
  CHECK(code_of([&] { load_checkpoint((dir / "missing").string()); }) == ErrorCode::kIo);
  write_file_atomic(path, "EESN garbage");
  CHECK(code_of([&] { load_checkpoint(path); }) == ErrorCode::kCorruptCheckpoint);
  std::filesystem::remove_all(dir);
}

TEST_CASE("resume from a checkpoint equals the uninterrupted neural run") {
  const auto c = tiny_net();
  const auto tc = neural_train();

  auto full_be = neural(c, 9);
  auto full_st = initial_state(c.space, tc, 9);
  train(full_be, tc, full_st);

  auto be = neural(c, 9);
  auto st = initial_state(c.space, tc, 9);
  std::string saved;
  struct Stop {};
  try {
    train(be, tc, st, [&](const TrainState& s) {
      if (s.epoch == 2) {
        saved = encode_checkpoint(snapshot(be, s));
        throw Stop{};
      }
    });
  } catch (const Stop&) {
  }
  REQUIRE_FALSE(saved.empty());

  const auto ck = decode_checkpoint(saved);
  auto resumed = neural(c, 12345);  // different init, overwritten below
  resumed.mutable_weights() = *ck.weights;
  resumed.mutable_adam_state() = *ck.adam;
  auto rst = ck.state;
  train(resumed, tc, rst);

  CHECK(rst == full_st);
  CHECK(resumed.weights() == full_be.weights());
  CHECK(checksum(resumed.weights()) == checksum(full_be.weights()));
  CHECK(resumed.adam_state().step == full_be.adam_state().step);
  CHECK(history_csv(rst.history) == history_csv(full_st.history));
}
