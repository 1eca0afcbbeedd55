#include <cstring>
#include <fstream>
#include <random>

#include "doctest.h"

#include "fnmme/errors.hpp"
#include "fnmme/tensorio.hpp"
#include "support.hpp"

using namespace fnmme;
using namespace fnmme::tensorio;

namespace {

// Hand-assembled little-endian bytes, independent of ByteWriter.
void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& b, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(b, v);
}

void put_str(std::vector<std::uint8_t>& b, const std::string& s) {
  put_u32(b, static_cast<std::uint32_t>(s.size()));
  b.insert(b.end(), s.begin(), s.end());
}

std::vector<std::uint8_t> hand_encoded_conv_2x2x1() {
  std::vector<std::uint8_t> b{'F', 'N', 'E', 'A'};
  put_u32(b, 1);
  put_str(b, "img");
  put_u32(b, 1);
  put_str(b, "conv1");
  b.push_back(0);
  put_u32(b, 2);
  put_u32(b, 2);
  put_u32(b, 1);
  for (float v : {1.f, 2.f, 3.f, 4.f}) put_f32(b, v);
  return b;
}

ActivationSet sample_set() {
  ActivationSet s;
  s.image_id = "dog_01";
  s.layers.push_back({"conv1_1", LayerKind::conv, {2, 3, 2}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}});
  s.layers.push_back({"fc7", LayerKind::fc, {3}, {0.5f, -1.25f, 3e-7f}});
  return s;
}

Checkpoint sample_checkpoint(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Checkpoint c;
  c.config.hidden_dim = 4;
  c.config.word_dim = 3;
  c.config.learning_rate = 0.00025;
  c.vocab = textenc::build_vocab(std::vector<std::string>{"a dog runs", "a cat sits"}, 10);
  c.stats.mean = {0.1f, -2.5f, 1e-30f, 7.f, 3.f};
  c.stats.std = {1.f, 0.f, 2.5f, 1e-9f, 4.f};
  c.stats.fitted_on = 17;
  c.params = testing::random_params<float>(rng, static_cast<Eigen::Index>(c.vocab.size()), 3, 4, 5);
  c.provenance = {3, seed, 1.2345678901234567};
  return c;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), 4 * a.size()) == 0;
}

}  // namespace

TEST_CASE("activation: hand-encoded conv layer decodes to its values") {
  const auto set = decode_activation(hand_encoded_conv_2x2x1());
  CHECK(set.image_id == "img");
  REQUIRE(set.layers.size() == 1);
  CHECK(set.layers[0].kind == LayerKind::conv);
  CHECK(set.layers[0].shape == std::vector<std::uint32_t>{2, 2, 1});
  CHECK(set.layers[0].values == std::vector<float>{1, 2, 3, 4});
  CHECK(encode_activation(set) == hand_encoded_conv_2x2x1());
}

TEST_CASE("activation: file round trip is bit exact") {
  const auto dir = testing::scratch_dir("tensorio_act");
  auto set = sample_set();
  set.layers[1].values[2] = -0.0f;
  write_activation_file(set, dir / "a.fnea");
  const auto back = read_activation_file(dir / "a.fnea");
  CHECK(back == set);
  CHECK(std::signbit(back.layers[1].values[2]));
}

TEST_CASE("activation: conv (1,1,3) contributes header plus 12 payload bytes") {
  ActivationSet s{"x", {{"c", LayerKind::conv, {1, 1, 3}, {1, 2, 3}}}};
  // magic 4 + version 4 + id (4+1) + count 4 + name (4+1) + kind 1 + dims 12
  const std::size_t header = 4 + 4 + 5 + 4 + 5 + 1 + 12;
  CHECK(encode_activation(s).size() == header + 12);
}

TEST_CASE("activation: error paths") {
  SUBCASE("bad magic") {
    auto b = hand_encoded_conv_2x2x1();
    b[0] = 'X';
    CHECK_THROWS_AS(decode_activation(b), FormatError);
  }
  SUBCASE("declared payload beyond end of file") {
    auto b = hand_encoded_conv_2x2x1();
    b.resize(b.size() - 3);
    CHECK_THROWS_AS(decode_activation(b), TruncationError);
  }
  SUBCASE("unknown kind code") {
    auto b = hand_encoded_conv_2x2x1();
    b[4 + 4 + 7 + 4 + 9] = 7;
    CHECK_THROWS_WITH_AS(decode_activation(b), doctest::Contains("unknown kind"), FormatError);
  }
  SUBCASE("version mismatch") {
    auto b = hand_encoded_conv_2x2x1();
    b[4] = 9;
    CHECK_THROWS_AS(decode_activation(b), VersionError);
  }
  SUBCASE("empty layer list is refused on write") {
    ActivationSet empty{"nothing", {}};
    CHECK_THROWS_AS(encode_activation(empty), FormatError);
  }
  SUBCASE("shape/value mismatch is refused on write") {
    ActivationSet bad{"x", {{"c", LayerKind::conv, {2, 2, 1}, {1, 2, 3}}}};
    CHECK_THROWS_AS(encode_activation(bad), FormatError);
  }
  SUBCASE("huge declared dimensions do not allocate") {
    std::vector<std::uint8_t> b{'F', 'N', 'E', 'A'};
    put_u32(b, 1);
    put_str(b, "i");
    put_u32(b, 1);
    put_str(b, "c");
    b.push_back(0);
    for (int i = 0; i < 3; ++i) put_u32(b, 0xFFFFFFFFu);
    CHECK_THROWS_AS(decode_activation(b), TruncationError);
  }
  SUBCASE("unwritable path") {
    CHECK_THROWS_AS(write_activation_file(sample_set(), "/nonexistent_dir/x/a.fnea"), IoError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_activation_file("/nonexistent_dir/a.fnea"), IoError);
  }
}

TEST_CASE("manifest: parse, counts and validation") {
  const std::string text =
      R"({"image_id":"a","split":"train","activation_path":"a.fnea","captions":["A dog."]})"
      "\n"
      R"({"image_id":"b","split":"test","activation_path":"/abs/b.fnea","captions":["x","y"]})"
      "\n";
  const auto m = parse_manifest(text, "/data");
  const auto counts = m.counts();
  CHECK(counts.at(Split::train) == 1);
  CHECK(counts.at(Split::test) == 1);
  CHECK(counts.count(Split::val) == 0);
  CHECK(m.resolve(m.entries[0]) == std::filesystem::path("/data/a.fnea"));
  CHECK(m.resolve(m.entries[1]) == std::filesystem::path("/abs/b.fnea"));
  CHECK(m.entries[1].captions.size() == 2);

  const auto again = parse_manifest(format_manifest(m), "/data");
  CHECK(again.entries == m.entries);

  SUBCASE("duplicate image id") {
    const std::string dup =
        R"({"image_id":"a","split":"train","activation_path":"a","captions":["c"]})"
        "\n"
        R"({"image_id":"a","split":"val","activation_path":"b","captions":["c"]})";
    CHECK_THROWS_WITH_AS(parse_manifest(dup), doctest::Contains("duplicate"), ValidationError);
  }
  SUBCASE("missing split") {
    const std::string missing = R"({"image_id":"a","activation_path":"a","captions":["c"]})";
    CHECK_THROWS_WITH_AS(parse_manifest(missing), doctest::Contains("split"), ValidationError);
  }
  SUBCASE("unknown split") {
    const std::string bad = R"({"image_id":"a","split":"dev","activation_path":"a","captions":["c"]})";
    CHECK_THROWS_AS(parse_manifest(bad), ValidationError);
  }
  SUBCASE("no captions") {
    const std::string bad = R"({"image_id":"a","split":"val","activation_path":"a","captions":[]})";
    CHECK_THROWS_AS(parse_manifest(bad), ValidationError);
  }
  SUBCASE("not json") { CHECK_THROWS_AS(parse_manifest("{nope"), ValidationError); }
}

TEST_CASE("stats: round trip is bit exact and keeps thresholds") {
  StatsFile f;
  f.stats.mean = {1.5f, -0.0f, 3.4e38f};
  f.stats.std = {0.f, 2.f, 1e-40f};
  f.stats.fitted_on = 2;
  f.config = {0.3f, -0.1f};
  const auto back = decode_stats(encode_stats(f));
  CHECK(bitwise_equal(back.stats.mean, f.stats.mean));
  CHECK(bitwise_equal(back.stats.std, f.stats.std));
  CHECK(back.stats.fitted_on == 2);
  CHECK(back.config == f.config);
  // magic + version + D + 2*D floats + 2 thresholds + fitted_on
  CHECK(encode_stats(f).size() == 4 + 4 + 4 + 24 + 8 + 4);

  auto bytes = encode_stats(f);
  bytes[0] = 'Q';
  CHECK_THROWS_AS(decode_stats(bytes), FormatError);
}

TEST_CASE("checkpoint: save/load is bit exact") {
  const auto dir = testing::scratch_dir("tensorio_ckpt");
  const auto c = sample_checkpoint(11);
  save_checkpoint(c, dir / "m.fnec");
  const auto back = load_checkpoint(dir / "m.fnec");
  CHECK(back == c);
  CHECK(back.params == c.params);
  CHECK(bitwise_equal(back.stats.mean, c.stats.mean));
  CHECK(back.vocab.words() == c.vocab.words());
  CHECK(back.config.learning_rate == 0.00025);
  CHECK(back.provenance.validation_score == c.provenance.validation_score);
}

TEST_CASE("checkpoint: version mismatch") {
  auto bytes = encode_checkpoint(sample_checkpoint(3));
  bytes[4] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bytes), VersionError);
}

TEST_CASE("readers never crash on fuzzed input") {
  std::mt19937_64 rng(2024);
  const std::vector<std::vector<std::uint8_t>> seeds{
      encode_activation(sample_set()), encode_stats({{{1, 2}, {3, 4}, 5}, {}}),
      encode_checkpoint(sample_checkpoint(5))};
  std::size_t typed_errors = 0;
  std::size_t parsed = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    auto bytes = seeds[static_cast<std::size_t>(trial) % seeds.size()];
    const int mutations = 1 + static_cast<int>(rng() % 8);
    for (int m = 0; m < mutations; ++m) {
      switch (rng() % 4) {
        case 0:
          bytes[rng() % bytes.size()] = static_cast<std::uint8_t>(rng());
          break;
        case 1:
          bytes.resize(rng() % (bytes.size() + 1));
          if (bytes.empty()) bytes.push_back(0);
          break;
        case 2:
          bytes.insert(bytes.begin() + static_cast<long>(rng() % bytes.size()),
                       static_cast<std::uint8_t>(rng()));
          break;
        default: {
          // Make length/count fields huge.
          const auto pos = rng() % bytes.size();
          for (std::size_t i = pos; i < std::min(bytes.size(), pos + 4); ++i) bytes[i] = 0xFF;
        }
      }
    }
    for (auto decode : {+[](std::span<const std::uint8_t> b) { (void)decode_activation(b); },
                        +[](std::span<const std::uint8_t> b) { (void)decode_stats(b); },
                        +[](std::span<const std::uint8_t> b) { (void)decode_checkpoint(b); }}) {
      try {
        decode(bytes);
        ++parsed;
      } catch (const fnmme::Error&) {
        ++typed_errors;
      }
    }
  }
  CHECK(typed_errors > 0);
  MESSAGE("fuzz: " << typed_errors << " typed errors, " << parsed << " valid parses");
}
