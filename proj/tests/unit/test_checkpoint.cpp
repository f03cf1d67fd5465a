#include <doctest.h>

#include <cstring>

#include "bbr/checkpoint.hpp"
#include "bbr/error.hpp"
#include "helpers.hpp"

using namespace bbr;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.fields["kind"] = "test";
  c.fields["note"] = "a,b";
  c.tensors.emplace_back("w", test::random_matrix(3, 4, 1));
  c.tensors.emplace_back("b", Tensor::vector({-0.0, 1e-310, 3.5}));
  c.tensors.emplace_back("empty", Tensor::matrix(0, 5));
  return c;
}

std::uint64_t read_u64(const std::string& s, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit exact") {
    const Checkpoint c = sample_checkpoint();
    const Checkpoint d = decode_checkpoint(encode_checkpoint(c));
    CHECK(d.fields == c.fields);
    REQUIRE(d.tensors.size() == c.tensors.size());
    for (std::size_t i = 0; i < c.tensors.size(); ++i) {
      CHECK(d.tensors[i].first == c.tensors[i].first);
      CHECK(bitwise_equal(d.tensors[i].second, c.tensors[i].second));
    }
    CHECK(encode_checkpoint(d) == encode_checkpoint(c));
  }

  TEST_CASE("layout: magic, manifest line, little-endian records") {
    Checkpoint c;
    c.tensors.emplace_back("x", Tensor::vector({1.0}));
    const std::string bytes = encode_checkpoint(c);
    CHECK(bytes.substr(0, 4) == "BBR1");
    const auto nl = bytes.find('\n');
    CHECK(bytes.substr(4, nl - 4) == "tensors=x");
    CHECK(read_u64(bytes, nl + 1) == 1);
    CHECK(read_u64(bytes, nl + 9) == 1);
    double v = 0.0;
    const std::uint64_t bits = read_u64(bytes, nl + 17);
    std::memcpy(&v, &bits, 8);
    CHECK(v == 1.0);
    CHECK(bytes.size() == nl + 1 + 24);
  }

  TEST_CASE("bad magic") {
    std::string bytes = encode_checkpoint(sample_checkpoint());
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
    CHECK_THROWS_AS(decode_checkpoint("BB"), FormatError);
  }

  TEST_CASE("every truncation is a format error") {
    const std::string bytes = encode_checkpoint(sample_checkpoint());
    for (std::size_t n = 0; n < bytes.size(); ++n) {
      CHECK_THROWS_AS(decode_checkpoint(std::string_view(bytes).substr(0, n)), FormatError);
    }
  }

  TEST_CASE("trailing bytes are rejected") {
    CHECK_THROWS_AS(decode_checkpoint(encode_checkpoint(sample_checkpoint()) + "x"), FormatError);
  }

  TEST_CASE("corrupted extents are a format error, not a crash") {
    const std::string good = encode_checkpoint(sample_checkpoint());
    const auto first_record = good.find('\n') + 1;
    for (std::uint64_t bad : {std::uint64_t{1} << 40, ~std::uint64_t{0}, std::uint64_t{1} << 62, std::uint64_t{7}}) {
      std::string bytes = good;
      for (int i = 0; i < 8; ++i) bytes[first_record + 8 + i] = static_cast<char>((bad >> (8 * i)) & 0xff);
      CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
    }
    std::string bytes = good;
    bytes[first_record] = 100;  // rank
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  }

  TEST_CASE("fields that cannot be encoded") {
    Checkpoint c;
    c.fields["bad key"] = "v";
    CHECK_THROWS_AS(encode_checkpoint(c), FormatError);
    c.fields.clear();
    c.fields["k"] = "two words";
    CHECK_THROWS_AS(encode_checkpoint(c), FormatError);
  }

  TEST_CASE("classifier save and load") {
    const auto dir = test::scratch_dir("ckpt");
    Rng rng(3);
    const Classifier model({10, 6, 3}, rng);
    save_classifier(model, dir / "m.ckpt", {{"config_hash", "abc"}});
    const Classifier back = load_classifier(dir / "m.ckpt");
    const Tensor x = test::random_matrix(4, 10, 2);
    CHECK(bitwise_equal(model.forward(x), back.forward(x)));
    CHECK(read_checkpoint(dir / "m.ckpt").field("config_hash") == "abc");
    CHECK(read_checkpoint(dir / "m.ckpt").field("kind") == "classifier");
  }

  TEST_CASE("loading a missing file") {
    CHECK_THROWS_AS(read_checkpoint("/nonexistent/file.ckpt"), FormatError);
  }
}
