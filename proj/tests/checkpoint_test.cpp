#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "uniprompt/checkpoint.hpp"
#include "uniprompt/encoder.hpp"

using namespace uniprompt;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Checkpoint, BitExactRoundTrip) {
  Rng rng(1);
  Checkpoint ck;
  ck.meta_json = R"({"format":"test","v":1})";
  ck.params.emplace_back("a.w", Tensor::randn({3, 4}, 1.0, rng));
  ck.params.emplace_back("a.b", Tensor::randn({1, 4}, 1.0, rng));

  const std::string p1 = temp_path("up_ck1.bin");
  const std::string p2 = temp_path("up_ck2.bin");
  save_checkpoint(p1, ck);
  Checkpoint loaded = load_checkpoint(p1);
  save_checkpoint(p2, loaded);
  EXPECT_EQ(slurp(p1), slurp(p2));  // file -> memory -> file is byte-identical

  EXPECT_EQ(loaded.meta_json, ck.meta_json);
  ASSERT_EQ(loaded.params.size(), 2u);
  EXPECT_EQ(loaded.params[0].first, "a.w");
  // values pass through f32 storage
  for (std::size_t i = 0; i < ck.params[0].second.data.size(); ++i) {
    EXPECT_EQ(loaded.params[0].second.data[i],
              static_cast<double>(static_cast<float>(ck.params[0].second.data[i])));
  }
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST(Checkpoint, QuantizedValuesAreLossless) {
  Rng rng(2);
  Tensor t = Tensor::randn({2, 5}, 1.0, rng);
  quantize_f32(t);
  Checkpoint ck;
  ck.meta_json = "{}";
  ck.params.emplace_back("t", t);
  const std::string p = temp_path("up_ck3.bin");
  save_checkpoint(p, ck);
  Checkpoint loaded = load_checkpoint(p);
  EXPECT_TRUE(bitwise_equal(loaded.params[0].second, t));
  std::remove(p.c_str());
}

TEST(Checkpoint, BadMagicRejected) {
  const std::string p = temp_path("up_ck4.bin");
  std::ofstream(p, std::ios::binary) << "NOTACKPT and more bytes";
  EXPECT_THROW(load_checkpoint(p), DataError);
  std::remove(p.c_str());
}

TEST(Checkpoint, TruncatedFileRejected) {
  Rng rng(3);
  Checkpoint ck;
  ck.meta_json = "{}";
  ck.params.emplace_back("w", Tensor::randn({4, 4}, 1.0, rng));
  const std::string p = temp_path("up_ck5.bin");
  save_checkpoint(p, ck);
  std::string bytes = slurp(p);
  std::ofstream(p, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint(p), DataError);
  std::remove(p.c_str());
}

TEST(Checkpoint, MissingFileRejected) {
  EXPECT_THROW(load_checkpoint(temp_path("up_ck_does_not_exist.bin")), DataError);
}
