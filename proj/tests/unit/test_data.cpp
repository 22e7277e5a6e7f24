#include <gtest/gtest.h>

#include <array>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "statekit/data.hpp"
#include "statekit/error.hpp"

using namespace statekit;

namespace {

Image8 ramp(std::size_t h, std::size_t w) {
  Image8 img{h, w, std::vector<std::uint8_t>(3 * h * w)};
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<std::uint8_t>(i * 7 % 251);
  return img;
}

// Per-class image counts of the cooking-state dataset (train, validation, test).
constexpr std::array<std::array<std::size_t, 3>, kNumClasses> kSplitCounts = {{{496, 110, 57},
                                                                               {511, 112, 48},
                                                                               {472, 108, 56},
                                                                               {543, 101, 42},
                                                                               {853, 215, 103},
                                                                               {701, 143, 65},
                                                                               {532, 116, 68},
                                                                               {499, 99, 55},
                                                                               {745, 167, 84},
                                                                               {491, 101, 60},
                                                                               {505, 105, 42}}};

}  // namespace

TEST(Manifest, DatasetSizedManifestTotals) {
  std::string text = "path,split,class_name\n";
  const char* splits[] = {"train", "validation", "test"};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t i = 0; i < kSplitCounts[c][s]; ++i) {
        text += std::string(splits[s]) + "/" + std::to_string(c) + "_" + std::to_string(i) + ".jpg," +
                splits[s] + "," + std::string(kClassNames[c]) + "\n";
      }
    }
  }
  const auto m = load_manifest(text);
  EXPECT_EQ(m.split_total(Split::train), 6348u);
  EXPECT_EQ(m.split_total(Split::validation), 1377u);
  EXPECT_EQ(m.split_total(Split::test), 680u);
  EXPECT_EQ(m.counts[2][4], 103u);
}

TEST(Manifest, CanonicalLabelsAndErrors) {
  const auto m = load_manifest("path,split,class_name\nimg/a.ppm,train,Sliced\n");
  ASSERT_EQ(m.entries.size(), 1u);
  EXPECT_EQ(m.entries[0].label, 4u);
  EXPECT_EQ(class_index("Creamy Paste"), 10u);
  try {
    load_manifest("path,split,class_name\na.ppm,train,Sliced\nb.ppm,train,Boiled\n");
    FAIL() << "expected a data error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_manifest("file,split,label\n"), DataError);
  EXPECT_THROW(load_manifest("path,split,class_name\na.ppm,holdout,Sliced\n"), DataError);
  EXPECT_THROW(load_manifest("path,split,class_name\na.ppm,train\n"), DataError);
  EXPECT_THROW(load_manifest("path,split,class_name\na.ppm,train,Diced\na.ppm,train,Diced\n"), DataError);
}

TEST(Manifest, WriteParseRoundTrip) {
  const auto m = load_manifest(
      "path,split,class_name\r\nx/1.ppm,test,Creamy Paste\r\n\"x/2,b.ppm\",validation,Whole\r\n");
  EXPECT_EQ(m.entries[1].path, "x/2,b.ppm");
  EXPECT_EQ(load_manifest(write_manifest(m.entries)).entries, m.entries);
}

TEST(Images, CodecsRoundTrip) {
  const auto img = ramp(5, 7);
  EXPECT_EQ(decode_image(encode_ppm(img)), img);
  EXPECT_EQ(decode_image(encode_rawimg(img)), img);
  auto ppm = encode_ppm(img);
  ppm.pop_back();
  EXPECT_THROW(decode_image(ppm), FormatError);
  const std::vector<std::uint8_t> junk{'G', 'I', 'F', '8'};
  EXPECT_THROW(decode_image(junk), FormatError);
  const std::string p16 = "P6\n2 1\n65535\n";
  EXPECT_THROW(decode_image(std::vector<std::uint8_t>(p16.begin(), p16.end())), FormatError);
  EXPECT_THROW(read_image("/nonexistent/file.ppm"), IoError);
}

TEST(Images, PpmHeaderComments) {
  const std::string text = "P6 # comment\n2 1\n# another\n255\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  for (int i = 0; i < 6; ++i) bytes.push_back(static_cast<std::uint8_t>(i * 40));
  const auto img = decode_image(bytes);
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.rgb[5], 200);
}

TEST(Crop, WindowOffsets) {
  const auto a = center_crop_window(224, 224, 224);
  EXPECT_EQ(a.row_offset, 0u);
  EXPECT_EQ(a.col_offset, 0u);
  const auto b = center_crop_window(375, 500, 224);
  EXPECT_EQ(b.row_offset, 75u);
  EXPECT_EQ(b.col_offset, 138u);
  const auto c = center_crop_window(300, 224, 224);
  EXPECT_EQ(c.row_offset, 38u);
  EXPECT_EQ(c.col_offset, 0u);
}

TEST(Crop, CopiesTheCentralWindowExactly) {
  const auto img = to_tensor<float>(ramp(375, 500));
  const auto out = center_crop(img, 224);
  ASSERT_EQ(out.shape(), (Shape{3, 224, 224}));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 224; y += 37)
      for (std::size_t x = 0; x < 224; x += 29) ASSERT_EQ(out.at({c, y, x}), img.at({c, y + 75, x + 138}));
  const auto same = to_tensor<float>(ramp(224, 224));
  EXPECT_EQ(center_crop(same, 224), same);
}

TEST(Crop, SmallImagesAreUpscaledFirst) {
  const auto img = to_tensor<double>(ramp(20, 40));
  const auto out = center_crop(img, 32);
  EXPECT_EQ(out.shape(), (Shape{3, 32, 32}));
  // Short side 20 -> 32, long side 40 -> 64, then the central 32 columns.
  const auto resized = resize_bilinear(img, 32, 64);
  EXPECT_EQ(out.at({1, 5, 0}), resized.at({1, 5, 16}));
}

TEST(Resize, ConstantStaysConstantAndIdentityIsExact) {
  const Tensor<double> flat({3, 4, 6}, 77.0);
  const auto resized = resize_bilinear(flat, 9, 5);
  for (double v : resized.values()) ASSERT_DOUBLE_EQ(v, 77.0);
  const auto img = to_tensor<double>(ramp(4, 6));
  EXPECT_EQ(resize_bilinear(img, 4, 6), img);
}

TEST(Normalize, Examples) {
  Tensor<double> px({3, 1, 1}, 255.0);
  PreprocessConfig unit;
  unit.channel_means = {0, 0, 0};
  unit.channel_stds = {1, 1, 1};
  EXPECT_DOUBLE_EQ(normalize(px, unit)[0], 1.0);
  PreprocessConfig half;
  half.channel_means = {0.5, 0.5, 0.5};
  half.channel_stds = {0.5, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(normalize(Tensor<double>({3, 1, 1}, 127.5), half)[1], 0.0);
  const auto d = normalize(px, PreprocessConfig{});
  EXPECT_NEAR(d[0], (1.0 - 0.485) / 0.229, 1e-12);
  EXPECT_NEAR(d[0], 2.2489, 1e-4);
  const auto back = denormalize(d, PreprocessConfig{});
  EXPECT_NEAR(back[2], 255.0, 1e-9);
  PreprocessConfig bad;
  bad.channel_stds[1] = 0.0;
  EXPECT_THROW(validate(bad), ConfigError);
}

TEST(Batches, SizesAndDeterminism) {
  const auto plan = make_batches(130, 64, 7, 3);
  ASSERT_EQ(plan.size(), 3u);
  EXPECT_EQ(plan[0].indices.size(), 64u);
  EXPECT_EQ(plan[2].indices.size(), 2u);
  const auto again = make_batches(130, 64, 7, 3);
  for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(plan[b].indices, again[b].indices);
  EXPECT_NE(make_batches(130, 64, 7, 4)[0].indices, plan[0].indices);

  std::set<std::size_t> seen;
  for (const auto& b : plan) seen.insert(b.indices.begin(), b.indices.end());
  EXPECT_EQ(seen.size(), 130u);

  const auto full = make_batches(6348, 64, 1, 1);
  EXPECT_EQ(full.size(), 100u);
  EXPECT_EQ(full.back().indices.size(), 12u);

  const auto seq = sequential_batches(5, 2);
  EXPECT_EQ(seq[2].indices, (std::vector<std::size_t>{4}));
  EXPECT_THROW(make_batches(10, 0, 1, 1), ConfigError);
}

TEST(Dataset, LoadsFromDiskInManifestOrder) {
  const auto dir = oracle::scratch_dir("dataset");
  write_image(dir / "a.ppm", ramp(40, 36));
  write_image(dir / "b.raw", ramp(32, 32));
  const auto m = load_manifest("path,split,class_name\na.ppm,train,Grated\nb.raw,train,Diced\n");
  PreprocessConfig cfg;
  cfg.target_size = 32;
  const auto ds = load_dataset<float>(m.entries, dir, cfg);
  EXPECT_EQ(ds.images.shape(), (Shape{2, 3, 32, 32}));
  EXPECT_EQ(ds.labels, (std::vector<std::size_t>{6, 1}));
  const auto batch = gather_batch(ds, BatchPlan{{1}});
  EXPECT_EQ(batch.labels, (std::vector<std::size_t>{1}));
  const auto direct = preprocess<float>(ramp(32, 32), cfg);
  EXPECT_EQ(batch.images.values(), direct.values());
  const auto missing = load_manifest("path,split,class_name\nnope.ppm,train,Grated\n");
  EXPECT_THROW(load_dataset<float>(missing.entries, dir, cfg), IoError);
  std::filesystem::remove_all(dir);
}
