#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "vfgs/data/split.hpp"
#include "vfgs/data/synthetic.hpp"

using namespace vfgs;
using namespace vfgs::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("vfgs_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_rgb(const fs::path& p, int h, int w, cv::Vec3b bgr) {
  cv::Mat m(h, w, CV_8UC3, cv::Scalar(bgr[0], bgr[1], bgr[2]));
  ASSERT_TRUE(cv::imwrite(p.string(), m));
}

void write_gray(const fs::path& p, int h, int w, std::uint8_t v) {
  cv::Mat m(h, w, CV_8UC1, cv::Scalar(v));
  ASSERT_TRUE(cv::imwrite(p.string(), m));
}

// Builds <root>/<ds>/{images,masks} with tiny constant rasters.
void make_dataset(const fs::path& root, const std::string& ds, const std::vector<std::string>& image_stems,
                  const std::vector<std::string>& mask_stems) {
  fs::create_directories(root / ds / "images");
  fs::create_directories(root / ds / "masks");
  for (const auto& s : image_stems) write_rgb(root / ds / "images" / (s + ".png"), 4, 4, {0, 100, 0});
  for (const auto& s : mask_stems) write_gray(root / ds / "masks" / (s + ".png"), 4, 4, 255);
}

ImageSample random_sample(Index h, Index w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  ImageSample s;
  s.image = ImagePlane(h, w);
  s.mask = BinaryMask(h, w);
  for (auto& v : s.image.data) v = u(rng);
  for (auto& v : s.mask.data) v = u(rng) < 0.3f;
  return s;
}

}  // namespace

TEST(BinarizeMask, ThresholdRule) {
  Plane<std::uint8_t> raw(1, 4);
  raw.data = {0, 127, 128, 255};
  EXPECT_EQ(binarize_mask(raw).data, (std::vector<std::uint8_t>{0, 0, 1, 1}));
}

TEST(BinarizeMask, ZeroAndSaturated) {
  EXPECT_EQ(binarize_mask(Plane<std::uint8_t>(3, 5, 0)), BinaryMask(3, 5, 0));
  EXPECT_EQ(binarize_mask(Plane<std::uint8_t>(3, 5, 255)), BinaryMask(3, 5, 1));
}

TEST(LoadSample, GreenPlaneOfRgb) {
  const auto root = temp_dir("green");
  fs::create_directories(root / "DRIVE" / "images");
  fs::create_directories(root / "DRIVE" / "masks");
  write_rgb(root / "DRIVE" / "images" / "21_training.png", 6, 5, {30, 200, 10});  // B, G, R
  write_gray(root / "DRIVE" / "masks" / "21_manual1.png", 6, 5, 255);
  const auto s = load_sample((root / "DRIVE" / "images" / "21_training.png").string(), DatasetId::DRIVE);
  EXPECT_EQ(s.image.height, 6);
  EXPECT_EQ(s.image.width, 5);
  for (float v : s.image.data) EXPECT_FLOAT_EQ(v, 200.f / 255.f);
  for (auto v : s.mask.data) EXPECT_EQ(v, 1);
  s.validate();
  fs::remove_all(root);
}

TEST(LoadSample, GrayscaleSolePlaneAndSixteenBit) {
  const auto root = temp_dir("gray16");
  fs::create_directories(root / "STARE" / "images");
  fs::create_directories(root / "STARE" / "masks");
  cv::Mat m(3, 3, CV_16UC1, cv::Scalar(65535 / 5));
  ASSERT_TRUE(cv::imwrite((root / "STARE" / "images" / "im0001.png").string(), m));
  write_gray(root / "STARE" / "masks" / "im0001.ah.png", 3, 3, 0);
  const auto s = load_sample((root / "STARE" / "images" / "im0001.png").string(), DatasetId::STARE);
  for (float v : s.image.data) EXPECT_NEAR(v, 0.2f, 1e-6);
  for (auto v : s.mask.data) EXPECT_EQ(v, 0);
  fs::remove_all(root);
}

TEST(LoadSample, DriveDimensions) {
  const auto root = temp_dir("drivedims");
  SyntheticConfig cfg;  // DRIVE geometry
  write_synthetic_drive(root, 1, 0, cfg);
  const auto s = load_sample((root / "DRIVE" / "images" / "21_training.png").string(), DatasetId::DRIVE);
  EXPECT_EQ(s.image.height, 584);
  EXPECT_EQ(s.image.width, 565);
  s.validate();
  fs::remove_all(root);
}

TEST(LoadSample, HrfDimensions) {
  const auto root = temp_dir("hrfdims");
  fs::create_directories(root / "HRF" / "images");
  fs::create_directories(root / "HRF" / "masks");
  write_rgb(root / "HRF" / "images" / "01_h.jpg", 2336, 3504, {20, 90, 160});
  write_gray(root / "HRF" / "masks" / "01_h.tif", 2336, 3504, 0);
  const auto s = load_sample((root / "HRF" / "images" / "01_h.jpg").string(), DatasetId::HRF);
  EXPECT_EQ(s.image.height, 2336);
  EXPECT_EQ(s.image.width, 3504);
  fs::remove_all(root);
}

TEST(LoadSample, MissingFileAndMissingMask) {
  EXPECT_THROW(load_sample("/nonexistent/DRIVE/images/01_test.png", DatasetId::DRIVE), DataError);
  const auto root = temp_dir("nomask");
  fs::create_directories(root / "CHASE_DB1" / "images");
  write_rgb(root / "CHASE_DB1" / "images" / "Image_01L.png", 4, 4, {0, 0, 0});
  try {
    load_sample((root / "CHASE_DB1" / "images" / "Image_01L.png").string(), DatasetId::CHASE_DB1);
    FAIL() << "expected a pairing error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("Image_01L"), std::string::npos);
  }
  fs::remove_all(root);
}

TEST(LoadSample, CorruptFile) {
  const auto root = temp_dir("corrupt");
  fs::create_directories(root / "DRIVE" / "images");
  std::ofstream(root / "DRIVE" / "images" / "01_test.png") << "not an image";
  EXPECT_THROW(read_raster((root / "DRIVE" / "images" / "01_test.png").string()), DataError);
  fs::remove_all(root);
}

TEST(LoadSample, NativeMaskNames) {
  const auto root = temp_dir("native");
  make_dataset(root, "CHASE_DB1", {"Image_01L"}, {"Image_01L_1stHO"});
  make_dataset(root, "STARE", {"im0001"}, {"im0001.ah"});
  make_dataset(root, "HRF", {"01_dr"}, {"01_dr"});
  EXPECT_NO_THROW(load_sample((root / "CHASE_DB1" / "images" / "Image_01L.png").string(), DatasetId::CHASE_DB1));
  EXPECT_NO_THROW(load_sample((root / "STARE" / "images" / "im0001.png").string(), DatasetId::STARE));
  EXPECT_NO_THROW(load_sample((root / "HRF" / "images" / "01_dr.png").string(), DatasetId::HRF));
  fs::remove_all(root);
}

// Pixel pattern written by tests/data/make_gif_fixtures.py.
static int fixture_binary(Index r, Index c) { return (r * 7 + c * 3) % 5 == 0 ? 255 : 0; }
static int fixture_grey(Index r, Index c) { return static_cast<int>((r * 17 + c * 5) % 256); }

TEST(Gif, DecodesPaletteImage) {
  const auto f = read_gif(std::string(VFGS_TEST_DATA_DIR) + "/mask_small.gif");
  ASSERT_EQ(f.width, 13);
  ASSERT_EQ(f.height, 7);
  for (Index r = 0; r < 7; ++r)
    for (Index c = 0; c < 13; ++c)
      for (int k = 0; k < 3; ++k) EXPECT_EQ(f.rgb[static_cast<std::size_t>((r * 13 + c) * 3 + k)], fixture_binary(r, c));
}

TEST(Gif, DecodesInterlaced) {
  const auto f = read_gif(std::string(VFGS_TEST_DATA_DIR) + "/mask_interlaced.gif");
  ASSERT_EQ(f.width, 40);
  ASSERT_EQ(f.height, 37);
  for (Index r = 0; r < 37; ++r)
    for (Index c = 0; c < 40; ++c) ASSERT_EQ(f.rgb[static_cast<std::size_t>((r * 40 + c) * 3)], fixture_binary(r, c));
}

TEST(Gif, DecodesFullPaletteWithCodeGrowth) {
  const auto f = read_gif(std::string(VFGS_TEST_DATA_DIR) + "/grey_large.gif");
  ASSERT_EQ(f.width, 120);
  ASSERT_EQ(f.height, 90);
  for (Index r = 0; r < 90; ++r)
    for (Index c = 0; c < 120; ++c) ASSERT_EQ(f.rgb[static_cast<std::size_t>((r * 120 + c) * 3 + 1)], fixture_grey(r, c));
}

TEST(Gif, MaskLoadsThroughRaster) {
  const auto r = read_raster(std::string(VFGS_TEST_DATA_DIR) + "/mask_small.gif");
  const auto m = binarize_mask(raw_mask(r));
  for (Index y = 0; y < 7; ++y)
    for (Index x = 0; x < 13; ++x) EXPECT_EQ(m.at(y, x), fixture_binary(y, x) ? 1 : 0);
}

TEST(Gif, RejectsGarbage) {
  EXPECT_THROW(decode_gif({'G', 'I', 'F', '8', '9', 'a', 1}), DataError);
  EXPECT_THROW(decode_gif({'P', 'N', 'G', '0', '0', '0', 0, 0, 0, 0, 0, 0, 0}), DataError);
}

TEST(Clahe, ConstantImageStaysConstant) {
  ImagePlane img(32, 32, 0.3f);
  const auto out = apply_clahe(img, 2.0, {4, 4});
  for (float v : out.data) EXPECT_FLOAT_EQ(v, out.data[0]);
}

TEST(Clahe, OutputRange) {
  const auto s = random_sample(40, 50, 3);
  const auto out = apply_clahe(s.image, 2.0, {8, 8});
  for (float v : out.data) {
    EXPECT_GE(v, 0.f);
    EXPECT_LE(v, 1.f);
  }
}

TEST(Clahe, CheckerboardByHand) {
  // 8x8 board of 0.4 / 0.6 (bins 102 / 153), one tile, clip 2.0.
  ImagePlane img(8, 8);
  for (Index y = 0; y < 8; ++y)
    for (Index x = 0; x < 8; ++x) img.at(y, x) = (x + y) % 2 ? 0.6f : 0.4f;
  const auto out = apply_clahe(img, 2.0, {1, 1});
  // Clip level 2 * 64 / 256 = 0.5; each level loses 31.5 counts, 63 total,
  // spread as 63/256 per bin. LUT(b) = (clipped counts <= b + (b+1)*share) / 64.
  const double share = 63.0 / 256.0;
  const double lo = (0.5 + 103 * share) / 64, hi = (1.0 + 154 * share) / 64;
  for (Index y = 0; y < 8; ++y)
    for (Index x = 0; x < 8; ++x) EXPECT_NEAR(out.at(y, x), (x + y) % 2 ? hi : lo, 1e-6);
  EXPECT_GE(hi - lo, 0.2 - 1e-9);
}

TEST(Clahe, UnclippedIsHistogramEqualization) {
  ImagePlane img(8, 8);
  for (Index y = 0; y < 8; ++y)
    for (Index x = 0; x < 8; ++x) img.at(y, x) = (x + y) % 2 ? 0.6f : 0.4f;
  const auto out = apply_clahe(img, 1000.0, {1, 1});
  for (Index y = 0; y < 8; ++y)
    for (Index x = 0; x < 8; ++x) EXPECT_NEAR(out.at(y, x), (x + y) % 2 ? 1.0 : 0.5, 1e-6);
}

TEST(Clahe, TilesLargerThanImage) {
  EXPECT_THROW(apply_clahe(ImagePlane(4, 4), 2.0, {8, 8}), ConfigError);
}

TEST(ResizePair, IdentityWhenShapeMatches) {
  const auto s = random_sample(16, 12, 1);
  const auto r = resize_pair(s, {16, 12});
  EXPECT_EQ(r.image, s.image);
  EXPECT_EQ(r.mask, s.mask);
}

TEST(ResizePair, DriveToNetworkSize) {
  const auto s = random_sample(584, 565, 2);
  const auto r = resize_pair(s, {512, 512});
  EXPECT_EQ(r.image.height, 512);
  EXPECT_EQ(r.image.width, 512);
  EXPECT_EQ(r.mask.height, 512);
  for (auto v : r.mask.data) EXPECT_LE(v, 1);
}

TEST(ResizePair, NearestReplicatesBlocks) {
  ImageSample s;
  s.image = ImagePlane(2, 2, 0.5f);
  s.mask = from_rows({{1, 0}, {0, 1}});
  const auto r = resize_pair(s, {4, 4});
  EXPECT_EQ(r.mask, from_rows({{1, 1, 0, 0}, {1, 1, 0, 0}, {0, 0, 1, 1}, {0, 0, 1, 1}}));
}

TEST(ResizePair, BilinearMatchesHalfPixelOracle) {
  ImagePlane p(3, 4);
  for (Index i = 0; i < 12; ++i) p.data[static_cast<std::size_t>(i)] = static_cast<float>(i) / 11.f;
  const auto r = resize_bilinear(p, 5, 7);
  auto sample = [&](double y, double x) {
    y = std::clamp(y, 0.0, 2.0);
    x = std::clamp(x, 0.0, 3.0);
    const auto y0 = static_cast<Index>(std::floor(y)), x0 = static_cast<Index>(std::floor(x));
    const Index y1 = std::min<Index>(y0 + 1, 2), x1 = std::min<Index>(x0 + 1, 3);
    const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
    return (1 - fy) * ((1 - fx) * p.at(y0, x0) + fx * p.at(y0, x1)) + fy * ((1 - fx) * p.at(y1, x0) + fx * p.at(y1, x1));
  };
  for (Index y = 0; y < 5; ++y)
    for (Index x = 0; x < 7; ++x)
      EXPECT_NEAR(r.at(y, x), sample((static_cast<double>(y) + 0.5) * 3 / 5 - 0.5, (static_cast<double>(x) + 0.5) * 4 / 7 - 0.5), 1e-6);
}

TEST(Augment, IdentityConfigEqualsResize) {
  const auto s = random_sample(40, 36, 5);
  auto cfg = AugmentConfig::identity();
  cfg.target_size = {32, 32};
  Rng rng(9);
  const auto a = augment(s, cfg, rng);
  const auto b = resize_pair(s, {32, 32});
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
}

TEST(Augment, DeterministicForSeed) {
  const auto s = random_sample(48, 48, 6);
  AugmentConfig cfg;
  cfg.p_clahe = 1.0;
  cfg.target_size = {32, 32};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto r1 = sample_rng(seed, 3, 7), r2 = sample_rng(seed, 3, 7);
    const auto a = augment(s, cfg, r1), b = augment(s, cfg, r2);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.mask, b.mask);
  }
}

TEST(Augment, OutputsRespectInvariants) {
  const auto s = random_sample(50, 44, 7);
  AugmentConfig cfg;
  cfg.p_clahe = 0.5;
  cfg.target_size = {64, 48};
  for (std::uint64_t e = 0; e < 20; ++e) {
    auto rng = sample_rng(1, 0, e);
    const auto a = augment(s, cfg, rng);
    EXPECT_EQ(a.image.height, 64);
    EXPECT_EQ(a.image.width, 48);
    EXPECT_TRUE(a.image.same_shape(a.mask));
    a.validate();
  }
}

TEST(Augment, FlipsOnlyMoveMaskAndImageTogether) {
  auto s = random_sample(20, 20, 8);
  s.image = ImagePlane(20, 20);
  for (std::size_t i = 0; i < s.mask.data.size(); ++i) s.image.data[i] = s.mask.data[i];
  AugmentConfig cfg = AugmentConfig::identity();
  cfg.p_hflip = cfg.p_vflip = 1.0;
  cfg.target_size = {20, 20};
  Rng rng(1);
  const auto a = augment(s, cfg, rng);
  for (std::size_t i = 0; i < a.mask.data.size(); ++i) EXPECT_EQ(a.image.data[i], static_cast<float>(a.mask.data[i]));
}

TEST(Augment, FlipTwiceRestores) {
  const auto s = random_sample(17, 23, 9);
  EXPECT_EQ(flip_horizontal(flip_horizontal(s.image)), s.image);
  EXPECT_EQ(flip_vertical(flip_vertical(s.image)), s.image);
  EXPECT_EQ(flip_horizontal(flip_horizontal(s.mask)), s.mask);
}

TEST(Augment, RotationFillsWithZero) {
  ImagePlane ones(21, 21, 1.f);
  const auto r = rotate_bilinear(ones, 45.0);
  EXPECT_EQ(r.at(0, 0), 0.f);
  EXPECT_FLOAT_EQ(r.at(10, 10), 1.f);
  BinaryMask m(21, 21, 1);
  const auto rm = rotate_nearest(m, 45.0);
  EXPECT_EQ(rm.at(0, 0), 0);
  EXPECT_EQ(rm.at(10, 10), 1);
}

TEST(Augment, RejectsBadConfig) {
  AugmentConfig c;
  c.p_hflip = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AugmentConfig{};
  c.gamma_range = {0.0, 1.0};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(MakeSplit, DriveOfficial) {
  const auto root = temp_dir("drivesplit");
  std::vector<std::string> imgs, masks;
  for (int i = 1; i <= 40; ++i) {
    char b[32];
    std::snprintf(b, sizeof b, "%02d_%s", i, i > 20 ? "training" : "test");
    imgs.push_back(b);
    std::snprintf(b, sizeof b, "%02d_manual1", i);
    masks.push_back(b);
  }
  make_dataset(root, "DRIVE", imgs, masks);
  const auto s = make_split(DatasetId::DRIVE, root);
  EXPECT_EQ(s.train_ids.size(), 20u);
  EXPECT_EQ(s.test_ids.size(), 20u);
  EXPECT_TRUE(s.val_ids.empty());
  for (const auto& id : s.train_ids) EXPECT_NE(id.find("training"), std::string::npos);
  const auto v = with_validation(s, 0.1);
  EXPECT_EQ(v.train_ids.size(), 18u);
  EXPECT_EQ(v.val_ids, (std::vector<std::string>{"39_training", "40_training"}));
  EXPECT_NO_THROW(check_disjoint(v));
  fs::remove_all(root);
}

TEST(MakeSplit, ChaseDefault) {
  const auto root = temp_dir("chasesplit");
  std::vector<std::string> imgs, masks;
  for (int i = 1; i <= 14; ++i)
    for (char eye : {'L', 'R'}) {
      char b[32];
      std::snprintf(b, sizeof b, "Image_%02d%c", i, eye);
      imgs.push_back(b);
      masks.push_back(std::string(b) + "_1stHO");
    }
  make_dataset(root, "CHASE_DB1", imgs, masks);
  const auto s = make_split(DatasetId::CHASE_DB1, root);
  EXPECT_EQ(s.train_ids.size(), 20u);
  EXPECT_EQ(s.test_ids.size(), 8u);
  EXPECT_EQ(s.test_ids.front(), "Image_11L");
  fs::remove_all(root);
}

TEST(MakeSplit, StareAndHrfDefaults) {
  const auto root = temp_dir("starehrf");
  std::vector<std::string> stare;
  for (int i = 1; i <= 20; ++i) {
    char b[16];
    std::snprintf(b, sizeof b, "im%04d", i);
    stare.push_back(b);
  }
  make_dataset(root, "STARE", stare, stare);
  const auto s = make_split(DatasetId::STARE, root);
  EXPECT_EQ(s.train_ids.size(), 16u);
  EXPECT_EQ(s.test_ids.size(), 4u);

  std::vector<std::string> hrf;
  for (int i = 1; i <= 15; ++i)
    for (const char* cond : {"h", "dr", "g"}) {
      char b[16];
      std::snprintf(b, sizeof b, "%02d_%s", i, cond);
      hrf.push_back(b);
    }
  make_dataset(root, "HRF", hrf, hrf);
  const auto h = make_split(DatasetId::HRF, root);
  EXPECT_EQ(h.train_ids.size(), 30u);
  EXPECT_EQ(h.test_ids.size(), 15u);
  for (const char* cond : {"_h", "_dr", "_g"}) {
    int n = 0;
    for (const auto& id : h.test_ids) n += id.ends_with(cond);
    EXPECT_EQ(n, 5) << cond;
  }
  fs::remove_all(root);
}

TEST(MakeSplit, ManifestOverridesDefaults) {
  const auto root = temp_dir("manifest");
  make_dataset(root, "STARE", {"a", "b", "c", "d"}, {"a", "b", "c", "d"});
  write_manifest(root / "STARE" / "splits" / "train.txt", {"a", "b"});
  write_manifest(root / "STARE" / "splits" / "val.txt", {"c"});
  write_manifest(root / "STARE" / "splits" / "test.txt", {"d"});
  const auto s = make_split(DatasetId::STARE, root);
  EXPECT_EQ(s.train_ids, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(s.val_ids, (std::vector<std::string>{"c"}));
  EXPECT_EQ(s.test_ids, (std::vector<std::string>{"d"}));
  write_manifest(root / "STARE" / "splits" / "test.txt", {"a"});
  EXPECT_THROW(make_split(DatasetId::STARE, root), DataError);
  write_manifest(root / "STARE" / "splits" / "test.txt", {"zzz"});
  EXPECT_THROW(make_split(DatasetId::STARE, root), DataError);
  fs::remove_all(root);
}

TEST(MakeSplit, UnknownLayoutListsExpectedStructure) {
  const auto root = temp_dir("nolayout");
  try {
    make_split(DatasetId::HRF, root);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("images/"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("splits/"), std::string::npos);
  }
  fs::remove_all(root);
}

TEST(Synthetic, DeterministicAndBinary) {
  SyntheticConfig c;
  c.height = 96;
  c.width = 80;
  c.seed = 4;
  const auto a = make_synthetic_fundus(c), b = make_synthetic_fundus(c);
  EXPECT_EQ(a.rgb.data, b.rgb.data);
  EXPECT_EQ(a.vessels, b.vessels);
  std::size_t fg = 0;
  for (auto v : a.vessels.data) {
    EXPECT_LE(v, 1);
    fg += v;
  }
  EXPECT_GT(fg, 0u);
  EXPECT_LT(fg, a.vessels.data.size() / 2);
}
