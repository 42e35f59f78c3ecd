#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gatenet/dataset.hpp"
#include "gatenet/image_io.hpp"
#include "gatenet/net.hpp"
#include "gatenet/weights_io.hpp"
#include "test_helpers.hpp"

using namespace gatenet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("gatenet_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& path, const unsigned char* data, size_t count) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count));
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// 2x2 RGB PNG: (255,0,0) (0,255,0) / (0,0,255) (255,255,255).
const unsigned char kRgbPng[] = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44,
    0x52, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02, 0x08, 0x02, 0x00, 0x00, 0x00, 0xfd,
    0xd4, 0x9a, 0x73, 0x00, 0x00, 0x00, 0x12, 0x49, 0x44, 0x41, 0x54, 0x78, 0xda, 0x63, 0xf8,
    0xcf, 0xc0, 0xc0, 0x00, 0xc2, 0x0c, 0xff, 0x81, 0x00, 0x00, 0x1f, 0xee, 0x05, 0xfb, 0xf1,
    0xab, 0xba, 0x77, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};

// 2x2 palette PNG: palette {black, white, (128,64,32)}, indices 0 1 / 2 1.
const unsigned char kPalettePng[] = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44,
    0x52, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02, 0x08, 0x03, 0x00, 0x00, 0x00, 0x45,
    0x68, 0xfd, 0x16, 0x00, 0x00, 0x00, 0x09, 0x50, 0x4c, 0x54, 0x45, 0x00, 0x00, 0x00, 0xff,
    0xff, 0xff, 0x80, 0x40, 0x20, 0x59, 0xe4, 0xf7, 0x3c, 0x00, 0x00, 0x00, 0x0e, 0x49, 0x44,
    0x41, 0x54, 0x78, 0xda, 0x63, 0x60, 0x60, 0x64, 0x60, 0x62, 0x04, 0x00, 0x00, 0x0f, 0x00,
    0x05, 0x36, 0xb4, 0x2a, 0x39, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42,
    0x60, 0x82};

// 3x2 16-bit gray PNG: 0, 65535, 32768 / 1000, 2000, 3000 (strip to 8 bits).
const unsigned char kGray16Png[] = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44,
    0x52, 0x00, 0x00, 0x00, 0x03, 0x00, 0x00, 0x00, 0x02, 0x10, 0x00, 0x00, 0x00, 0x00, 0xe8,
    0x8f, 0xe5, 0x85, 0x00, 0x00, 0x00, 0x16, 0x49, 0x44, 0x41, 0x54, 0x78, 0xda, 0x63, 0x60,
    0x60, 0xf8, 0xff, 0xbf, 0x81, 0x81, 0x81, 0xf9, 0x05, 0xfb, 0x05, 0xee, 0x1d, 0x00, 0x21,
    0x6d, 0x05, 0x04, 0xd5, 0x3b, 0x47, 0x57, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44,
    0xae, 0x42, 0x60, 0x82};

}  // namespace

TEST_CASE("PGM P2 parsing with comments and normalization") {
  const fs::path dir = temp_dir("pgm_p2");
  const fs::path path = dir / "mask.pgm";
  {
    std::ofstream out(path);
    out << "P2\n# a comment\n2 2\n255\n0 255\n255 0\n";
  }
  const GrayImage img = load_mask(path.string());
  CHECK(img.h == 2);
  CHECK(img.w == 2);
  CHECK(img.at(0, 0) == 0.0);
  CHECK(img.at(0, 1) == 1.0);
  CHECK(img.at(1, 0) == 1.0);
  CHECK(img.at(1, 1) == 0.0);
}

TEST_CASE("PGM maxval other than 8-bit is rejected with the path") {
  const fs::path dir = temp_dir("pgm_maxval");
  const fs::path path = dir / "wide.pgm";
  {
    std::ofstream out(path);
    out << "P2\n1 1\n65535\n1234\n";
  }
  CHECK_THROWS_WITH_AS(load_mask(path.string()), doctest::Contains("wide.pgm"),
                       std::runtime_error);
}

TEST_CASE("missing file errors carry the path") {
  CHECK_THROWS_WITH_AS(load_mask("/nonexistent/foo.png"), doctest::Contains("/nonexistent/foo.png"),
                       std::runtime_error);
}

TEST_CASE("save/load round trip stays within the 8-bit quantization bound") {
  std::mt19937_64 rng(1);
  const fs::path dir = temp_dir("roundtrip");
  for (const char* name : {"m.png", "m.pgm"}) {
    GrayImage img(9, 7);
    for (long long i = 0; i < img.size(); ++i) {
      img.v[static_cast<size_t>(i)] = testutil::uniform(rng, 0.0, 1.0);
    }
    const fs::path path = dir / name;
    save_mask(img, path.string());
    const GrayImage back = load_mask(path.string());
    REQUIRE(back.h == img.h);
    REQUIRE(back.w == img.w);
    for (long long i = 0; i < img.size(); ++i) {
      CHECK(std::fabs(back.v[static_cast<size_t>(i)] - img.v[static_cast<size_t>(i)]) <=
            1.0 / 510.0 + 1e-12);
    }
  }
  CHECK_THROWS_AS(save_mask(GrayImage(2, 2), (dir / "m.bmp").string()), std::runtime_error);
}

TEST_CASE("color and palette PNGs load via luma; 16-bit strips to 8") {
  const fs::path dir = temp_dir("png_kinds");
  const fs::path rgb = dir / "rgb.png";
  write_bytes(rgb, kRgbPng, sizeof(kRgbPng));
  const GrayImage g = load_mask(rgb.string());
  REQUIRE(g.h == 2);
  REQUIRE(g.w == 2);
  CHECK(g.at(0, 0) == doctest::Approx(0.299).epsilon(1e-12));
  CHECK(g.at(0, 1) == doctest::Approx(0.587).epsilon(1e-12));
  CHECK(g.at(1, 0) == doctest::Approx(0.114).epsilon(1e-12));
  CHECK(g.at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));

  const LoadedImage color = load_image(rgb.string());
  CHECK(color.channels == 3);
  CHECK(color.v[0] == doctest::Approx(1.0));  // R plane first

  const fs::path pal = dir / "pal.png";
  write_bytes(pal, kPalettePng, sizeof(kPalettePng));
  const GrayImage p = load_mask(pal.string());
  CHECK(p.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  const double luma = (0.299 * 128 + 0.587 * 64 + 0.114 * 32) / 255.0;
  CHECK(p.at(1, 0) == doctest::Approx(luma).epsilon(1e-12));

  const fs::path g16 = dir / "g16.png";
  write_bytes(g16, kGray16Png, sizeof(kGray16Png));
  const GrayImage wide = load_mask(g16.string());
  REQUIRE(wide.h == 2);
  REQUIRE(wide.w == 3);
  CHECK(wide.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(wide.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(wide.at(0, 2) == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("weight container: round trip, empty container, corruption") {
  const ModelConfig cfg = preset_config("m5", 64, 64);
  const ModelParams params = init_params(cfg, 7);
  const fs::path dir = temp_dir("weights");
  const fs::path a = dir / "a.gnwt";
  const fs::path b = dir / "b.gnwt";
  save_weights(pack_model(cfg, params), a.string());
  const WeightContainer loaded = load_weights(a.string());
  save_weights(loaded, b.string());
  CHECK(read_bytes(a) == read_bytes(b));

  const auto [cfg2, params2] = unpack_model(loaded);
  CHECK(config_to_json(cfg2) == config_to_json(cfg));
  for (const auto& [name, tensor] : params.tensors) {
    CHECK(params2.at(name).bit_equal(tensor));
  }

  // Empty container is valid and loads to zero entries.
  WeightContainer empty;
  std::stringstream buf;
  save_weights(empty, buf);
  CHECK(load_weights(buf).entries.empty());

  // Corrupted magic is rejected.
  std::string bytes = read_bytes(a);
  bytes[0] = 'X';
  std::stringstream bad(bytes);
  CHECK_THROWS_WITH_AS(load_weights(bad), doctest::Contains("magic"), std::runtime_error);

  // Truncated payload is rejected.
  std::stringstream cut(read_bytes(a).substr(0, 64));
  CHECK_THROWS_WITH_AS(load_weights(cut), doctest::Contains("truncated"), std::runtime_error);

  // Unknown dtype is rejected.
  WeightContainer odd;
  WeightEntry e;
  e.name = "x";
  e.dtype = 9;
  odd.entries.push_back(e);
  std::stringstream out;
  CHECK_THROWS_WITH_AS(save_weights(odd, out), doctest::Contains("dtype"), std::runtime_error);
}

TEST_CASE("config JSON survives a round trip") {
  for (const char* name : {"m1", "m2", "m3", "m4", "m5", "two-stream"}) {
    const ModelConfig cfg = preset_config(name, 64, 96);
    const ModelConfig back = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
    CHECK(config_preset_name(back) == name);
  }
}

TEST_CASE("pair_dataset: stem matching, ordering, warnings") {
  const fs::path dir = temp_dir("pairing");
  const fs::path pred = dir / "pred";
  const fs::path gt = dir / "gt";
  fs::create_directories(pred);
  fs::create_directories(gt);
  const GrayImage img(4, 4, 0.5);
  save_mask(img, (pred / "b.png").string());
  save_mask(img, (pred / "a.png").string());
  save_mask(img, (pred / "only_pred.png").string());
  save_mask(img, (gt / "a.pgm").string());  // cross-extension stem match
  save_mask(img, (gt / "b.png").string());
  save_mask(img, (gt / "only_gt.png").string());
  {
    std::ofstream junk(dir / "pred" / "notes.txt");
    junk << "ignored\n";
  }

  const DatasetPairing pairing = pair_dataset(pred.string(), gt.string());
  REQUIRE(pairing.pairs.size() == 2);
  CHECK(pairing.stems[0] == "a");
  CHECK(pairing.stems[1] == "b");
  CHECK(pairing.pairs[0].second == (gt / "a.pgm").string());
  REQUIRE(pairing.unmatched_pred.size() == 1);
  CHECK(pairing.unmatched_pred[0] == "only_pred");
  REQUIRE(pairing.unmatched_gt.size() == 1);
  CHECK(pairing.unmatched_gt[0] == "only_gt");

  const fs::path empty = dir / "empty";
  fs::create_directories(empty);
  CHECK_THROWS_AS(pair_dataset(pred.string(), empty.string()), std::runtime_error);

  save_mask(img, (pred / "a.pgm").string());  // duplicate stem
  CHECK_THROWS_WITH_AS(pair_dataset(pred.string(), gt.string()), doctest::Contains("duplicate"),
                       std::runtime_error);
}
