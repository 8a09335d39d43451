#include <doctest.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "ctview/cache.hpp"
#include "ctview/case.hpp"
#include "ctview/mil/model.hpp"
#include "ctview/nifti.hpp"
#include "ctview/pipeline.hpp"
#include "support.hpp"

using namespace ctview;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = CTVIEW_FIXTURES;
using testing::handmade;

const ScalarVolume& scalar_of(const nifti::Volume& v) { return std::get<ScalarVolume>(v); }

nifti::ErrorKind error_kind(std::span<const std::uint8_t> bytes) {
  try {
    nifti::parse(bytes);
  } catch (const nifti::NiftiError& e) {
    return e.kind();
  }
  FAIL("parse accepted malformed bytes");
  return nifti::ErrorKind::Io;
}

ScalarVolume phantom3() {
  Geometry g;
  g.dims = {3, 3, 3};
  g.spacing = {1.5, 1.5, 3.0};
  g.origin = {-2.0, 4.0, 8.0};
  std::vector<float> v;
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) v.push_back((x + 1) * 100.0f - z * 37.5f + y * 0.25f);
  return ScalarVolume(g, v);
}

}  // namespace

TEST_CASE("hand-laid int16 fixture parses to the known volume") {
  const auto bytes = read_binary_file(kFixtures / "int16_le.nii");
  const auto vol = scalar_of(nifti::parse(bytes));
  CHECK(vol.dims() == Dims{2, 2, 2});
  CHECK(vol.spacing() == Vec3{0.5, 0.75, 2.0});
  CHECK(vol.origin() == Vec3{-10.0, 5.0, 30.0});
  const std::vector<float> expect{-1000, -850, -1, 0, 1, 40, 1200, 3071};
  CHECK(std::vector<float>(vol.data().begin(), vol.data().end()) == expect);
}

TEST_CASE("byte-swapped fixture parses identically") {
  const auto le = nifti::parse(read_binary_file(kFixtures / "int16_le.nii"));
  const auto be_bytes = read_binary_file(kFixtures / "int16_be.nii");
  CHECK(nifti::parse_header(be_bytes).big_endian);
  CHECK(scalar_of(nifti::parse(be_bytes)) == scalar_of(le));
}

TEST_CASE("round trip is bit-exact for every datatype") {
  const Dims d{3, 2, 2};
  SUBCASE("uint8 labels") {
    const std::vector<std::uint8_t> v{0, 1, 2, 2, 1, 0, 0, 0, 1, 2, 1, 0};
    const auto parsed = nifti::parse(handmade<std::uint8_t>(nifti::kUint8, d, v, 1, 0, nifti::kIntentLabel));
    const auto& lab = std::get<LabelVolume>(parsed);
    CHECK(std::vector<std::uint8_t>(lab.data().begin(), lab.data().end()) == v);
    CHECK(std::get<LabelVolume>(nifti::parse(nifti::write(lab))) == lab);
  }
  SUBCASE("uint8 scalars") {
    const std::vector<std::uint8_t> v{0, 1, 2, 3, 4, 5, 250, 251, 252, 253, 254, 255};
    const auto s = scalar_of(nifti::parse(handmade<std::uint8_t>(nifti::kUint8, d, v)));
    for (int i = 0; i < 12; ++i) CHECK(s[i] == v[i]);
    CHECK(scalar_of(nifti::parse(nifti::write(s))) == s);
  }
  SUBCASE("int16") {
    const std::vector<std::int16_t> v{-32768, -1024, -1, 0, 1, 7, 99, 1000, 3071, 12345, 32000, 32767};
    const auto s = scalar_of(nifti::parse(handmade<std::int16_t>(nifti::kInt16, d, v)));
    for (int i = 0; i < 12; ++i) CHECK(s[i] == v[i]);
    CHECK(scalar_of(nifti::parse(nifti::write(s))) == s);
  }
  SUBCASE("int32") {
    const std::vector<std::int32_t> v{-16777216, -70000, -1, 0, 1, 2, 3, 65536, 100000, 1 << 20, 1 << 23, 16777216};
    const auto s = scalar_of(nifti::parse(handmade<std::int32_t>(nifti::kInt32, d, v)));
    for (int i = 0; i < 12; ++i) CHECK(s[i] == static_cast<float>(v[i]));
    CHECK(scalar_of(nifti::parse(nifti::write(s))) == s);
  }
  SUBCASE("float32") {
    const std::vector<float> v{-1e30f, -1024.5f, -0.0f, 0.0f, 1e-30f, 0.1f, 3.14159f, 40.0f, 1e10f, 7.0f, -3.0f, 1.0f};
    const auto s = scalar_of(nifti::parse(handmade<float>(nifti::kFloat32, d, v)));
    for (int i = 0; i < 12; ++i) CHECK(std::bit_cast<std::uint32_t>(s[i]) == std::bit_cast<std::uint32_t>(v[i]));
    const auto again = scalar_of(nifti::parse(nifti::write(s)));
    for (int i = 0; i < 12; ++i) CHECK(std::bit_cast<std::uint32_t>(again[i]) == std::bit_cast<std::uint32_t>(v[i]));
  }
  SUBCASE("float64") {
    const std::vector<double> v{-1024.5, -1.0, 0.0, 0.25, 0.5, 1.0, 2.0, 40.0, 1e6, 123.125, -7.75, 3071.0};
    const auto s = scalar_of(nifti::parse(handmade<double>(nifti::kFloat64, d, v)));
    for (int i = 0; i < 12; ++i) CHECK(s[i] == static_cast<float>(v[i]));
    CHECK(scalar_of(nifti::parse(nifti::write(s))) == s);
  }
}

TEST_CASE("scale slope and intercept apply") {
  const std::vector<std::int16_t> v{0, 1, 2, 3, 4, 5, 6, 7};
  const auto s = scalar_of(nifti::parse(handmade<std::int16_t>(nifti::kInt16, {2, 2, 2}, v, 2.0f, -1024.0f)));
  CHECK(s[0] == -1024.0f);
  CHECK(s[7] == -1010.0f);
}

TEST_CASE("writer layout") {
  Geometry g;
  const ScalarVolume one(g, {7.0f});
  const auto bytes = nifti::write(one);
  REQUIRE(bytes.size() == 356);
  float v = 0;
  std::memcpy(&v, bytes.data() + 352, 4);
  CHECK(v == 7.0f);
  const auto h = nifti::parse_header(bytes);
  CHECK(h.vox_offset == 352.0f);
  CHECK(h.scl_slope == 1.0f);
  CHECK(h.scl_inter == 0.0f);
  CHECK(h.datatype == nifti::kFloat32);
  CHECK(std::memcmp(h.magic.data(), "n+1\0", 4) == 0);
}

TEST_CASE("golden bytes of a 3x3x3 phantom") {
  const auto bytes = nifti::write(phantom3());
  CHECK(bytes == read_binary_file(kFixtures / "phantom3.nii"));
  CHECK(nifti::write(phantom3()) == bytes);
}

TEST_CASE("malformed files produce their errors") {
  auto good = handmade<std::int16_t>(nifti::kInt16, {2, 2, 2}, std::vector<std::int16_t>(8, 5));
  CHECK_NOTHROW(nifti::parse(good));

  auto bad_magic = good;
  std::memcpy(bad_magic.data() + 344, "BAD\0", 4);
  CHECK(error_kind(bad_magic) == nifti::ErrorKind::BadMagic);

  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  CHECK(error_kind(truncated) == nifti::ErrorKind::Truncated);
  CHECK(error_kind(std::span(good).first(200)) == nifti::ErrorKind::Truncated);

  auto bad_size = good;
  bad_size[0] = 0x10;
  CHECK(error_kind(bad_size) == nifti::ErrorKind::BadHeaderSize);

  auto bad_type = good;
  bad_type[70] = 128;
  CHECK(error_kind(bad_type) == nifti::ErrorKind::UnsupportedDatatype);

  auto four_d = good;
  four_d[40] = 4;
  CHECK(error_kind(four_d) == nifti::ErrorKind::BadDim);

  auto gz = nifti::gzip(good);
  gz.resize(gz.size() / 2);
  CHECK(error_kind(gz) == nifti::ErrorKind::Truncated);
}

TEST_CASE("gzip files and header/image pairs") {
  testing::TempDir tmp;
  const auto vol = phantom3();
  nifti::write_file(tmp / "a.nii.gz", vol);
  CHECK(nifti::is_gzip(read_binary_file(tmp / "a.nii.gz")));
  CHECK(scalar_of(nifti::read_file(tmp / "a.nii.gz")) == vol);

  auto single = nifti::write(vol);
  std::vector<std::uint8_t> hdr(single.begin(), single.begin() + 348);
  std::vector<std::uint8_t> img(single.begin() + 352, single.end());
  std::memcpy(hdr.data() + 344, "ni1\0", 4);
  const float zero = 0.0f;
  std::memcpy(hdr.data() + 108, &zero, 4);
  CHECK(scalar_of(nifti::parse_pair(hdr, img)) == vol);
  write_binary_file(tmp / "b.hdr", hdr);
  write_binary_file(tmp / "b.img", nifti::gzip(img));
  CHECK(scalar_of(nifti::read_file(tmp / "b.hdr")) == vol);
  CHECK_THROWS_AS(nifti::read_file(tmp / "missing.nii"), nifti::NiftiError);
}

TEST_CASE("float masks convert to labels") {
  Geometry g;
  g.dims = {2, 1, 1};
  const auto m = nifti::to_mask(ScalarVolume(g, {0.0f, 0.7f}), 2);
  CHECK(m[0] == 0);
  CHECK(m[1] == 2);
}

TEST_CASE("fnv1a matches its published test vectors") {
  const std::string a = "a";
  CHECK(fnv1a64({}) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64({reinterpret_cast<const std::uint8_t*>(a.data()), 1}) == 0xaf63dc4c8601ec8cULL);
  CHECK(to_hex(0xabcULL) == "0000000000000abc");
}

TEST_CASE("case manifests") {
  testing::TempDir tmp;
  const auto full = testing::write_phantom_case(tmp.path(), "full", 1, true, true);
  const auto bare = testing::write_phantom_case(tmp.path(), "bare", 1, true, false);

  const auto c1 = load_case_volumes(read_manifest(full));
  CHECK_FALSE(c1.lung_fallback);
  CHECK_FALSE(c1.lesion_fallback);
  CHECK(c1.lung_mask.has_value());
  const auto c2 = load_case_volumes(read_manifest(bare));
  CHECK(c2.lung_fallback);
  CHECK(c2.lesion_fallback);
  CHECK(c1.input_hash != c2.input_hash);
  CHECK(load_case_volumes(read_manifest(full)).input_hash == c1.input_hash);

  CHECK(is_safe_case_id("case_01-a.b"));
  CHECK_FALSE(is_safe_case_id(""));
  CHECK_FALSE(is_safe_case_id("../etc"));
  CHECK_FALSE(is_safe_case_id("a/b"));

  auto stage_of = [](auto&& fn) -> std::string {
    try {
      fn();
    } catch (const StageError& e) {
      return e.stage();
    }
    return "none";
  };
  CHECK(stage_of([&] { read_manifest(tmp / "nope.json"); }) == "ingest");
  CHECK(stage_of([&] { parse_manifest(nlohmann::json{{"id", "x"}}, tmp.path()); }) == "ingest");
  CHECK(stage_of([&] { parse_manifest(nlohmann::json{{"id", "../x"}, {"scalar", "s"}}, tmp.path()); }) == "ingest");
  CHECK(stage_of([&] {
          load_case_volumes(parse_manifest(nlohmann::json{{"id", "x"}, {"scalar", "none.nii"}}, tmp.path()));
        }) == "ingest");

  Geometry other;
  other.dims = {5, 5, 5};
  nifti::write_file(tmp / "small.nii", LabelVolume(other, std::vector<std::uint8_t>(125, 1)));
  CHECK(stage_of([&] {
          load_case_volumes(parse_manifest(
              nlohmann::json{{"id", "x"}, {"scalar", "full-scalar.nii.gz"}, {"lung_mask", "small.nii"}},
              tmp.path()));
        }) == "ingest");
}

TEST_CASE("derived cache") {
  testing::TempDir tmp;
  DerivedCache cache(tmp / "cache");
  const std::vector<std::uint8_t> payload{1, 2, 3, 4};
  CacheKey key{"c1", 42, "m1", "classification"};
  CHECK_FALSE(cache.load(key).has_value());
  cache.store(key, payload);
  CHECK(cache.load(key) == payload);

  CacheKey changed = key;
  changed.input_hash = 43;
  std::vector<std::string> warnings;
  CHECK_FALSE(cache.load(changed, &warnings).has_value());
  CHECK(warnings.size() == 1);
  changed = key;
  changed.model_version = "m2";
  CHECK_FALSE(cache.load(changed).has_value());

  for (int i = 0; i < 3; ++i) {
    cache.store({"case" + std::to_string(i), 7, "m", "heatmap"}, std::vector<std::uint8_t>(3, i));
  }
  for (int i = 0; i < 3; ++i) {
    CHECK(cache.load({"case" + std::to_string(i), 7, "m", "heatmap"}) == std::vector<std::uint8_t>(3, i));
  }
  cache.clear_case("case1");
  CHECK_FALSE(cache.load({"case1", 7, "m", "heatmap"}).has_value());
  CHECK(cache.load({"case2", 7, "m", "heatmap"}).has_value());

  const fs::path entry = tmp / "cache" / "c1" / (key.file_stem() + ".bin");
  auto bytes = read_binary_file(entry);
  bytes.back() ^= 0xff;
  write_binary_file(entry, bytes);
  warnings.clear();
  CHECK_FALSE(cache.load(key, &warnings).has_value());
  CHECK(warnings.size() == 1);

  std::ofstream(tmp / "file") << "x";
  CHECK_THROWS_AS(DerivedCache(tmp / "file" / "sub"), CacheError);
}

TEST_CASE("second load serves classification from the cache") {
  testing::TempDir tmp;
  const auto manifest = testing::write_phantom_case(tmp.path(), "p1", 3, true, true);
  auto model = std::make_shared<mil::MilModel>();
  model->initialize(1);
  auto cache = std::make_shared<DerivedCache>(tmp / "cache");
  const CasePipeline pipeline(model, cache);

  const auto first = pipeline.run(read_manifest(manifest));
  REQUIRE(first.classification.has_value());
  CHECK(pipeline.classifier_runs() == 1);
  CHECK_FALSE(first.classification_cached);

  const auto second = pipeline.run(read_manifest(manifest));
  CHECK(pipeline.classifier_runs() == 1);
  CHECK(second.classification_cached);
  CHECK(second.classification->p_positive == first.classification->p_positive);
  CHECK(second.classification->attention == first.classification->attention);
  REQUIRE(second.heatmap.has_value());
  CHECK(*second.heatmap == *first.heatmap);

  // Any change to an input file changes the key.
  auto bytes = read_binary_file(tmp / "p1-lesion.nii.gz");
  const auto lesion = nifti::to_mask(nifti::parse(bytes), 2);
  std::vector<std::uint8_t> v(lesion.data().begin(), lesion.data().end());
  v[0] = 2;
  nifti::write_file(tmp / "p1-lesion.nii.gz", LabelVolume(lesion.geometry(), v));
  const auto third = pipeline.run(read_manifest(manifest));
  CHECK(pipeline.classifier_runs() == 2);
  CHECK_FALSE(third.classification_cached);
}
