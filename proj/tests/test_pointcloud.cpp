#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "copa/manifest.hpp"
#include "copa/ply_io.hpp"
#include "copa/rng.hpp"
#include "copa/synthetic.hpp"

using namespace copa;

namespace {

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i)
    c.add({uniform01(rng) * 4 - 2, uniform01(rng) * 4 - 2, uniform01(rng) * 4 - 2},
          {uniform01(rng), uniform01(rng), uniform01(rng)});
  return c;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("load_ply reads a one-vertex ascii file", "[ply]") {
  auto dir = temp_dir("copa_ply_one");
  write_file(dir / "one.ply",
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property uchar red\nproperty uchar green\nproperty uchar blue\n"
             "end_header\n0 0 0 255 0 0\n");
  const PointCloud c = load_ply((dir / "one.ply").string());
  REQUIRE(c.size() == 1);
  CHECK(c.positions[0] == Vec3{0.0, 0.0, 0.0});
  CHECK(c.colors[0][0] == 1.0);
  CHECK(c.colors[0][1] == 0.0);
  CHECK(c.colors[0][2] == 0.0);
}

TEST_CASE("load_ply tolerates shuffled vertex properties", "[ply]") {
  auto dir = temp_dir("copa_ply_shuffled");
  write_file(dir / "s.ply",
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property uchar blue\nproperty uchar green\nproperty uchar red\n"
             "property float z\nproperty float y\nproperty float x\n"
             "end_header\n0 128 255 3 2 1\n");
  const PointCloud c = load_ply((dir / "s.ply").string());
  REQUIRE(c.size() == 1);
  CHECK(c.positions[0] == Vec3{1.0, 2.0, 3.0});
  CHECK(c.colors[0][0] == 1.0);
  CHECK(c.colors[0][2] == 0.0);
}

TEST_CASE("save then load round-trips within color quantization", "[ply]") {
  auto dir = temp_dir("copa_ply_rt");
  const PointCloud c = random_cloud(100, 11);
  for (bool binary : {false, true}) {
    const auto path = dir / (binary ? "b.ply" : "a.ply");
    save_ply(c, path.string(), binary);
    const PointCloud back = load_ply(path.string());
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(back.positions[i] == c.positions[i]);
      for (int k = 0; k < 3; ++k)
        CHECK(std::abs(back.colors[i][static_cast<std::size_t>(k)] -
                       c.colors[i][static_cast<std::size_t>(k)]) <= 0.5 / 255.0 + 1e-12);
    }
  }
}

TEST_CASE("binary and ascii encodings load identically", "[ply]") {
  auto dir = temp_dir("copa_ply_enc");
  const PointCloud c = random_cloud(100, 7);
  save_ply(c, (dir / "a.ply").string(), false);
  save_ply(c, (dir / "b.ply").string(), true);
  const PointCloud a = load_ply((dir / "a.ply").string());
  const PointCloud b = load_ply((dir / "b.ply").string());
  CHECK(a.positions == b.positions);
  CHECK(a.colors == b.colors);
}

TEST_CASE("binary file is strictly smaller than ascii for 1000 points", "[ply]") {
  auto dir = temp_dir("copa_ply_size");
  const PointCloud c = random_cloud(1000, 3);
  save_ply(c, (dir / "a.ply").string(), false);
  save_ply(c, (dir / "b.ply").string(), true);
  CHECK(std::filesystem::file_size(dir / "b.ply") < std::filesystem::file_size(dir / "a.ply"));
}

TEST_CASE("ply error paths", "[ply]") {
  auto dir = temp_dir("copa_ply_err");
  CHECK_THROWS_AS(load_ply((dir / "missing.ply").string()), IoError);

  write_file(dir / "notply.ply", "solid nope\n");
  CHECK_THROWS_AS(load_ply((dir / "notply.ply").string()), FormatError);

  write_file(dir / "nocolor.ply",
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "end_header\n0 0 0\n");
  CHECK_THROWS_AS(load_ply((dir / "nocolor.ply").string()), FormatError);

  write_file(dir / "zero.ply",
             "ply\nformat ascii 1.0\nelement vertex 0\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property uchar red\nproperty uchar green\nproperty uchar blue\n"
             "end_header\n");
  CHECK_THROWS_AS(load_ply((dir / "zero.ply").string()), EmptyCloudError);

  write_file(dir / "trunc.ply",
             "ply\nformat binary_little_endian 1.0\nelement vertex 5\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property uchar red\nproperty uchar green\nproperty uchar blue\n"
             "end_header\n\x01\x02");
  CHECK_THROWS_AS(load_ply((dir / "trunc.ply").string()), FormatError);

  CHECK_THROWS_AS(save_ply(PointCloud{}, (dir / "empty.ply").string()), EmptyCloudError);
}

TEST_CASE("malformed header errors name the offending line", "[ply]") {
  auto dir = temp_dir("copa_ply_line");
  write_file(dir / "bad.ply",
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property wobble x\n"
             "end_header\n0\n");
  try {
    load_ply((dir / "bad.ply").string());
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("header line 4") != std::string::npos);
  }
}

TEST_CASE("cloud validation rejects bad invariants", "[ply]") {
  PointCloud c;
  c.add({0, 0, 0}, {0.5, 0.5, 0.5});
  c.colors[0][1] = 1.5;
  CHECK_THROWS_AS(validate(c), NumericError);
  c.colors[0][1] = 0.5;
  c.positions[0][2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate(c), NumericError);
  c.positions[0][2] = 0.0;
  CHECK_NOTHROW(validate(c));
  c.colors.pop_back();
  CHECK_THROWS_AS(validate(c), ShapeError);
}

TEST_CASE("manifest parses rows in file order and keeps blank mos absent", "[manifest]") {
  auto dir = temp_dir("copa_man_basic");
  write_file(dir / "m.csv",
             "path,content_id,distortion_id,level,mos\n"
             "a.ply,0,1,2,3.5\n"
             "b.ply,1,0,1,\n");
  const DatasetManifest m = load_manifest((dir / "m.csv").string());
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries[0].path == "a.ply");
  CHECK(m.entries[0].content_id == 0);
  CHECK(m.entries[0].distortion_id == 1);
  CHECK(m.entries[0].level == 2);
  CHECK(m.entries[0].mos == 3.5);
  CHECK(m.entries[1].path == "b.ply");
  CHECK_FALSE(m.entries[1].mos.has_value());
  CHECK(m.content_ids() == std::vector<int>{0, 1});
  CHECK_FALSE(m.all_have_mos());
}

TEST_CASE("manifest round-trips 50 random rows", "[manifest]") {
  auto dir = temp_dir("copa_man_rt");
  Rng rng = make_rng(5);
  DatasetManifest m;
  for (int i = 0; i < 50; ++i) {
    ManifestEntry e;
    e.path = "cloud_" + std::to_string(i) + ".ply";
    e.content_id = i / 10;
    e.distortion_id = i % 10;
    e.level = 1 + i % 7;
    if (i % 3 != 0) e.mos = 1.0 + 4.0 * uniform01(rng);
    m.entries.push_back(e);
  }
  write_manifest(m, (dir / "m.csv").string());
  const DatasetManifest back = load_manifest((dir / "m.csv").string());
  CHECK(back == m);
}

TEST_CASE("manifest validation and format errors", "[manifest]") {
  auto dir = temp_dir("copa_man_err");
  write_file(dir / "dup.csv",
             "path,content_id,distortion_id,level,mos\n"
             "a.ply,0,1,2,3.5\n"
             "b.ply,0,1,2,1.0\n");
  try {
    load_manifest((dir / "dup.csv").string());
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("(0,1,2)") != std::string::npos);
  }

  write_file(dir / "badmos.csv",
             "path,content_id,distortion_id,level,mos\n"
             "a.ply,0,1,2,abc\n");
  CHECK_THROWS_AS(load_manifest((dir / "badmos.csv").string()), FormatError);

  write_file(dir / "badheader.csv", "file,content,distortion,level,mos\na.ply,0,1,2,3\n");
  CHECK_THROWS_AS(load_manifest((dir / "badheader.csv").string()), FormatError);

  write_file(dir / "short.csv", "path,content_id,distortion_id,level,mos\na.ply,0,1\n");
  CHECK_THROWS_AS(load_manifest((dir / "short.csv").string()), FormatError);

  DatasetManifest m;
  m.entries.push_back({"a,b.ply", 0, 0, 1, 2.0});
  CHECK_THROWS_AS(write_manifest(m, (dir / "comma.csv").string()), FormatError);
}

TEST_CASE("property: random clouds survive the ply round trip", "[ply]") {
  auto dir = temp_dir("copa_ply_prop");
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const PointCloud c = random_cloud(20 + 9 * seed, 100 + seed);
    const auto path = dir / ("p" + std::to_string(seed) + ".ply");
    save_ply(c, path.string(), seed % 2 == 0);
    const PointCloud back = load_ply(path.string());
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(norm(back.positions[i] - c.positions[i]) == 0.0);
      for (int k = 0; k < 3; ++k)
        CHECK(std::abs(back.colors[i][static_cast<std::size_t>(k)] -
                       c.colors[i][static_cast<std::size_t>(k)]) <= 0.5 / 255.0 + 1e-12);
    }
  }
}
