#include "doctest.h"
#include "helpers.hpp"

#include "afreeqc/errors.hpp"
#include "afreeqc/io.hpp"

#include <filesystem>

using namespace afreeqc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "afreeqc_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("AFK1 round trip, periodic and masked") {
  const auto u = testutil::random_field(2, 3, 16, 5);
  const auto f = FieldData::from(u);
  const auto bytes = encode_afk1(f);
  const auto g = decode_afk1(bytes);
  CHECK(g.grid == f.grid);
  CHECK(g.m == 3);
  CHECK_FALSE(g.mask.has_value());
  CHECK(g.values == f.values);
  CHECK(encode_afk1(g) == bytes);

  const auto grid = GridSpec::cube(2, 16, -1.0, 1.0);
  const auto d = DomainField::from_function(grid, BallDomain{{0.0, 0.0}, 0.7}, 2,
                                            [](std::span<const double> x, std::span<double> o) {
                                              o[0] = x[0];
                                              o[1] = -x[1] * x[0];
                                            });
  const auto fd = FieldData::from(d);
  const auto path = scratch("masked.afk1").string();
  write_afk1(path, fd);
  const auto back = read_afk1(path);
  REQUIRE(back.mask.has_value());
  CHECK(*back.mask == d.mask());
  CHECK(back.values == fd.values);
  const auto bd = back.domain();
  const auto dv = bd.values();
  CHECK(std::equal(dv.begin(), dv.end(), d.values().begin(), d.values().end()));
}

TEST_CASE("AFK1 header layout") {
  const auto f = FieldData::from(testutil::random_field(2, 1, 8, 1));
  const auto b = encode_afk1(f);
  CHECK(std::string(b.begin(), b.begin() + 7) == "AFK1FLD");
  CHECK(b[7] == 0);
  CHECK(b[8] == 1);  // version, little-endian
  // magic + version + reserved + n + m + N[2] + lo[2] + hi[2] + flag + values
  CHECK(b.size() == 8 + 4 + 4 + 4 + 4 + 8 + 16 + 16 + 1 + 64 * 8);
}

TEST_CASE("AFK1 rejects malformed input") {
  const auto f = FieldData::from(testutil::random_field(2, 2, 8, 1));
  const auto good = encode_afk1(f);
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_afk1(bad), FormatError);
  bad = good;
  bad[8] = 2;
  CHECK_THROWS_AS(decode_afk1(bad), FormatError);
  bad = good;
  bad.resize(good.size() - 3);
  CHECK_THROWS_AS(decode_afk1(bad), FormatError);
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_afk1(bad), FormatError);
  bad = good;
  bad[20] = 0xff;  // m
  bad[21] = 0xff;
  CHECK_THROWS_AS(decode_afk1(bad), FormatError);
  CHECK_THROWS_AS(decode_afk1({}), FormatError);
  FieldData wrong = f;
  wrong.values.pop_back();
  CHECK_THROWS_AS(encode_afk1(wrong), InvalidArgument);
  CHECK_THROWS_AS(read_afk1(scratch("missing.afk1").string()), Error);
}

TEST_CASE("format_double round trips") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5e-300) == "-2.5e-300");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, i % 40 - 20);
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("magnitude_csv") {
  const auto grid = GridSpec::cube(2, 8, 0.0, 1.0);
  const auto d = DomainField::from_function(grid, BoxDomain{{0.0, 0.0}, {0.5, 0.5}}, 2,
                                            [](auto, std::span<double> o) {
                                              o[0] = 3.0;
                                              o[1] = 4.0;
                                            });
  const auto csv = magnitude_csv(FieldData::from(d));
  CHECK(csv.rfind("x0,x1,magnitude\n", 0) == 0);
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 1 + static_cast<long>(mask_count(d.mask())));
  CHECK(csv.find(",5\n") != std::string::npos);
}

TEST_CASE("atomic write") {
  const auto path = scratch("atomic.txt").string();
  write_file_atomic(path, "first");
  write_file_atomic(path, "second\n");
  CHECK(read_file(path) == "second\n");
  for (const auto& e : fs::directory_iterator(fs::path(path).parent_path()))
    CHECK(e.path().filename().string().find(".tmp") == std::string::npos);
  CHECK_THROWS_AS(write_file_atomic((scratch("no_such_dir") / "x" / "y.txt").string(), "z"), Error);
}

}  // TEST_SUITE
