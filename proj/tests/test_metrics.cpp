#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <sstream>

#include "doctriage/metrics.hpp"
#include "doctriage/rng.hpp"

#include "helpers.hpp"

using namespace doctriage;

TEST_CASE("accumulate increments exactly one cell", "[metrics]") {
  ConfusionMatrix m;
  const auto maps = ClassLabel::from_name("maps");
  const auto catalog = ClassLabel::from_name("catalog");

  m.accumulate(maps.index(), maps.index());
  CHECK(m.count(maps.index(), maps.index()) == 1);
  CHECK(m.total() == 1);

  m.accumulate(catalog.index(), maps.index());
  CHECK(m.count(catalog.index(), maps.index()) == 1);
  CHECK(m.trace() == 1);
  CHECK(m.total() == 2);
}

TEST_CASE("random accumulation matches a brute-force recount", "[metrics]") {
  Rng rng(101);
  ConfusionMatrix m;
  std::array<std::array<std::uint64_t, 11>, 11> recount{};
  for (int k = 0; k < 100; ++k) {
    const auto t = static_cast<std::size_t>(rng.below(11));
    const auto p = static_cast<std::size_t>(rng.below(11));
    m.accumulate(t, p);
    ++recount[t][p];
  }
  std::uint64_t recount_total = 0;
  for (std::size_t i = 0; i < 11; ++i) {
    for (std::size_t j = 0; j < 11; ++j) {
      CHECK(m.count(i, j) == recount[i][j]);
      recount_total += recount[i][j];
    }
  }
  CHECK(m.total() == recount_total);
  CHECK(m.total() == 100);
}

TEST_CASE("summarize on a diagonal matrix", "[metrics]") {
  ConfusionMatrix m;
  for (std::size_t c = 0; c < 11; ++c) {
    for (int k = 0; k <= static_cast<int>(c); ++k) m.accumulate(c, c);
  }
  const EvalReport report = summarize(m);
  CHECK(report.accuracy == 1.0);
  for (const auto& s : report.per_class) {
    CHECK(s.recall == 1.0);
    CHECK(s.precision == 1.0);
  }
}

TEST_CASE("summarize on a uniform matrix gives accuracy 1/11", "[metrics]") {
  ConfusionMatrix m;
  for (std::size_t i = 0; i < 11; ++i) {
    for (std::size_t j = 0; j < 11; ++j) m.accumulate(i, j);
  }
  CHECK(summarize(m).accuracy == Catch::Approx(1.0 / 11.0).epsilon(1e-12));
}

TEST_CASE("summarize matches hand-computed three-class statistics", "[metrics]") {
  // counts: (0,0)=5 (0,1)=2 (1,1)=4 (2,0)=1 (2,2)=3 -> total 15, trace 12
  ConfusionMatrix m;
  for (int k = 0; k < 5; ++k) m.accumulate(0, 0);
  for (int k = 0; k < 2; ++k) m.accumulate(0, 1);
  for (int k = 0; k < 4; ++k) m.accumulate(1, 1);
  m.accumulate(2, 0);
  for (int k = 0; k < 3; ++k) m.accumulate(2, 2);

  const EvalReport report = summarize(m);
  CHECK(report.total == 15);
  CHECK(report.accuracy == Catch::Approx(12.0 / 15.0).epsilon(1e-12));

  CHECK(report.per_class[0].precision == Catch::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(report.per_class[0].recall == Catch::Approx(5.0 / 7.0).epsilon(1e-12));
  CHECK(report.per_class[0].f1 == Catch::Approx(10.0 / 13.0).epsilon(1e-12));
  CHECK(report.per_class[0].support == 7);

  CHECK(report.per_class[1].precision == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(report.per_class[1].recall == 1.0);
  CHECK(report.per_class[1].f1 == Catch::Approx(0.8).epsilon(1e-12));

  CHECK(report.per_class[2].precision == 1.0);
  CHECK(report.per_class[2].recall == Catch::Approx(0.75).epsilon(1e-12));
  CHECK(report.per_class[2].f1 == Catch::Approx(6.0 / 7.0).epsilon(1e-12));

  for (std::size_t c = 3; c < 11; ++c) {
    CHECK(report.per_class[c].support == 0);
    CHECK(report.per_class[c].precision == 0.0);
    CHECK(report.per_class[c].recall == 0.0);
  }
}

TEST_CASE("summarize rejects an empty matrix", "[metrics]") {
  CHECK_THROWS_AS(summarize(ConfusionMatrix{}), DataError);
}

TEST_CASE("csv round trip is the identity for random matrices", "[metrics]") {
  Rng rng(77);
  for (int iter = 0; iter < 20; ++iter) {
    ConfusionMatrix m;
    const int entries = static_cast<int>(rng.below(200));
    for (int k = 0; k < entries; ++k) {
      m.accumulate(static_cast<std::size_t>(rng.below(11)),
                   static_cast<std::size_t>(rng.below(11)));
    }
    CHECK(confusion_from_csv(confusion_to_csv(m)) == m);
  }
}

TEST_CASE("pgm heat map row-normalizes counts", "[metrics]") {
  ConfusionMatrix m;
  for (int k = 0; k < 3; ++k) m.accumulate(0, 0);
  m.accumulate(0, 1);
  for (int k = 0; k < 2; ++k) m.accumulate(4, 7);
  // row 2 stays empty

  const std::string pgm = confusion_to_pgm(m);
  std::istringstream in(pgm);
  std::string magic;
  int width, height, maxval;
  in >> magic >> width >> height >> maxval;
  REQUIRE(magic == "P2");
  REQUIRE(width == 11);
  REQUIRE(height == 11);
  REQUIRE(maxval == 255);

  std::array<std::array<int, 11>, 11> px{};
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) in >> px[i][j];
  }

  // independent row-normalization oracle
  for (std::size_t i = 0; i < 11; ++i) {
    std::uint64_t rs = 0;
    for (std::size_t j = 0; j < 11; ++j) rs += m.count(i, j);
    for (std::size_t j = 0; j < 11; ++j) {
      const int expected =
          rs == 0 ? 0 : static_cast<int>(std::lround(255.0 * m.count(i, j) / rs));
      CHECK(px[i][j] == expected);
      CHECK(px[i][j] >= 0);
      CHECK(px[i][j] <= 255);
    }
  }
  // zero row renders black
  for (int j = 0; j < 11; ++j) CHECK(px[2][j] == 0);
  // monotone within a row
  CHECK(px[0][0] > px[0][1]);
}

TEST_CASE("shard merge equals single-pass accumulation", "[metrics]") {
  Rng rng(5150);
  ConfusionMatrix whole, shard_a, shard_b, shard_c;
  for (int k = 0; k < 333; ++k) {
    const auto t = static_cast<std::size_t>(rng.below(11));
    const auto p = static_cast<std::size_t>(rng.below(11));
    whole.accumulate(t, p);
    (k % 3 == 0 ? shard_a : k % 3 == 1 ? shard_b : shard_c).accumulate(t, p);
  }
  ConfusionMatrix merged_ab = shard_a;
  merged_ab.merge(shard_b);
  merged_ab.merge(shard_c);

  ConfusionMatrix merged_cb = shard_c;
  merged_cb.merge(shard_b);
  merged_cb.merge(shard_a);

  CHECK(merged_ab == whole);
  CHECK(merged_cb == whole);  // order-independent
}

TEST_CASE("export writes the three report files", "[metrics]") {
  testutil::TempDir dir;
  ConfusionMatrix m;
  m.accumulate(0, 0);
  m.accumulate(1, 1);
  export_report(m, summarize(m), dir.path());
  CHECK(std::filesystem::exists(dir / "confusion.csv"));
  CHECK(std::filesystem::exists(dir / "confusion.pgm"));
  CHECK(std::filesystem::exists(dir / "report.json"));

  const auto parsed = nlohmann::json::parse(read_file_bytes(dir / "report.json"));
  CHECK(parsed.at("accuracy").get<double>() == 1.0);
}
