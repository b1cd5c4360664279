#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "doctriage/embeddings.hpp"

#include "helpers.hpp"

using namespace doctriage;

namespace {

std::filesystem::path write_lines(const testutil::TempDir& dir,
                                  const std::vector<std::string>& lines) {
  const auto path = dir / "vectors.txt";
  std::ofstream out(path);
  for (const auto& line : lines) out << line << '\n';
  return path;
}

}  // namespace

TEST_CASE("load_embeddings reads well-formed rows", "[embeddings]") {
  testutil::TempDir dir;
  const auto path = write_lines(
      dir, {"cat 0.1 0.2 0.3 0.4", "dog -1 -2 -3 -4", "sat 1e-2 2e-2 0 4.5"});
  const EmbeddingTable table = load_embeddings(path, 4);
  CHECK(table.size() == 3);
  CHECK(table.dim == 4);
  CHECK(table.skipped_lines == 0);
  CHECK(table.lookup("dog")(1) == -2.0);
  CHECK(table.lookup("sat")(0) == Catch::Approx(0.01));
}

TEST_CASE("malformed rows are counted and skipped", "[embeddings]") {
  testutil::TempDir dir;
  const auto path = write_lines(dir, {"cat 0.1 0.2 0.3 0.4", "bad 1 2 3",
                                      "dog 1 2 3 4", "worse 1 2 3 4 5", "junk a b c d"});
  const EmbeddingTable table = load_embeddings(path, 4);
  CHECK(table.size() == 2);
  CHECK(table.skipped_lines == 3);
}

TEST_CASE("a file with no usable rows is an error", "[embeddings]") {
  testutil::TempDir dir;
  const auto path = write_lines(dir, {"short 1 2", "other 3"});
  CHECK_THROWS_AS(load_embeddings(path, 4), DataError);
  CHECK_THROWS_AS(load_embeddings(dir / "missing.txt", 4), ConfigError);
}

TEST_CASE("embed_tokens assembles rows with zero OOV vectors", "[embeddings]") {
  testutil::TempDir dir;
  const auto path = write_lines(dir, {"cat 1 2 3", "dog 4 5 6"});
  const EmbeddingTable table = load_embeddings(path, 3);

  const Mat empty = embed_tokens({}, table);
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 3);

  const Mat pair = embed_tokens({"cat", "unknown"}, table);
  REQUIRE(pair.rows() == 2);
  CHECK(pair(0, 0) == 1.0);
  CHECK(pair(0, 2) == 3.0);
  CHECK(pair.row(1).norm() == 0.0);

  // hand-assembled lookup for a three-token sequence
  const Mat three = embed_tokens({"dog", "cat", "dog"}, table);
  Mat expected(3, 3);
  expected << 4, 5, 6, 1, 2, 3, 4, 5, 6;
  CHECK((three - expected).norm() == 0.0);
}
