#include <doctest.h>

#include <vector>

#include "nerforge/embeddings.hpp"
#include "nerforge/errors.hpp"
#include "testutil.hpp"

using namespace nerforge;
namespace tu = nerforge::testutil;

namespace {

std::vector<float> to_vec(std::span<const float> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_SUITE_BEGIN("embeddings");

TEST_CASE("build and lookup with lowercase fallback") {
  auto store = EmbeddingStore::build(
      "toy", 3,
      {{"aspirin", {1.f, 2.f, 3.f}}, {"Heparin", {4.f, 5.f, 6.f}}, {"dna", {7.f, 8.f, 9.f}}});
  CHECK(store.dim() == 3);
  CHECK(store.vocab_size() == 3);
  CHECK(store.name() == "toy");

  auto exact = store.lookup("aspirin");
  CHECK(exact.found);
  CHECK(to_vec(exact.vec) == std::vector<float>{1.f, 2.f, 3.f});

  // exact match beats the lowercase route
  auto cased = store.lookup("Heparin");
  CHECK(cased.found);
  CHECK(to_vec(cased.vec) == std::vector<float>{4.f, 5.f, 6.f});

  // unseen casing falls back to the lowercased entry
  auto fallback = store.lookup("Aspirin");
  CHECK(fallback.found);
  CHECK(to_vec(fallback.vec) == std::vector<float>{1.f, 2.f, 3.f});
  CHECK(to_vec(store.lookup("DNA").vec) == std::vector<float>{7.f, 8.f, 9.f});

  auto miss = store.lookup("warfarin");
  CHECK_FALSE(miss.found);
  CHECK(to_vec(miss.vec) == std::vector<float>{0.f, 0.f, 0.f});
}

TEST_CASE("build rejects inconsistent rows") {
  CHECK_THROWS_AS(EmbeddingStore::build("t", 2, {{"a", {1.f}}}), DataError);
}

TEST_CASE("load_text_embeddings parses plain and headered files") {
  tu::TempDir dir("emb");

  SUBCASE("glove style, no header") {
    const std::string path = dir.file("v.txt");
    tu::write_file(path, "the 0.1 0.2\ncat -1.5 2.25\n");
    auto store = load_text_embeddings(path);
    CHECK(store.dim() == 2);
    CHECK(store.vocab_size() == 2);
    CHECK(to_vec(store.lookup("cat").vec) == std::vector<float>{-1.5f, 2.25f});
  }
  SUBCASE("word2vec style count/dim header") {
    const std::string path = dir.file("w.txt");
    tu::write_file(path, "2 3\nalpha 1 2 3\nbeta 4 5 6\n");
    auto store = load_text_embeddings(path);
    CHECK(store.dim() == 3);
    CHECK(store.vocab_size() == 2);
    CHECK(to_vec(store.lookup("beta").vec) == std::vector<float>{4.f, 5.f, 6.f});
  }
  SUBCASE("duplicate words keep the first vector") {
    const std::string path = dir.file("d.txt");
    tu::write_file(path, "x 1 1\nx 9 9\n");
    auto store = load_text_embeddings(path);
    CHECK(store.vocab_size() == 1);
    CHECK(to_vec(store.lookup("x").vec) == std::vector<float>{1.f, 1.f});
  }
}

TEST_CASE("load_text_embeddings rejects bad input") {
  tu::TempDir dir("emb");
  const std::string path = dir.file("bad.txt");

  SUBCASE("dimension mismatch") {
    tu::write_file(path, "a 1 2\nb 1 2 3\n");
    CHECK_THROWS_AS(load_text_embeddings(path), DataError);
  }
  SUBCASE("unparseable float") {
    tu::write_file(path, "a 1 oops\n");
    CHECK_THROWS_AS(load_text_embeddings(path), DataError);
  }
  SUBCASE("empty file") {
    tu::write_file(path, "");
    CHECK_THROWS_AS(load_text_embeddings(path), DataError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_text_embeddings(dir.file("absent.txt")), DataError);
  }
}

TEST_CASE("coverage_report counts token occurrences, not types") {
  auto store = EmbeddingStore::build("toy", 1, {{"the", {1.f}}, {"drug", {2.f}}});
  Sentence s1, s2;
  s1.tokens = {{"The", "O"}, {"drug", "O"}, {"xkq", "O"}};
  s2.tokens = {{"the", "O"}, {"the", "O"}};
  Dataset d = make_dataset({s1, s2});

  auto rep = coverage_report(store, d, "toy-set", "train");
  CHECK(rep.dataset_name == "toy-set");
  CHECK(rep.split_name == "train");
  CHECK(rep.total_tokens == 5);
  CHECK(rep.covered_tokens == 4);  // "The" resolves via lowercase; "xkq" does not
  CHECK(rep.ratio == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_SUITE_END();
