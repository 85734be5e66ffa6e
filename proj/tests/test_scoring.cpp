#include <random>

#include "doctest.h"
#include "imvalign/scoring.hpp"
#include "oracle.hpp"

using namespace imvalign;

namespace {

std::vector<int> random_seq(std::mt19937_64& rng, int max_len, int vocab) {
  const int n = static_cast<int>(rng() % static_cast<unsigned>(max_len + 1));
  std::vector<int> out(static_cast<std::size_t>(n));
  for (auto& v : out) v = static_cast<int>(rng() % static_cast<unsigned>(vocab));
  return out;
}

}  // namespace

TEST_SUITE("scoring") {

TEST_CASE("edit distance base cases") {
  auto equal = edit_distance({1, 2, 3}, {1, 2, 3});
  CHECK(equal.total_errors() == 0);
  CHECK(equal.error_rate() == 0.0);

  auto sub = edit_distance({1, 2, 3}, {1, 9, 3});
  CHECK(sub.substitutions == 1);
  CHECK(sub.insertions == 0);
  CHECK(sub.deletions == 0);
  CHECK(sub.error_rate() == doctest::Approx(1.0 / 3).epsilon(1e-12));

  auto del = edit_distance({1, 2}, {});
  CHECK(del.deletions == 2);
  CHECK(del.error_rate() == doctest::Approx(1.0).epsilon(1e-12));

  auto ins = edit_distance({}, {1, 2});
  CHECK(ins.insertions == 2);
  CHECK(ins.ref_tokens == 0);
  CHECK_THROWS_AS(ins.error_rate(), EmptyReferenceError);
}

TEST_CASE("tie break prefers substitution over insertion over deletion") {
  // ref [a], hyp [b]: one substitution, not insert+delete
  auto r = edit_distance({1}, {2});
  CHECK(r.substitutions == 1);
  CHECK(r.insertions == 0);
  CHECK(r.deletions == 0);

  // equal-cost split still yields a deterministic decomposition
  auto mixed = edit_distance({1, 2, 3, 4}, {2, 3, 4, 5});
  CHECK(mixed.total_errors() == 2);
  auto again = edit_distance({1, 2, 3, 4}, {2, 3, 4, 5});
  CHECK(mixed.substitutions == again.substitutions);
  CHECK(mixed.insertions == again.insertions);
  CHECK(mixed.deletions == again.deletions);
}

TEST_CASE("total error count matches the memoized reference") {
  std::mt19937_64 rng(3);
  for (int it = 0; it < 300; ++it) {
    auto ref = random_seq(rng, 12, 5);
    auto hyp = random_seq(rng, 12, 5);
    auto got = edit_distance(ref, hyp);
    CHECK(got.total_errors() == oracle::edit_distance_count(ref, hyp));
  }
}

TEST_CASE("swapping ref and hyp exchanges insertions and deletions") {
  std::mt19937_64 rng(5);
  for (int it = 0; it < 200; ++it) {
    auto a = random_seq(rng, 10, 4);
    auto b = random_seq(rng, 10, 4);
    auto ab = edit_distance(a, b);
    auto ba = edit_distance(b, a);
    CHECK(ab.total_errors() == ba.total_errors());
    CHECK(ab.insertions == ba.deletions);
    CHECK(ab.deletions == ba.insertions);
    CHECK(ab.substitutions == ba.substitutions);
  }
}

TEST_CASE("triangle inequality on random triples") {
  std::mt19937_64 rng(7);
  for (int it = 0; it < 200; ++it) {
    auto a = random_seq(rng, 8, 4);
    auto b = random_seq(rng, 8, 4);
    auto c = random_seq(rng, 8, 4);
    const long long ab = edit_distance(a, b).total_errors();
    const long long bc = edit_distance(b, c).total_errors();
    const long long ac = edit_distance(a, c).total_errors();
    CHECK(ac <= ab + bc);
  }
}

TEST_CASE("class mapping merges confusions and never adds errors") {
  // identity map equals plain edit distance
  std::vector<int> identity = {0, 1, 2, 3, 4};
  auto plain = edit_distance({1, 2, 3}, {1, 4, 3});
  auto mapped = class_mapped_error({1, 2, 3}, {1, 4, 3}, identity);
  CHECK(mapped.total_errors() == plain.total_errors());

  // collapsing the substituted pair removes the error
  std::vector<int> collapse = {0, 1, 2, 3, 2};  // ids 2 and 4 share a class
  auto fixed = class_mapped_error({1, 2, 3}, {1, 4, 3}, collapse);
  CHECK(fixed.total_errors() == 0);

  // all-to-one map scores zero whenever lengths match
  std::vector<int> all_one = {0, 0, 0, 0, 0};
  auto all = class_mapped_error({1, 2, 3}, {4, 0, 2}, all_one);
  CHECK(all.total_errors() == 0);

  CHECK_THROWS_AS(class_mapped_error({9}, {1}, identity), VocabError);

  // merging classes can only reduce the error count
  std::mt19937_64 rng(11);
  for (int it = 0; it < 200; ++it) {
    auto ref = random_seq(rng, 10, 6);
    auto hyp = random_seq(rng, 10, 6);
    std::vector<int> classes(6);
    for (auto& c : classes) c = static_cast<int>(rng() % 3);
    auto base = edit_distance(ref, hyp);
    auto merged = class_mapped_error(ref, hyp, classes);
    CHECK(merged.total_errors() <= base.total_errors());
  }
}

}  // TEST_SUITE
