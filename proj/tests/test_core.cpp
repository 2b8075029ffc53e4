#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <set>

#include "cluster_route/error.hpp"
#include "cluster_route/hashing.hpp"
#include "cluster_route/parallel.hpp"
#include "cluster_route/rng.hpp"

using namespace cluster_route;

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("fnv1a64 reference value") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("key hasher is order sensitive and part-delimited") {
  CHECK(KeyHasher(1).add("ab").add("c").value() != KeyHasher(1).add("a").add("bc").value());
  CHECK(KeyHasher(1).add("x").add("y").value() != KeyHasher(1).add("y").add("x").value());
  CHECK(KeyHasher(1).add("x").value() != KeyHasher(2).add("x").value());
  CHECK(KeyHasher(5).add("q").add(std::uint64_t{3}).value() == KeyHasher(5).add("q").add(std::uint64_t{3}).value());
}

TEST_CASE("unit_interval stays in [0, 1)") {
  CHECK(unit_interval(0) == 0.0);
  CHECK(unit_interval(~std::uint64_t{0}) < 1.0);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("rng is reproducible and below() is unbiased enough") {
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng r(1);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) ++hist[r.below(7)];
  for (int h : hist) CHECK(std::abs(h - 10000) < 400);
}

TEST_CASE("shuffle is a permutation") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  Rng r(3);
  r.shuffle(std::span<int>(v));
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 50);
  CHECK(v != std::vector<int>([] {
          std::vector<int> w(50);
          for (int i = 0; i < 50; ++i) w[i] = i;
          return w;
        }()));
}

TEST_CASE("error formatting carries code and index") {
  Error e(Errc::EmptyText, "blank", 4);
  CHECK(e.code() == Errc::EmptyText);
  CHECK(e.index() == 4u);
  CHECK(e.detail() == "blank");
  CHECK(std::string(e.what()) == "EmptyText at index 4: blank");
  CHECK(to_string(Errc::VersionUnsupported) == "VersionUnsupported");
}

TEST_CASE("parallel_for visits every index once and rethrows the lowest failure") {
  std::vector<std::atomic<int>> seen(1000);
  parallel_for(1000, 8, [&](std::size_t i) { seen[i].fetch_add(1); });
  for (auto& s : seen) CHECK(s.load() == 1);

  try {
    parallel_for(100, 4, [](std::size_t i) {
      if (i == 17 || i == 60) throw Error(Errc::BackendFailure, "x", i);
    });
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.index() == 17u);
  }
}
