#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "specdec/core.hpp"

using namespace specdec;
using specdec::test::random_dist;

namespace {

LogitVector logits(std::vector<double> v) {
  LogitVector z;
  z.values = std::move(v);
  return z;
}

}  // namespace

TEST_CASE("vocabulary and temperature reject invalid values") {
  CHECK_ERRC(Vocabulary(1), Errc::InvalidArgument);
  CHECK_ERRC(Vocabulary(-4), Errc::InvalidArgument);
  Vocabulary v(4);
  CHECK(v.contains(0));
  CHECK(v.contains(3));
  CHECK_FALSE(v.contains(4));
  CHECK_ERRC(v.check(-1), Errc::InvalidArgument);
  CHECK_ERRC(Temperature(-0.1), Errc::InvalidArgument);
  CHECK_ERRC(Temperature(std::nan("")), Errc::InvalidArgument);
  CHECK(Temperature::greedy().is_greedy());
}

TEST_CASE("ProbDist validates mass") {
  CHECK_ERRC(ProbDist({0.5, 0.6}), Errc::InvalidArgument);
  CHECK_ERRC(ProbDist({1.5, -0.5}), Errc::InvalidArgument);
  CHECK_ERRC(ProbDist(std::vector<double>{}), Errc::InvalidArgument);
  CHECK_NOTHROW(ProbDist({0.5, 0.5 + 5e-10}));
  CHECK(ProbDist::point_mass(3, 2) == ProbDist({0.0, 0.0, 1.0}));
}

TEST_CASE("normalize examples") {
  const ProbDist a = normalize(logits({0.0, 0.0}), Temperature(1.0));
  CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(0.5).epsilon(1e-15));

  const ProbDist b = normalize(logits({std::log(2.0), 0.0}), Temperature(1.0));
  CHECK(std::abs(b[0] - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(b[1] - 1.0 / 3.0) < 1e-15);

  const ProbDist c = normalize(logits({1.0, 3.0, 2.0}), Temperature::greedy());
  CHECK(c == ProbDist({0.0, 1.0, 0.0}));
}

TEST_CASE("normalize edge cases") {
  SUBCASE("greedy ties go to the lowest id") {
    CHECK(normalize(logits({1.0, 5.0, 5.0}), Temperature::greedy()) == ProbDist({0.0, 1.0, 0.0}));
  }
  SUBCASE("negative infinity gives exact zeros") {
    const ProbDist p = normalize(logits({kNegInf, 0.3, kNegInf, -2.0}), Temperature(1.0));
    CHECK(p[0] == 0.0);
    CHECK(p[2] == 0.0);
    CHECK(p[1] > 0.0);
  }
  SUBCASE("all negative infinity is an empty support") {
    CHECK_ERRC(normalize(logits({kNegInf, kNegInf}), Temperature(1.0)), Errc::EmptySupport);
    CHECK_ERRC(normalize(logits({kNegInf, kNegInf}), Temperature::greedy()), Errc::EmptySupport);
  }
  SUBCASE("large logits do not overflow") {
    const ProbDist p = normalize(logits({1000.0, 1000.0}), Temperature(1.0));
    CHECK(p[0] == doctest::Approx(0.5));
  }
  SUBCASE("temperature divides the logits") {
    const ProbDist hot = normalize(logits({0.0, 2.0}), Temperature(2.0));
    const ProbDist ref = normalize(logits({0.0, 1.0}), Temperature(1.0));
    CHECK(std::abs(hot[1] - ref[1]) < 1e-15);
  }
}

TEST_CASE("normalize is shift invariant") {
  Rng rng(7);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(16);
    for (double& x : z) x = g(rng);
    if (trial % 3 == 0) z[trial % 16] = kNegInf;
    std::vector<double> shifted = z;
    const double c = g(rng) * 10.0;
    for (double& x : shifted) x += c;
    const ProbDist p = normalize(logits(z), Temperature(0.7));
    const ProbDist q = normalize(logits(shifted), Temperature(0.7));
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (p[i] == 0.0) {
        CHECK(q[i] == 0.0);
      } else {
        CHECK(std::abs(p[i] - q[i]) <= 1e-12 * p[i]);
      }
    }
  }
}

TEST_CASE("embed_support examples") {
  const Vocabulary v4(4);
  const LogitVector e = embed_support(SparseLogits{{1.0, 2.0}, {1, 3}}, v4);
  REQUIRE(e.size() == 4);
  CHECK(e.values[0] == kNegInf);
  CHECK(e.values[1] == 1.0);
  CHECK(e.values[2] == kNegInf);
  CHECK(e.values[3] == 2.0);
  REQUIRE(e.support.has_value());
  CHECK(*e.support == std::vector<TokenId>{1, 3});

  const LogitVector full = embed_support(SparseLogits{{0.1, 0.2, 0.3, 0.4}, {0, 1, 2, 3}}, v4);
  CHECK(full.values == std::vector<double>{0.1, 0.2, 0.3, 0.4});
  CHECK(full.full_support());

  const LogitVector single = embed_support(SparseLogits{{0.0}, {0}}, Vocabulary(3));
  CHECK(normalize(single, Temperature(1.0)) == ProbDist({1.0, 0.0, 0.0}));
}

TEST_CASE("embed_support rejects bad supports") {
  const Vocabulary v4(4);
  CHECK_ERRC(embed_support(SparseLogits{{1.0, 2.0}, {1, 1}}, v4), Errc::InvalidSupport);
  CHECK_ERRC(embed_support(SparseLogits{{1.0, 2.0}, {2, 1}}, v4), Errc::InvalidSupport);
  CHECK_ERRC(embed_support(SparseLogits{{1.0}, {4}}, v4), Errc::InvalidSupport);
  CHECK_ERRC(embed_support(SparseLogits{{1.0}, {-1}}, v4), Errc::InvalidSupport);
  CHECK_ERRC(embed_support(SparseLogits{{1.0, 2.0}, {1}}, v4), Errc::DimensionMismatch);
}

TEST_CASE("embed then restrict is the identity on the support") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto support = specdec::test::random_subset(20, rng);
    SparseLogits s{{}, support};
    for (std::size_t i = 0; i < support.size(); ++i) s.values.push_back(uniform01(rng) * 4.0 - 2.0);
    const SparseLogits back = restrict_to_support(embed_support(s, Vocabulary(20)), support);
    CHECK(back.support == s.support);
    CHECK(back.values == s.values);
  }
}

TEST_CASE("overlap examples") {
  const ProbDist p({0.2, 0.3, 0.5});
  CHECK(overlap(p, p) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(overlap(ProbDist({1.0, 0.0}), ProbDist({0.0, 1.0})) == 0.0);
  CHECK(std::abs(overlap(ProbDist({0.5, 0.5}), ProbDist({0.9, 0.1})) - 0.6) < 1e-15);
  CHECK_ERRC(overlap(ProbDist({1.0, 0.0}), ProbDist({1.0, 0.0, 0.0})), Errc::DimensionMismatch);
}

TEST_CASE("overlap is bounded by the coverage of a truncated draft") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const ProbDist p = random_dist(12, rng);
    const auto keep = specdec::test::random_subset(12, rng);
    LogitVector z;
    z.values.assign(12, kNegInf);
    for (TokenId id : keep) z.values[static_cast<std::size_t>(id)] = uniform01(rng) * 6.0 - 3.0;
    const ProbDist q = normalize(z, Temperature(1.0));
    CHECK(overlap(p, q) <= coverage(p, keep) + 1e-15);
  }
}

TEST_CASE("overlap and total variation are complementary") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const ProbDist p = random_dist(10, rng);
    const ProbDist q = random_dist(10, rng);
    CHECK(std::abs(overlap(p, q) + total_variation(p, q) - 1.0) < 1e-12);
  }
}

TEST_CASE("sample never returns zero-mass tokens and matches frequencies") {
  Rng rng(99);
  const ProbDist p({0.0, 0.25, 0.0, 0.75});
  std::vector<int> counts(4, 0);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample(p, rng))];
  CHECK(counts[0] == 0);
  CHECK(counts[2] == 0);
  const double sigma = std::sqrt(draws * 0.25 * 0.75);
  CHECK(std::abs(counts[1] - draws * 0.25) < 4.0 * sigma);
}

TEST_CASE("coverage sums mass on the support") {
  const ProbDist p({0.1, 0.2, 0.3, 0.4});
  CHECK(coverage(p, std::vector<TokenId>{1, 3}) == doctest::Approx(0.6));
  CHECK_ERRC(coverage(p, std::vector<TokenId>{5}), Errc::InvalidSupport);
}
