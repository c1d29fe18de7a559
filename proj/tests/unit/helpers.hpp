#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "doctest.h"
#include "specdec/core.hpp"
#include "specdec/error.hpp"

namespace specdec::test {

/// Runs `expr` and checks that it throws specdec::Error with `code`.
#define CHECK_ERRC(expr, errc)                                 \
  do {                                                         \
    bool thrown_ = false;                                      \
    try {                                                      \
      (void)(expr);                                            \
    } catch (const ::specdec::Error& e_) {                     \
      thrown_ = true;                                          \
      CHECK_MESSAGE(e_.code() == (errc), e_.what());           \
    }                                                          \
    CHECK_MESSAGE(thrown_, "expected an error from " #expr);   \
  } while (0)

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

/// Random distribution with full support, softmax of N(0, scale^2) logits.
inline ProbDist random_dist(std::size_t v, Rng& rng, double scale = 1.5) {
  std::normal_distribution<double> g(0.0, scale);
  LogitVector z;
  z.values.resize(v);
  for (double& x : z.values) x = g(rng);
  return normalize(z, Temperature(1.0));
}

/// Random distribution on a random non-empty subset of the vocabulary.
inline ProbDist random_sparse_dist(std::size_t v, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.5);
  LogitVector z;
  z.values.resize(v);
  bool any = false;
  for (double& x : z.values) {
    if (uniform01(rng) < 0.5) {
      x = kNegInf;
    } else {
      x = g(rng);
      any = true;
    }
  }
  if (!any) z.values[static_cast<std::size_t>(rng() % v)] = 0.0;
  return normalize(z, Temperature(1.0));
}

/// Random strictly increasing non-empty subset of [0, v).
inline std::vector<TokenId> random_subset(std::size_t v, Rng& rng) {
  std::vector<TokenId> keep;
  for (std::size_t i = 0; i < v; ++i) {
    if (uniform01(rng) < 0.5) keep.push_back(static_cast<TokenId>(i));
  }
  if (keep.empty()) keep.push_back(static_cast<TokenId>(rng() % v));
  return keep;
}

}  // namespace specdec::test
