#pragma once

// Vocabularies, dense distributions, temperature-controlled normalization and
// support embedding. Distribution math is always 64-bit.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "specdec/error.hpp"
#include "specdec/rng.hpp"

namespace specdec {

using TokenId = std::int32_t;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kProbTolerance = 1e-9;

class Vocabulary {
 public:
  explicit Vocabulary(std::int64_t size);

  std::int64_t size() const noexcept { return size_; }
  bool contains(std::int64_t id) const noexcept { return id >= 0 && id < size_; }
  void check(TokenId id) const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::int64_t size_;
};

/// Decoding temperature. Zero means greedy.
class Temperature {
 public:
  explicit Temperature(double t);
  static Temperature greedy() { return Temperature(0.0); }

  double value() const noexcept { return t_; }
  bool is_greedy() const noexcept { return t_ == 0.0; }

 private:
  double t_;
};

/// Dense pre-softmax scores over the whole vocabulary. When `support` is set,
/// entries outside it hold -inf.
struct LogitVector {
  std::vector<double> values;
  std::optional<std::vector<TokenId>> support;

  std::size_t size() const noexcept { return values.size(); }
  bool full_support() const noexcept { return !support.has_value(); }
};

/// Compact logits over an explicit, strictly increasing support.
struct SparseLogits {
  std::vector<double> values;
  std::vector<TokenId> support;
};

class ProbDist {
 public:
  /// Validates non-negativity and sum-to-one within kProbTolerance.
  explicit ProbDist(std::vector<double> probs);

  static ProbDist point_mass(std::size_t size, TokenId id);
  static ProbDist uniform(std::size_t size);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const noexcept { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  friend bool operator==(const ProbDist&, const ProbDist&) = default;

 private:
  struct Unchecked {};
  ProbDist(std::vector<double> probs, Unchecked) : probs_(std::move(probs)) {}
  friend ProbDist normalize(const LogitVector&, Temperature);

  std::vector<double> probs_;
};

/// Lowest index among the maximal finite entries. Throws EmptySupport when no
/// entry is finite.
TokenId argmax(std::span<const double> values);

ProbDist normalize(const LogitVector& logits, Temperature temperature);

/// Checks that `support` is strictly increasing and inside [0, vocab_size).
void validate_support(std::span<const TokenId> support, std::int64_t vocab_size);

LogitVector embed_support(const SparseLogits& sparse, const Vocabulary& vocab);
SparseLogits restrict_to_support(const LogitVector& logits, std::span<const TokenId> support);

/// Sum of min(p, q): the per-position acceptance probability.
double overlap(const ProbDist& p, const ProbDist& q);

/// Probability mass of `dist` on `support`.
double coverage(const ProbDist& dist, std::span<const TokenId> support);

/// Draws a token by inverse CDF; only tokens with positive mass can be returned.
TokenId sample(const ProbDist& dist, Rng& rng);

double total_variation(const ProbDist& p, const ProbDist& q);

}  // namespace specdec
