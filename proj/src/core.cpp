#include "specdec/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace specdec {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::EmptySupport: return "EmptySupport";
    case Errc::InvalidSupport: return "InvalidSupport";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidContext: return "InvalidContext";
    case Errc::DrafterSupportViolation: return "DrafterSupportViolation";
    case Errc::NumericalError: return "NumericalError";
    case Errc::DivisionByZero: return "DivisionByZero";
    case Errc::InfiniteKL: return "InfiniteKL";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

bool is_numeric(Errc code) noexcept {
  switch (code) {
    case Errc::EmptySupport:
    case Errc::DrafterSupportViolation:
    case Errc::NumericalError:
    case Errc::DivisionByZero:
    case Errc::InfiniteKL:
      return true;
    default:
      return false;
  }
}

Vocabulary::Vocabulary(std::int64_t size) : size_(size) {
  if (size < 2) {
    throw Error(Errc::InvalidArgument, "vocabulary size must be >= 2, got " + std::to_string(size));
  }
}

void Vocabulary::check(TokenId id) const {
  if (!contains(id)) {
    throw Error(Errc::InvalidArgument,
                "token id " + std::to_string(id) + " outside [0, " + std::to_string(size_) + ")");
  }
}

Temperature::Temperature(double t) : t_(t) {
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw Error(Errc::InvalidArgument, "temperature must be finite and >= 0");
  }
}

ProbDist::ProbDist(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw Error(Errc::InvalidArgument, "empty distribution");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(Errc::InvalidArgument, "probabilities must be finite and non-negative");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbTolerance) {
    throw Error(Errc::InvalidArgument, "probabilities sum to " + std::to_string(sum));
  }
}

ProbDist ProbDist::point_mass(std::size_t size, TokenId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= size) {
    throw Error(Errc::InvalidArgument, "point mass outside distribution");
  }
  std::vector<double> probs(size, 0.0);
  probs[static_cast<std::size_t>(id)] = 1.0;
  return ProbDist(std::move(probs), Unchecked{});
}

ProbDist ProbDist::uniform(std::size_t size) {
  if (size == 0) throw Error(Errc::InvalidArgument, "empty distribution");
  return ProbDist(std::vector<double>(size, 1.0 / static_cast<double>(size)));
}

TokenId argmax(std::span<const double> values) {
  std::ptrdiff_t best = -1;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) continue;
    if (best < 0 || values[i] > values[static_cast<std::size_t>(best)]) {
      best = static_cast<std::ptrdiff_t>(i);
    }
  }
  if (best < 0) throw Error(Errc::EmptySupport, "no finite logit");
  return static_cast<TokenId>(best);
}

ProbDist normalize(const LogitVector& logits, Temperature temperature) {
  const auto& z = logits.values;
  const TokenId top = argmax(z);
  if (temperature.is_greedy()) return ProbDist::point_mass(z.size(), top);

  const double zmax = z[static_cast<std::size_t>(top)];
  const double inv_t = 1.0 / temperature.value();
  std::vector<double> probs(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    // exp(-inf) is exactly 0, so masked entries stay exactly zero.
    probs[i] = std::isfinite(z[i]) ? std::exp((z[i] - zmax) * inv_t) : 0.0;
    sum += probs[i];
  }
  const double inv_sum = 1.0 / sum;
  for (double& p : probs) p *= inv_sum;
  return ProbDist(std::move(probs), ProbDist::Unchecked{});
}

void validate_support(std::span<const TokenId> support, std::int64_t vocab_size) {
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (support[i] < 0 || support[i] >= vocab_size) {
      throw Error(Errc::InvalidSupport, "support id " + std::to_string(support[i]) + " out of range");
    }
    if (i > 0 && support[i] <= support[i - 1]) {
      throw Error(Errc::InvalidSupport, "support must be strictly increasing (duplicate or unsorted id " +
                                            std::to_string(support[i]) + ")");
    }
  }
}

LogitVector embed_support(const SparseLogits& sparse, const Vocabulary& vocab) {
  if (sparse.values.size() != sparse.support.size()) {
    throw Error(Errc::DimensionMismatch, "sparse values and support differ in length");
  }
  validate_support(sparse.support, vocab.size());
  LogitVector out;
  out.values.assign(static_cast<std::size_t>(vocab.size()), kNegInf);
  for (std::size_t i = 0; i < sparse.support.size(); ++i) {
    out.values[static_cast<std::size_t>(sparse.support[i])] = sparse.values[i];
  }
  if (sparse.support.size() != static_cast<std::size_t>(vocab.size())) out.support = sparse.support;
  return out;
}

SparseLogits restrict_to_support(const LogitVector& logits, std::span<const TokenId> support) {
  validate_support(support, static_cast<std::int64_t>(logits.size()));
  SparseLogits out;
  out.support.assign(support.begin(), support.end());
  out.values.reserve(support.size());
  for (TokenId id : support) out.values.push_back(logits.values[static_cast<std::size_t>(id)]);
  return out;
}

double overlap(const ProbDist& p, const ProbDist& q) {
  if (p.size() != q.size()) throw Error(Errc::DimensionMismatch, "overlap of distributions of different size");
  double alpha = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) alpha += std::min(p[i], q[i]);
  return std::clamp(alpha, 0.0, 1.0);
}

double coverage(const ProbDist& dist, std::span<const TokenId> support) {
  double mass = 0.0;
  for (TokenId id : support) {
    if (id < 0 || static_cast<std::size_t>(id) >= dist.size()) {
      throw Error(Errc::InvalidSupport, "coverage support id out of range");
    }
    mass += dist[static_cast<std::size_t>(id)];
  }
  return mass;
}

TokenId sample(const ProbDist& dist, Rng& rng) {
  const double u = uniform01(rng);
  double cdf = 0.0;
  std::ptrdiff_t last_positive = -1;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    last_positive = static_cast<std::ptrdiff_t>(i);
    cdf += dist[i];
    if (u < cdf) return static_cast<TokenId>(i);
  }
  // Rounding left u above the accumulated mass; the last supported token absorbs it.
  return static_cast<TokenId>(last_positive);
}

double total_variation(const ProbDist& p, const ProbDist& q) {
  if (p.size() != q.size()) throw Error(Errc::DimensionMismatch, "total variation of different sizes");
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

}  // namespace specdec
