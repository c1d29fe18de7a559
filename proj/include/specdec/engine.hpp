#pragma once

// Chain drafting, rejection-sampling verification and acceptance accounting.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "specdec/core.hpp"
#include "specdec/heads.hpp"
#include "specdec/models.hpp"

namespace specdec {

struct DraftedToken {
  TokenId token = 0;
  ProbDist q;
  /// Support of the head's logits; empty optional means the full vocabulary.
  std::optional<std::vector<TokenId>> support;
};

/// Drafts `n` tokens autoregressively. Each q is embedded in the full
/// vocabulary, so tokens outside a restricted head's support carry q = 0.
std::vector<DraftedToken> draft_chain(const DrafterBackbone& backbone, const DraftHead<double>& head,
                                      std::span<const TokenId> context, std::size_t n, Temperature temperature,
                                      Rng& rng);

struct SpecRoundTrace {
  std::vector<TokenId> drafted;
  std::vector<ProbDist> draft_dists;
  std::size_t accepted_count = 0;
  TokenId bonus = 0;
  /// One entry per verified position; only the last entry can be false.
  std::vector<bool> positionwise_accept;
};

/// Verifies one drafted chain against the target distributions.
///
/// `p_list` has one more entry than `drafted`: p_list[n] is the target at
/// the position after the last draft and supplies the bonus token when every
/// draft is accepted. For t > 0, position i is accepted with probability
/// min(1, p_i(v_i) / q_i(v_i)) and the first rejection is replaced by a draw
/// from normalize(max(p_i - q_i, 0)). For t = 0, a draft is accepted iff it
/// equals argmax p_i.
SpecRoundTrace verify(std::span<const ProbDist> p_list, std::span<const ProbDist> q_list,
                      std::span<const TokenId> drafted, Temperature temperature, Rng& rng);

/// normalize(max(p - q, 0)), falling back to p when the residual mass is
/// below 1e-12. Throws NumericalError if the residual mass disagrees with
/// 1 - overlap(p, q) by more than 1e-9.
ProbDist residual_distribution(const ProbDist& p, const ProbDist& q);

/// Distribution of the token emitted at one position by draft-then-verify,
/// computed in closed form. Equals p for any q.
ProbDist exact_output_dist(const ProbDist& p, const ProbDist& q);

struct AcceptanceStats {
  std::int64_t total_drafted = 0;
  std::int64_t total_accepted = 0;
  std::int64_t rounds = 0;
  std::int64_t n = 0;

  void record(const SpecRoundTrace& trace, std::size_t drafted_per_round);
  AcceptanceStats& merge(const AcceptanceStats& other);
};

/// n * accepted / drafted + 1. Every round counts n drafted tokens.
double acceptance_length(const AcceptanceStats& stats);

struct PositionStats {
  std::int64_t reached = 0;
  std::int64_t accepted = 0;
  double overlap_sum = 0.0;   // sum of overlap(p_i, q_i) over reached rounds
  double coverage_sum = 0.0;  // sum of p_i mass on the head's support
  /// Reached positions whose argmax p_i lies outside the head's support,
  /// and how many of those were accepted.
  std::int64_t uncovered_reached = 0;
  std::int64_t uncovered_accepted = 0;

  double acceptance_rate() const noexcept;
  double mean_overlap() const noexcept;
  double mean_coverage() const noexcept;
  PositionStats& merge(const PositionStats& other);
};

struct SimConfig {
  std::uint64_t seed = 0;
  std::int64_t vocab_size = 512;
  std::size_t n = 6;
  std::int64_t rounds = 10000;
  Temperature temperature{1.0};
  /// Independent chains with derived seeds; results do not depend on `threads`.
  std::size_t replications = 1;
  std::size_t threads = 1;
};

struct SimReport {
  AcceptanceStats stats;
  std::vector<PositionStats> positions;

  double tau() const { return acceptance_length(stats); }
  SimReport& merge(const SimReport& other);
};

SimReport run_simulation(const SimConfig& config, const ToyTargetModel& target, const DrafterBackbone& backbone,
                         const DraftHead<double>& head);

}  // namespace specdec
