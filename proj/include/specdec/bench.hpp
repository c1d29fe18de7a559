#pragma once

// Wall-clock measurement of head projections and of the draft/verify round.
//
// Protocol: warmup iterations are run and discarded, then each rep times one
// pass over a batch of seeded hidden vectors. Reported statistics are the
// median and nearest-rank 10th/90th percentiles of per-rep seconds. A checksum
// of every output is kept so the compiler cannot drop the work.

#include <cstdint>
#include <span>
#include <vector>

#include "specdec/heads.hpp"
#include "specdec/models.hpp"
#include "specdec/perfmodel.hpp"

namespace specdec {

struct TimingSample {
  double median_s = 0.0;
  double p10_s = 0.0;
  double p90_s = 0.0;
  int reps = 0;
  int warmup_reps = 0;
  std::size_t batch = 0;
  std::size_t v = 0;
  std::size_t d = 0;
  double checksum = 0.0;
};

struct BenchConfig {
  std::size_t batch = 1;
  int reps = 30;
  int warmup = 3;
  std::uint64_t seed = 0;
};

void validate(const BenchConfig& config);

/// Summary statistics of per-rep durations. Needs at least 5 values.
TimingSample summarize(std::vector<double> seconds);

template <class T>
TimingSample measure_head(const DraftHead<T>& head, const BenchConfig& config);

/// Ratio of medians. Throws InvalidArgument if the samples were taken at
/// different (V, d, batch).
double nu_of(const TimingSample& head_sample, const TimingSample& full_sample);

/// Per-round phase times, averaged over `reps` rounds of n drafted tokens.
/// Backbone and head are timed separately at every drafted position; sampling
/// and bookkeeping fall into overhead; verify is n + 1 target replays.
TimingBreakdown decompose_draft(const ToyTargetModel& target, const DrafterBackbone& backbone,
                                const DraftHead<double>& head, std::span<const TokenId> context, std::size_t n,
                                int reps, std::uint64_t seed);

/// Mean seconds per round of backbone + head forwards over a recorded chain,
/// timed as one region per position. Used to check that the split timings of
/// decompose_draft add up.
double time_draft_forwards(const DrafterBackbone& backbone, const DraftHead<double>& head,
                           std::span<const TokenId> context, std::span<const TokenId> drafted, int reps);

/// Kendall rank correlation over pairs whose FLOP counts differ by at least
/// `min_ratio`. Returns 1 when no pair qualifies.
double kendall_tau_flops(std::span<const std::uint64_t> flops, std::span<const double> seconds,
                         double min_ratio = 2.0);

}  // namespace specdec
