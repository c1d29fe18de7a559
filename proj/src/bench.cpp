#include "specdec/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "specdec/engine.hpp"

namespace specdec {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <class T>
double fold(const HeadWorkspace<T>& ws) {
  double acc = 0.0;
  for (T x : ws.logits) acc += static_cast<double>(x);
  for (TokenId id : ws.support) acc += static_cast<double>(id) * 1e-9;
  return acc;
}

}  // namespace

void validate(const BenchConfig& c) {
  if (c.batch < 1) throw Error(Errc::ConfigError, "bench batch must be >= 1");
  if (c.reps < 5) throw Error(Errc::ConfigError, "bench needs reps >= 5");
  if (c.warmup < 0) throw Error(Errc::ConfigError, "warmup must be >= 0");
}

TimingSample summarize(std::vector<double> seconds) {
  if (seconds.size() < 5) throw Error(Errc::InvalidArgument, "need at least 5 timing reps");
  std::sort(seconds.begin(), seconds.end());
  const std::size_t n = seconds.size();
  const auto rank = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    return seconds[std::clamp<std::size_t>(idx, 1, n) - 1];
  };
  TimingSample s;
  s.median_s = n % 2 == 1 ? seconds[n / 2] : 0.5 * (seconds[n / 2 - 1] + seconds[n / 2]);
  s.p10_s = std::min(rank(0.10), s.median_s);
  s.p90_s = std::max(rank(0.90), s.median_s);
  s.reps = static_cast<int>(n);
  return s;
}

template <class T>
TimingSample measure_head(const DraftHead<T>& head, const BenchConfig& config) {
  validate(config);
  validate(head);
  const HeadShape shape = shape_of(head);
  const std::size_t d = shape.d;

  Rng rng(derive_seed(config.seed, "bench.hidden"));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<T> hidden(config.batch * d);
  for (T& x : hidden) x = static_cast<T>(unit(rng));

  HeadWorkspace<T> ws;
  double checksum = 0.0;
  const auto pass = [&] {
    for (std::size_t b = 0; b < config.batch; ++b) {
      project(head, std::span<const T>(hidden.data() + b * d, d), ws);
      checksum += fold(ws);
    }
  };

  for (int i = 0; i < config.warmup; ++i) pass();
  std::vector<double> seconds;
  seconds.reserve(static_cast<std::size_t>(config.reps));
  for (int i = 0; i < config.reps; ++i) {
    const auto start = Clock::now();
    pass();
    seconds.push_back(seconds_since(start));
  }

  TimingSample s = summarize(std::move(seconds));
  s.warmup_reps = config.warmup;
  s.batch = config.batch;
  s.v = shape.v;
  s.d = d;
  s.checksum = checksum;
  return s;
}

double nu_of(const TimingSample& head_sample, const TimingSample& full_sample) {
  if (head_sample.v != full_sample.v || head_sample.d != full_sample.d || head_sample.batch != full_sample.batch) {
    throw Error(Errc::InvalidArgument, "nu needs samples at the same (V, d, batch)");
  }
  if (!(full_sample.median_s > 0.0)) throw Error(Errc::DivisionByZero, "full-head median is zero");
  return head_sample.median_s / full_sample.median_s;
}

TimingBreakdown decompose_draft(const ToyTargetModel& target, const DrafterBackbone& backbone,
                                const DraftHead<double>& head, std::span<const TokenId> context, std::size_t n,
                                int reps, std::uint64_t seed) {
  if (reps < 1) throw Error(Errc::InvalidArgument, "decompose_draft needs reps >= 1");
  if (context.empty()) throw Error(Errc::InvalidContext, "empty context");
  validate(head);
  if (shape_of(head).d != backbone.hidden_size()) {
    throw Error(Errc::DimensionMismatch, "head and backbone hidden sizes differ");
  }

  Rng rng(derive_seed(seed, "bench.decompose"));
  const Temperature temp(1.0);
  TimingBreakdown sum;
  volatile double sink = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto round_start = Clock::now();
    std::vector<TokenId> ctx(context.begin(), context.end());
    double t_backbone = 0.0;
    double t_head = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto start = Clock::now();
      const auto h = drafter_hidden(backbone, ctx);
      t_backbone += seconds_since(start);

      start = Clock::now();
      const LogitVector logits = forward(head, h);
      t_head += seconds_since(start);

      ctx.push_back(sample(normalize(logits, temp), rng));
    }

    const auto verify_start = Clock::now();
    const std::size_t prefix = context.size();
    for (std::size_t i = 0; i <= n; ++i) {
      const ProbDist p = target_next_dist(target, std::span<const TokenId>(ctx.data(), prefix + i), temp);
      sink = sink + p[0];
    }
    const double t_verify = seconds_since(verify_start);
    const double total = seconds_since(round_start);

    sum.t_backbone += t_backbone;
    sum.t_head += t_head;
    sum.t_verify += t_verify;
    sum.t_overhead += std::max(0.0, total - t_backbone - t_head - t_verify);
  }
  const double inv = 1.0 / static_cast<double>(reps);
  return TimingBreakdown{sum.t_overhead * inv, sum.t_verify * inv, sum.t_backbone * inv, sum.t_head * inv};
}

double time_draft_forwards(const DrafterBackbone& backbone, const DraftHead<double>& head,
                           std::span<const TokenId> context, std::span<const TokenId> drafted, int reps) {
  if (reps < 1) throw Error(Errc::InvalidArgument, "time_draft_forwards needs reps >= 1");
  if (context.empty()) throw Error(Errc::InvalidContext, "empty context");
  std::vector<TokenId> ctx(context.begin(), context.end());
  ctx.insert(ctx.end(), drafted.begin(), drafted.end());
  volatile double sink = 0.0;
  double total = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    for (std::size_t i = 0; i < drafted.size(); ++i) {
      const auto start = Clock::now();
      const auto h = drafter_hidden(backbone, std::span<const TokenId>(ctx.data(), context.size() + i));
      const LogitVector logits = forward(head, h);
      total += seconds_since(start);
      sink = sink + logits.values[0];
    }
  }
  return total / static_cast<double>(reps);
}

double kendall_tau_flops(std::span<const std::uint64_t> flops, std::span<const double> seconds, double min_ratio) {
  if (flops.size() != seconds.size()) throw Error(Errc::DimensionMismatch, "flops and timings differ in length");
  std::int64_t concordant = 0;
  std::int64_t discordant = 0;
  for (std::size_t i = 0; i < flops.size(); ++i) {
    for (std::size_t j = i + 1; j < flops.size(); ++j) {
      const double lo = static_cast<double>(std::min(flops[i], flops[j]));
      const double hi = static_cast<double>(std::max(flops[i], flops[j]));
      if (hi < min_ratio * lo) continue;
      const bool flops_order = flops[i] < flops[j];
      const bool time_order = seconds[i] < seconds[j];
      if (flops_order == time_order) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const std::int64_t pairs = concordant + discordant;
  if (pairs == 0) return 1.0;
  return static_cast<double>(concordant - discordant) / static_cast<double>(pairs);
}

template TimingSample measure_head(const DraftHead<float>&, const BenchConfig&);
template TimingSample measure_head(const DraftHead<double>&, const BenchConfig&);

}  // namespace specdec
