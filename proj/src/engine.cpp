#include "specdec/engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

namespace specdec {

namespace {

constexpr double kResidualFloor = 1e-12;
constexpr double kResidualTolerance = 1e-9;

void check_vocab(const ProbDist& dist, std::size_t vocab) {
  if (dist.size() != vocab) throw Error(Errc::DimensionMismatch, "distribution size does not match vocabulary");
}

}  // namespace

std::vector<DraftedToken> draft_chain(const DrafterBackbone& backbone, const DraftHead<double>& head,
                                      std::span<const TokenId> context, std::size_t n, Temperature temperature,
                                      Rng& rng) {
  if (n == 0) throw Error(Errc::InvalidArgument, "draft_chain needs n >= 1");
  if (context.empty()) throw Error(Errc::InvalidContext, "empty context");
  std::vector<TokenId> ctx(context.begin(), context.end());
  std::vector<DraftedToken> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto h = drafter_hidden(backbone, ctx);
    LogitVector logits = forward(head, h);
    ProbDist q = normalize(logits, temperature);
    const TokenId token = temperature.is_greedy() ? argmax(q.probs()) : sample(q, rng);
    ctx.push_back(token);
    out.push_back(DraftedToken{token, std::move(q), std::move(logits.support)});
  }
  return out;
}

ProbDist residual_distribution(const ProbDist& p, const ProbDist& q) {
  if (p.size() != q.size()) throw Error(Errc::DimensionMismatch, "residual of distributions of different size");
  std::vector<double> r(p.size());
  double mass = 0.0;
  double alpha = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    r[i] = std::max(p[i] - q[i], 0.0);
    mass += r[i];
    alpha += std::min(p[i], q[i]);
  }
  if (std::abs(mass - (1.0 - alpha)) > kResidualTolerance) {
    throw Error(Errc::NumericalError, "residual mass " + std::to_string(mass) + " disagrees with 1 - overlap " +
                                          std::to_string(1.0 - alpha));
  }
  if (mass < kResidualFloor) return p;
  for (double& x : r) x /= mass;
  return ProbDist(std::move(r));
}

SpecRoundTrace verify(std::span<const ProbDist> p_list, std::span<const ProbDist> q_list,
                      std::span<const TokenId> drafted, Temperature temperature, Rng& rng) {
  const std::size_t n = drafted.size();
  if (q_list.size() != n || p_list.size() != n + 1) {
    throw Error(Errc::DimensionMismatch, "verify needs n drafts, n draft distributions and n+1 target distributions");
  }
  const std::size_t vocab = p_list[0].size();
  for (const auto& p : p_list) check_vocab(p, vocab);
  for (const auto& q : q_list) check_vocab(q, vocab);

  SpecRoundTrace trace;
  trace.drafted.assign(drafted.begin(), drafted.end());
  trace.draft_dists.assign(q_list.begin(), q_list.end());
  trace.positionwise_accept.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    const TokenId v = drafted[i];
    if (v < 0 || static_cast<std::size_t>(v) >= vocab) throw Error(Errc::InvalidArgument, "drafted token out of range");
    const auto vi = static_cast<std::size_t>(v);

    if (temperature.is_greedy()) {
      const TokenId target_top = argmax(p_list[i].probs());
      if (v == target_top) {
        trace.positionwise_accept.push_back(true);
        ++trace.accepted_count;
        continue;
      }
      trace.positionwise_accept.push_back(false);
      trace.bonus = target_top;
      return trace;
    }

    const double qv = q_list[i][vi];
    const double pv = p_list[i][vi];
    if (!(qv > 0.0)) {
      throw Error(Errc::DrafterSupportViolation,
                  "drafted token " + std::to_string(v) + " has zero draft probability at position " +
                      std::to_string(i + 1));
    }
    // Accept with probability min(1, p/q).
    if (uniform01(rng) * qv < pv) {
      trace.positionwise_accept.push_back(true);
      ++trace.accepted_count;
      continue;
    }
    trace.positionwise_accept.push_back(false);
    trace.bonus = sample(residual_distribution(p_list[i], q_list[i]), rng);
    return trace;
  }

  const ProbDist& last = p_list[n];
  trace.bonus = temperature.is_greedy() ? argmax(last.probs()) : sample(last, rng);
  return trace;
}

ProbDist exact_output_dist(const ProbDist& p, const ProbDist& q) {
  if (p.size() != q.size()) throw Error(Errc::DimensionMismatch, "exact_output_dist of different sizes");
  // Accepted mass: q(v) * min(1, p(v)/q(v)) = min(p(v), q(v)).
  std::vector<double> out(p.size());
  double alpha = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = std::min(p[i], q[i]);
    alpha += out[i];
  }
  const double reject = 1.0 - alpha;
  if (reject > 0.0) {
    const ProbDist residual = residual_distribution(p, q);
    for (std::size_t i = 0; i < p.size(); ++i) out[i] += reject * residual[i];
  }
  return ProbDist(std::move(out));
}

void AcceptanceStats::record(const SpecRoundTrace& trace, std::size_t drafted_per_round) {
  total_drafted += static_cast<std::int64_t>(drafted_per_round);
  total_accepted += static_cast<std::int64_t>(trace.accepted_count);
  ++rounds;
}

AcceptanceStats& AcceptanceStats::merge(const AcceptanceStats& other) {
  if (n != other.n && rounds > 0 && other.rounds > 0) {
    throw Error(Errc::InvalidArgument, "cannot merge acceptance stats with different n");
  }
  if (rounds == 0) n = other.n;
  total_drafted += other.total_drafted;
  total_accepted += other.total_accepted;
  rounds += other.rounds;
  return *this;
}

double acceptance_length(const AcceptanceStats& stats) {
  if (stats.total_drafted <= 0) throw Error(Errc::DivisionByZero, "no drafted tokens");
  return static_cast<double>(stats.n) * static_cast<double>(stats.total_accepted) /
             static_cast<double>(stats.total_drafted) +
         1.0;
}

double PositionStats::acceptance_rate() const noexcept {
  return reached > 0 ? static_cast<double>(accepted) / static_cast<double>(reached) : 0.0;
}

double PositionStats::mean_overlap() const noexcept {
  return reached > 0 ? overlap_sum / static_cast<double>(reached) : 0.0;
}

double PositionStats::mean_coverage() const noexcept {
  return reached > 0 ? coverage_sum / static_cast<double>(reached) : 0.0;
}

PositionStats& PositionStats::merge(const PositionStats& o) {
  reached += o.reached;
  accepted += o.accepted;
  overlap_sum += o.overlap_sum;
  coverage_sum += o.coverage_sum;
  uncovered_reached += o.uncovered_reached;
  uncovered_accepted += o.uncovered_accepted;
  return *this;
}

SimReport& SimReport::merge(const SimReport& other) {
  stats.merge(other.stats);
  if (positions.size() < other.positions.size()) positions.resize(other.positions.size());
  for (std::size_t i = 0; i < other.positions.size(); ++i) positions[i].merge(other.positions[i]);
  return *this;
}

namespace {

SimReport simulate_chain(const SimConfig& config, std::int64_t rounds, std::uint64_t chain_seed,
                         const ToyTargetModel& target, const DrafterBackbone& backbone,
                         const DraftHead<double>& head) {
  const std::size_t n = config.n;
  const std::size_t window = std::max(target.context_window, backbone.context_window);
  Rng draft_rng(derive_seed(chain_seed, "simulate.draft"));
  Rng verify_rng(derive_seed(chain_seed, "simulate.verify"));
  Rng prompt_rng(derive_seed(chain_seed, "simulate.prompt"));

  SimReport report;
  report.stats.n = static_cast<std::int64_t>(n);
  report.positions.resize(n);

  std::vector<TokenId> ctx(window);
  std::uniform_int_distribution<TokenId> any_token(0, static_cast<TokenId>(target.vocab.size() - 1));
  for (auto& t : ctx) t = any_token(prompt_rng);

  std::vector<ProbDist> p_list;
  std::vector<ProbDist> q_list;
  std::vector<TokenId> tokens;
  std::vector<TokenId> prefix;
  for (std::int64_t round = 0; round < rounds; ++round) {
    auto drafts = draft_chain(backbone, head, ctx, n, config.temperature, draft_rng);

    // The parallel verification pass, replayed position by position.
    p_list.clear();
    q_list.clear();
    tokens.clear();
    prefix = ctx;
    for (std::size_t i = 0; i <= n; ++i) {
      p_list.push_back(target_next_dist(target, prefix, config.temperature));
      if (i < n) {
        prefix.push_back(drafts[i].token);
        tokens.push_back(drafts[i].token);
        q_list.push_back(drafts[i].q);
      }
    }
    const auto trace = verify(p_list, q_list, tokens, config.temperature, verify_rng);
    report.stats.record(trace, n);

    for (std::size_t i = 0; i < trace.positionwise_accept.size(); ++i) {
      auto& pos = report.positions[i];
      const bool accepted = trace.positionwise_accept[i];
      ++pos.reached;
      pos.accepted += accepted ? 1 : 0;
      pos.overlap_sum += overlap(p_list[i], q_list[i]);
      const auto& support = drafts[i].support;
      pos.coverage_sum += support ? coverage(p_list[i], *support) : 1.0;
      if (support) {
        const TokenId top = argmax(p_list[i].probs());
        if (!std::binary_search(support->begin(), support->end(), top)) {
          ++pos.uncovered_reached;
          pos.uncovered_accepted += accepted ? 1 : 0;
        }
      }
    }

    for (std::size_t i = 0; i < trace.accepted_count; ++i) ctx.push_back(tokens[i]);
    ctx.push_back(trace.bonus);
    if (ctx.size() > 4 * window) ctx.erase(ctx.begin(), ctx.end() - static_cast<std::ptrdiff_t>(window));
  }
  return report;
}

}  // namespace

SimReport run_simulation(const SimConfig& config, const ToyTargetModel& target, const DrafterBackbone& backbone,
                         const DraftHead<double>& head) {
  if (config.n == 0) throw Error(Errc::ConfigError, "n must be >= 1");
  if (config.rounds <= 0) throw Error(Errc::ConfigError, "rounds must be >= 1");
  if (config.replications == 0) throw Error(Errc::ConfigError, "replications must be >= 1");
  if (target.vocab.size() != config.vocab_size || backbone.vocab.size() != config.vocab_size ||
      static_cast<std::int64_t>(shape_of(head).v) != config.vocab_size) {
    throw Error(Errc::DimensionMismatch, "target, drafter and head must share vocab_size " +
                                             std::to_string(config.vocab_size));
  }
  if (shape_of(head).d != backbone.hidden_size()) {
    throw Error(Errc::DimensionMismatch, "head hidden size does not match the drafter backbone");
  }
  validate(head);

  const std::size_t reps = config.replications;
  std::vector<SimReport> parts(reps);
  auto run_one = [&](std::size_t r) {
    const std::int64_t base = config.rounds / static_cast<std::int64_t>(reps);
    const std::int64_t extra = static_cast<std::int64_t>(r) < config.rounds % static_cast<std::int64_t>(reps) ? 1 : 0;
    const std::int64_t rounds = base + extra;
    if (rounds == 0) {
      parts[r].stats.n = static_cast<std::int64_t>(config.n);
      parts[r].positions.resize(config.n);
      return;
    }
    parts[r] = simulate_chain(config, rounds, derive_seed(config.seed, "simulate.chain", r), target, backbone, head);
  };

  const std::size_t threads = std::clamp<std::size_t>(config.threads, 1, reps);
  if (threads == 1) {
    for (std::size_t r = 0; r < reps; ++r) run_one(r);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t r = w; r < reps; r += threads) run_one(r);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  SimReport report = std::move(parts[0]);
  for (std::size_t r = 1; r < reps; ++r) report.merge(parts[r]);
  return report;
}

}  // namespace specdec
