#include <algorithm>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "specdec/bench.hpp"

using namespace specdec;

TEST_CASE("summarize uses the median and nearest-rank percentiles") {
  const TimingSample s = summarize({5.0, 1.0, 4.0, 2.0, 3.0});
  CHECK(s.median_s == 3.0);
  CHECK(s.p10_s == 1.0);
  CHECK(s.p90_s == 5.0);
  CHECK(s.reps == 5);
  std::vector<double> ten;
  for (int i = 1; i <= 10; ++i) ten.push_back(i);
  const TimingSample t = summarize(ten);
  CHECK(t.median_s == 5.5);
  CHECK(t.p10_s == 1.0);
  CHECK(t.p90_s == 9.0);
  CHECK_ERRC(summarize({1.0, 2.0, 3.0, 4.0}), Errc::InvalidArgument);
}

TEST_CASE("measure_head ordering for every kind") {
  BenchConfig c;
  c.reps = 5;
  c.warmup = 1;
  c.batch = 2;
  const std::vector<DraftHead<float>> heads{make_full_head<float>(4096, 64, 1), make_slimspec_head<float>(4096, 64, 8, 1),
                                            make_truncated_head<float>(4096, 64, {0, 5, 100, 4095}, 1),
                                            make_routed_head<float>(4096, 64, 8, 32, 1)};
  for (const auto& head : heads) {
    const TimingSample s = measure_head(head, c);
    CHECK(s.median_s > 0.0);
    CHECK(s.p10_s <= s.median_s);
    CHECK(s.median_s <= s.p90_s);
    CHECK(s.reps == 5);
    CHECK(s.warmup_reps == 1);
    CHECK(s.batch == 2);
    CHECK(s.v == 4096);
    CHECK(s.d == 64);
  }
}

TEST_CASE("measure_head validates its config") {
  BenchConfig c;
  c.reps = 4;
  CHECK_ERRC(measure_head(DraftHead<float>(make_full_head<float>(64, 8, 1)), c), Errc::ConfigError);
  c.reps = 5;
  c.batch = 0;
  CHECK_ERRC(measure_head(DraftHead<float>(make_full_head<float>(64, 8, 1)), c), Errc::ConfigError);
}

TEST_CASE("same head measured twice agrees within the noise budget") {
  const DraftHead<float> head = make_full_head<float>(32768, 256, 3);
  BenchConfig c;
  c.reps = 30;
  const TimingSample a = measure_head(head, c);
  const TimingSample b = measure_head(head, c);
  CHECK(a.checksum == b.checksum);
  const double ratio = a.median_s / b.median_s;
  MESSAGE("repeat ratio ", ratio);
  CHECK(ratio > 0.75);
  CHECK(ratio < 1.25);
  const double nu = nu_of(a, b);
  CHECK(nu >= 0.8);
  CHECK(nu <= 1.25);
}

TEST_CASE("larger hidden size costs more") {
  BenchConfig c;
  c.reps = 9;
  const TimingSample small = measure_head(DraftHead<float>(make_full_head<float>(131072, 1024, 1)), c);
  const TimingSample large = measure_head(DraftHead<float>(make_full_head<float>(131072, 2048, 1)), c);
  MESSAGE("d=1024 ", small.median_s, " s, d=2048 ", large.median_s, " s");
  CHECK(large.median_s > small.median_s);
}

TEST_CASE("nu_of requires matching settings") {
  TimingSample a;
  a.v = 10;
  a.d = 4;
  a.batch = 1;
  a.median_s = 2.0;
  TimingSample b = a;
  b.median_s = 4.0;
  CHECK(nu_of(a, b) == 0.5);
  b.d = 8;
  CHECK_ERRC(nu_of(a, b), Errc::InvalidArgument);
}

TEST_CASE("kendall tau over FLOP-separated pairs") {
  const std::vector<std::uint64_t> flops{100, 200, 50, 110};
  CHECK(kendall_tau_flops(flops, std::vector<double>{1.0, 2.0, 0.5, 0.9}) == 1.0);
  CHECK(kendall_tau_flops(flops, std::vector<double>{2.0, 1.0, 0.5, 1.5}) < 1.0);
  CHECK(kendall_tau_flops(std::vector<std::uint64_t>{100, 150}, std::vector<double>{2.0, 1.0}) == 1.0);
}

TEST_CASE("decompose_draft parts add up") {
  ToyTargetConfig tc;
  tc.vocab_size = 131072;
  const ToyTargetModel target = make_toy_target(tc);
  const DrafterBackbone backbone = make_drafter_backbone(131072, 64, 4, 2);
  const DraftHead<double> head = make_full_head<double>(131072, 64, 2);
  const std::vector<TokenId> ctx{1, 2, 3, 4};
  const TimingBreakdown t = decompose_draft(target, backbone, head, ctx, 6, 10, 1);
  CHECK(t.t_backbone > 0.0);
  CHECK(t.t_head > 0.0);
  CHECK(t.t_verify > 0.0);
  CHECK(t.t_overhead >= 0.0);
  MESSAGE("head fraction ", t.t_head / t.t_draft());
  CHECK(t.t_head / t.t_draft() > 0.45);

  const TimingBreakdown none = decompose_draft(target, backbone, head, ctx, 0, 5, 1);
  CHECK(none.t_draft() == 0.0);
  CHECK_ERRC(decompose_draft(target, backbone, make_full_head<double>(131072, 32, 2), ctx, 2, 2, 1),
             Errc::DimensionMismatch);
  CHECK_ERRC(decompose_draft(target, backbone, head, ctx, 2, 0, 1), Errc::InvalidArgument);
}

TEST_CASE("split draft timings match one-region timing") {
  // Sized so that head and target stay cache-resident in both measurements;
  // at V = 131072 the verify pass of decompose_draft evicts the head weights
  // and the comparison would measure cache state, not bookkeeping.
  ToyTargetConfig tc;
  tc.vocab_size = 16384;
  const ToyTargetModel target = make_toy_target(tc);
  const DrafterBackbone backbone = make_drafter_backbone(16384, 64, 4, 2);
  const DraftHead<double> head = make_full_head<double>(16384, 64, 2);
  const std::vector<TokenId> ctx{1, 2, 3, 4};
  Rng rng(3);
  std::vector<TokenId> drafted;
  for (int i = 0; i < 6; ++i) drafted.push_back(static_cast<TokenId>(rng() % 16384));
  // Alternate single-round measurements and take the median of the per-pair
  // ratio, so clock drift and interrupts hit both sides alike.
  std::vector<double> ratios;
  for (int round = 0; round < 301; ++round) {
    const double split = decompose_draft(target, backbone, head, ctx, 6, 1, round).t_draft();
    const double joint = time_draft_forwards(backbone, head, ctx, drafted, 1);
    ratios.push_back(split / joint);
  }
  std::nth_element(ratios.begin(), ratios.begin() + 150, ratios.end());
  const double ratio = ratios[150];
  MESSAGE("median split / joint ", ratio);
  CHECK(std::abs(ratio - 1.0) <= 0.05);
}
