#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "specdec/models.hpp"

using namespace specdec;

namespace {

ToyTargetConfig small_config() {
  ToyTargetConfig c;
  c.vocab_size = 16;
  c.embed_dim = 8;
  c.mlp_hidden = 16;
  c.seed = 21;
  return c;
}

}  // namespace

TEST_CASE("toy target is referentially transparent in seed and dims") {
  const ToyTargetConfig c = small_config();
  const ToyTargetModel a = make_toy_target(c);
  const ToyTargetModel b = make_toy_target(c);
  CHECK(a.embed == b.embed);
  CHECK(a.mlp_w1 == b.mlp_w1);
  CHECK(a.mlp_w2 == b.mlp_w2);
  ToyTargetConfig other = c;
  other.seed = 22;
  CHECK_FALSE(make_toy_target(other).mlp_w2 == a.mlp_w2);
  CHECK(a.embed.all_finite());
  CHECK(a.mlp_w2.rows() == 16);
  CHECK(a.mlp_w2.cols() == 16);
}

TEST_CASE("target_next_dist examples") {
  const ToyTargetModel m = make_toy_target(ToyTargetConfig{});
  const std::vector<TokenId> ctx{3, 17, 200};
  const ProbDist p1 = target_next_dist(m, ctx, Temperature(1.0));
  const ProbDist p2 = target_next_dist(m, ctx, Temperature(1.0));
  CHECK(p1 == p2);

  double sum = 0.0;
  double min_entry = 1.0;
  for (double x : p1.probs()) {
    sum += x;
    min_entry = std::min(min_entry, x);
  }
  CHECK(min_entry > 0.0);
  CHECK(std::abs(sum - 1.0) < 1e-9);

  const ProbDist p3 = target_next_dist(m, std::vector<TokenId>{5, 9, 9, 400}, Temperature(1.0));
  CHECK(total_variation(p1, p3) > 0.0);

  CHECK_ERRC(target_next_dist(m, std::vector<TokenId>{}, Temperature(1.0)), Errc::InvalidContext);
  CHECK_ERRC(target_next_dist(m, std::vector<TokenId>{512}, Temperature(1.0)), Errc::InvalidContext);
}

TEST_CASE("full support at t = 1 over many contexts") {
  const ToyTargetModel m = make_toy_target(ToyTargetConfig{});
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    std::vector<TokenId> ctx(4);
    for (auto& t : ctx) t = static_cast<TokenId>(rng() % 512);
    for (double x : target_next_dist(m, ctx, Temperature(1.0)).probs()) REQUIRE(x > 0.0);
  }
}

TEST_CASE("short contexts are front-padded with token 0") {
  CHECK(context_window(std::vector<TokenId>{7, 8}, 4) == std::vector<TokenId>{0, 0, 7, 8});
  CHECK(context_window(std::vector<TokenId>{1, 2, 3, 4, 5}, 4) == std::vector<TokenId>{2, 3, 4, 5});
  const ToyTargetModel m = make_toy_target(small_config());
  CHECK(target_next_dist(m, std::vector<TokenId>{7, 8}, Temperature(1.0)) ==
        target_next_dist(m, std::vector<TokenId>{0, 0, 7, 8}, Temperature(1.0)));
}

TEST_CASE("drafter_hidden examples") {
  DrafterBackbone zero = make_drafter_backbone(16, 8, 4, 3);
  zero.embed = Matrix<double>(16, 8, 0.0);
  CHECK(drafter_hidden(zero, std::vector<TokenId>{1, 2}) == std::vector<double>(8, 0.0));

  const DrafterBackbone b = make_drafter_backbone(16, 8, 4, 3);
  const std::vector<TokenId> ctx{4, 1, 9};
  const auto h1 = drafter_hidden(b, ctx);
  CHECK(h1 == drafter_hidden(b, ctx));
  CHECK(h1.size() == 8);
  for (double x : h1) {
    CHECK(x > -1.0);
    CHECK(x < 1.0);
  }
  CHECK_ERRC(drafter_hidden(b, std::vector<TokenId>{}), Errc::InvalidContext);
}

TEST_CASE("feature backbone reproduces the target features") {
  const ToyTargetModel m = make_toy_target(small_config());
  const SelfDrafter self = make_self_drafter(m);
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    std::vector<TokenId> ctx(1 + i % 6);
    for (auto& t : ctx) t = static_cast<TokenId>(rng() % 16);
    const LogitVector z = full_forward(self.head, drafter_hidden(self.backbone, ctx));
    const LogitVector ref = target_logits(m, ctx);
    for (std::size_t v = 0; v < 16; ++v) CHECK(std::abs(z.values[v] - ref.values[v]) < 1e-12);
  }
}

TEST_CASE("sample_corpus examples") {
  const ToyTargetModel m = make_toy_target(small_config());
  SUBCASE("greedy continuation is deterministic and follows argmax") {
    const auto a = sample_corpus(m, 20, Temperature::greedy(), 1);
    const auto b = sample_corpus(m, 20, Temperature::greedy(), 999);
    CHECK(a == b);
    std::vector<TokenId> ctx{0};
    for (TokenId t : a) {
      CHECK(t == argmax(target_logits(m, ctx).values));
      ctx.push_back(t);
    }
  }
  SUBCASE("single token") {
    const auto s = sample_corpus(m, 1, Temperature(1.0), 4);
    REQUIRE(s.size() == 1);
    CHECK(m.vocab.contains(s[0]));
    CHECK_ERRC(sample_corpus(m, 0, Temperature(1.0), 4), Errc::InvalidArgument);
  }
  SUBCASE("same seed gives the same stream") {
    CHECK(sample_corpus(m, 500, Temperature(1.0), 77) == sample_corpus(m, 500, Temperature(1.0), 77));
  }
}

TEST_CASE("unigram frequencies agree between two independent runs") {
  // sigma comes from batch means, which absorbs the stream's autocorrelation.
  const ToyTargetModel m = make_toy_target(small_config());
  const std::size_t n = 1000000;
  const std::size_t batches = 100;
  const std::size_t per_batch = n / batches;
  struct Run {
    std::vector<double> freq;
    std::vector<double> var;  // variance of the frequency estimate
  };
  auto run = [&](std::uint64_t seed) {
    const auto s = sample_corpus(m, n, Temperature(1.0), seed);
    std::vector<std::vector<double>> batch_freq(batches, std::vector<double>(16, 0.0));
    for (std::size_t i = 0; i < n; ++i) batch_freq[i / per_batch][static_cast<std::size_t>(s[i])] += 1.0 / per_batch;
    Run r{std::vector<double>(16, 0.0), std::vector<double>(16, 0.0)};
    for (const auto& b : batch_freq)
      for (std::size_t v = 0; v < 16; ++v) r.freq[v] += b[v] / batches;
    for (const auto& b : batch_freq)
      for (std::size_t v = 0; v < 16; ++v) r.var[v] += (b[v] - r.freq[v]) * (b[v] - r.freq[v]);
    for (double& x : r.var) x /= static_cast<double>((batches - 1) * batches);
    return r;
  };
  const Run a = run(derive_seed(5, "corpus.a"));
  const Run b = run(derive_seed(5, "corpus.b"));
  for (std::size_t v = 0; v < 16; ++v) {
    const double sigma = std::sqrt(a.var[v] + b.var[v]);
    CHECK_MESSAGE(std::abs(a.freq[v] - b.freq[v]) <= 3.0 * sigma, "token ", v, ": ", a.freq[v], " vs ", b.freq[v]);
  }
}

TEST_CASE("model validation") {
  ToyTargetModel m = make_toy_target(small_config());
  m.mlp_w2(0, 0) = std::nan("");
  CHECK_ERRC(validate(m), Errc::InvalidArgument);
  DrafterBackbone b = make_drafter_backbone(16, 8, 4, 3);
  b.mix = Matrix<double>(8, 8);
  CHECK_ERRC(validate(b), Errc::DimensionMismatch);
}
