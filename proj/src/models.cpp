#include "specdec/models.hpp"

#include <cmath>
#include <string>

namespace specdec {

namespace {

double bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

void check_tokens(const Vocabulary& vocab, std::span<const TokenId> tokens) {
  for (TokenId t : tokens) {
    if (!vocab.contains(t)) {
      throw Error(Errc::InvalidContext, "context token " + std::to_string(t) + " outside the vocabulary");
    }
  }
}

}  // namespace

ToyTargetModel make_toy_target(const ToyTargetConfig& config) {
  if (config.embed_dim == 0 || config.mlp_hidden == 0 || config.context_window == 0) {
    throw Error(Errc::InvalidArgument, "toy target dimensions must be positive");
  }
  if (!(config.logit_gain > 0.0)) throw Error(Errc::InvalidArgument, "logit_gain must be positive");
  const Vocabulary vocab(config.vocab_size);
  const auto v = static_cast<std::size_t>(vocab.size());
  Rng embed_rng(derive_seed(config.seed, "target.embed"));
  Rng w1_rng(derive_seed(config.seed, "target.mlp_w1"));
  Rng w2_rng(derive_seed(config.seed, "target.mlp_w2"));
  if (!(config.hidden_gain > 0.0)) throw Error(Errc::InvalidArgument, "hidden_gain must be positive");
  if (!(config.output_residual >= 0.0)) throw Error(Errc::InvalidArgument, "output_residual must be >= 0");
  const double w2_bound = config.logit_gain * bound(config.mlp_hidden);
  ToyTargetModel model{
      vocab,
      Matrix<double>::uniform(v, config.embed_dim, 1.0, embed_rng),
      Matrix<double>::uniform(config.mlp_hidden, config.embed_dim, config.hidden_gain * bound(config.embed_dim),
                              w1_rng),
      Matrix<double>::uniform(v, config.mlp_hidden, w2_bound, w2_rng),
      config.context_window,
      config.seed,
  };
  if (config.output_rank > 0) {
    // W2 = s * A B + residual * N. Entries of A B have variance K / 9, so s
    // matches the entry scale of the dense init.
    const std::size_t k = config.output_rank;
    Rng a_rng(derive_seed(config.seed, "target.mlp_w2.a"));
    Rng b_rng(derive_seed(config.seed, "target.mlp_w2.b"));
    const auto a = Matrix<double>::uniform(v, k, 1.0, a_rng);
    const auto b = Matrix<double>::uniform(k, config.mlp_hidden, 1.0, b_rng);
    const double s = w2_bound / std::sqrt(static_cast<double>(k) / 3.0);
    auto& w2 = model.mlp_w2;
    for (std::size_t t = 0; t < v; ++t) {
      for (std::size_t j = 0; j < config.mlp_hidden; ++j) {
        double ab = 0.0;
        for (std::size_t i = 0; i < k; ++i) ab += a(t, i) * b(i, j);
        w2(t, j) = s * ab + config.output_residual * w2(t, j);
      }
    }
  }
  validate(model);
  return model;
}

void validate(const ToyTargetModel& m) {
  const auto v = static_cast<std::size_t>(m.vocab.size());
  const std::size_t dt = m.embed.cols();
  const std::size_t dh = m.mlp_w1.rows();
  if (m.embed.rows() != v || m.mlp_w1.cols() != dt || m.mlp_w2.rows() != v || m.mlp_w2.cols() != dh || dt == 0 ||
      dh == 0) {
    throw Error(Errc::DimensionMismatch, "toy target matrices are inconsistent");
  }
  if (m.context_window == 0) throw Error(Errc::InvalidArgument, "context window must be positive");
  if (!m.embed.all_finite() || !m.mlp_w1.all_finite() || !m.mlp_w2.all_finite()) {
    throw Error(Errc::InvalidArgument, "toy target has non-finite parameters");
  }
}

DrafterBackbone make_drafter_backbone(std::int64_t vocab_size, std::size_t hidden, std::size_t context_window,
                                      std::uint64_t seed) {
  if (hidden == 0 || context_window == 0) throw Error(Errc::InvalidArgument, "backbone dimensions must be positive");
  const Vocabulary vocab(vocab_size);
  Rng embed_rng(derive_seed(seed, "drafter.embed"));
  Rng mix_rng(derive_seed(seed, "drafter.mix"));
  DrafterBackbone backbone{
      vocab,
      Matrix<double>::uniform(static_cast<std::size_t>(vocab.size()), hidden, 1.0, embed_rng),
      Matrix<double>::uniform(hidden, context_window * hidden, bound(context_window * hidden), mix_rng),
      context_window,
      seed,
  };
  validate(backbone);
  return backbone;
}

void validate(const DrafterBackbone& b) {
  const std::size_t d = b.embed.cols();
  if (b.embed.rows() != static_cast<std::size_t>(b.vocab.size()) || d == 0 || b.mix.rows() != d ||
      b.mix.cols() != b.context_window * d) {
    throw Error(Errc::DimensionMismatch, "drafter backbone matrices are inconsistent");
  }
  if (!b.embed.all_finite() || !b.mix.all_finite()) {
    throw Error(Errc::InvalidArgument, "drafter backbone has non-finite parameters");
  }
}

std::vector<TokenId> context_window(std::span<const TokenId> context, std::size_t window) {
  if (context.empty()) throw Error(Errc::InvalidContext, "empty context");
  std::vector<TokenId> out(window, 0);
  const std::size_t take = std::min(window, context.size());
  for (std::size_t i = 0; i < take; ++i) out[window - take + i] = context[context.size() - take + i];
  return out;
}

LogitVector target_logits(const ToyTargetModel& model, std::span<const TokenId> context) {
  const auto window = context_window(context, model.context_window);
  check_tokens(model.vocab, window);
  const std::size_t dt = model.embed.cols();
  std::vector<double> x(dt, 0.0);
  for (TokenId t : window) {
    const auto row = model.embed.row(static_cast<std::size_t>(t));
    for (std::size_t j = 0; j < dt; ++j) x[j] += row[j];
  }
  const double inv_c = 1.0 / static_cast<double>(window.size());
  for (double& xj : x) xj *= inv_c;

  std::vector<double> hidden(model.mlp_w1.rows());
  gemv(model.mlp_w1, std::span<const double>(x), std::span<double>(hidden));
  for (double& a : hidden) a = std::tanh(a);

  LogitVector out;
  out.values.resize(model.mlp_w2.rows());
  gemv(model.mlp_w2, std::span<const double>(hidden), std::span<double>(out.values));
  return out;
}

ProbDist target_next_dist(const ToyTargetModel& model, std::span<const TokenId> context, Temperature temperature) {
  return normalize(target_logits(model, context), temperature);
}

std::vector<TokenId> sample_corpus(const ToyTargetModel& model, std::size_t num_tokens, Temperature temperature,
                                   std::uint64_t rng_seed) {
  if (num_tokens == 0) throw Error(Errc::InvalidArgument, "num_tokens must be >= 1");
  Rng rng(rng_seed);
  std::vector<TokenId> stream;
  stream.reserve(num_tokens + 1);
  stream.push_back(0);
  for (std::size_t i = 0; i < num_tokens; ++i) {
    const auto p = target_next_dist(model, stream, temperature);
    stream.push_back(temperature.is_greedy() ? argmax(p.probs()) : sample(p, rng));
  }
  stream.erase(stream.begin());
  return stream;
}

BackboneActivations drafter_forward(const DrafterBackbone& backbone, std::span<const TokenId> context) {
  BackboneActivations act;
  act.window = context_window(context, backbone.context_window);
  check_tokens(backbone.vocab, act.window);
  const std::size_t d = backbone.hidden_size();
  act.input.resize(backbone.context_window * d);
  for (std::size_t j = 0; j < act.window.size(); ++j) {
    const auto row = backbone.embed.row(static_cast<std::size_t>(act.window[j]));
    std::copy(row.begin(), row.end(), act.input.begin() + static_cast<std::ptrdiff_t>(j * d));
  }
  act.hidden.resize(d);
  gemv(backbone.mix, std::span<const double>(act.input), std::span<double>(act.hidden));
  for (double& a : act.hidden) a = std::tanh(a);
  return act;
}

std::vector<double> drafter_hidden(const DrafterBackbone& backbone, std::span<const TokenId> context) {
  return drafter_forward(backbone, context).hidden;
}

SelfDrafter make_self_drafter(const ToyTargetModel& target) {
  return SelfDrafter{make_feature_backbone(target), FullHead<double>{target.mlp_w2}};
}

DrafterBackbone make_feature_backbone(const ToyTargetModel& target) {
  const std::size_t dt = target.embed.cols();
  const std::size_t dh = target.mlp_w1.rows();
  const std::size_t c = target.context_window;
  const auto v = static_cast<std::size_t>(target.vocab.size());
  if (dh < dt) throw Error(Errc::InvalidArgument, "feature backbone needs mlp_hidden >= embed_dim");

  // Drafter embedding = target embedding zero-padded to width d_h; each
  // position's mix block = W1 / c, so mix * input = W1 * mean(E[window]).
  Matrix<double> embed(v, dh, 0.0);
  for (std::size_t t = 0; t < v; ++t) {
    const auto src = target.embed.row(t);
    std::copy(src.begin(), src.end(), embed.row(t).begin());
  }
  Matrix<double> mix(dh, c * dh, 0.0);
  const double inv_c = 1.0 / static_cast<double>(c);
  for (std::size_t i = 0; i < dh; ++i) {
    for (std::size_t pos = 0; pos < c; ++pos) {
      for (std::size_t j = 0; j < dt; ++j) mix(i, pos * dh + j) = target.mlp_w1(i, j) * inv_c;
    }
  }
  DrafterBackbone out{target.vocab, std::move(embed), std::move(mix), c, target.seed};
  validate(out);
  return out;
}

}  // namespace specdec
