#pragma once

// Seeded toy target model and drafter backbone.
//
// Target:   x = mean(E[t_1..t_c]),  logits = W2 tanh(W1 x)
// Drafter:  h = tanh(M [E'[t_1]; ...; E'[t_c]])
//
// Contexts shorter than the window are front-padded with token 0.

#include <cstdint>
#include <span>
#include <vector>

#include "specdec/core.hpp"
#include "specdec/heads.hpp"
#include "specdec/matrix.hpp"

namespace specdec {

struct ToyTargetConfig {
  std::int64_t vocab_size = 512;
  std::size_t embed_dim = 32;
  std::size_t mlp_hidden = 64;
  std::size_t context_window = 4;
  std::uint64_t seed = 1;
  /// Multiplies the output-layer init bound; controls how peaked p is.
  double logit_gain = 8.0;
  /// Multiplies the first-layer init bound; larger values saturate tanh.
  double hidden_gain = 4.0;
  /// When > 0, the output layer is a rank-`output_rank` product plus a dense
  /// residual scaled by `output_residual`, so logits have low effective rank.
  /// Zero gives a plain dense uniform init.
  std::size_t output_rank = 6;
  double output_residual = 0.05;
};

struct ToyTargetModel {
  Vocabulary vocab;
  Matrix<double> embed;   // V x d_t
  Matrix<double> mlp_w1;  // d_h x d_t
  Matrix<double> mlp_w2;  // V x d_h
  std::size_t context_window = 4;
  std::uint64_t seed = 0;
};

struct DrafterBackbone {
  Vocabulary vocab;
  Matrix<double> embed;  // V x d
  Matrix<double> mix;    // d x (c*d)
  std::size_t context_window = 4;
  std::uint64_t seed = 0;

  std::size_t hidden_size() const noexcept { return embed.cols(); }
};

ToyTargetModel make_toy_target(const ToyTargetConfig& config);
void validate(const ToyTargetModel& model);

DrafterBackbone make_drafter_backbone(std::int64_t vocab_size, std::size_t hidden, std::size_t context_window,
                                      std::uint64_t seed);
void validate(const DrafterBackbone& backbone);

/// Last `window` tokens of `context`, front-padded with token 0. Throws
/// InvalidContext on an empty context.
std::vector<TokenId> context_window(std::span<const TokenId> context, std::size_t window);

LogitVector target_logits(const ToyTargetModel& model, std::span<const TokenId> context);
ProbDist target_next_dist(const ToyTargetModel& model, std::span<const TokenId> context, Temperature temperature);

/// Autoregressive samples from the target, starting after a single token 0.
std::vector<TokenId> sample_corpus(const ToyTargetModel& model, std::size_t num_tokens, Temperature temperature,
                                   std::uint64_t rng_seed);

/// Intermediate values of the drafter forward pass, kept for backprop.
struct BackboneActivations {
  std::vector<TokenId> window;
  std::vector<double> input;   // concatenated embeddings, c*d
  std::vector<double> hidden;  // tanh(mix * input), d
};

BackboneActivations drafter_forward(const DrafterBackbone& backbone, std::span<const TokenId> context);
std::vector<double> drafter_hidden(const DrafterBackbone& backbone, std::span<const TokenId> context);

struct SelfDrafter {
  DrafterBackbone backbone;
  FullHead<double> head;
};

/// A drafter that reproduces the target exactly (up to summation order).
/// Needs hidden == mlp_hidden >= embed_dim; used for all-accept sanity runs.
SelfDrafter make_self_drafter(const ToyTargetModel& target);

/// Backbone whose hidden state starts equal to the target's MLP features, the
/// way feature-reusing drafters start from the target's representation. Its
/// width is mlp_hidden.
DrafterBackbone make_feature_backbone(const ToyTargetModel& target);

}  // namespace specdec
