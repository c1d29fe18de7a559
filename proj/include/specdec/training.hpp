#pragma once

// Forward-KL distillation of a drafter (backbone + head) onto the toy target.
//
// Backprop is hand-derived for the fixed architecture
//   embed -> concat -> mix -> tanh -> head
// and checked against central differences in the tests.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "specdec/core.hpp"
#include "specdec/heads.hpp"
#include "specdec/models.hpp"

namespace specdec {

// --- losses ---------------------------------------------------------------

/// KL(p || softmax(q_logits)). Terms with p(v) = 0 contribute 0; p(v) > 0 where
/// q(v) = 0 throws InfiniteKL.
double kl_loss(const ProbDist& p, const LogitVector& q_logits);

/// d KL / d logits = q - p. Entries off the logits' support are 0.
std::vector<double> kl_grad(const ProbDist& p, const LogitVector& q_logits);

/// softmax of the logits with everything outside `keep` set to -inf.
ProbDist masked_target(const LogitVector& p_logits, std::span<const TokenId> keep);
/// Same, starting from probabilities: p restricted to `keep`, renormalized.
ProbDist masked_target(const ProbDist& p, std::span<const TokenId> keep);

// --- vocabulary statistics -----------------------------------------------

struct FreqStats {
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;

  FreqStats& merge(const FreqStats& other);
};

FreqStats collect_freq_stats(std::span<const TokenId> stream, std::int64_t vocab_size);

/// The `size` most frequent tokens (ties to the lower id), sorted ascending.
std::vector<TokenId> select_truncated_vocab(const FreqStats& stats, std::size_t size);

/// Smallest frequency-ranked vocabulary whose mean coverage over `targets`
/// reaches `min_coverage`.
std::vector<TokenId> select_vocab_for_coverage(const FreqStats& stats, std::span<const ProbDist> targets,
                                               double min_coverage);

double mean_coverage(std::span<const ProbDist> targets, std::span<const TokenId> keep);

// --- datasets ---------------------------------------------------------------

enum class TargetKind { Full, Masked };

struct TrainExample {
  std::vector<TokenId> context;
  TargetKind kind = TargetKind::Full;
  std::optional<std::vector<TokenId>> keep;
  ProbDist target;  // the distribution the loss sees (already masked if kind == Masked)
};

/// Contexts taken from a target-sampled stream; targets are p(. | context) at t.
std::vector<TrainExample> make_distillation_dataset(const ToyTargetModel& target, std::size_t num_examples,
                                                    std::uint64_t seed, Temperature temperature = Temperature(1.0));

/// Masked copy of a full-target dataset.
std::vector<TrainExample> mask_dataset(const std::vector<TrainExample>& dataset, std::span<const TokenId> keep);

/// JSON-lines: {"context": [...], "target_kind": "full"|"masked", "keep": [...],
/// "probs": [...]}. "probs" is the unmasked target; when absent, the target
/// is evaluated from `target` (t = 1), which must then be provided.
std::vector<TrainExample> load_dataset_jsonl(const std::filesystem::path& path, const ToyTargetModel* target);
void save_dataset_jsonl(const std::filesystem::path& path, const std::vector<TrainExample>& dataset);

// --- drafter parameters and gradients ------------------------------------

struct Drafter {
  DrafterBackbone backbone;
  DraftHead<double> head;
};

/// A drafter of identical shape with all parameters zero.
Drafter zeros_like(const Drafter& drafter);

/// Views over every parameter matrix, backbone first, in a fixed order.
std::vector<std::span<double>> parameter_spans(Drafter& drafter, bool include_backbone = true);

std::vector<double> flatten(const Drafter& drafter);
void unflatten(Drafter& drafter, std::span<const double> values);

/// Loss of one example; when `grad` is non-null, accumulates d loss / d params
/// into it. Routed heads add a router term: cross-entropy between softmax of
/// the router scores and the uniform distribution over the target's top-k.
double example_loss(const Drafter& drafter, const TrainExample& example, Drafter* grad = nullptr);

double dataset_loss(const Drafter& drafter, std::span<const TrainExample> dataset);

// --- optimizer -------------------------------------------------------------

/// Size of the default toy distillation set. The default step count is ten
/// epochs over it at batch 64.
inline constexpr std::size_t kDefaultDatasetSize = 32768;

struct TrainConfig {
  double learning_rate = 4e-4;
  std::int64_t steps = 5120;
  std::size_t batch_size = 64;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  std::int64_t warmup_steps = 100;
  double grad_clip_norm = 0.5;
  bool cosine_decay = true;
  std::uint64_t seed = 0;
  bool freeze_backbone = false;
};

void validate(const TrainConfig& config);

/// Linear warmup, then cosine decay to zero at `steps`.
double learning_rate_at(const TrainConfig& config, std::int64_t step);

struct TrainResult {
  Drafter drafter;
  std::vector<double> loss_curve;  // mean batch loss before each update
  double initial_loss = 0.0;       // dataset loss before training
  double final_loss = 0.0;         // dataset loss after training
};

/// AdamW (no weight decay) with global-norm clipping. Throws InfiniteKL when
/// a target puts mass outside a truncated head's vocabulary.
TrainResult train_head(const DrafterBackbone& backbone, const DraftHead<double>& head,
                       std::span<const TrainExample> dataset, const TrainConfig& config);

// --- gradient verification ----------------------------------------------

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
};

/// Max over checked coordinates of |analytic - central difference| /
/// (|analytic| + 1e-12). `max_coords == 0` checks every coordinate; otherwise
/// a seeded sample of that many.
FiniteDiffResult finite_diff_check(const std::function<double(std::span<const double>)>& loss,
                                   std::span<const double> analytic_grad, std::span<const double> params,
                                   double h = 1e-5, std::size_t max_coords = 0, std::uint64_t seed = 0);

}  // namespace specdec
