#include "specdec/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "json.hpp"

namespace specdec {

using nlohmann::json;

// --- losses -------------------------------------------------------------------

double kl_loss(const ProbDist& p, const LogitVector& q_logits) {
  if (p.size() != q_logits.size()) throw Error(Errc::DimensionMismatch, "kl_loss: p and logits differ in length");
  const ProbDist q = normalize(q_logits, Temperature(1.0));
  double kl = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (p[v] == 0.0) continue;
    if (q[v] == 0.0) {
      throw Error(Errc::InfiniteKL, "target has mass " + std::to_string(p[v]) + " on token " + std::to_string(v) +
                                        " where the draft distribution is zero");
    }
    kl += p[v] * (std::log(p[v]) - std::log(q[v]));
  }
  return std::max(kl, 0.0);
}

std::vector<double> kl_grad(const ProbDist& p, const LogitVector& q_logits) {
  if (p.size() != q_logits.size()) throw Error(Errc::DimensionMismatch, "kl_grad: p and logits differ in length");
  const ProbDist q = normalize(q_logits, Temperature(1.0));
  std::vector<double> g(p.size(), 0.0);
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (p[v] > 0.0 && q[v] == 0.0) {
      throw Error(Errc::InfiniteKL, "target has mass on token " + std::to_string(v) + " outside the draft support");
    }
    if (std::isfinite(q_logits.values[v])) g[v] = q[v] - p[v];
  }
  return g;
}

ProbDist masked_target(const LogitVector& p_logits, std::span<const TokenId> keep) {
  if (keep.empty()) throw Error(Errc::InvalidSupport, "masked_target needs a non-empty keep set");
  validate_support(keep, static_cast<std::int64_t>(p_logits.size()));
  LogitVector masked;
  masked.values.assign(p_logits.size(), kNegInf);
  for (TokenId id : keep) masked.values[static_cast<std::size_t>(id)] = p_logits.values[static_cast<std::size_t>(id)];
  masked.support.emplace(keep.begin(), keep.end());
  return normalize(masked, Temperature(1.0));
}

ProbDist masked_target(const ProbDist& p, std::span<const TokenId> keep) {
  if (keep.empty()) throw Error(Errc::InvalidSupport, "masked_target needs a non-empty keep set");
  validate_support(keep, static_cast<std::int64_t>(p.size()));
  const double mass = coverage(p, keep);
  if (!(mass > 0.0)) throw Error(Errc::EmptySupport, "target has no mass on the kept tokens");
  std::vector<double> out(p.size(), 0.0);
  for (TokenId id : keep) {
    const auto i = static_cast<std::size_t>(id);
    out[i] = p[i] / mass;
  }
  return ProbDist(std::move(out));
}

// --- vocabulary statistics ---------------------------------------------------

FreqStats& FreqStats::merge(const FreqStats& other) {
  if (counts.size() != other.counts.size()) throw Error(Errc::DimensionMismatch, "merging stats of different V");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  total += other.total;
  return *this;
}

FreqStats collect_freq_stats(std::span<const TokenId> stream, std::int64_t vocab_size) {
  const Vocabulary vocab(vocab_size);
  FreqStats stats;
  stats.counts.assign(static_cast<std::size_t>(vocab_size), 0);
  for (TokenId t : stream) {
    vocab.check(t);
    ++stats.counts[static_cast<std::size_t>(t)];
  }
  stats.total = static_cast<std::int64_t>(stream.size());
  return stats;
}

namespace {

std::vector<TokenId> frequency_ranking(const FreqStats& stats) {
  std::vector<TokenId> order(stats.counts.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    return stats.counts[static_cast<std::size_t>(a)] > stats.counts[static_cast<std::size_t>(b)];
  });
  return order;
}

std::vector<TokenId> sorted_prefix(const std::vector<TokenId>& ranking, std::size_t size) {
  std::vector<TokenId> out(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(size));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<TokenId> select_truncated_vocab(const FreqStats& stats, std::size_t size) {
  if (size < 1 || size > stats.counts.size()) {
    throw Error(Errc::InvalidArgument, "truncated vocabulary size " + std::to_string(size) + " outside [1, " +
                                           std::to_string(stats.counts.size()) + "]");
  }
  return sorted_prefix(frequency_ranking(stats), size);
}

double mean_coverage(std::span<const ProbDist> targets, std::span<const TokenId> keep) {
  if (targets.empty()) throw Error(Errc::InvalidArgument, "mean_coverage of no targets");
  double sum = 0.0;
  for (const auto& p : targets) sum += coverage(p, keep);
  return sum / static_cast<double>(targets.size());
}

std::vector<TokenId> select_vocab_for_coverage(const FreqStats& stats, std::span<const ProbDist> targets,
                                               double min_coverage) {
  if (!(min_coverage > 0.0 && min_coverage <= 1.0)) throw Error(Errc::InvalidArgument, "coverage must be in (0, 1]");
  const auto ranking = frequency_ranking(stats);
  // Coverage grows with the prefix length, so binary search the size.
  std::size_t lo = 1;
  std::size_t hi = ranking.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (mean_coverage(targets, sorted_prefix(ranking, mid)) >= min_coverage) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return sorted_prefix(ranking, lo);
}

// --- datasets ---------------------------------------------------------------

std::vector<TrainExample> make_distillation_dataset(const ToyTargetModel& target, std::size_t num_examples,
                                                    std::uint64_t seed, Temperature temperature) {
  if (num_examples == 0) throw Error(Errc::InvalidArgument, "dataset needs at least one example");
  const auto stream = sample_corpus(target, num_examples, Temperature(1.0), derive_seed(seed, "dataset.corpus"));
  std::vector<TokenId> history{0};
  history.insert(history.end(), stream.begin(), stream.end());
  std::vector<TrainExample> out;
  out.reserve(num_examples);
  for (std::size_t i = 0; i < num_examples; ++i) {
    // Context ending at position i of the stream (position 0 is the start token).
    const std::size_t end = i + 1;
    const std::size_t begin = end > target.context_window ? end - target.context_window : 0;
    std::vector<TokenId> ctx(history.begin() + static_cast<std::ptrdiff_t>(begin),
                             history.begin() + static_cast<std::ptrdiff_t>(end));
    ProbDist p = target_next_dist(target, ctx, temperature);
    out.push_back(TrainExample{std::move(ctx), TargetKind::Full, std::nullopt, std::move(p)});
  }
  return out;
}

std::vector<TrainExample> mask_dataset(const std::vector<TrainExample>& dataset, std::span<const TokenId> keep) {
  std::vector<TrainExample> out;
  out.reserve(dataset.size());
  for (const auto& ex : dataset) {
    out.push_back(TrainExample{ex.context, TargetKind::Masked, std::vector<TokenId>(keep.begin(), keep.end()),
                               masked_target(ex.target, keep)});
  }
  return out;
}

std::vector<TrainExample> load_dataset_jsonl(const std::filesystem::path& path, const ToyTargetModel* target) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open dataset " + path.string());
  std::vector<TrainExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const json rec = json::parse(line);
      TrainExample ex{rec.at("context").get<std::vector<TokenId>>(), TargetKind::Full, std::nullopt,
                      ProbDist::uniform(2)};
      if (ex.context.empty()) throw Error(Errc::InvalidContext, where + ": empty context");
      const std::string kind = rec.value("target_kind", "full");
      if (kind == "masked") {
        ex.kind = TargetKind::Masked;
      } else if (kind != "full") {
        throw Error(Errc::ConfigError, where + ": target_kind must be 'full' or 'masked'");
      }
      if (rec.contains("keep")) ex.keep = rec.at("keep").get<std::vector<TokenId>>();
      if (ex.kind == TargetKind::Masked && !ex.keep) throw Error(Errc::ConfigError, where + ": masked record needs keep");
      ProbDist p = ProbDist::uniform(2);
      if (rec.contains("probs")) {
        p = ProbDist(rec.at("probs").get<std::vector<double>>());
      } else {
        if (target == nullptr) throw Error(Errc::ConfigError, where + ": no probs and no target model to evaluate");
        p = target_next_dist(*target, ex.context, Temperature(1.0));
      }
      ex.target = ex.kind == TargetKind::Masked ? masked_target(p, *ex.keep) : std::move(p);
      out.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw Error(Errc::ConfigError, where + ": " + e.what());
    }
  }
  if (out.empty()) throw Error(Errc::ConfigError, "dataset " + path.string() + " is empty");
  return out;
}

void save_dataset_jsonl(const std::filesystem::path& path, const std::vector<TrainExample>& dataset) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write dataset " + path.string());
  for (const auto& ex : dataset) {
    json rec;
    rec["context"] = ex.context;
    rec["target_kind"] = ex.kind == TargetKind::Masked ? "masked" : "full";
    if (ex.keep) rec["keep"] = *ex.keep;
    // Masked records carry the renormalized target; masking it again is a no-op.
    rec["probs"] = std::vector<double>(ex.target.probs().begin(), ex.target.probs().end());
    out << rec.dump() << '\n';
  }
}

// --- parameters -------------------------------------------------------------

namespace {

template <class F>
void for_each_head_matrix(DraftHead<double>& head, F&& f) {
  std::visit(
      [&](auto& h) {
        using H = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<H, FullHead<double>>) {
          f(h.weight);
        } else if constexpr (std::is_same_v<H, SlimSpecHead<double>>) {
          f(h.w_up);
          f(h.w_down);
        } else if constexpr (std::is_same_v<H, TruncatedHead<double>>) {
          f(h.weight);
        } else {
          f(h.router_down);
          f(h.router_up);
          f(h.weight);
        }
      },
      head);
}

void zero(Matrix<double>& m) { std::fill(m.data().begin(), m.data().end(), 0.0); }

/// Backprop of z = W x into W and x: dW += g x^T, dx += W^T g.
void linear_backward(const Matrix<double>& w, std::span<const double> x, std::span<const double> g,
                     Matrix<double>& dw, std::span<double> dx) {
  rank1_update(dw, g, x);
  gemv_transposed_acc(w, g, dx);
}

/// Softmax cross-entropy of logits z against `target`, with gradient q - target.
double softmax_xent(std::span<const double> z, const ProbDist& target, std::vector<double>& grad) {
  LogitVector logits{std::vector<double>(z.begin(), z.end()), std::nullopt};
  const ProbDist q = normalize(logits, Temperature(1.0));
  double loss = 0.0;
  grad.resize(z.size());
  for (std::size_t v = 0; v < z.size(); ++v) {
    if (target[v] > 0.0) loss -= target[v] * std::log(q[v]);
    grad[v] = q[v] - target[v];
  }
  return loss;
}

}  // namespace

Drafter zeros_like(const Drafter& drafter) {
  Drafter z = drafter;
  zero(z.backbone.embed);
  zero(z.backbone.mix);
  for_each_head_matrix(z.head, [](Matrix<double>& m) { zero(m); });
  return z;
}

std::vector<std::span<double>> parameter_spans(Drafter& drafter, bool include_backbone) {
  std::vector<std::span<double>> spans;
  if (include_backbone) {
    spans.push_back(drafter.backbone.embed.data());
    spans.push_back(drafter.backbone.mix.data());
  }
  for_each_head_matrix(drafter.head, [&](Matrix<double>& m) { spans.push_back(m.data()); });
  return spans;
}

std::vector<double> flatten(const Drafter& drafter) {
  std::vector<double> out;
  for (auto s : parameter_spans(const_cast<Drafter&>(drafter))) out.insert(out.end(), s.begin(), s.end());
  return out;
}

void unflatten(Drafter& drafter, std::span<const double> values) {
  std::size_t offset = 0;
  for (auto s : parameter_spans(drafter)) {
    if (offset + s.size() > values.size()) throw Error(Errc::DimensionMismatch, "unflatten: too few values");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), s.size(), s.begin());
    offset += s.size();
  }
  if (offset != values.size()) throw Error(Errc::DimensionMismatch, "unflatten: too many values");
}

double example_loss(const Drafter& drafter, const TrainExample& ex, Drafter* grad) {
  const auto act = drafter_forward(drafter.backbone, ex.context);
  const std::span<const double> h(act.hidden);
  const std::size_t d = h.size();
  std::vector<double> dh(d, 0.0);

  double loss = std::visit(
      [&](const auto& head) -> double {
        using H = std::decay_t<decltype(head)>;
        if constexpr (std::is_same_v<H, FullHead<double>>) {
          const auto logits = full_forward(head, h);
          const double l = kl_loss(ex.target, logits);
          if (grad) {
            const auto g = kl_grad(ex.target, logits);
            linear_backward(head.weight, h, g, std::get<FullHead<double>>(grad->head).weight, dh);
          }
          return l;
        } else if constexpr (std::is_same_v<H, SlimSpecHead<double>>) {
          std::vector<double> t(head.rank());
          gemv(head.w_down, h, std::span<double>(t));
          const auto logits = slimspec_forward(head, h);
          const double l = kl_loss(ex.target, logits);
          if (grad) {
            auto& gh = std::get<SlimSpecHead<double>>(grad->head);
            const auto g = kl_grad(ex.target, logits);
            std::vector<double> dt(head.rank(), 0.0);
            linear_backward(head.w_up, std::span<const double>(t), g, gh.w_up, dt);
            linear_backward(head.w_down, h, dt, gh.w_down, dh);
          }
          return l;
        } else if constexpr (std::is_same_v<H, TruncatedHead<double>>) {
          const auto logits = truncated_forward(head, h);
          const double l = kl_loss(ex.target, logits);
          if (grad) {
            const auto g_full = kl_grad(ex.target, logits);
            std::vector<double> g(head.truncated_size());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = g_full[static_cast<std::size_t>(head.index_map[i])];
            linear_backward(head.weight, h, g, std::get<TruncatedHead<double>>(grad->head).weight, dh);
          }
          return l;
        } else {
          // Exact weights are distilled over the full vocabulary; selection
          // only happens at inference.
          LogitVector logits;
          logits.values.resize(head.vocab_size());
          gemv(head.weight, h, std::span<double>(logits.values));
          const double l_exact = kl_loss(ex.target, logits);

          // Router surrogate: match softmax(scores) to uniform mass on the
          // target's top-k tokens.
          std::vector<double> t(head.rank());
          gemv(head.router_down, h, std::span<double>(t));
          std::vector<double> scores(head.vocab_size());
          gemv(head.router_up, std::span<const double>(t), std::span<double>(scores));
          const auto members = top_k_ids(ex.target.probs(), head.k);
          std::vector<double> y(head.vocab_size(), 0.0);
          for (TokenId id : members) y[static_cast<std::size_t>(id)] = 1.0 / static_cast<double>(members.size());
          std::vector<double> g_scores;
          const double l_router = softmax_xent(scores, ProbDist(std::move(y)), g_scores);

          if (grad) {
            auto& gh = std::get<RoutedHead<double>>(grad->head);
            const auto g = kl_grad(ex.target, logits);
            linear_backward(head.weight, h, g, gh.weight, dh);
            std::vector<double> dt(head.rank(), 0.0);
            linear_backward(head.router_up, std::span<const double>(t), g_scores, gh.router_up, dt);
            linear_backward(head.router_down, h, dt, gh.router_down, dh);
          }
          return l_exact + l_router;
        }
      },
      drafter.head);

  if (grad) {
    // h = tanh(a): da = dh * (1 - h^2).
    std::vector<double> da(d);
    for (std::size_t i = 0; i < d; ++i) da[i] = dh[i] * (1.0 - h[i] * h[i]);
    std::vector<double> dinput(act.input.size(), 0.0);
    linear_backward(drafter.backbone.mix, act.input, da, grad->backbone.mix, dinput);
    for (std::size_t j = 0; j < act.window.size(); ++j) {
      auto row = grad->backbone.embed.row(static_cast<std::size_t>(act.window[j]));
      for (std::size_t k = 0; k < d; ++k) row[k] += dinput[j * d + k];
    }
  }
  return loss;
}

double dataset_loss(const Drafter& drafter, std::span<const TrainExample> dataset) {
  if (dataset.empty()) throw Error(Errc::InvalidArgument, "empty dataset");
  double sum = 0.0;
  for (const auto& ex : dataset) sum += example_loss(drafter, ex);
  return sum / static_cast<double>(dataset.size());
}

// --- optimizer ---------------------------------------------------------------

void validate(const TrainConfig& c) {
  if (!(c.learning_rate >= 0.0)) throw Error(Errc::ConfigError, "learning_rate must be >= 0");
  if (c.steps < 0) throw Error(Errc::ConfigError, "steps must be >= 0");
  if (c.batch_size == 0) throw Error(Errc::ConfigError, "batch_size must be >= 1");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw Error(Errc::ConfigError, "betas must be in [0, 1)");
  }
  if (!(c.eps > 0.0)) throw Error(Errc::ConfigError, "eps must be > 0");
  if (c.warmup_steps < 0) throw Error(Errc::ConfigError, "warmup_steps must be >= 0");
  if (!(c.grad_clip_norm > 0.0)) throw Error(Errc::ConfigError, "grad_clip_norm must be > 0");
}

double learning_rate_at(const TrainConfig& c, std::int64_t step) {
  if (step < c.warmup_steps) {
    return c.learning_rate * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  }
  if (!c.cosine_decay) return c.learning_rate;
  const std::int64_t decay_steps = std::max<std::int64_t>(1, c.steps - c.warmup_steps);
  const double progress = std::min(1.0, static_cast<double>(step - c.warmup_steps) / static_cast<double>(decay_steps));
  return c.learning_rate * 0.5 * (1.0 + std::cos(M_PI * progress));
}

namespace {

void check_target_consistency(const DraftHead<double>& head, std::span<const TrainExample> dataset) {
  const auto* truncated = std::get_if<TruncatedHead<double>>(&head);
  if (truncated == nullptr) return;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const double mass = coverage(dataset[i].target, truncated->index_map);
    if (mass < 1.0 - kProbTolerance) {
      throw Error(Errc::InfiniteKL,
                  "example " + std::to_string(i) + " puts mass " + std::to_string(1.0 - mass) +
                      " outside the truncated vocabulary; train truncated heads on masked targets");
    }
  }
}

}  // namespace

TrainResult train_head(const DrafterBackbone& backbone, const DraftHead<double>& head,
                       std::span<const TrainExample> dataset, const TrainConfig& config) {
  validate(config);
  validate(backbone);
  validate(head);
  if (dataset.empty()) throw Error(Errc::InvalidArgument, "empty dataset");
  if (shape_of(head).d != backbone.hidden_size() ||
      static_cast<std::int64_t>(shape_of(head).v) != backbone.vocab.size()) {
    throw Error(Errc::DimensionMismatch, "head and backbone dimensions differ");
  }
  check_target_consistency(head, dataset);

  TrainResult result{Drafter{backbone, head}, {}, 0.0, 0.0};
  Drafter& drafter = result.drafter;
  result.initial_loss = dataset_loss(drafter, dataset);

  const bool train_backbone = !config.freeze_backbone;
  Drafter grad = zeros_like(drafter);
  auto params = parameter_spans(drafter, train_backbone);
  auto grads = parameter_spans(grad, train_backbone);
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  for (auto s : params) {
    m.emplace_back(s.size(), 0.0);
    v.emplace_back(s.size(), 0.0);
  }

  Rng rng(derive_seed(config.seed, "train.batches"));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool full_batch = config.batch_size >= dataset.size();
  std::size_t cursor = dataset.size();

  result.loss_curve.reserve(static_cast<std::size_t>(config.steps));
  for (std::int64_t step = 0; step < config.steps; ++step) {
    for (auto g : parameter_spans(grad)) std::fill(g.begin(), g.end(), 0.0);

    const std::size_t batch = full_batch ? dataset.size() : config.batch_size;
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t idx = b;
      if (!full_batch) {
        if (cursor == dataset.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        idx = order[cursor++];
      }
      batch_loss += example_loss(drafter, dataset[idx], &grad);
    }
    const double inv_batch = 1.0 / static_cast<double>(batch);
    result.loss_curve.push_back(batch_loss * inv_batch);

    double norm_sq = 0.0;
    for (auto g : grads) {
      for (double& x : g) {
        x *= inv_batch;
        norm_sq += x * x;
      }
    }
    const double norm = std::sqrt(norm_sq);
    const double clip = norm > config.grad_clip_norm ? config.grad_clip_norm / norm : 1.0;

    const double lr = learning_rate_at(config, step);
    const double t = static_cast<double>(step + 1);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t s = 0; s < params.size(); ++s) {
      auto p = params[s];
      auto g = grads[s];
      auto& ms = m[s];
      auto& vs = v[s];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] * clip;
        ms[i] = config.beta1 * ms[i] + (1.0 - config.beta1) * gi;
        vs[i] = config.beta2 * vs[i] + (1.0 - config.beta2) * gi * gi;
        p[i] -= lr * (ms[i] / bc1) / (std::sqrt(vs[i] / bc2) + config.eps);
      }
    }
  }

  result.final_loss = dataset_loss(drafter, dataset);
  return result;
}

// --- gradient verification -------------------------------------------------

FiniteDiffResult finite_diff_check(const std::function<double(std::span<const double>)>& loss,
                                   std::span<const double> analytic_grad, std::span<const double> params, double h,
                                   std::size_t max_coords, std::uint64_t seed) {
  if (analytic_grad.size() != params.size()) throw Error(Errc::DimensionMismatch, "gradient and params differ");
  if (!(h > 0.0)) throw Error(Errc::InvalidArgument, "step must be > 0");
  std::vector<std::size_t> coords(params.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (max_coords != 0 && max_coords < coords.size()) {
    Rng rng(derive_seed(seed, "finite_diff.coords"));
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }

  std::vector<double> x(params.begin(), params.end());
  FiniteDiffResult result;
  for (std::size_t i : coords) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = loss(x);
    x[i] = saved - h;
    const double down = loss(x);
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic_grad[i] - numeric) / (std::abs(analytic_grad[i]) + 1e-12);
    result.max_rel_error = std::max(result.max_rel_error, err);
    ++result.coords_checked;
  }
  return result;
}

}  // namespace specdec
