#include "specdec/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "specdec/bench.hpp"
#include "specdec/csv.hpp"
#include "specdec/engine.hpp"
#include "specdec/io.hpp"
#include "specdec/perfmodel.hpp"
#include "specdec/training.hpp"

#ifndef SPECDEC_VERSION
#define SPECDEC_VERSION "dev"
#endif
#ifndef SPECDEC_DATA_DIR
#define SPECDEC_DATA_DIR "data"
#endif

namespace specdec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool quiet = false;
};

struct Context {
  Globals globals;
  std::ostream& out;
  std::ostream& err;
  json config = json::object();
  fs::path config_dir = ".";

  void progress(const std::string& line) const {
    if (!globals.quiet) out << line << '\n';
  }
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

// --- config helpers ----------------------------------------------------------

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw Error(Errc::ConfigError, where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw Error(Errc::ConfigError, "unknown key '" + key + "' in " + where);
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::ConfigError, std::string("config key '") + key + "' has the wrong type");
  }
}

fs::path resolve(const Context& ctx, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p : ctx.config_dir / p;
}

std::uint64_t stream_seed(const Context& ctx, std::string_view purpose) {
  return derive_seed(ctx.globals.seed, purpose);
}

ToyTargetConfig target_config(const Context& ctx, const json& j) {
  check_keys(j,
             {"vocab_size", "embed_dim", "mlp_hidden", "context_window", "seed", "logit_gain", "hidden_gain",
              "output_rank", "output_residual"},
             "target");
  ToyTargetConfig c;
  c.vocab_size = get_or(j, "vocab_size", c.vocab_size);
  c.embed_dim = get_or(j, "embed_dim", c.embed_dim);
  c.mlp_hidden = get_or(j, "mlp_hidden", c.mlp_hidden);
  c.context_window = get_or(j, "context_window", c.context_window);
  c.seed = get_or(j, "seed", stream_seed(ctx, "target"));
  c.logit_gain = get_or(j, "logit_gain", c.logit_gain);
  c.hidden_gain = get_or(j, "hidden_gain", c.hidden_gain);
  c.output_rank = get_or(j, "output_rank", c.output_rank);
  c.output_residual = get_or(j, "output_residual", c.output_residual);
  return c;
}

ToyTargetModel load_target(const Context& ctx, const json& cfg) {
  if (cfg.contains("target_checkpoint")) {
    if (cfg.contains("target")) throw Error(Errc::ConfigError, "give either 'target' or 'target_checkpoint'");
    return target_from_json(read_json(resolve(ctx, cfg.at("target_checkpoint").get<std::string>())));
  }
  return make_toy_target(target_config(ctx, cfg.value("target", json::object())));
}

DrafterBackbone make_backbone(const Context& ctx, const json& cfg, const ToyTargetModel& target) {
  if (cfg.contains("drafter_checkpoint")) {
    if (cfg.contains("backbone")) throw Error(Errc::ConfigError, "give either 'backbone' or 'drafter_checkpoint'");
    return backbone_from_json(read_json(resolve(ctx, cfg.at("drafter_checkpoint").get<std::string>())));
  }
  const json j = cfg.value("backbone", json::object());
  check_keys(j, {"init", "hidden", "seed"}, "backbone");
  const std::string init = get_or<std::string>(j, "init", "target");
  if (init == "target") {
    if (j.contains("hidden") && j.at("hidden").get<std::size_t>() != target.mlp_w1.rows()) {
      throw Error(Errc::ConfigError, "a target-initialized backbone has hidden = target mlp_hidden");
    }
    return make_feature_backbone(target);
  }
  if (init != "random") throw Error(Errc::ConfigError, "backbone.init must be 'target' or 'random'");
  return make_drafter_backbone(target.vocab.size(), get_or<std::size_t>(j, "hidden", 64), target.context_window,
                               get_or(j, "seed", stream_seed(ctx, "backbone")));
}

std::vector<TokenId> read_vocab_file(const fs::path& path) {
  const json doc = read_json(path);
  try {
    return doc.get<std::vector<TokenId>>();
  } catch (const json::exception&) {
    throw Error(Errc::ConfigError, path.string() + " is not an integer array");
  }
}

/// Frequency statistics from a target-sampled stream ("target") or from a
/// second, differently seeded toy model ("general").
FreqStats sample_freq_stats(const ToyTargetModel& target, const std::string& source, std::size_t tokens,
                            std::uint64_t seed) {
  if (tokens == 0) throw Error(Errc::ConfigError, "frequency stream needs tokens >= 1");
  const std::uint64_t stream = derive_seed(seed, "freqstats.stream");
  if (source == "target") {
    return collect_freq_stats(sample_corpus(target, tokens, Temperature(1.0), stream), target.vocab.size());
  }
  if (source == "general") {
    ToyTargetConfig c;
    c.vocab_size = target.vocab.size();
    c.embed_dim = target.embed.cols();
    c.mlp_hidden = target.mlp_w1.rows();
    c.context_window = target.context_window;
    c.seed = derive_seed(target.seed, "freqstats.general_model");
    return collect_freq_stats(sample_corpus(make_toy_target(c), tokens, Temperature(1.0), stream),
                              target.vocab.size());
  }
  throw Error(Errc::ConfigError, "frequency source must be 'target' or 'general'");
}

struct HeadPlan {
  DraftHead<double> head;
  std::optional<std::vector<TokenId>> keep;  // truncated vocabulary
};

/// Builds an untrained head (or loads a checkpoint) from a "head" object.
/// `targets` is used to size a truncated vocabulary by coverage.
HeadPlan make_head(const Context& ctx, const json& j, const ToyTargetModel& target, std::size_t hidden,
                   std::span<const ProbDist> targets) {
  check_keys(j,
             {"kind", "checkpoint", "r", "v_tr", "k", "coverage", "vocab_path", "freq_source", "freq_tokens",
              "seed"},
             "head");
  if (j.contains("checkpoint")) {
    auto head = head_from_json(read_json(resolve(ctx, j.at("checkpoint").get<std::string>())));
    std::optional<std::vector<TokenId>> keep;
    if (const auto* t = std::get_if<TruncatedHead<double>>(&head)) keep = t->index_map;
    return {std::move(head), std::move(keep)};
  }
  if (!j.contains("kind")) throw Error(Errc::ConfigError, "head needs 'kind' or 'checkpoint'");
  const HeadKind kind = parse_head_kind(j.at("kind").get<std::string>());
  const auto v = static_cast<std::size_t>(target.vocab.size());
  const std::uint64_t seed = get_or(j, "seed", stream_seed(ctx, "head"));
  auto need = [&](const char* key) {
    if (!j.contains(key)) {
      throw Error(Errc::ConfigError, "head kind '" + std::string(to_string(kind)) + "' needs '" + key + "'");
    }
    return j.at(key).get<std::size_t>();
  };
  switch (kind) {
    case HeadKind::Full:
      return {make_full_head<double>(v, hidden, seed), std::nullopt};
    case HeadKind::SlimSpec:
      return {make_slimspec_head<double>(v, hidden, need("r"), seed), std::nullopt};
    case HeadKind::Routed:
      return {make_routed_head<double>(v, hidden, need("r"), need("k"), seed), std::nullopt};
    case HeadKind::Truncated: {
      std::vector<TokenId> keep;
      const int given = int(j.contains("v_tr")) + int(j.contains("coverage")) + int(j.contains("vocab_path"));
      if (given != 1) throw Error(Errc::ConfigError, "truncated head needs exactly one of v_tr, coverage, vocab_path");
      if (j.contains("vocab_path")) {
        keep = read_vocab_file(resolve(ctx, j.at("vocab_path").get<std::string>()));
      } else {
        const auto stats = sample_freq_stats(target, get_or<std::string>(j, "freq_source", "target"),
                                             get_or<std::size_t>(j, "freq_tokens", 100000), ctx.globals.seed);
        if (j.contains("v_tr")) {
          keep = select_truncated_vocab(stats, need("v_tr"));
        } else {
          if (targets.empty()) throw Error(Errc::ConfigError, "coverage sizing needs target distributions");
          keep = select_vocab_for_coverage(stats, targets, j.at("coverage").get<double>());
        }
      }
      auto head = make_truncated_head<double>(v, hidden, keep, seed);
      return {std::move(head), std::move(keep)};
    }
  }
  throw Error(Errc::ConfigError, "unknown head kind");
}

TrainConfig train_config(const Context& ctx, const json& j) {
  check_keys(j,
             {"learning_rate", "steps", "batch_size", "beta1", "beta2", "eps", "warmup_steps", "grad_clip_norm",
              "cosine_decay", "seed", "freeze_backbone"},
             "train");
  TrainConfig c;
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
  c.steps = get_or(j, "steps", c.steps);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.beta1 = get_or(j, "beta1", c.beta1);
  c.beta2 = get_or(j, "beta2", c.beta2);
  c.eps = get_or(j, "eps", c.eps);
  c.warmup_steps = get_or(j, "warmup_steps", c.warmup_steps);
  c.grad_clip_norm = get_or(j, "grad_clip_norm", c.grad_clip_norm);
  c.cosine_decay = get_or(j, "cosine_decay", c.cosine_decay);
  c.seed = get_or(j, "seed", stream_seed(ctx, "train"));
  c.freeze_backbone = get_or(j, "freeze_backbone", c.freeze_backbone);
  return c;
}

void write_manifest(const Context& ctx, const std::string& command, const std::string& started) {
  json m{{"command", command},
         {"config_path", ctx.globals.config_path},
         {"output_dir", ctx.globals.out_dir},
         {"seed", ctx.globals.seed},
         {"started_at", started},
         {"finished_at", utc_now()},
         {"artifact_version", SPECDEC_VERSION}};
  write_json(fs::path(ctx.globals.out_dir) / "run.json", m);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  return out;
}

std::size_t worker_cap() {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SPECDEC_LAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw Error(Errc::ConfigError, "SPECDEC_LAB_THREADS must be a positive integer");
    }
    cap = std::min(cap, static_cast<std::size_t>(v));
  }
  return cap;
}

// --- train ---------------------------------------------------------------------

struct TrainFlags {
  std::optional<std::int64_t> steps;
};

int cmd_train(Context& ctx, const TrainFlags& flags) {
  const json& cfg = ctx.config;
  check_keys(cfg,
             {"target", "target_checkpoint", "backbone", "drafter_checkpoint", "head", "dataset", "dataset_path",
              "train"},
             "train config");
  const ToyTargetModel target = load_target(ctx, cfg);
  const DrafterBackbone backbone = make_backbone(ctx, cfg, target);

  std::vector<TrainExample> dataset;
  if (cfg.contains("dataset_path")) {
    if (cfg.contains("dataset")) throw Error(Errc::ConfigError, "give either 'dataset' or 'dataset_path'");
    dataset = load_dataset_jsonl(resolve(ctx, cfg.at("dataset_path").get<std::string>()), &target);
  } else {
    const json d = cfg.value("dataset", json::object());
    check_keys(d, {"size", "temperature"}, "dataset");
    const auto size = get_or<std::size_t>(d, "size", kDefaultDatasetSize);
    dataset = make_distillation_dataset(target, size, stream_seed(ctx, "dataset"),
                                        Temperature(get_or(d, "temperature", 1.0)));
  }
  ctx.progress("dataset: " + std::to_string(dataset.size()) + " examples");

  std::vector<ProbDist> targets;
  targets.reserve(dataset.size());
  for (const auto& ex : dataset) targets.push_back(ex.target);
  HeadPlan plan = make_head(ctx, cfg.value("head", json{{"kind", "full"}}), target, backbone.hidden_size(), targets);
  targets.clear();

  // Truncated heads learn the masked target; every other head sees p as is.
  if (plan.keep && std::all_of(dataset.begin(), dataset.end(),
                               [](const TrainExample& e) { return e.kind == TargetKind::Full; })) {
    dataset = mask_dataset(dataset, *plan.keep);
  }

  TrainConfig tc = train_config(ctx, cfg.value("train", json::object()));
  if (flags.steps) tc.steps = *flags.steps;
  validate(tc);
  ctx.progress("training " + std::string(to_string(kind_of(plan.head))) + " head for " + std::to_string(tc.steps) +
               " steps");
  const TrainResult result = train_head(backbone, plan.head, dataset, tc);

  const fs::path dir(ctx.globals.out_dir);
  write_json(dir / "head.json", to_json(result.drafter.head));
  write_json(dir / "backbone.json", to_json(result.drafter.backbone));
  write_json(dir / "target.json", to_json(target));
  if (plan.keep) write_json(dir / "vocab.json", json(*plan.keep));
  {
    auto f = open_out(dir / "loss_curve.csv");
    CsvWriter csv(f);
    csv.header({"step", "learning_rate", "loss"});
    for (std::size_t s = 0; s < result.loss_curve.size(); ++s) {
      csv.cell(s).cell(learning_rate_at(tc, static_cast<std::int64_t>(s))).cell(result.loss_curve[s]).end_row();
    }
  }
  const HeadShape shape = shape_of(result.drafter.head);
  write_json(dir / "train_summary.json", json{{"kind", std::string(to_string(shape.kind))},
                                               {"v", shape.v},
                                               {"d", shape.d},
                                               {"r", shape.r},
                                               {"v_tr", shape.v_tr},
                                               {"k", shape.k},
                                               {"flops", head_flops(shape).macs},
                                               {"dataset_size", dataset.size()},
                                               {"steps", tc.steps},
                                               {"initial_loss", result.initial_loss},
                                               {"final_loss", result.final_loss}});
  ctx.progress("loss " + format_double(result.initial_loss) + " -> " + format_double(result.final_loss));
  return kExitOk;
}

// --- simulate -------------------------------------------------------------------

struct SimFlags {
  std::optional<std::int64_t> rounds;
};

struct Method {
  std::string name;
  DrafterBackbone backbone;
  DraftHead<double> head;
};

Method make_method(const Context& ctx, const json& m, const ToyTargetModel& target, const std::string& fallback_name) {
  check_keys(m, {"name", "head", "backbone", "drafter_checkpoint"}, "method");
  const json head_cfg = m.value("head", json{{"kind", "full"}});
  if (head_cfg.value("kind", "") == "self") {
    check_keys(head_cfg, {"kind"}, "head");
    auto self = make_self_drafter(target);
    return {m.value("name", std::string("self")), std::move(self.backbone), std::move(self.head)};
  }
  DrafterBackbone backbone = make_backbone(ctx, m, target);
  HeadPlan plan = make_head(ctx, head_cfg, target, backbone.hidden_size(), {});
  std::string name = m.value("name", fallback_name.empty() ? std::string(to_string(kind_of(plan.head))) : fallback_name);
  return {std::move(name), std::move(backbone), std::move(plan.head)};
}

int cmd_simulate(Context& ctx, const SimFlags& flags) {
  const json& cfg = ctx.config;
  check_keys(cfg,
             {"seed", "vocab_size", "n", "rounds", "temperature", "replications", "target", "target_checkpoint", "head",
              "backbone", "drafter_checkpoint", "name", "methods"},
             "simulate config");
  const ToyTargetModel target = load_target(ctx, cfg);

  SimConfig sc;
  sc.seed = get_or(cfg, "seed", stream_seed(ctx, "simulate"));
  sc.vocab_size = get_or(cfg, "vocab_size", target.vocab.size());
  sc.n = get_or(cfg, "n", sc.n);
  sc.rounds = get_or(cfg, "rounds", sc.rounds);
  if (flags.rounds) sc.rounds = *flags.rounds;
  sc.temperature = Temperature(get_or(cfg, "temperature", 1.0));
  sc.replications = get_or(cfg, "replications", sc.replications);
  sc.threads = std::min(sc.replications, worker_cap());
  if (sc.rounds <= 0) throw Error(Errc::ConfigError, "rounds must be >= 1 (got " + std::to_string(sc.rounds) + ")");

  std::vector<Method> methods;
  if (cfg.contains("methods")) {
    if (cfg.contains("head") || cfg.contains("backbone") || cfg.contains("drafter_checkpoint")) {
      throw Error(Errc::ConfigError, "give either 'methods' or a single 'head'");
    }
    for (const auto& m : cfg.at("methods")) methods.push_back(make_method(ctx, m, target, ""));
    if (methods.empty()) throw Error(Errc::ConfigError, "'methods' is empty");
  } else {
    json single = json::object();
    for (const char* key : {"head", "backbone", "drafter_checkpoint", "name"}) {
      if (cfg.contains(key)) single[key] = cfg.at(key);
    }
    methods.push_back(make_method(ctx, single, target, ""));
  }

  const fs::path dir(ctx.globals.out_dir);
  auto f = open_out(dir / "positions.csv");
  CsvWriter csv(f);
  csv.header({"method", "position", "reached", "accepted", "acceptance_rate", "mean_overlap", "mean_coverage",
              "uncovered_reached", "uncovered_accepted"});
  json report = json::array();
  for (const auto& m : methods) {
    const SimReport r = run_simulation(sc, target, m.backbone, m.head);
    json positions = json::array();
    for (std::size_t i = 0; i < r.positions.size(); ++i) {
      const auto& p = r.positions[i];
      csv.cell(m.name)
          .cell(i + 1)
          .cell(p.reached)
          .cell(p.accepted)
          .cell(p.acceptance_rate())
          .cell(p.mean_overlap())
          .cell(p.mean_coverage())
          .cell(p.uncovered_reached)
          .cell(p.uncovered_accepted)
          .end_row();
      positions.push_back({{"position", i + 1},
                           {"reached", p.reached},
                           {"accepted", p.accepted},
                           {"acceptance_rate", p.acceptance_rate()},
                           {"mean_overlap", p.mean_overlap()},
                           {"mean_coverage", p.mean_coverage()}});
    }
    const HeadShape shape = shape_of(m.head);
    report.push_back({{"method", m.name},
                      {"kind", std::string(to_string(shape.kind))},
                      {"flops", head_flops(shape).macs},
                      {"tau", r.tau()},
                      {"rounds", r.stats.rounds},
                      {"n", r.stats.n},
                      {"total_drafted", r.stats.total_drafted},
                      {"total_accepted", r.stats.total_accepted},
                      {"positions", positions}});
    ctx.progress(m.name + ": tau = " + format_double(r.tau()));
  }
  write_json(dir / "simulate.json", json{{"seed", sc.seed},
                                         {"vocab_size", sc.vocab_size},
                                         {"n", sc.n},
                                         {"rounds", sc.rounds},
                                         {"temperature", sc.temperature.value()},
                                         {"replications", sc.replications},
                                         {"methods", report}});
  return kExitOk;
}

// --- bench ------------------------------------------------------------------------

std::vector<std::size_t> size_list(const json& cfg, const char* key, std::size_t fallback) {
  if (!cfg.contains(key)) return {fallback};
  const json& j = cfg.at(key);
  std::vector<std::size_t> out;
  try {
    if (j.is_array()) {
      out = j.get<std::vector<std::size_t>>();
    } else {
      out.push_back(j.get<std::size_t>());
    }
  } catch (const json::exception&) {
    throw Error(Errc::ConfigError, std::string("'") + key + "' must be a positive integer or an array of them");
  }
  if (out.empty() || std::find(out.begin(), out.end(), 0u) != out.end()) {
    throw Error(Errc::ConfigError, std::string("'") + key + "' must hold positive integers");
  }
  return out;
}

/// A head parameter given as an absolute value ("r") or as a divisor of the
/// dimension it scales with ("r_div": 8 means d/8).
std::size_t sized(const json& h, const char* key, const char* div_key, std::size_t base) {
  if (h.contains(key) == h.contains(div_key)) {
    throw Error(Errc::ConfigError, std::string("bench head needs exactly one of '") + key + "', '" + div_key + "'");
  }
  if (h.contains(key)) return h.at(key).get<std::size_t>();
  const auto div = h.at(div_key).get<std::size_t>();
  if (div == 0 || base % div != 0) throw Error(Errc::ConfigError, std::string("'") + div_key + "' must divide evenly");
  return base / div;
}

DraftHead<float> bench_head(const json& h, std::size_t v, std::size_t d, std::uint64_t seed) {
  check_keys(h, {"kind", "r", "r_div", "v_tr", "v_tr_div", "k"}, "bench head");
  const HeadKind kind = parse_head_kind(get_or<std::string>(h, "kind", ""));
  switch (kind) {
    case HeadKind::Full:
      return make_full_head<float>(v, d, seed);
    case HeadKind::SlimSpec:
      return make_slimspec_head<float>(v, d, sized(h, "r", "r_div", d), seed);
    case HeadKind::Truncated: {
      const std::size_t v_tr = sized(h, "v_tr", "v_tr_div", v);
      if (v_tr < 1 || v_tr > v) throw Error(Errc::ConfigError, "v_tr must be in [1, V]");
      // Timing does not depend on which ids are kept.
      std::vector<TokenId> keep(v_tr);
      for (std::size_t i = 0; i < v_tr; ++i) keep[i] = static_cast<TokenId>(i);
      return make_truncated_head<float>(v, d, std::move(keep), seed);
    }
    case HeadKind::Routed:
      if (!h.contains("k")) throw Error(Errc::ConfigError, "routed bench head needs 'k'");
      return make_routed_head<float>(v, d, sized(h, "r", "r_div", d), h.at("k").get<std::size_t>(), seed);
  }
  throw Error(Errc::ConfigError, "unknown head kind");
}

std::uint64_t r_or_vtr_or_k(const HeadShape& s) {
  switch (s.kind) {
    case HeadKind::Full: return 0;
    case HeadKind::SlimSpec: return s.r;
    case HeadKind::Truncated: return s.v_tr;
    case HeadKind::Routed: return s.k;
  }
  return 0;
}

void write_decomposition(Context& ctx, const json& j) {
  check_keys(j, {"v", "n", "reps", "hidden"}, "decompose");
  ToyTargetConfig tc;
  tc.vocab_size = get_or<std::int64_t>(j, "v", 131072);
  tc.seed = stream_seed(ctx, "target");
  const auto n = get_or<std::size_t>(j, "n", 6);
  const int reps = get_or(j, "reps", 20);
  const auto hidden = get_or<std::size_t>(j, "hidden", 64);
  const ToyTargetModel target = make_toy_target(tc);
  const DrafterBackbone backbone =
      make_drafter_backbone(tc.vocab_size, hidden, tc.context_window, stream_seed(ctx, "backbone"));
  const DraftHead<double> head = make_full_head<double>(static_cast<std::size_t>(tc.vocab_size), hidden,
                                                        stream_seed(ctx, "head"));
  const std::vector<TokenId> prompt{1, 2, 3, 4};
  const TimingBreakdown t = decompose_draft(target, backbone, head, prompt, n, reps, stream_seed(ctx, "decompose"));

  auto f = open_out(fs::path(ctx.globals.out_dir) / "decomposition.csv");
  CsvWriter csv(f);
  csv.header({"kind", "v", "d", "n", "reps", "t_overhead", "t_verify", "t_backbone", "t_head", "t_draft", "total",
              "head_fraction", "kappa"});
  csv.cell("full")
      .cell(tc.vocab_size)
      .cell(hidden)
      .cell(n)
      .cell(reps)
      .cell(t.t_overhead)
      .cell(t.t_verify)
      .cell(t.t_backbone)
      .cell(t.t_head)
      .cell(t.t_draft())
      .cell(t.total())
      .cell(t.t_draft() > 0.0 ? t.t_head / t.t_draft() : 0.0)
      .cell(t.t_non_head() > 0.0 ? kappa(t) : 0.0)
      .end_row();
}

int cmd_bench(Context& ctx) {
  const json& cfg = ctx.config;
  check_keys(cfg, {"v", "d", "batch", "reps", "warmup", "heads", "decompose"}, "bench config");
  const auto vs = size_list(cfg, "v", 131072);
  if (vs.size() != 1) throw Error(Errc::ConfigError, "bench 'v' must be a single value");
  const std::size_t v = vs.front();
  const auto ds = size_list(cfg, "d", 1024);
  const auto batches = size_list(cfg, "batch", 1);
  BenchConfig bc;
  bc.reps = get_or(cfg, "reps", bc.reps);
  bc.warmup = get_or(cfg, "warmup", bc.warmup);
  bc.seed = stream_seed(ctx, "bench");
  validate(bc);

  json heads = cfg.value("heads", json::array({json{{"kind", "full"}}, json{{"kind", "slimspec"}, {"r_div", 8}},
                                               json{{"kind", "truncated"}, {"v_tr_div", 2}},
                                               json{{"kind", "routed"}, {"r_div", 8}, {"k", 64}}}));
  if (!heads.is_array() || heads.empty()) throw Error(Errc::ConfigError, "'heads' must be a non-empty array");
  // Validate every head spec up front so a typo fails before any timing.
  for (const auto& h : heads) {
    check_keys(h, {"kind", "r", "r_div", "v_tr", "v_tr_div", "k"}, "bench head");
    parse_head_kind(get_or<std::string>(h, "kind", ""));
  }

  auto f = open_out(fs::path(ctx.globals.out_dir) / "bench.csv");
  CsvWriter csv(f);
  csv.header({"kind", "v", "d", "r_or_vtr_or_k", "batch", "reps", "median_s", "p10_s", "p90_s", "flops", "nu"});
  for (std::size_t d : ds) {
    for (std::size_t batch : batches) {
      bc.batch = batch;
      // The full head is the nu baseline; it is built once per (V, d) and also
      // timed again for its own row.
      const DraftHead<float> full = make_full_head<float>(v, d, derive_seed(bc.seed, "full"));
      const TimingSample baseline = measure_head(full, bc);
      for (const auto& h : heads) {
        TimingSample s;
        HeadShape shape;
        if (h.at("kind").get<std::string>() == "full") {
          s = measure_head(full, bc);
          shape = shape_of(full);
        } else {
          const DraftHead<float> head = bench_head(h, v, d, derive_seed(bc.seed, "head"));
          s = measure_head(head, bc);
          shape = shape_of(head);
        }
        const double nu = nu_of(s, baseline);
        csv.cell(to_string(shape.kind))
            .cell(shape.v)
            .cell(shape.d)
            .cell(r_or_vtr_or_k(shape))
            .cell(batch)
            .cell(s.reps)
            .cell(s.median_s)
            .cell(s.p10_s)
            .cell(s.p90_s)
            .cell(head_flops(shape).macs)
            .cell(nu)
            .end_row();
        ctx.progress(std::string(to_string(shape.kind)) + " d=" + std::to_string(d) + " batch=" +
                     std::to_string(batch) + ": median " + format_double(s.median_s) + " s, nu " + format_double(nu));
      }
    }
  }
  if (cfg.contains("decompose")) write_decomposition(ctx, cfg.at("decompose"));
  return kExitOk;
}

// --- perfmodel -------------------------------------------------------------------

struct PerfFlags {
  std::optional<double> kappa;
  bool crosscheck = false;
};

std::vector<double> default_nu_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 100; ++i) g.push_back(static_cast<double>(i) / 100.0);
  return g;
}

int cmd_perfmodel(Context& ctx, const PerfFlags& flags) {
  const json& cfg = ctx.config;
  check_keys(cfg, {"kappa", "timing_full", "levels", "nu_grid", "reference_csv"}, "perfmodel config");
  double k = 0.25;
  if (cfg.contains("timing_full")) {
    const json& t = cfg.at("timing_full");
    check_keys(t, {"t_overhead", "t_verify", "t_backbone", "t_head"}, "timing_full");
    k = kappa(TimingBreakdown{get_or(t, "t_overhead", 0.0), get_or(t, "t_verify", 0.0), get_or(t, "t_backbone", 0.0),
                              get_or(t, "t_head", 0.0)});
  }
  k = get_or(cfg, "kappa", k);
  if (flags.kappa) k = *flags.kappa;
  if (!(k >= 0.0) || !std::isfinite(k)) throw Error(Errc::ConfigError, "kappa must be finite and >= 0");

  const auto levels = get_or(cfg, "levels", std::vector<double>{0.9, 1.0, 1.05, 1.1, 1.15, 1.2});
  const auto nu_grid = get_or(cfg, "nu_grid", default_nu_grid());
  for (double nu : nu_grid) {
    if (!(nu > 0.0 && nu <= 1.0)) throw Error(Errc::ConfigError, "nu_grid values must be in (0, 1]");
  }
  const fs::path dir(ctx.globals.out_dir);
  {
    auto f = open_out(dir / "plane.csv");
    CsvWriter csv(f);
    csv.header({"level", "nu", "rho_tau", "kappa"});
    for (const auto& p : level_curve_grid(k, levels, nu_grid)) {
      csv.cell(p.level).cell(p.nu).cell(p.rho_tau).cell(k).end_row();
    }
  }
  {
    auto f = open_out(dir / "threshold.csv");
    CsvWriter csv(f);
    csv.header({"nu", "kappa", "min_rho_tau"});
    for (double nu : nu_grid) csv.cell(nu).cell(k).cell(min_acceptance_ratio(nu, k)).end_row();
  }
  ctx.progress("kappa = " + format_double(k) + ": wrote plane.csv and threshold.csv");
  if (!flags.crosscheck) return kExitOk;

  const fs::path ref = cfg.contains("reference_csv") ? resolve(ctx, cfg.at("reference_csv").get<std::string>())
                                                     : fs::path(SPECDEC_DATA_DIR) / "reference_speedups.csv";
  const CrosscheckReport report = crosscheck(load_reference_table(ref), k);
  auto f = open_out(dir / "crosscheck.csv");
  CsvWriter csv(f);
  csv.header({"method", "config", "nu", "rho_tau", "kappa", "predicted_speedup", "measured_speedup", "delta", "pass"});
  std::size_t passed = 0;
  for (const auto& r : report.rows) {
    csv.cell(r.reference.method)
        .cell(r.reference.config)
        .cell(r.reference.nu)
        .cell(r.reference.rho_tau)
        .cell(r.kappa)
        .cell(r.predicted_speedup)
        .cell(r.reference.measured_speedup)
        .cell(r.delta)
        .cell(r.pass ? "true" : "false")
        .end_row();
    passed += r.pass ? 1 : 0;
    std::ostringstream line;
    line << (r.pass ? "PASS " : "FAIL ") << r.reference.method << ' ' << r.reference.config << ": predicted "
         << std::fixed << std::setprecision(3) << r.predicted_speedup << " measured " << r.reference.measured_speedup
         << " delta " << r.delta;
    ctx.progress(line.str());
  }
  std::ostringstream summary;
  summary << passed << '/' << report.rows.size() << " rows within " << report.tolerance;
  ctx.progress(summary.str());
  return report.all_pass() ? kExitOk : kExitCheckFailed;
}

// --- freqstats -------------------------------------------------------------------

int cmd_freqstats(Context& ctx, const std::vector<std::int64_t>& sizes) {
  const json& cfg = ctx.config;
  check_keys(cfg, {"target", "target_checkpoint", "source", "tokens"}, "freqstats config");
  if (sizes.empty()) throw Error(Errc::ConfigError, "--sizes needs at least one size");
  const ToyTargetModel target = load_target(ctx, cfg);
  for (std::int64_t s : sizes) {
    if (s < 1 || s > target.vocab.size()) {
      throw Error(Errc::ConfigError, "--sizes value " + std::to_string(s) + " outside [1, " +
                                         std::to_string(target.vocab.size()) + "]");
    }
  }
  const std::string source = get_or<std::string>(cfg, "source", "target");
  const auto tokens = get_or<std::size_t>(cfg, "tokens", 100000);
  const FreqStats stats = sample_freq_stats(target, source, tokens, ctx.globals.seed);

  const fs::path dir(ctx.globals.out_dir);
  write_json(dir / "freqstats.json", json{{"source", source},
                                          {"v", target.vocab.size()},
                                          {"total", stats.total},
                                          {"counts", stats.counts}});
  for (std::int64_t s : sizes) {
    const auto keep = select_truncated_vocab(stats, static_cast<std::size_t>(s));
    write_json(dir / ("vocab_" + std::to_string(s) + ".json"), json(keep));
  }
  ctx.progress("counted " + std::to_string(stats.total) + " tokens; wrote " + std::to_string(sizes.size()) +
               " vocabulary files");
  return kExitOk;
}

// --- dispatch --------------------------------------------------------------------

void load_config(Context& ctx) {
  if (ctx.globals.config_path.empty()) return;
  const fs::path path(ctx.globals.config_path);
  if (!fs::exists(path)) throw Error(Errc::ConfigError, "config file not found: " + path.string());
  ctx.config = read_json(path);
  if (!ctx.config.is_object()) throw Error(Errc::ConfigError, path.string() + ": config must be a JSON object");
  ctx.config_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speculative-decoding draft LM-head lab", "specdec-lab"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Root seed for every random stream")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress progress output");
  app.set_version_flag("--version", SPECDEC_VERSION);

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "Distill a draft head and backbone from the toy target");
  train->add_option("--steps", train_flags.steps, "Override train.steps");

  SimFlags sim_flags;
  auto* simulate = app.add_subcommand("simulate", "Run the draft/verify loop and report acceptance");
  simulate->add_option("--rounds", sim_flags.rounds, "Override rounds");

  auto* bench = app.add_subcommand("bench", "Time head projections and report nu");

  PerfFlags perf_flags;
  auto* perf = app.add_subcommand("perfmodel", "Speedup plane, break-even threshold and reference crosscheck");
  perf->add_option("--kappa", perf_flags.kappa, "Full-head latency over non-head latency");
  perf->add_flag("--crosscheck", perf_flags.crosscheck, "Check the model against the bundled reference table");

  std::vector<std::int64_t> sizes;
  auto* freq = app.add_subcommand("freqstats", "Token frequency statistics and truncated vocabularies");
  freq->add_option("--sizes", sizes, "Vocabulary sizes to select")->delimiter(',')->required();

  // Global flags are accepted after the subcommand as well.
  for (auto* sub : {train, simulate, bench, perf, freq}) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << SPECDEC_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  Context ctx{g, out, err};
  const std::string started = utc_now();
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    load_config(ctx);
    fs::create_directories(ctx.globals.out_dir);
    int code = kExitOk;
    if (command == "train") {
      code = cmd_train(ctx, train_flags);
    } else if (command == "simulate") {
      code = cmd_simulate(ctx, sim_flags);
    } else if (command == "bench") {
      code = cmd_bench(ctx);
    } else if (command == "perfmodel") {
      code = cmd_perfmodel(ctx, perf_flags);
    } else {
      code = cmd_freqstats(ctx, sizes);
    }
    write_manifest(ctx, command, started);
    return code;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_numeric(e.code()) ? kExitNumeric : kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace specdec
