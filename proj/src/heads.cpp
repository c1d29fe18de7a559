#include "specdec/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace specdec {

namespace {

std::string dims(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

void require(bool ok, Errc code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

template <class T>
void require_finite(const Matrix<T>& m, const char* name, bool check_values) {
  if (!check_values) return;
  require(m.all_finite(), Errc::InvalidArgument, std::string(name) + " has non-finite entries");
}

void check_hidden(std::size_t expected, std::size_t got) {
  require(expected == got, Errc::DimensionMismatch,
          "hidden vector has length " + std::to_string(got) + ", head expects " + std::to_string(expected));
}

double init_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

template <class T>
void load_hidden(std::span<const double> h, HeadWorkspace<T>& ws) {
  ws.hidden.assign(h.begin(), h.end());
}

template <class T>
LogitVector to_full_logits(std::span<const T> compact) {
  LogitVector out;
  out.values.assign(compact.begin(), compact.end());
  return out;
}

template <class T>
LogitVector to_embedded_logits(std::span<const T> compact, std::span<const TokenId> support, std::size_t vocab) {
  LogitVector out;
  out.values.assign(vocab, kNegInf);
  for (std::size_t i = 0; i < support.size(); ++i) {
    out.values[static_cast<std::size_t>(support[i])] = static_cast<double>(compact[i]);
  }
  if (support.size() != vocab) out.support.emplace(support.begin(), support.end());
  return out;
}

template <class T>
void project_full(const FullHead<T>& head, std::span<const T> h, HeadWorkspace<T>& ws) {
  ws.logits.resize(head.vocab_size());
  ws.support.clear();
  gemv(head.weight, h, std::span<T>(ws.logits));
}

template <class T>
void project_slimspec(const SlimSpecHead<T>& head, std::span<const T> h, HeadWorkspace<T>& ws) {
  // Two chained products; W_up W_down is never formed.
  ws.mid.resize(head.rank());
  gemv(head.w_down, h, std::span<T>(ws.mid));
  ws.logits.resize(head.vocab_size());
  ws.support.clear();
  gemv(head.w_up, std::span<const T>(ws.mid), std::span<T>(ws.logits));
}

template <class T>
void project_truncated(const TruncatedHead<T>& head, std::span<const T> h, HeadWorkspace<T>& ws) {
  ws.logits.resize(head.truncated_size());
  gemv(head.weight, h, std::span<T>(ws.logits));
  ws.support = head.index_map;
}

template <class T>
void select_top_k(std::span<const T> scores, std::size_t k, std::vector<TokenId>& order) {
  order.resize(scores.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  if (k < scores.size()) {
    auto better = [&](TokenId a, TokenId b) {
      const T sa = scores[static_cast<std::size_t>(a)];
      const T sb = scores[static_cast<std::size_t>(b)];
      return sa > sb || (sa == sb && a < b);
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
    order.resize(k);
    std::sort(order.begin(), order.end());
  }
}

template <class T>
void project_routed(const RoutedHead<T>& head, std::span<const T> h, HeadWorkspace<T>& ws) {
  ws.mid.resize(head.rank());
  gemv(head.router_down, h, std::span<T>(ws.mid));
  ws.scores.resize(head.vocab_size());
  gemv(head.router_up, std::span<const T>(ws.mid), std::span<T>(ws.scores));
  select_top_k(std::span<const T>(ws.scores), head.k, ws.order);
  ws.support = ws.order;
  ws.logits.resize(ws.support.size());
  const std::size_t d = head.hidden_size();
  for (std::size_t i = 0; i < ws.support.size(); ++i) {
    ws.logits[i] = dot(head.weight.row(static_cast<std::size_t>(ws.support[i])).data(), h.data(), d);
  }
}

// Forward calls pass check_values = false: finite scans are O(size).
template <class T>
void check(const FullHead<T>& head, bool check_values) {
  require(head.weight.rows() >= 2 && head.weight.cols() >= 1, Errc::DimensionMismatch,
          "full head weight is " + dims(head.weight.rows(), head.weight.cols()));
  require_finite(head.weight, "full head weight", check_values);
}

template <class T>
void check(const SlimSpecHead<T>& head, bool allow_full_rank, bool check_values) {
  const std::size_t r = head.rank();
  require(r >= 1 && head.w_up.cols() == r, Errc::DimensionMismatch,
          "slimspec factors " + dims(head.w_up.rows(), head.w_up.cols()) + " and " +
              dims(head.w_down.rows(), head.w_down.cols()) + " do not chain");
  require(head.w_up.rows() >= 2 && head.w_down.cols() >= 1, Errc::DimensionMismatch, "slimspec head is empty");
  require(r < head.hidden_size() || (allow_full_rank && r == head.hidden_size()), Errc::InvalidArgument,
          "slimspec rank " + std::to_string(r) + " must be below the hidden size " +
              std::to_string(head.hidden_size()));
  require_finite(head.w_up, "slimspec w_up", check_values);
  require_finite(head.w_down, "slimspec w_down", check_values);
}

template <class T>
void check(const TruncatedHead<T>& head, bool check_values) {
  require(head.vocab >= 2, Errc::InvalidArgument, "truncated head vocabulary must be >= 2");
  require(!head.index_map.empty() && head.index_map.size() <= head.vocab, Errc::InvalidSupport,
          "truncated vocabulary size must be in [1, V]");
  validate_support(head.index_map, static_cast<std::int64_t>(head.vocab));
  require(head.weight.rows() == head.index_map.size() && head.weight.cols() >= 1, Errc::DimensionMismatch,
          "truncated weight is " + dims(head.weight.rows(), head.weight.cols()) + " for " +
              std::to_string(head.index_map.size()) + " tokens");
  require_finite(head.weight, "truncated head weight", check_values);
}

template <class T>
void check(const RoutedHead<T>& head, bool check_values) {
  const std::size_t v = head.vocab_size();
  const std::size_t d = head.hidden_size();
  const std::size_t r = head.rank();
  require(v >= 2 && d >= 1 && r >= 1, Errc::DimensionMismatch, "routed head is empty");
  require(head.router_down.cols() == d && head.router_up.rows() == v && head.router_up.cols() == r,
          Errc::DimensionMismatch,
          "routed router " + dims(head.router_up.rows(), head.router_up.cols()) + " * " +
              dims(head.router_down.rows(), head.router_down.cols()) + " does not match weight " + dims(v, d));
  require(head.k >= 1 && head.k <= v, Errc::InvalidArgument, "routed k must be in [1, V]");
  require_finite(head.router_down, "routed router_down", check_values);
  require_finite(head.router_up, "routed router_up", check_values);
  require_finite(head.weight, "routed weight", check_values);
}

}  // namespace

std::string_view to_string(HeadKind kind) noexcept {
  switch (kind) {
    case HeadKind::Full: return "full";
    case HeadKind::SlimSpec: return "slimspec";
    case HeadKind::Truncated: return "truncated";
    case HeadKind::Routed: return "routed";
  }
  return "unknown";
}

HeadKind parse_head_kind(std::string_view name) {
  if (name == "full") return HeadKind::Full;
  if (name == "slimspec") return HeadKind::SlimSpec;
  if (name == "truncated") return HeadKind::Truncated;
  if (name == "routed") return HeadKind::Routed;
  throw Error(Errc::ConfigError, "unknown head kind '" + std::string(name) + "'");
}

template <class T>
void validate(const FullHead<T>& head) {
  check(head, true);
}

template <class T>
void validate(const SlimSpecHead<T>& head, bool allow_full_rank) {
  check(head, allow_full_rank, true);
}

template <class T>
void validate(const TruncatedHead<T>& head) {
  check(head, true);
}

template <class T>
void validate(const RoutedHead<T>& head) {
  check(head, true);
}

template <class T>
void validate(const DraftHead<T>& head) {
  std::visit(
      [](const auto& h) {
        if constexpr (std::is_same_v<std::decay_t<decltype(h)>, SlimSpecHead<T>>) {
          validate(h, /*allow_full_rank=*/true);
        } else {
          validate(h);
        }
      },
      head);
}

template <class T>
FullHead<T> make_full_head(std::size_t vocab, std::size_t hidden, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "head.full.weight"));
  FullHead<T> head{Matrix<T>::uniform(vocab, hidden, init_bound(hidden), rng)};
  validate(head);
  return head;
}

template <class T>
SlimSpecHead<T> make_slimspec_head(std::size_t vocab, std::size_t hidden, std::size_t rank, std::uint64_t seed,
                                   bool allow_full_rank) {
  require(rank >= 1, Errc::InvalidArgument, "slimspec rank must be >= 1");
  Rng down_rng(derive_seed(seed, "head.slimspec.w_down"));
  Rng up_rng(derive_seed(seed, "head.slimspec.w_up"));
  SlimSpecHead<T> head{Matrix<T>::uniform(vocab, rank, init_bound(rank), up_rng),
                       Matrix<T>::uniform(rank, hidden, init_bound(hidden), down_rng)};
  validate(head, allow_full_rank);
  return head;
}

template <class T>
TruncatedHead<T> make_truncated_head(std::size_t vocab, std::size_t hidden, std::vector<TokenId> index_map,
                                     std::uint64_t seed) {
  Rng rng(derive_seed(seed, "head.truncated.weight"));
  const std::size_t v_tr = index_map.size();
  TruncatedHead<T> head{Matrix<T>::uniform(v_tr, hidden, init_bound(hidden), rng), std::move(index_map), vocab};
  validate(head);
  return head;
}

template <class T>
RoutedHead<T> make_routed_head(std::size_t vocab, std::size_t hidden, std::size_t rank, std::size_t k,
                               std::uint64_t seed) {
  require(rank >= 1, Errc::InvalidArgument, "router rank must be >= 1");
  Rng down_rng(derive_seed(seed, "head.routed.router_down"));
  Rng up_rng(derive_seed(seed, "head.routed.router_up"));
  Rng w_rng(derive_seed(seed, "head.routed.weight"));
  RoutedHead<T> head{Matrix<T>::uniform(rank, hidden, init_bound(hidden), down_rng),
                     Matrix<T>::uniform(vocab, rank, init_bound(rank), up_rng),
                     Matrix<T>::uniform(vocab, hidden, init_bound(hidden), w_rng), k};
  validate(head);
  return head;
}

template <class T>
TruncatedHead<T> truncate(const FullHead<T>& full, std::vector<TokenId> index_map) {
  validate_support(index_map, static_cast<std::int64_t>(full.vocab_size()));
  Matrix<T> weight(index_map.size(), full.hidden_size());
  for (std::size_t i = 0; i < index_map.size(); ++i) {
    const auto src = full.weight.row(static_cast<std::size_t>(index_map[i]));
    std::copy(src.begin(), src.end(), weight.row(i).begin());
  }
  TruncatedHead<T> head{std::move(weight), std::move(index_map), full.vocab_size()};
  validate(head);
  return head;
}

template <class T>
void project(const DraftHead<T>& head, std::span<const T> h, HeadWorkspace<T>& ws) {
  std::visit(
      [&](const auto& hd) {
        using H = std::decay_t<decltype(hd)>;
        check_hidden(hd.hidden_size(), h.size());
        if constexpr (std::is_same_v<H, FullHead<T>>) {
          project_full(hd, h, ws);
        } else if constexpr (std::is_same_v<H, SlimSpecHead<T>>) {
          project_slimspec(hd, h, ws);
        } else if constexpr (std::is_same_v<H, TruncatedHead<T>>) {
          project_truncated(hd, h, ws);
        } else {
          project_routed(hd, h, ws);
        }
      },
      head);
}

template <class T>
LogitVector full_forward(const FullHead<T>& head, std::span<const double> h) {
  check(head, false);
  check_hidden(head.hidden_size(), h.size());
  HeadWorkspace<T> ws;
  load_hidden(h, ws);
  project_full(head, std::span<const T>(ws.hidden), ws);
  return to_full_logits(std::span<const T>(ws.logits));
}

template <class T>
LogitVector slimspec_forward(const SlimSpecHead<T>& head, std::span<const double> h) {
  check(head, /*allow_full_rank=*/true, false);
  check_hidden(head.hidden_size(), h.size());
  HeadWorkspace<T> ws;
  load_hidden(h, ws);
  project_slimspec(head, std::span<const T>(ws.hidden), ws);
  return to_full_logits(std::span<const T>(ws.logits));
}

template <class T>
LogitVector truncated_forward(const TruncatedHead<T>& head, std::span<const double> h) {
  check(head, false);
  check_hidden(head.hidden_size(), h.size());
  HeadWorkspace<T> ws;
  load_hidden(h, ws);
  project_truncated(head, std::span<const T>(ws.hidden), ws);
  return to_embedded_logits(std::span<const T>(ws.logits), ws.support, head.vocab_size());
}

template <class T>
LogitVector routed_forward(const RoutedHead<T>& head, std::span<const double> h) {
  check(head, false);
  check_hidden(head.hidden_size(), h.size());
  HeadWorkspace<T> ws;
  load_hidden(h, ws);
  project_routed(head, std::span<const T>(ws.hidden), ws);
  return to_embedded_logits(std::span<const T>(ws.logits), ws.support, head.vocab_size());
}

template <class T>
LogitVector forward(const DraftHead<T>& head, std::span<const double> h) {
  return std::visit(
      [&](const auto& hd) -> LogitVector {
        using H = std::decay_t<decltype(hd)>;
        if constexpr (std::is_same_v<H, FullHead<T>>) {
          return full_forward(hd, h);
        } else if constexpr (std::is_same_v<H, SlimSpecHead<T>>) {
          return slimspec_forward(hd, h);
        } else if constexpr (std::is_same_v<H, TruncatedHead<T>>) {
          return truncated_forward(hd, h);
        } else {
          return routed_forward(hd, h);
        }
      },
      head);
}

template <class T>
std::vector<double> routed_scores(const RoutedHead<T>& head, std::span<const double> h) {
  check(head, false);
  check_hidden(head.hidden_size(), h.size());
  std::vector<T> hidden(h.begin(), h.end());
  std::vector<T> mid(head.rank());
  std::vector<T> scores(head.vocab_size());
  gemv(head.router_down, std::span<const T>(hidden), std::span<T>(mid));
  gemv(head.router_up, std::span<const T>(mid), std::span<T>(scores));
  return {scores.begin(), scores.end()};
}

std::vector<TokenId> top_k_ids(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) throw Error(Errc::InvalidArgument, "top-k size must be in [1, V]");
  std::vector<TokenId> order;
  select_top_k(scores, k, order);
  return order;
}

template <class T>
HeadShape shape_of(const DraftHead<T>& head) {
  return std::visit(
      [](const auto& hd) -> HeadShape {
        using H = std::decay_t<decltype(hd)>;
        HeadShape s;
        s.v = hd.vocab_size();
        s.d = hd.hidden_size();
        if constexpr (std::is_same_v<H, FullHead<T>>) {
          s.kind = HeadKind::Full;
        } else if constexpr (std::is_same_v<H, SlimSpecHead<T>>) {
          s.kind = HeadKind::SlimSpec;
          s.r = hd.rank();
        } else if constexpr (std::is_same_v<H, TruncatedHead<T>>) {
          s.kind = HeadKind::Truncated;
          s.v_tr = hd.truncated_size();
        } else {
          s.kind = HeadKind::Routed;
          s.r = hd.rank();
          s.k = hd.k;
        }
        return s;
      },
      head);
}

FlopCount head_flops(const HeadShape& s) {
  switch (s.kind) {
    case HeadKind::Full: return {s.v * s.d};
    case HeadKind::SlimSpec: return {s.r * s.d + s.v * s.r};
    case HeadKind::Truncated: return {s.v_tr * s.d};
    case HeadKind::Routed: return {s.r * s.d + s.v * s.r + s.k * s.d};
  }
  return {};
}

double flop_ratio(std::uint64_t v, std::uint64_t d, std::uint64_t r) {
  if (v == 0 || d == 0 || r == 0) throw Error(Errc::InvalidArgument, "flop_ratio needs positive V, d, r");
  return static_cast<double>(r * d + v * r) / static_cast<double>(v * d);
}

#define SPECDEC_INSTANTIATE_HEADS(T)                                                                          \
  template void validate(const FullHead<T>&);                                                                 \
  template void validate(const SlimSpecHead<T>&, bool);                                                       \
  template void validate(const TruncatedHead<T>&);                                                            \
  template void validate(const RoutedHead<T>&);                                                               \
  template void validate(const DraftHead<T>&);                                                                \
  template FullHead<T> make_full_head<T>(std::size_t, std::size_t, std::uint64_t);                           \
  template SlimSpecHead<T> make_slimspec_head<T>(std::size_t, std::size_t, std::size_t, std::uint64_t, bool); \
  template TruncatedHead<T> make_truncated_head<T>(std::size_t, std::size_t, std::vector<TokenId>,            \
                                                   std::uint64_t);                                            \
  template RoutedHead<T> make_routed_head<T>(std::size_t, std::size_t, std::size_t, std::size_t,              \
                                             std::uint64_t);                                                  \
  template TruncatedHead<T> truncate(const FullHead<T>&, std::vector<TokenId>);                               \
  template void project(const DraftHead<T>&, std::span<const T>, HeadWorkspace<T>&);                          \
  template LogitVector full_forward(const FullHead<T>&, std::span<const double>);                             \
  template LogitVector slimspec_forward(const SlimSpecHead<T>&, std::span<const double>);                     \
  template LogitVector truncated_forward(const TruncatedHead<T>&, std::span<const double>);                   \
  template LogitVector routed_forward(const RoutedHead<T>&, std::span<const double>);                         \
  template LogitVector forward(const DraftHead<T>&, std::span<const double>);                                 \
  template std::vector<double> routed_scores(const RoutedHead<T>&, std::span<const double>);                  \
  template HeadShape shape_of(const DraftHead<T>&);

SPECDEC_INSTANTIATE_HEADS(float)
SPECDEC_INSTANTIATE_HEADS(double)

#undef SPECDEC_INSTANTIATE_HEADS

}  // namespace specdec
