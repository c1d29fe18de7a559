#pragma once

// The four draft LM-head designs and their per-token MAC counts.
//
//   full       z = W h                          V*d
//   slimspec   z = W_up (W_down h)              r*d + V*r
//   truncated  z = W_tr h over a fixed subset   V_tr*d
//   routed     top-k of U (D h), then exact     r*d + V*r + k*d
//              logits W h on the k winners
//
// Heads are templated on the parameter scalar so the benchmark can run float
// weights; simulation and training use double.

#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "specdec/core.hpp"
#include "specdec/matrix.hpp"

namespace specdec {

enum class HeadKind { Full, SlimSpec, Truncated, Routed };

std::string_view to_string(HeadKind kind) noexcept;
HeadKind parse_head_kind(std::string_view name);

template <class T>
struct FullHead {
  Matrix<T> weight;  // V x d

  std::size_t vocab_size() const noexcept { return weight.rows(); }
  std::size_t hidden_size() const noexcept { return weight.cols(); }
};

template <class T>
struct SlimSpecHead {
  Matrix<T> w_up;    // V x r
  Matrix<T> w_down;  // r x d

  std::size_t vocab_size() const noexcept { return w_up.rows(); }
  std::size_t hidden_size() const noexcept { return w_down.cols(); }
  std::size_t rank() const noexcept { return w_down.rows(); }
};

template <class T>
struct TruncatedHead {
  Matrix<T> weight;                // V_tr x d
  std::vector<TokenId> index_map;  // V_tr sorted token ids
  std::size_t vocab = 0;           // full vocabulary size V

  std::size_t vocab_size() const noexcept { return vocab; }
  std::size_t hidden_size() const noexcept { return weight.cols(); }
  std::size_t truncated_size() const noexcept { return index_map.size(); }
};

template <class T>
struct RoutedHead {
  Matrix<T> router_down;  // r x d
  Matrix<T> router_up;    // V x r
  Matrix<T> weight;       // V x d
  std::size_t k = 0;      // selected tokens per step

  std::size_t vocab_size() const noexcept { return weight.rows(); }
  std::size_t hidden_size() const noexcept { return weight.cols(); }
  std::size_t rank() const noexcept { return router_down.rows(); }
};

template <class T>
using DraftHead = std::variant<FullHead<T>, SlimSpecHead<T>, TruncatedHead<T>, RoutedHead<T>>;

template <class T>
HeadKind kind_of(const DraftHead<T>& head) noexcept {
  return static_cast<HeadKind>(head.index());
}

// Validation. Every constructor below and every forward call runs these.
template <class T> void validate(const FullHead<T>& head);
template <class T> void validate(const SlimSpecHead<T>& head, bool allow_full_rank = false);
template <class T> void validate(const TruncatedHead<T>& head);
template <class T> void validate(const RoutedHead<T>& head);
template <class T> void validate(const DraftHead<T>& head);

// Seeded initialization: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class T> FullHead<T> make_full_head(std::size_t vocab, std::size_t hidden, std::uint64_t seed);
/// `allow_full_rank` admits r == d, which is only useful for equivalence tests.
template <class T>
SlimSpecHead<T> make_slimspec_head(std::size_t vocab, std::size_t hidden, std::size_t rank, std::uint64_t seed,
                                   bool allow_full_rank = false);
template <class T>
TruncatedHead<T> make_truncated_head(std::size_t vocab, std::size_t hidden, std::vector<TokenId> index_map,
                                     std::uint64_t seed);
template <class T>
RoutedHead<T> make_routed_head(std::size_t vocab, std::size_t hidden, std::size_t rank, std::size_t k,
                               std::uint64_t seed);

/// Truncated head whose rows are gathered from a full weight matrix.
template <class T>
TruncatedHead<T> truncate(const FullHead<T>& full, std::vector<TokenId> index_map);

/// Scratch buffers for the compact projection, reused across calls.
template <class T>
struct HeadWorkspace {
  std::vector<T> hidden;   // h converted to T
  std::vector<T> mid;      // rank-r intermediate (slimspec, router)
  std::vector<T> scores;   // router scores (routed)
  std::vector<TokenId> order;
  std::vector<T> logits;   // compact logits: V, V_tr or k entries
  std::vector<TokenId> support;  // ids for `logits`; empty means 0..V-1
};

/// Compact projection without embedding into the full vocabulary. This is
/// the timed region for benchmarks; routed selection is included.
template <class T>
void project(const DraftHead<T>& head, std::span<const T> h, HeadWorkspace<T>& ws);

template <class T> LogitVector full_forward(const FullHead<T>& head, std::span<const double> h);
template <class T> LogitVector slimspec_forward(const SlimSpecHead<T>& head, std::span<const double> h);
template <class T> LogitVector truncated_forward(const TruncatedHead<T>& head, std::span<const double> h);
template <class T> LogitVector routed_forward(const RoutedHead<T>& head, std::span<const double> h);
/// Dispatches to the variant's forward. Output always has length V.
template <class T> LogitVector forward(const DraftHead<T>& head, std::span<const double> h);

/// Router scores s = U (D h) for every token.
template <class T> std::vector<double> routed_scores(const RoutedHead<T>& head, std::span<const double> h);

/// Indices of the k largest scores (ties to the lower id), sorted ascending.
std::vector<TokenId> top_k_ids(std::span<const double> scores, std::size_t k);

struct FlopCount {
  std::uint64_t macs = 0;
  friend bool operator==(const FlopCount&, const FlopCount&) = default;
};

struct HeadShape {
  HeadKind kind = HeadKind::Full;
  std::uint64_t v = 0;
  std::uint64_t d = 0;
  std::uint64_t r = 0;     // slimspec rank or router rank
  std::uint64_t v_tr = 0;  // truncated vocabulary size
  std::uint64_t k = 0;     // routed selection size
};

template <class T> HeadShape shape_of(const DraftHead<T>& head);

/// Multiply-accumulates per drafted token; biases and softmax are excluded.
FlopCount head_flops(const HeadShape& shape);

template <class T>
FlopCount head_flops(const DraftHead<T>& head) {
  return head_flops(shape_of(head));
}

/// (r d + V r) / (V d)
double flop_ratio(std::uint64_t v, std::uint64_t d, std::uint64_t r);

}  // namespace specdec
