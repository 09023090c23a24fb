#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace assayplan {

/// Set of assay indices packed into a bitmask; at most 64 assays.
using AssaySet = std::uint64_t;

inline constexpr std::size_t kMaxAssays = 64;

inline constexpr AssaySet assay_bit(std::size_t j) { return AssaySet{1} << j; }
inline constexpr bool contains(AssaySet s, std::size_t j) { return (s >> j) & 1U; }
inline constexpr std::size_t set_size(AssaySet s) { return static_cast<std::size_t>(std::popcount(s)); }
inline constexpr AssaySet full_set(std::size_t m) { return m >= 64 ? ~AssaySet{0} : assay_bit(m) - 1; }

/// Indices in increasing order.
std::vector<std::size_t> members(AssaySet s);

/// A batch of assays to run in parallel, or the end-of-experiment action
/// (represented by the empty batch).
struct Action {
  AssaySet batch = 0;

  static constexpr Action eox() { return Action{0}; }
  static constexpr Action of(AssaySet s) { return Action{s}; }

  constexpr bool is_eox() const { return batch == 0; }
  constexpr std::size_t size() const { return set_size(batch); }

  friend constexpr bool operator==(Action, Action) = default;
};

/// Canonical order: eox first, then by batch size, then lexicographically by
/// the sorted list of assay indices.
bool canonical_less(Action a, Action b);

struct CanonicalLess {
  bool operator()(Action a, Action b) const { return canonical_less(a, b); }
};

/// "{1,3}" with 1-based assay indices, or "eox".
std::string to_string(Action a);
/// Same, but with assay names: "{pgp_1um,bcrp}".
std::string to_string(Action a, const std::vector<std::string>& assay_names);

}  // namespace assayplan
