#pragma once

#include <optional>

#include "ctxdb/dipr.hpp"

namespace ctxdb {

/// Admits token t iff t < prefix_len.
struct PrefixPredicate {
    std::size_t prefix_len;

    bool admits(TokenId t) const noexcept { return t < prefix_len; }
};

enum class TwoHopMode {
    /// Add 2-hop neighbors only when fewer than half the 1-hop neighbors pass the predicate.
    Adaptive,
    /// Always add 2-hop neighbors.
    Always,
};

struct FilterOptions {
    TwoHopMode two_hop = TwoHopMode::Adaptive;
    double adaptive_threshold = 0.5;
    std::optional<double> window_max;
};

/// The admitted node closest (in hops, then L2) to the entry point; falls
/// back to id 0 when the bounded scan finds none.
TokenId remap_start(const GraphIndex& index, const PrefixPredicate& pred);

/// DIPRS restricted to admitted tokens. Neighbor expansion gathers 1-hop (and
/// when triggered 2-hop) neighbors, drops non-admitted ids, then applies the
/// visited check before offering them to the candidate list.
RangeSearchResult filtered_diprs(const GraphIndex& index, const Vector& q, const PrefixPredicate& pred,
                                 std::size_t l0, double beta, const FilterOptions& options = {});

}  // namespace ctxdb
