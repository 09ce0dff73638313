#include "ctxdb/filter.hpp"

#include <deque>
#include <limits>

namespace ctxdb {

namespace {

constexpr std::size_t kRemapScanLimit = 4096;

}  // namespace

TokenId remap_start(const GraphIndex& index, const PrefixPredicate& pred) {
    const TokenId entry = index.entry_point();
    if (pred.admits(entry)) return entry;
    // Breadth-first from the entry point; take the first hop layer that holds
    // an admitted node and pick its member nearest to the entry key.
    std::vector<std::uint8_t> seen(index.size(), 0);
    std::vector<TokenId> layer{entry};
    seen[entry] = 1;
    std::size_t scanned = 1;
    while (!layer.empty() && scanned < kRemapScanLimit) {
        std::vector<TokenId> next;
        for (TokenId u : layer) {
            for (TokenId v : index.neighbors(u)) {
                if (seen[v]) continue;
                seen[v] = 1;
                next.push_back(v);
            }
        }
        scanned += next.size();
        TokenId best = 0;
        float best_d = std::numeric_limits<float>::infinity();
        bool found = false;
        for (TokenId v : next) {
            if (!pred.admits(v)) continue;
            const float d = squared_l2(index.keys().row(entry), index.keys().row(v));
            if (!found || d < best_d || (d == best_d && v < best)) {
                best = v;
                best_d = d;
                found = true;
            }
        }
        if (found) return best;
        layer = std::move(next);
    }
    return 0;
}

RangeSearchResult filtered_diprs(const GraphIndex& index, const Vector& q, const PrefixPredicate& pred,
                                 std::size_t l0, double beta, const FilterOptions& options) {
    if (pred.prefix_len == 0) throw Error("prefix predicate admits no token");
    if (pred.prefix_len > index.size()) throw Error("prefix longer than the indexed context");
    if (l0 == 0) throw Error("l0 must be at least 1");
    if (!(beta >= 0.0)) throw Error("beta must be non-negative");
    if (q.dim() != index.keys().dim()) throw DimensionMismatch(index.keys().dim(), q.dim());

    const TokenId start = remap_start(index, pred);
    std::vector<TokenId> hop1;
    return detail::range_search(
        index.keys(), q.values(), start, l0, beta, options.window_max, [&](TokenId node, auto&& visit) {
            const auto nbrs = index.neighbors(node);
            std::size_t admitted = 0;
            for (TokenId nb : nbrs) admitted += pred.admits(nb) ? 1 : 0;
            const bool two_hop =
                options.two_hop == TwoHopMode::Always ||
                (!nbrs.empty() && double(admitted) < options.adaptive_threshold * double(nbrs.size()));
            hop1.assign(nbrs.begin(), nbrs.end());
            for (TokenId nb : hop1) {
                if (pred.admits(nb)) visit(nb);
            }
            if (!two_hop) return;
            for (TokenId nb : hop1) {
                for (TokenId nn : index.neighbors(nb)) {
                    if (pred.admits(nn)) visit(nn);
                }
            }
        });
}

}  // namespace ctxdb
