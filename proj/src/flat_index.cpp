#include <algorithm>

#include "ctxdb/dipr.hpp"
#include "ctxdb/index.hpp"

namespace ctxdb {

FlatIndex::FlatIndex(std::shared_ptr<const VectorSet> keys) : keys_(std::move(keys)) {
    if (!keys_ || keys_->empty()) throw Error("flat index over an empty key set");
}

std::vector<TokenId> flat_topk(const FlatIndex& idx, const Vector& q, std::size_t k,
                               std::optional<std::size_t> limit) {
    const std::size_t n = std::min(limit.value_or(idx.size()), idx.size());
    if (k > n) throw Error("k=" + std::to_string(k) + " exceeds the " + std::to_string(n) + " scanned keys");
    if (q.dim() != idx.keys().dim()) throw DimensionMismatch(idx.keys().dim(), q.dim());
    struct Entry {
        float score;
        TokenId id;
    };
    std::vector<Entry> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = {inner_product(q.values(), idx.keys().row(i)), TokenId(i)};
    auto cmp = [](const Entry& a, const Entry& b) { return a.score > b.score || (a.score == b.score && a.id < b.id); };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), cmp);
    std::vector<TokenId> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = all[i].id;
    return out;
}

std::vector<TokenId> flat_dipr(const FlatIndex& idx, const Vector& q, double beta, std::optional<std::size_t> limit,
                               std::optional<double> window_max) {
    const std::size_t n = std::min(limit.value_or(idx.size()), idx.size());
    if (n == 0) throw Error("DIPR over zero keys");
    return dipr_bruteforce(q, idx.keys(), beta, n, window_max);
}

}  // namespace ctxdb
