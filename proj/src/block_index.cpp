#include <algorithm>
#include <limits>
#include <numeric>

#include "ctxdb/index.hpp"

namespace ctxdb {

VectorSet select_representatives(const VectorSet& block_keys, std::size_t r) {
    if (r == 0) throw Error("need at least one representative");
    if (r > block_keys.size()) {
        throw Error("r=" + std::to_string(r) + " exceeds block size " + std::to_string(block_keys.size()));
    }
    std::vector<std::size_t> order(block_keys.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<float> norms(block_keys.size());
    for (std::size_t i = 0; i < norms.size(); ++i) norms[i] = squared_norm(block_keys.row(i));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
    order.resize(r);
    std::sort(order.begin(), order.end());
    VectorSet out(block_keys.dim());
    out.reserve(r);
    for (std::size_t i : order) out.push_back(block_keys.row(i));
    return out;
}

BlockIndex::BlockIndex(std::shared_ptr<const VectorSet> keys, const BlockParams& params)
    : keys_(std::move(keys)), block_size_(params.block_size) {
    if (!keys_ || keys_->empty()) throw Error("block index over an empty key set");
    if (block_size_ == 0) throw Error("block_size must be positive");
    if (params.representatives == 0 || params.representatives > block_size_) {
        throw Error("representatives must be in [1, block_size]");
    }
    const std::size_t n = keys_->size();
    for (std::size_t begin = 0; begin < n; begin += block_size_) {
        const std::size_t end = std::min(n, begin + block_size_);
        VectorSet slice(keys_->dim());
        slice.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) slice.push_back(keys_->row(i));
        // A short tail block keeps every key as a representative.
        const std::size_t r = std::min(params.representatives, end - begin);
        blocks_.push_back({{TokenId(begin), TokenId(end)}, select_representatives(slice, r)});
    }
}

std::size_t BlockIndex::memory_bytes() const noexcept {
    std::size_t total = 0;
    for (const auto& b : blocks_) total += sizeof(TokenRange) + b.representatives.bytes();
    return total;
}

std::vector<TokenRange> block_topk(const BlockIndex& idx, const Vector& q, std::size_t k_blocks,
                                   std::optional<std::size_t> limit) {
    if (q.dim() != idx.keys().dim()) throw DimensionMismatch(idx.keys().dim(), q.dim());
    const std::size_t lim = limit.value_or(idx.keys().size());
    struct Scored {
        float score;
        TokenRange range;
    };
    std::vector<Scored> eligible;
    for (const auto& b : idx.blocks()) {
        if (b.range.begin >= lim) continue;
        float best = -std::numeric_limits<float>::infinity();
        for (std::size_t i = 0; i < b.representatives.size(); ++i) {
            best = std::max(best, inner_product(q.values(), b.representatives.row(i)));
        }
        eligible.push_back({best, {b.range.begin, TokenId(std::min<std::size_t>(b.range.end, lim))}});
    }
    if (k_blocks > eligible.size()) {
        throw Error("k_blocks=" + std::to_string(k_blocks) + " exceeds " + std::to_string(eligible.size()) +
                    " eligible blocks");
    }
    std::stable_sort(eligible.begin(), eligible.end(), [](const Scored& a, const Scored& b) {
        return a.score > b.score || (a.score == b.score && a.range.begin < b.range.begin);
    });
    std::vector<TokenRange> out;
    out.reserve(k_blocks);
    for (std::size_t i = 0; i < k_blocks; ++i) out.push_back(eligible[i].range);
    return out;
}

}  // namespace ctxdb
