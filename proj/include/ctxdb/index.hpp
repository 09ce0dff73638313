#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "ctxdb/core.hpp"
#include "ctxdb/graph.hpp"

namespace ctxdb {

/// Exhaustive scan over all keys; token ids are the row positions 0..n-1.
class FlatIndex {
public:
    explicit FlatIndex(std::shared_ptr<const VectorSet> keys);

    std::size_t size() const noexcept { return keys_->size(); }
    const VectorSet& keys() const noexcept { return *keys_; }

private:
    std::shared_ptr<const VectorSet> keys_;
};

/// Exact top-k by inner product, descending, ties to the smaller id.
/// `limit` restricts the scan to ids < limit (prefix filter).
std::vector<TokenId> flat_topk(const FlatIndex& idx, const Vector& q, std::size_t k,
                               std::optional<std::size_t> limit = std::nullopt);

/// Exact DIPR over the flat index (optionally over ids < limit), using
/// max(best, window_max) as the reference score when window_max is given.
std::vector<TokenId> flat_dipr(const FlatIndex& idx, const Vector& q, double beta,
                               std::optional<std::size_t> limit = std::nullopt,
                               std::optional<double> window_max = std::nullopt);

struct BlockParams {
    std::size_t block_size = 128;
    std::size_t representatives = 4;
};

struct TokenRange {
    TokenId begin;
    TokenId end;  // exclusive

    std::size_t size() const noexcept { return end - begin; }
    friend bool operator==(const TokenRange&, const TokenRange&) = default;
};

/// Coarse index: contiguous token blocks, each scored through a few
/// representative keys.
class BlockIndex {
public:
    struct Block {
        TokenRange range;
        VectorSet representatives;
    };

    BlockIndex(std::shared_ptr<const VectorSet> keys, const BlockParams& params = {});

    std::size_t block_size() const noexcept { return block_size_; }
    std::size_t block_count() const noexcept { return blocks_.size(); }
    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    const VectorSet& keys() const noexcept { return *keys_; }

    std::size_t memory_bytes() const noexcept;

private:
    std::shared_ptr<const VectorSet> keys_;
    std::size_t block_size_;
    std::vector<Block> blocks_;
};

/// The r keys with the largest L2 norms, ties to the earlier position,
/// returned in block order.
VectorSet select_representatives(const VectorSet& block_keys, std::size_t r);

/// Best k_blocks blocks by max representative inner product, descending,
/// ties to the smaller start id. With `limit`, only blocks starting below
/// limit are eligible and their ranges are clipped to it.
std::vector<TokenRange> block_topk(const BlockIndex& idx, const Vector& q, std::size_t k_blocks,
                                   std::optional<std::size_t> limit = std::nullopt);

}  // namespace ctxdb
