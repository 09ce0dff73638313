#pragma once

#include <memory>
#include <span>
#include <vector>

#include "ctxdb/core.hpp"

namespace ctxdb {

struct GraphParams {
    std::size_t max_degree = 32;
    std::size_t knn_k = 32;
    std::size_t enhance_ef = 64;
    /// Occlusion factor for neighbor pruning; 1.0 is the plain RNG rule.
    float prune_alpha = 1.2f;
    /// Workers for the exact query->key kNN stage (0 = all cores).
    std::size_t threads = 1;
};

/// Proximity graph over the key vectors of one (layer, kv head).
///
/// Adjacency is stored as fixed-width rows of max_degree ids plus a degree
/// per node, the same shape the index blocks of a vector file use.
class GraphIndex {
public:
    GraphIndex(std::shared_ptr<const VectorSet> keys, std::size_t max_degree, TokenId entry_point,
               std::vector<std::uint32_t> degrees, std::vector<TokenId> neighbor_slots);

    std::size_t size() const noexcept { return degrees_.size(); }
    std::size_t max_degree() const noexcept { return max_degree_; }
    TokenId entry_point() const noexcept { return entry_point_; }
    const VectorSet& keys() const noexcept { return *keys_; }
    const std::shared_ptr<const VectorSet>& shared_keys() const noexcept { return keys_; }

    std::span<const TokenId> neighbors(TokenId node) const noexcept {
        return {slots_.data() + static_cast<std::size_t>(node) * max_degree_, degrees_[node]};
    }
    std::span<const std::uint32_t> degrees() const noexcept { return degrees_; }
    std::span<const TokenId> neighbor_slots() const noexcept { return slots_; }

    /// Bytes held by the adjacency structure (keys belong to the context).
    std::size_t memory_bytes() const noexcept {
        return slots_.size() * sizeof(TokenId) + degrees_.size() * sizeof(std::uint32_t);
    }

    /// Nodes reachable from the entry point by following edges.
    std::vector<bool> reachable() const;
    bool fully_reachable() const;

    friend bool operator==(const GraphIndex& a, const GraphIndex& b) {
        return a.max_degree_ == b.max_degree_ && a.entry_point_ == b.entry_point_ && a.degrees_ == b.degrees_ &&
               a.slots_ == b.slots_;
    }

private:
    std::shared_ptr<const VectorSet> keys_;
    std::size_t max_degree_;
    TokenId entry_point_;
    std::vector<std::uint32_t> degrees_;
    std::vector<TokenId> slots_;
};

/// Two-stage build: exact query->key kNN projected onto key-key edges, then
/// connectivity enhancement by searching the graph for each key's nearest
/// keys. With no sampled queries this is a plain incremental build.
GraphIndex build_graph(std::shared_ptr<const VectorSet> keys, const VectorSet& sampled_queries,
                       const GraphParams& params = {});

/// One graph for a GQA group: ceil(sample_ratio * |list|) queries are taken
/// (evenly strided) from each query head's list and merged.
GraphIndex build_shared_graph(std::shared_ptr<const VectorSet> group_keys,
                              std::span<const VectorSet> per_query_head_queries, double sample_ratio = 0.4,
                              const GraphParams& params = {});

/// Evenly strided sample of ceil(ratio * n) rows.
VectorSet sample_queries(const VectorSet& queries, double ratio);

/// Approximate top-k by inner product (best-first search with beam width ef).
std::vector<TokenId> graph_topk(const GraphIndex& index, const Vector& q, std::size_t k, std::size_t ef);

}  // namespace ctxdb
