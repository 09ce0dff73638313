#pragma once

#include <optional>
#include <set>
#include <string>

#include "ctxdb/core.hpp"

namespace ctxdb {

enum class QueryType { FullAttention, TopK, FilteredTopK, DIPR, FilteredDIPR };
enum class IndexType { None, Coarse, Fine, Flat };

std::string to_string(QueryType q);
std::string to_string(IndexType i);

struct PlanRequest {
    std::size_t context_len = 0;
    std::optional<std::size_t> reused_prefix_len;  // set only for partial reuse
    std::size_t memory_budget_bytes = 0;
    std::size_t layer = 0;
    ModelShape shape;
};

struct PlannerConfig {
    std::size_t short_context_threshold = 1024;
    /// Share of a context's K/V that the coarse index keeps resident.
    double resident_fraction = 1.0;
    /// Layers answered with the flat index when the budget is tight.
    std::set<std::size_t> flat_layers{0};
    std::size_t topk_blocks = 8;
    double beta = 12.0;
};

struct Plan {
    QueryType query = QueryType::FullAttention;
    IndexType index = IndexType::None;
    std::size_t k = 0;                        // TopK / FilteredTopK (blocks)
    double beta = 0.0;                        // DIPR / FilteredDIPR
    std::optional<std::size_t> prefix_len;    // Filtered* only

    friend bool operator==(const Plan&, const Plan&) = default;
};

/// context_len * 2 vectors * dim * 4 bytes * resident_fraction.
std::size_t coarse_residency_bytes(std::size_t context_len, std::size_t dim, double resident_fraction);

/// Supported (query, index) pairs: Coarse serves top-k and its filtered form;
/// Fine and Flat serve top-k, filtered and DIPR; FullAttention needs no index.
bool is_legal(QueryType q, IndexType i);

Plan plan(const PlanRequest& req, const PlannerConfig& cfg = {});

}  // namespace ctxdb
