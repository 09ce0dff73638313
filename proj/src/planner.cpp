#include "ctxdb/planner.hpp"

#include <cmath>

namespace ctxdb {

std::string to_string(QueryType q) {
    switch (q) {
        case QueryType::FullAttention: return "full";
        case QueryType::TopK: return "topk";
        case QueryType::FilteredTopK: return "filtered-topk";
        case QueryType::DIPR: return "dipr";
        case QueryType::FilteredDIPR: return "filtered-dipr";
    }
    return "?";
}

std::string to_string(IndexType i) {
    switch (i) {
        case IndexType::None: return "none";
        case IndexType::Coarse: return "coarse";
        case IndexType::Fine: return "fine";
        case IndexType::Flat: return "flat";
    }
    return "?";
}

std::size_t coarse_residency_bytes(std::size_t context_len, std::size_t dim, double resident_fraction) {
    const double bytes = double(context_len) * 2.0 * double(dim) * 4.0 * resident_fraction;
    return static_cast<std::size_t>(std::ceil(bytes));
}

bool is_legal(QueryType q, IndexType i) {
    switch (i) {
        case IndexType::None: return q == QueryType::FullAttention;
        case IndexType::Coarse: return q == QueryType::TopK || q == QueryType::FilteredTopK;
        case IndexType::Fine:
        case IndexType::Flat: return q != QueryType::FullAttention;
    }
    return false;
}

Plan plan(const PlanRequest& req, const PlannerConfig& cfg) {
    Plan p;
    if (req.context_len <= cfg.short_context_threshold) return p;

    const bool partial = req.reused_prefix_len && *req.reused_prefix_len < req.context_len;
    if (partial) p.prefix_len = *req.reused_prefix_len;

    if (req.memory_budget_bytes >= coarse_residency_bytes(req.context_len, req.shape.dim, cfg.resident_fraction)) {
        p.query = partial ? QueryType::FilteredTopK : QueryType::TopK;
        p.index = IndexType::Coarse;
        p.k = cfg.topk_blocks;
        return p;
    }
    p.query = partial ? QueryType::FilteredDIPR : QueryType::DIPR;
    p.index = cfg.flat_layers.contains(req.layer) ? IndexType::Flat : IndexType::Fine;
    p.beta = cfg.beta;
    return p;
}

}  // namespace ctxdb
