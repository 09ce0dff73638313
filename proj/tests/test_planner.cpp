#include <doctest.h>

#include <random>

#include "ctxdb/planner.hpp"

using namespace ctxdb;

namespace {

PlanRequest request(std::size_t n, std::size_t budget, std::size_t layer, std::optional<std::size_t> prefix = {}) {
    PlanRequest r;
    r.context_len = n;
    r.memory_budget_bytes = budget;
    r.layer = layer;
    r.reused_prefix_len = prefix;
    r.shape = ModelShape{32, 32, 8, 128};
    return r;
}

}  // namespace

TEST_CASE("planner hand cases") {
    CHECK(plan(request(500, 0, 3)) == Plan{});
    const auto coarse = plan(request(100000, std::size_t(1) << 40, 3));
    CHECK(coarse.query == QueryType::TopK);
    CHECK(coarse.index == IndexType::Coarse);
    CHECK(coarse.k == PlannerConfig{}.topk_blocks);
    const auto flat = plan(request(100000, 0, 0));
    CHECK(flat.query == QueryType::DIPR);
    CHECK(flat.index == IndexType::Flat);
    CHECK(flat.beta == PlannerConfig{}.beta);
    const auto fine = plan(request(100000, 0, 5));
    CHECK(fine.query == QueryType::DIPR);
    CHECK(fine.index == IndexType::Fine);
}

TEST_CASE("residency cost model") {
    CHECK(coarse_residency_bytes(1000, 128, 1.0) == 1000u * 2 * 128 * 4);
    CHECK(coarse_residency_bytes(1000, 128, 0.25) == 1000u * 2 * 128);
}

TEST_CASE("decision table covers every branch") {
    const std::size_t n = 5000, dim = 128;
    const std::size_t cost = coarse_residency_bytes(n, dim, 1.0);
    struct Row {
        std::size_t n, budget, layer;
        std::optional<std::size_t> prefix;
        QueryType query;
        IndexType index;
    };
    const Row rows[] = {
        {1024, cost * 10, 0, std::nullopt, QueryType::FullAttention, IndexType::None},
        {800, 0, 4, 300, QueryType::FullAttention, IndexType::None},
        {n, cost, 4, std::nullopt, QueryType::TopK, IndexType::Coarse},
        {n, cost, 0, 1000, QueryType::FilteredTopK, IndexType::Coarse},
        {n, cost - 1, 0, std::nullopt, QueryType::DIPR, IndexType::Flat},
        {n, cost - 1, 0, 1000, QueryType::FilteredDIPR, IndexType::Flat},
        {n, cost - 1, 1, std::nullopt, QueryType::DIPR, IndexType::Fine},
        {n, 0, 7, 4999, QueryType::FilteredDIPR, IndexType::Fine},
        {n, 0, 7, n, QueryType::DIPR, IndexType::Fine},  // whole context reused: not partial
    };
    for (const auto& r : rows) {
        const auto p = plan(request(r.n, r.budget, r.layer, r.prefix));
        CHECK(p.query == r.query);
        CHECK(p.index == r.index);
        const bool filtered = p.query == QueryType::FilteredDIPR || p.query == QueryType::FilteredTopK;
        CHECK(p.prefix_len.has_value() == filtered);
        if (filtered) CHECK(*p.prefix_len == *r.prefix);
    }
}

TEST_CASE("legality table") {
    CHECK(is_legal(QueryType::FullAttention, IndexType::None));
    for (auto q : {QueryType::TopK, QueryType::FilteredTopK, QueryType::DIPR, QueryType::FilteredDIPR}) {
        CHECK_FALSE(is_legal(q, IndexType::None));
        CHECK(is_legal(q, IndexType::Fine));
        CHECK(is_legal(q, IndexType::Flat));
    }
    CHECK(is_legal(QueryType::TopK, IndexType::Coarse));
    CHECK(is_legal(QueryType::FilteredTopK, IndexType::Coarse));
    CHECK_FALSE(is_legal(QueryType::DIPR, IndexType::Coarse));
    CHECK_FALSE(is_legal(QueryType::FilteredDIPR, IndexType::Coarse));
    for (auto i : {IndexType::Coarse, IndexType::Fine, IndexType::Flat}) CHECK_FALSE(is_legal(QueryType::FullAttention, i));
}

TEST_CASE("random requests always produce legal, monotone plans") {
    std::mt19937_64 rng(173);
    PlannerConfig cfg;
    cfg.flat_layers = {0, 3};
    cfg.resident_fraction = 0.5;
    for (int i = 0; i < 10000; ++i) {
        const std::size_t n = rng() % 200000;
        std::optional<std::size_t> prefix;
        if (n > 1 && rng() % 2) prefix = 1 + rng() % (n - 1);
        const std::size_t budget = rng() % (std::size_t(1) << 32);
        const auto p = plan(request(n, budget, rng() % 8, prefix), cfg);
        CHECK(is_legal(p.query, p.index));
        if (p.index == IndexType::Coarse) {
            const auto more = plan(request(n, budget * 2 + 1, rng() % 8, prefix), cfg);
            CHECK(more.index == IndexType::Coarse);
        }
        CHECK(plan(request(n, budget, 1, prefix), cfg) == plan(request(n, budget, 1, prefix), cfg));
    }
}
