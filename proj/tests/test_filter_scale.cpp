// Filtered search on a 50k-token context across reuse ratios. Slower than the
// other filter tests, so it lives in its own binary.

#include <doctest.h>

#include <chrono>

#include "config.hpp"
#include "ctxdb/dipr.hpp"
#include "ctxdb/filter.hpp"
#include "ctxdb/graph.hpp"
#include "oracles.hpp"
#include "workload.hpp"

using namespace ctxdb;
using namespace ctxdb::cli;

TEST_CASE("filtered recall and latency across reuse ratios on 50k tokens") {
    EngineConfig cfg;
    load_config(cfg, std::filesystem::path(CTXDB_ENGINE_CONFIG));
    cfg.workload.n_tokens = 50000;
    Workload w(cfg.workload);
    auto keys = std::make_shared<const VectorSet>(w.keys(0, 0));
    const auto g = build_graph(keys, sample_queries(w.queries(0, 0, 20000, 1), 0.4), cfg.store.graph);
    const auto qs = w.queries(0, 0, 400, 2);
    const double beta = cfg.store.planner.beta;

    std::map<double, double> latency;
    for (double ratio : {1.0, 0.8, 0.6, 0.4, 0.2}) {
        const auto p = static_cast<std::size_t>(ratio * 50000);
        double sum = 0;
        for (std::size_t i = 0; i < 100; ++i) {
            const auto q = qs.vector(i);
            const auto truth = oracle::critical_by_ip(q.values(), *keys, beta, p);
            const auto got = filtered_diprs(g, q, {p}, cfg.store.l0, beta,
                                            cfg.store.filter).ids;
            for (TokenId t : got) REQUIRE(t < p);
            sum += oracle::recall(truth, got);
        }
        CAPTURE(ratio);
        CHECK(sum / 100.0 >= 0.85);
        double best = 1e9;
        for (int pass = 0; pass < 3; ++pass) {
            const auto t0 = std::chrono::steady_clock::now();
            for (std::size_t i = 100; i < 400; ++i) filtered_diprs(g, qs.vector(i), {p}, cfg.store.l0, beta, cfg.store.filter);
            best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        latency[ratio] = best;
    }
    CHECK(latency[0.2] <= 2.0 * latency[1.0]);
}
