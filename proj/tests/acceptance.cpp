// Acceptance run: one PASS/FAIL line per criterion, exit code 1 if any fail.
//
//   ctxdb_acceptance --config configs/engine.json --cli build/ctxdb [--only N]

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "commands.hpp"
#include "ctxdb/attention.hpp"
#include "ctxdb/dipr.hpp"
#include "ctxdb/filter.hpp"
#include "ctxdb/graph.hpp"
#include "ctxdb/index.hpp"
#include "ctxdb/planner.hpp"
#include "ctxdb/store.hpp"
#include "ctxdb/vfs.hpp"
#include "oracles.hpp"
#include "workload.hpp"

using namespace ctxdb;
using namespace ctxdb::cli;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Scratch {
    fs::path path;
    Scratch() {
        path = fs::temp_directory_path() / ("ctxdb_accept_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~Scratch() { fs::remove_all(path); }
};

std::string hash_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // FNV-1a, 64 bit
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return std::to_string(bytes.size()) + ":" + std::to_string(h);
}

std::map<std::string, std::string> hash_tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = hash_file(e.path());
    }
    return out;
}

// --- 1 ------------------------------------------------------------------------

Outcome critical_sets(const EngineConfig&) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    std::size_t instances = 0, failures = 0, oracle_disagreements = 0;
    for (std::size_t d : {4u, 8u, 64u, 128u}) {
        for (int rep = 0; rep < 300; ++rep) {
            const std::size_t n = 1 + rng() % 256;
            const double scale = std::uniform_real_distribution<double>(0.2, 3.0)(rng);
            const auto keys = oracle::gaussian_set(rng, n, d, scale);
            const auto q = oracle::gaussian_vector(rng, d, scale);
            const double alpha = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
            ++instances;
            if (!critical_sets_agree(q, keys, alpha, 1e-6)) ++failures;
            // second opinion: the long double attention-proportion set vs the library's inner-product set
            const auto by_attn = oracle::critical_by_attention(q.values(), keys, alpha);
            const auto ip = dipr_bruteforce(q, keys, alpha_to_beta(alpha, d));
            if (by_attn != std::set<TokenId>(ip.begin(), ip.end())) {
                long double top = -INFINITY;
                for (std::size_t j = 0; j < n; ++j) top = std::max(top, oracle::dot(q.values(), keys.row(j)));
                const long double cut = top - alpha_to_beta(alpha, d);
                bool boundary = false;
                for (std::size_t j = 0; j < n; ++j) boundary |= std::fabs(double(oracle::dot(q.values(), keys.row(j)) - cut)) <= 1e-6 * std::max(1.0, double(std::fabs(cut)));
                if (!boundary) ++oracle_disagreements;
            }
        }
    }
    const double secs = since(t0);
    return {failures == 0 && oracle_disagreements == 0 && secs < 60.0,
            fmt("%zu instances, d in {4,8,64,128}: %zu failures, %zu oracle disagreements, %.1f s (limit 60 s)",
                instances, failures, oracle_disagreements, secs)};
}

// --- 2 ------------------------------------------------------------------------

Outcome attention_oracle(const EngineConfig&) {
    std::mt19937_64 rng(2002);
    std::size_t failures = 0;
    double worst = 0.0;
    const int instances = 500;
    for (int rep = 0; rep < instances; ++rep) {
        const std::size_t n = 1 + rng() % 4096, d = 1 + rng() % 128;
        const double scale = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
        const auto k = oracle::gaussian_set(rng, n, d, scale);
        const auto v = oracle::gaussian_set(rng, n, d);
        const auto q = oracle::gaussian_vector(rng, d, scale);
        const auto want = oracle::attention(q.values(), k, v);

        std::vector<TokenId> all(n);
        std::iota(all.begin(), all.end(), 0);
        const auto sparse = sparse_attention(q, k, v, all).o;

        // random partition into up to 8 groups, absorbed separately then merged in random order
        const std::size_t groups = 1 + rng() % 8;
        std::vector<PartialAttention> parts(groups, PartialAttention(d));
        for (std::size_t i = 0; i < n; ++i) parts[rng() % groups].absorb(q.values(), k.row(i), v.row(i));
        std::shuffle(parts.begin(), parts.end(), rng);
        PartialAttention merged(d);
        for (const auto& p : parts) merged.merge(p);
        const auto part = merged.finalize().o;

        double err = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
            err = std::max(err, std::fabs(double(sparse[t]) - double(want[t])));
            err = std::max(err, std::fabs(double(part[t]) - double(want[t])));
        }
        worst = std::max(worst, err);
        if (err > 1e-5) ++failures;
    }
    return {failures == 0, fmt("%d instances (n <= 4096, d <= 128): %zu failures, worst abs error %.2e (limit 1e-5)",
                               instances, failures, worst)};
}

// --- 3 ------------------------------------------------------------------------

struct MainCorpus {
    std::shared_ptr<const VectorSet> keys;
    std::optional<GraphIndex> graph;
    VectorSet queries;
    double build_s = 0;
};

MainCorpus& main_corpus(const EngineConfig& cfg) {
    static std::optional<MainCorpus> corpus;
    if (corpus) return *corpus;
    corpus.emplace();
    Workload w(cfg.workload);
    corpus->keys = std::make_shared<const VectorSet>(w.keys(0, 0));
    const auto t0 = Clock::now();
    corpus->graph = build_graph(corpus->keys,
                                sample_queries(w.queries(0, 0, cfg.workload.n_tokens, 1), cfg.store.sample_ratio),
                                cfg.store.graph);
    corpus->build_s = since(t0);
    corpus->queries = w.queries(0, 0, 10000, 2);
    return *corpus;
}

Outcome diprs_quality(const EngineConfig& cfg) {
    const auto t0 = Clock::now();
    auto& c = main_corpus(cfg);
    const double beta = cfg.store.planner.beta;
    double sum = 0;
    double mean_truth = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        const auto q = c.queries.vector(i);
        const auto truth = dipr_bruteforce(q, *c.keys, beta);
        const auto got = diprs(*c.graph, q, c.graph->entry_point(), cfg.store.l0, beta).ids;
        sum += oracle::recall({truth.begin(), truth.end()}, got);
        mean_truth += double(truth.size()) / 100.0;
    }
    const double recall = sum / 100.0, secs = since(t0);
    return {recall >= 0.90 && secs < 120.0,
            fmt("%zu keys d=%zu, l0=%zu max_degree=%zu beta=%.1f: mean set-recall %.4f (>= 0.90), mean |truth| %.1f, "
                "%.1f s incl. %.1f s build (limit 120 s)",
                c.keys->size(), c.keys->dim(), cfg.store.l0, cfg.store.graph.max_degree, beta, recall, mean_truth, secs,
                c.build_s)};
}

// --- 4 ------------------------------------------------------------------------

Outcome frontier(const EngineConfig& cfg) {
    // Heterogeneous corpus: cluster populations follow a power law, so the
    // number of keys near a query varies widely from query to query.
    WorkloadSpec spec = cfg.workload;
    spec.n_tokens = 4000;
    spec.clusters = 32;
    spec.cluster_skew = 1.0;
    spec.spread = 0.2;
    spec.key_norm = 10.0;
    spec.query_norm = 10.0;
    Workload w(spec);
    auto keys = std::make_shared<const VectorSet>(w.keys(0, 0));
    FlatIndex flat(keys);
    const auto qs = w.queries(0, 0, 200, 2);
    std::vector<std::string> rows;
    std::size_t held = 0;
    const std::array<double, 3> checked{12.0, 16.0, 24.0};
    for (double beta : {2.0, 4.0, 8.0, 12.0, 16.0, 24.0}) {
        double count = 0, rec = 0;
        for (std::size_t i = 0; i < qs.size(); ++i) {
            const auto q = qs.vector(i);
            const auto sel = flat_dipr(flat, q, beta);
            count += double(sel.size());
            rec += recovery_ratio(q, *keys, sel);
        }
        count /= double(qs.size());
        rec /= double(qs.size());
        const auto k = static_cast<std::size_t>(std::ceil(count - 1e-9));
        double trec = 0;
        for (std::size_t i = 0; i < qs.size(); ++i) {
            const auto q = qs.vector(i);
            trec += recovery_ratio(q, *keys, flat_topk(flat, q, k));
        }
        trec /= double(qs.size());
        const bool is_checked = std::find(checked.begin(), checked.end(), beta) != checked.end();
        if (is_checked && rec >= trec) ++held;
        rows.push_back(fmt("beta=%g%s count=%.1f dipr=%.4f topk@%zu=%.4f", beta, is_checked ? "*" : "", count, rec, k,
                           trec));
    }
    std::string detail = fmt("%zu/3 checked points hold (* = checked):", held);
    for (const auto& r : rows) detail += "\n      " + r;
    return {held == checked.size(), detail};
}

// --- 5 ------------------------------------------------------------------------

Outcome filtered(const EngineConfig& cfg) {
    auto& c = main_corpus(cfg);
    const std::size_t n = c.keys->size();
    const double beta = cfg.store.planner.beta;
    FilterOptions opt = cfg.store.filter;

    std::mt19937_64 rng(5005);
    std::size_t violations = 0;
    for (std::size_t i = 0; i < 10000; ++i) {
        const std::size_t p = 1 + rng() % n;
        const auto q = c.queries.vector(i);
        for (TokenId t : filtered_diprs(*c.graph, q, {p}, cfg.store.l0, beta, opt).ids) violations += t >= p;
    }

    std::string detail = fmt("10000 random prefixes: %zu violations; two-hop %s", violations,
                             to_string(opt.two_hop).c_str());
    bool ok = violations == 0;
    std::map<double, double> latency;
    for (double ratio : {1.0, 0.6, 0.2}) {
        const auto p = static_cast<std::size_t>(std::llround(ratio * double(n)));
        double sum = 0;
        for (std::size_t i = 0; i < 100; ++i) {
            const auto q = c.queries.vector(i);
            const auto truth = dipr_bruteforce(q, *c.keys, beta, p);
            sum += oracle::recall({truth.begin(), truth.end()},
                                  filtered_diprs(*c.graph, q, {p}, cfg.store.l0, beta, opt).ids);
        }
        const double recall = sum / 100.0;
        ok = ok && recall >= 0.85;
        // best of five passes over 300 queries
        double best = INFINITY;
        for (int pass = 0; pass < 5; ++pass) {
            const auto t0 = Clock::now();
            std::size_t sink = 0;
            for (std::size_t i = 0; i < 300; ++i) {
                sink += filtered_diprs(*c.graph, c.queries.vector(1000 + i), {p}, cfg.store.l0, beta, opt).ids.size();
            }
            best = std::min(best, since(t0) / 300.0);
            if (sink == 0) best = INFINITY;
        }
        latency[ratio] = best;
        detail += fmt("\n      ratio %.1f: recall %.4f (>= 0.85), mean latency %.3f ms", ratio, recall, best * 1e3);
    }
    const double slow = latency[0.2] / latency[1.0];
    ok = ok && slow <= 2.0;
    detail += fmt("\n      latency(0.2) / latency(1.0) = %.2f (<= 2)", slow);
    return {ok, detail};
}

// --- 6 ------------------------------------------------------------------------

Outcome gqa(const EngineConfig& cfg) {
    WorkloadSpec spec = cfg.workload;
    spec.shape = {1, 4, 1, cfg.workload.shape.dim};
    Workload w(spec);
    const std::size_t g = 4;
    auto keys = std::make_shared<const VectorSet>(w.keys(0, 0));
    FlatIndex flat(keys);
    std::vector<VectorSet> train;
    for (std::size_t h = 0; h < g; ++h) train.push_back(w.queries(0, h, spec.n_tokens, 1));
    const auto shared = build_shared_graph(keys, train, cfg.store.sample_ratio, cfg.store.graph);
    std::size_t per_head_bytes = 0;
    double rec_shared = 0, rec_own = 0;
    const std::size_t per_head_queries = 50, k = 10, ef = 32;
    for (std::size_t h = 0; h < g; ++h) {
        const auto own = build_shared_graph(keys, std::span(&train[h], 1), cfg.store.sample_ratio, cfg.store.graph);
        per_head_bytes += own.memory_bytes();
        const auto qs = w.queries(0, h, per_head_queries, 2);
        for (std::size_t i = 0; i < qs.size(); ++i) {
            const auto q = qs.vector(i);
            const auto truth = flat_topk(flat, q, k);
            const std::set<TokenId> t(truth.begin(), truth.end());
            rec_shared += oracle::recall(t, graph_topk(shared, q, k, ef));
            rec_own += oracle::recall(t, graph_topk(own, q, k, ef));
        }
    }
    rec_shared /= double(g * per_head_queries);
    rec_own /= double(g * per_head_queries);
    const double ratio = double(shared.memory_bytes()) / double(per_head_bytes);
    const bool ok = rec_own - rec_shared <= 0.05 && ratio >= 0.8 / double(g) && ratio <= 1.2 / double(g);
    return {ok, fmt("g=4, top-%zu recall (ef=%zu): shared %.4f vs per-head %.4f (gap <= 0.05); memory ratio %.4f "
                    "(1/g = 0.25 +/- 20%%)",
                    k, ef, rec_shared, rec_own, ratio)};
}

// --- 7 ------------------------------------------------------------------------

Outcome planner(const EngineConfig& cfg) {
    const PlannerConfig& pc = cfg.store.planner;
    const ModelShape shape{32, 32, 8, 128};
    auto req = [&](std::size_t n, std::size_t budget, std::size_t layer, std::optional<std::size_t> prefix) {
        PlanRequest r;
        r.context_len = n;
        r.memory_budget_bytes = budget;
        r.layer = layer;
        r.reused_prefix_len = prefix;
        r.shape = shape;
        return r;
    };
    const std::size_t n = 100000;
    const std::size_t cost = coarse_residency_bytes(n, shape.dim, pc.resident_fraction);
    const std::size_t first = *pc.flat_layers.begin();
    std::size_t other = 0;
    while (pc.flat_layers.contains(other)) ++other;
    struct Branch {
        const char* name;
        PlanRequest r;
        QueryType q;
        IndexType i;
    };
    std::size_t table_failures = 0, rows = 0;
    // every branch, each with and without partial reuse
    for (std::optional<std::size_t> prefix : {std::optional<std::size_t>{}, std::optional<std::size_t>{n / 2}}) {
        const bool partial = prefix.has_value();
        const Branch branches[] = {
            {"short",
             req(pc.short_context_threshold, cost * 2, first,
                 partial ? std::optional<std::size_t>{pc.short_context_threshold / 2} : std::nullopt),
             QueryType::FullAttention,
             IndexType::None},
            {"coarse", req(n, cost, other, prefix), partial ? QueryType::FilteredTopK : QueryType::TopK,
             IndexType::Coarse},
            {"flat", req(n, cost - 1, first, prefix), partial ? QueryType::FilteredDIPR : QueryType::DIPR,
             IndexType::Flat},
            {"fine", req(n, 0, other, prefix), partial ? QueryType::FilteredDIPR : QueryType::DIPR, IndexType::Fine},
        };
        for (const auto& b : branches) {
            const auto p = plan(b.r, pc);
            ++rows;
            const bool wrapped = p.prefix_len.has_value() == (partial && b.q != QueryType::FullAttention);
            if (p.query != b.q || p.index != b.i || !wrapped) ++table_failures;
        }
    }
    std::mt19937_64 rng(7007);
    std::size_t illegal = 0;
    for (int i = 0; i < 10000; ++i) {
        const std::size_t len = rng() % 300000;
        std::optional<std::size_t> prefix;
        if (len > 1 && rng() % 2) prefix = 1 + rng() % (len - 1);
        const auto p = plan(req(len, rng() % (std::size_t(1) << 34), rng() % 32, prefix), pc);
        illegal += !is_legal(p.query, p.index);
    }
    return {table_failures == 0 && illegal == 0,
            fmt("decision table: %zu rows (short, coarse, flat, fine, each with and without prefix reuse), %zu mismatches; 10000 random requests: "
                "%zu illegal plans",
                rows, table_failures, illegal)};
}

// --- 8 ------------------------------------------------------------------------

Outcome storage(const EngineConfig&) {
    Scratch scratch;
    std::mt19937_64 rng(8008);
    std::size_t files = 0, mismatches = 0;
    for (int rep = 0; rep < 120; ++rep) {
        const std::size_t nv = 1 + rng() % 1200, d = 1 + rng() % 128;
        const auto vecs = oracle::gaussian_set(rng, nv, d, 4.0);
        std::optional<vfs::Adjacency> adj;
        if (rep % 2) {
            vfs::Adjacency a;
            a.max_degree = std::uint32_t(1 + rng() % 48);
            a.entry_point = std::uint32_t(rng() % nv);
            a.degrees.resize(nv);
            a.slots.assign(nv * a.max_degree, 0);
            for (std::size_t i = 0; i < nv; ++i) {
                a.degrees[i] = std::uint32_t(rng() % (a.max_degree + 1));
                for (std::size_t j = 0; j < a.degrees[i]; ++j) a.slots[i * a.max_degree + j] = TokenId(rng() % nv);
            }
            adj = a;
        }
        vfs::WriteOptions opt;
        opt.role = rep % 3 ? vfs::Role::Key : vfs::Role::Value;
        const auto p1 = scratch.path / fmt("r%d_a.avdb", rep);
        const auto p2 = scratch.path / fmt("r%d_b.avdb", rep);
        vfs::write_vector_file(p1, vecs, adj ? &*adj : nullptr, opt);
        vfs::VectorFile f(p1);
        const auto back = f.read_vectors();
        const auto back_adj = f.read_adjacency();
        vfs::write_vector_file(p2, back, back_adj ? &*back_adj : nullptr, opt);
        ++files;
        if (!(back == vecs) || back_adj != adj || hash_file(p1) != hash_file(p2)) ++mismatches;
    }

    // pool traces vs the simulated policy, plus the priority property
    const auto trace_file = scratch.path / "trace.avdb";
    {
        vfs::Adjacency a;
        a.max_degree = 32;
        a.degrees.assign(3000, 8);
        a.slots.assign(3000 * 32, 0);
        for (std::size_t i = 0; i < 3000; ++i) {
            for (std::size_t j = 0; j < 8; ++j) a.slots[i * 32 + j] = TokenId((i + j + 1) % 3000);
        }
        vfs::write_vector_file(trace_file, oracle::gaussian_set(rng, 3000, 32), &a);
    }
    vfs::VectorFile f(trace_file);
    const std::size_t nb = f.block_count();
    std::size_t traces = 0, policy_mismatch = 0, priority_violations = 0, accesses = 0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t cap = 1 + rng() % 16;
        vfs::BufferPool pool(cap);
        oracle::PoolSim sim{cap, {}, 0};
        ++traces;
        for (int step = 0; step < 500; ++step, ++accesses) {
            const std::uint64_t b = rng() % nb;
            const bool data = f.block_type(b) == vfs::BlockType::Data;
            const auto want = sim.access(b, data);
            const auto ev = pool.stats().evictions;
            bool data_resident = false;
            for (const auto& key : pool.resident_blocks()) data_resident |= f.block_type(key.block) == vfs::BlockType::Data;
            vfs::read_block(pool, f, b);
            const bool evicted = pool.stats().evictions != ev;
            if (evicted != (want >= 0) || (evicted && pool.last_victim()->block != std::uint64_t(want))) ++policy_mismatch;
            if (evicted && f.block_type(pool.last_victim()->block) != vfs::BlockType::Data && data_resident) {
                ++priority_violations;
            }
        }
    }
    // pinned traces: the priority rule must hold with pins in play too
    for (int t = 0; t < 100; ++t) {
        const std::size_t cap = 3 + rng() % 10;
        vfs::BufferPool pool(cap);
        std::vector<vfs::BufferPool::Handle> pins;
        for (int step = 0; step < 300; ++step, ++accesses) {
            const std::uint64_t b = rng() % nb;
            if (pins.size() + 1 >= cap || rng() % 4 == 0) {
                if (!pins.empty()) pins.erase(pins.begin() + std::ptrdiff_t(rng() % pins.size()));
            }
            bool unpinned_data = false;
            for (const auto& key : pool.resident_blocks()) {
                if (f.block_type(key.block) != vfs::BlockType::Data) continue;
                bool pinned = false;
                for (const auto& h : pins) pinned |= h.key().block == key.block;
                unpinned_data |= !pinned;
            }
            const auto ev = pool.stats().evictions;
            auto h = pool.read_block(f, b);
            if (pool.stats().evictions != ev && f.block_type(pool.last_victim()->block) != vfs::BlockType::Data &&
                unpinned_data) {
                ++priority_violations;
            }
            if (rng() % 2) pins.push_back(std::move(h));
        }
    }
    const bool ok = files >= 100 && mismatches == 0 && policy_mismatch == 0 && priority_violations == 0;
    return {ok, fmt("%zu files round-tripped, %zu mismatches; %zu traces (%zu accesses): %zu policy mismatches, "
                    "%zu index-before-data evictions",
                    files, mismatches, traces, accesses, policy_mismatch, priority_violations)};
}

// --- 9 ------------------------------------------------------------------------

Outcome late_materialization(const EngineConfig& cfg_in) {
    Scratch scratch;
    EngineConfig cfg = cfg_in;
    WorkloadSpec spec = cfg.workload;
    spec.n_tokens = 3000;
    spec.shape = {2, 2, 1, cfg.workload.shape.dim};
    Workload w(spec);
    StoreConfig sc = cfg.store;
    sc.extra_indexes.insert(IndexType::Fine);
    DB db(sc, scratch.path);
    const auto tokens = w.token_ids();
    const auto samples = w.samples(spec.n_tokens, 1);
    const auto base = db.import_context(tokens, w.kv_cache(), &samples);
    const auto base_dir = db.file_path(base, 0, 0, vfs::Role::Key).parent_path();
    const auto before = hash_tree(base_dir);

    auto [session, rest] = db.create_session(std::span(tokens).first(2000));
    std::size_t updates = 0;
    const std::size_t steps = 5000;
    for (std::size_t step = 0; step < steps; ++step) {
        for (std::size_t l = 0; l < spec.shape.n_layers; ++l) {
            auto [k, v] = w.token(l, 0, step);
            const Vector ks[] = {k}, vs[] = {v};
            session.update(l, ks, vs);
            ++updates;
            if (step % 250 == 0) {
                std::vector<Vector> qs;
                for (std::size_t h = 0; h < spec.shape.n_query_heads; ++h) qs.push_back(w.queries(l, h, 1, 100 + step).vector(0));
                session.attention(l, qs);
            }
        }
        const VocabToken t = VocabToken(40000 + step % 1000);
        session.append_token_ids(std::span(&t, 1));
    }
    const bool unchanged = hash_tree(base_dir) == before && db.context(base)->length() == 3000;
    const auto stored = db.store(session);
    const auto rec = db.context(stored);
    auto [reuse, truncated] = db.create_session(rec->token_ids);
    const bool ok = updates >= 10000 && unchanged && truncated.empty() && reuse.prefix_len() == rec->length() &&
                    stored != base;
    return {ok, fmt("%zu updates: base files %s (%zu files hashed); stored context %llu with %zu tokens, reuse "
                    "truncation %zu",
                    updates, unchanged ? "unchanged" : "CHANGED", before.size(), (unsigned long long)stored,
                    rec->length(), truncated.size())};
}

// --- 10 -----------------------------------------------------------------------

std::pair<int, std::string> capture(const std::string& cmd) {
    std::string out;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return {-1, ""};
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
    const int status = ::pclose(p);
    return {status, out};
}

Outcome determinism(const EngineConfig&, const std::string& cli, const std::string& config) {
    if (cli.empty()) return {false, "no --cli binary given"};
    Scratch scratch;
    const std::string common = " --config '" + config + "' --deterministic --format both";
    const std::string small = " --tokens 1500";
    std::vector<std::pair<std::string, std::string>> cmds{
        {"bench-dipr", "bench-dipr --queries 20 --index fine" + small},
        {"bench-heads", "bench-heads --query-heads 4 --queries 10" + small},
        {"decode-replay", "decode-replay --steps 4 --layers 2 --prefix-ratio 0.6" + small},
        {"build-bench", "build-bench --query-heads 2 --tokens 800"},
    };
    std::size_t identical = 0, total = 0;
    std::string failures;
    auto compare = [&](const std::string& name, const std::string& a_cmd, const std::string& b_cmd) {
        const auto a = capture(a_cmd), b = capture(b_cmd);
        ++total;
        if (a.first == 0 && b.first == 0 && a.second == b.second && !a.second.empty()) {
            ++identical;
        } else {
            failures += " " + name;
        }
    };
    for (const auto& [name, args] : cmds) {
        const std::string c = "'" + cli + "' " + args + common + " 2>&1";
        compare(name, c, c);
    }
    // persistent commands run against two fresh roots
    const auto r1 = (scratch.path / "one").string(), r2 = (scratch.path / "two").string();
    auto on = [&](const std::string& root, const std::string& args) {
        return "'" + cli + "' " + args + " --root '" + root + "'" + common + small + " 2>&1";
    };
    compare("import", on(r1, "import --layers 2"), on(r2, "import --layers 2"));
    compare("store", on(r1, "store --steps 5 --prefix-ratio 0.5"), on(r2, "store --steps 5 --prefix-ratio 0.5"));
    compare("inspect", "'" + cli + "' inspect '" + r1 + "' --blocks --format both 2>&1",
            "'" + cli + "' inspect '" + r2 + "' --blocks --format both 2>&1");
    return {identical == total,
            fmt("%zu/%zu subcommands byte-identical across two runs%s%s", identical, total,
                failures.empty() ? "" : "; differing:", failures.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    std::string config_path, cli;
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) {
            config_path = argv[++i];
        } else if (a == "--cli" && i + 1 < argc) {
            cli = argv[++i];
        } else if (a == "--only" && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::cerr << "usage: ctxdb_acceptance --config FILE --cli CTXDB_BINARY [--only N]\n";
            return 2;
        }
    }
    EngineConfig cfg;
    try {
        if (!config_path.empty()) load_config(cfg, config_path);
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }

    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"alpha/beta critical-set equivalence", [&] { return critical_sets(cfg); }},
        {"attention oracle equivalence", [&] { return attention_oracle(cfg); }},
        {"DIPRS recall", [&] { return diprs_quality(cfg); }},
        {"DIPR vs top-k frontier", [&] { return frontier(cfg); }},
        {"filtered search safety, recall, latency", [&] { return filtered(cfg); }},
        {"GQA shared index", [&] { return gqa(cfg); }},
        {"planner conformance", [&] { return planner(cfg); }},
        {"storage round-trip and buffer pool policy", [&] { return storage(cfg); }},
        {"late materialization", [&] { return late_materialization(cfg); }},
        {"CLI determinism", [&] { return determinism(cfg, cli, config_path); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only && std::size_t(only) != i + 1) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " -- "
                  << o.detail << std::endl;
    }
    return failed ? 1 : 0;
}
