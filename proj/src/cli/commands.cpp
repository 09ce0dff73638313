#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <thread>

#include <CLI11.hpp>

#include "ctxdb/attention.hpp"
#include "ctxdb/dipr.hpp"
#include "ctxdb/filter.hpp"
#include "ctxdb/graph.hpp"
#include "ctxdb/index.hpp"
#include "ctxdb/store.hpp"
#include "ctxdb/vfs.hpp"

namespace ctxdb::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Query streams; keep them apart so evaluation never sees build samples.
constexpr std::uint64_t kBuildStream = 1;
constexpr std::uint64_t kEvalStream = 2;
constexpr std::uint64_t kHeadsStream = 3;
constexpr std::uint64_t kDecodeStream = 1000;

GraphParams graph_params(const EngineConfig& cfg, const RunMode& mode) {
    GraphParams gp = cfg.store.graph;
    gp.threads = mode.workers();
    return gp;
}

}  // namespace

std::size_t RunMode::workers() const {
    if (deterministic) return 1;
    if (threads) return threads;
    return std::max(1u, std::thread::hardware_concurrency());
}

// --- bench-dipr ---------------------------------------------------------------

Report bench_dipr(const EngineConfig& cfg, const BenchDiprOptions& opt, const RunMode& mode) {
    const auto t0 = Clock::now();
    Workload w(cfg.workload);
    const std::size_t n = cfg.workload.n_tokens;
    auto keys = std::make_shared<const VectorSet>(w.keys(0, 0));
    FlatIndex flat(keys);
    std::optional<GraphIndex> graph;
    if (opt.index == IndexType::Fine) {
        graph = build_graph(keys, sample_queries(w.queries(0, 0, n, kBuildStream), cfg.store.sample_ratio),
                            graph_params(cfg, mode));
    } else if (opt.index != IndexType::Flat) {
        throw Error("bench-dipr supports the flat and fine indexes");
    }
    const VectorSet qs = w.queries(0, 0, opt.queries, kEvalStream);
    const std::size_t nq = qs.size();

    auto dipr_select = [&](const Vector& q, double beta) {
        return graph ? diprs(*graph, q, graph->entry_point(), cfg.store.l0, beta).ids : flat_dipr(flat, q, beta);
    };
    auto topk_select = [&](const Vector& q, std::size_t k) {
        return graph ? graph_topk(*graph, q, k, std::max<std::size_t>(k, 64)) : flat_topk(flat, q, k);
    };
    // Per-query results land in fixed slots, then reduce in query order.
    auto mean_over_queries = [&](auto&& select) {
        std::vector<double> count(nq), rec(nq);
        parallel_for(nq, mode.workers(), [&](std::size_t i) {
            const Vector q = qs.vector(i);
            const auto sel = select(q);
            count[i] = double(sel.size());
            rec[i] = recovery_ratio(q, *keys, sel);
        });
        return std::pair{mean(count), mean(rec)};
    };

    Report report("bench-dipr");
    std::vector<std::size_t> ks;
    for (std::size_t k : opt.ks) {
        if (k >= 1 && k <= n) ks.push_back(k);
    }
    for (std::size_t k : ks) {
        const auto [count, rec] = mean_over_queries([&](const Vector& q) { return topk_select(q, k); });
        auto& row = report.add("topk");
        row["k"] = k;
        row["mean_count"] = count;
        row["mean_recovery"] = rec;
    }
    std::size_t dominated = 0;
    for (double beta : opt.betas) {
        const auto [count, rec] = mean_over_queries([&](const Vector& q) { return dipr_select(q, beta); });
        const auto matched = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(count - 1e-9)), 1, n);
        const auto [mk, mrec] = mean_over_queries([&](const Vector& q) { return topk_select(q, matched); });
        (void)mk;
        auto& row = report.add("dipr");
        row["beta"] = beta;
        row["alpha"] = beta_to_alpha(beta, cfg.workload.shape.dim);
        row["mean_count"] = count;
        row["mean_recovery"] = rec;
        row["matched_k"] = matched;
        row["topk_recovery_at_matched_k"] = mrec;
        row["dipr_at_least_topk"] = rec >= mrec;
        dominated += rec >= mrec;
    }
    auto& s = report.add("summary");
    s["tokens"] = n;
    s["queries"] = nq;
    s["index"] = to_string(opt.index);
    s["l0"] = cfg.store.l0;
    s["points_dipr_at_least_topk"] = dominated;
    s["seed"] = cfg.workload.seed;
    if (!mode.deterministic) s["elapsed_s"] = seconds_since(t0);
    return report;
}

// --- bench-heads --------------------------------------------------------------

Report bench_heads(const EngineConfig& cfg_in, const BenchHeadsOptions& opt, const RunMode& mode) {
    EngineConfig cfg = cfg_in;
    const std::size_t H = cfg.workload.shape.n_query_heads;
    if (cfg.workload.head_sharpness.empty()) {
        // Spread heads from flat (0.25) to sharp (2.0), geometrically.
        for (std::size_t h = 0; h < H; ++h) {
            const double t = H == 1 ? 0.5 : double(h) / double(H - 1);
            cfg.workload.head_sharpness.push_back(0.25 * std::pow(8.0, t));
        }
    }
    Workload w(cfg.workload);
    const double beta = opt.beta.value_or(cfg.store.planner.beta);

    Report report("bench-heads");
    std::vector<double> oracle_means, dipr_means;
    std::map<std::size_t, std::shared_ptr<const VectorSet>> key_cache;
    for (std::size_t h = 0; h < H; ++h) {
        const std::size_t kv = cfg.workload.shape.kv_head_of(h);
        auto& keys = key_cache[kv];
        if (!keys) keys = std::make_shared<const VectorSet>(w.keys(0, kv));
        FlatIndex flat(keys);
        const VectorSet qs = w.queries(0, h, opt.queries, kHeadsStream);
        std::vector<double> oracle(qs.size()), count(qs.size()), rec(qs.size());
        parallel_for(qs.size(), mode.workers(), [&](std::size_t i) {
            const Vector q = qs.vector(i);
            oracle[i] = double(tokens_for_recovery(q, *keys, opt.target));
            const auto sel = flat_dipr(flat, q, beta);
            count[i] = double(sel.size());
            rec[i] = recovery_ratio(q, *keys, sel);
        });
        auto& row = report.add("head");
        row["query_head"] = h;
        row["kv_head"] = kv;
        row["sharpness"] = cfg.workload.head_sharpness[h];
        row["oracle_count"] = mean(oracle);
        row["dipr_count"] = mean(count);
        row["dipr_recovery"] = mean(rec);
        oracle_means.push_back(mean(oracle));
        dipr_means.push_back(mean(count));
    }
    auto& s = report.add("summary");
    s["heads"] = H;
    s["beta"] = beta;
    s["target_recovery"] = opt.target;
    s["oracle_count_min"] = *std::min_element(oracle_means.begin(), oracle_means.end());
    s["oracle_count_max"] = *std::max_element(oracle_means.begin(), oracle_means.end());
    s["correlation"] = pearson(dipr_means, oracle_means);
    s["seed"] = cfg.workload.seed;
    return report;
}

// --- decode-replay ------------------------------------------------------------

namespace {

struct PlanChoice {
    bool automatic = true;
    QueryType query = QueryType::FullAttention;
    IndexType index = IndexType::None;
};

PlanChoice parse_plan_choice(const std::string& s) {
    if (s == "auto") return {};
    if (s == "full") return {false, QueryType::FullAttention, IndexType::None};
    if (s == "dipr-flat") return {false, QueryType::DIPR, IndexType::Flat};
    if (s == "dipr-fine") return {false, QueryType::DIPR, IndexType::Fine};
    if (s == "topk-coarse") return {false, QueryType::TopK, IndexType::Coarse};
    throw Error("unknown plan '" + s + "' (auto | full | dipr-flat | dipr-fine | topk-coarse)");
}

std::string describe(const Plan& p) {
    std::string s = to_string(p.query) + "/" + to_string(p.index);
    if (p.prefix_len) s += "[<" + std::to_string(*p.prefix_len) + "]";
    return s;
}

}  // namespace

Report decode_replay(const EngineConfig& cfg_in, const DecodeReplayOptions& opt, const RunMode& mode) {
    if (!(opt.prefix_ratio > 0.0 && opt.prefix_ratio <= 1.0)) throw Error("prefix ratio must lie in (0, 1]");
    EngineConfig cfg = cfg_in;
    cfg.store.graph.threads = mode.workers();
    const PlanChoice choice = parse_plan_choice(opt.plan);
    if (!choice.automatic && choice.index != IndexType::None && choice.index != IndexType::Flat) {
        cfg.store.extra_indexes.insert(choice.index);
    }
    const ModelShape& shape = cfg.workload.shape;
    const std::size_t n = cfg.workload.n_tokens;
    Workload w(cfg.workload);

    DB db(cfg.store, opt.root);
    const auto samples = w.samples(n, kBuildStream);
    const auto tokens = w.token_ids();
    db.import_context(tokens, w.kv_cache(), &samples);

    const auto P = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(opt.prefix_ratio * double(n))), 1, n);
    std::vector<VocabToken> prompt(tokens.begin(), tokens.begin() + std::ptrdiff_t(P));
    auto [session, rest] = db.create_session(prompt);
    const bool partial = session.prefix_len() < n;
    if (!choice.automatic) {
        for (std::size_t l = 0; l < shape.n_layers; ++l) {
            Plan p;
            p.index = choice.index;
            p.query = choice.query;
            if (partial && p.query == QueryType::DIPR) p.query = QueryType::FilteredDIPR;
            if (partial && p.query == QueryType::TopK) p.query = QueryType::FilteredTopK;
            p.beta = cfg.store.planner.beta;
            p.k = cfg.store.planner.topk_blocks;
            session.set_plan(l, p);
        }
    }

    Report report("decode-replay");
    std::vector<double> tpot, recoveries;
    double max_dev = 0.0;
    std::size_t violations = 0;
    for (std::size_t step = 0; step < opt.steps; ++step) {
        std::vector<std::vector<Vector>> queries(shape.n_layers);
        for (std::size_t l = 0; l < shape.n_layers; ++l) {
            for (std::size_t h = 0; h < shape.n_query_heads; ++h) {
                queries[l].push_back(w.queries(l, h, 1, kDecodeStream + step).vector(0));
            }
        }
        std::vector<std::vector<Vector>> ks(shape.n_layers), vs(shape.n_layers);
        for (std::size_t l = 0; l < shape.n_layers; ++l) {
            for (std::size_t h = 0; h < shape.n_kv_heads; ++h) {
                auto [k, v] = w.token(l, h, step);
                ks[l].push_back(std::move(k));
                vs[l].push_back(std::move(v));
            }
        }

        const auto t0 = Clock::now();
        std::vector<AttentionResult> results;
        for (std::size_t l = 0; l < shape.n_layers; ++l) {
            session.update(l, ks[l], vs[l]);
            results.push_back(session.attention(l, queries[l]));
        }
        const double elapsed = seconds_since(t0);
        const VocabToken generated = VocabToken(32000 + step);
        session.append_token_ids(std::span(&generated, 1));

        // Quality against the full-attention oracle over the logical K/V.
        std::vector<double> rec;
        double dev = 0.0, selected = 0.0, retrieved = 0.0;
        for (std::size_t l = 0; l < shape.n_layers; ++l) {
            for (std::size_t kv = 0; kv < shape.n_kv_heads; ++kv) {
                const auto [K, V] = session.view(l, kv).materialize();
                for (std::size_t h = 0; h < shape.n_query_heads; ++h) {
                    if (shape.kv_head_of(h) != kv) continue;
                    const Vector& q = queries[l][h];
                    const auto oracle = full_attention(q, K, V);
                    double d2 = 0.0;
                    for (std::size_t t = 0; t < shape.dim; ++t) {
                        const double diff = double(results[l].outputs[h][t]) - double(oracle.o[t]);
                        d2 += diff * diff;
                    }
                    dev = std::max(dev, std::sqrt(d2));
                    rec.push_back(recovery_ratio(q, K, results[l].selected[h]));
                    selected += double(results[l].selected[h].size());
                    retrieved += double(results[l].retrieved[h]);
                }
            }
        }
        const double heads = double(shape.n_layers * shape.n_query_heads);
        auto& row = report.add("step");
        row["step"] = step;
        row["selected"] = selected / heads;
        row["retrieved"] = retrieved / heads;
        row["recovery"] = mean(rec);
        row["deviation"] = dev;
        if (!mode.deterministic) {
            row["tpot_ms"] = elapsed * 1e3;
            row["slo_violation"] = elapsed > opt.slo_seconds;
        }
        tpot.push_back(elapsed);
        violations += elapsed > opt.slo_seconds;
        recoveries.insert(recoveries.end(), rec.begin(), rec.end());
        max_dev = std::max(max_dev, dev);
    }

    std::string plans;
    for (std::size_t l = 0; l < shape.n_layers; ++l) plans += (l ? "," : "") + describe(session.plan(l));
    auto& s = report.add("summary");
    s["plan"] = plans;
    s["context_tokens"] = n;
    s["prefix_len"] = session.prefix_len();
    s["steps"] = opt.steps;
    s["mean_recovery"] = mean(recoveries);
    s["min_recovery"] = recoveries.empty() ? 0.0 : *std::min_element(recoveries.begin(), recoveries.end());
    s["max_deviation"] = max_dev;
    s["slo_s"] = opt.slo_seconds;
    if (!mode.deterministic) {
        s["tpot_p50_ms"] = percentile(tpot, 50) * 1e3;
        s["tpot_p90_ms"] = percentile(tpot, 90) * 1e3;
        s["tpot_p99_ms"] = percentile(tpot, 99) * 1e3;
        s["slo_violations"] = violations;
    }
    s["seed"] = cfg.workload.seed;
    return report;
}

// --- build-bench --------------------------------------------------------------

Report build_bench(const EngineConfig& cfg, const BuildBenchOptions& opt, const RunMode& mode) {
    const ModelShape& shape = cfg.workload.shape;
    const std::size_t n = cfg.workload.n_tokens;
    const std::size_t g = shape.group_size();
    Workload w(cfg.workload);

    struct Variant {
        std::string layout, knn;
        std::size_t threads;
        std::size_t bytes = 0, graphs = 0;
        double seconds = 0.0;
        std::vector<GraphIndex> built;
    };
    std::vector<Variant> variants;
    const std::size_t parallel_threads = mode.workers();
    for (const char* knn : {"serial", "parallel"}) {
        const std::size_t threads = std::string(knn) == "serial" ? 1 : parallel_threads;
        variants.push_back({"per-head", knn, threads, 0, 0, 0.0, {}});
        variants.push_back({"shared", knn, threads, 0, 0, 0.0, {}});
    }
    for (std::size_t kv = 0; kv < shape.n_kv_heads; ++kv) {
        auto keys = std::make_shared<const VectorSet>(w.keys(0, kv));
        std::vector<VectorSet> train;
        for (std::size_t h = kv * g; h < (kv + 1) * g; ++h) train.push_back(w.queries(0, h, n, kBuildStream));
        for (auto& v : variants) {
            GraphParams gp = cfg.store.graph;
            gp.threads = v.threads;
            const auto t0 = Clock::now();
            if (v.layout == "per-head") {
                for (const auto& head : train) v.built.push_back(build_shared_graph(keys, std::span(&head, 1), opt.sample_ratio, gp));
            } else {
                v.built.push_back(build_shared_graph(keys, train, opt.sample_ratio, gp));
            }
            v.seconds += seconds_since(t0);
        }
    }
    Report report("build-bench");
    for (auto& v : variants) {
        for (const auto& gi : v.built) v.bytes += gi.memory_bytes();
        v.graphs = v.built.size();
        auto& row = report.add("build");
        row["layout"] = v.layout;
        row["knn"] = v.knn;
        row["threads"] = v.threads;
        row["graphs"] = v.graphs;
        row["index_bytes"] = v.bytes;
        if (!mode.deterministic) row["build_s"] = v.seconds;
    }
    const double ratio = double(variants[1].bytes) / double(variants[0].bytes);
    const double expected = 1.0 / double(g);
    bool identical = true;
    for (std::size_t i = 0; i < 2; ++i) {
        const auto& a = variants[i].built;
        const auto& b = variants[i + 2].built;
        for (std::size_t j = 0; j < a.size(); ++j) identical = identical && a[j] == b[j];
    }
    auto& s = report.add("summary");
    s["tokens"] = n;
    s["group_size"] = g;
    s["memory_ratio"] = ratio;
    s["expected_ratio"] = expected;
    s["ratio_within_20pct"] = ratio >= 0.8 * expected && ratio <= 1.2 * expected;
    s["parallel_matches_serial"] = identical;
    if (!mode.deterministic) {
        s["cores"] = std::thread::hardware_concurrency();
        s["knn_speedup_per_head"] = variants[0].seconds / variants[2].seconds;
        s["knn_speedup_shared"] = variants[1].seconds / variants[3].seconds;
    }
    s["seed"] = cfg.workload.seed;
    return report;
}

// --- import / store -----------------------------------------------------------

namespace {

std::uintmax_t dir_bytes(const std::filesystem::path& dir, std::size_t* files = nullptr) {
    std::uintmax_t total = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        total += e.file_size();
        if (files) ++*files;
    }
    return total;
}

std::string index_summary(const ContextRecord& rec) {
    std::string out;
    for (std::size_t l = 0; l < rec.kv.shape.n_layers; ++l) {
        const auto& idx = rec.index(l, 0);
        std::string kinds = "flat";
        if (idx.graph) kinds += "+fine";
        if (idx.block) kinds += "+coarse";
        out += (l ? "," : "") + std::string("L") + std::to_string(l) + ":" + kinds;
    }
    return out;
}

std::size_t content_hash(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t h = 0;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        h = h * 1000003u ^ std::hash<std::string>{}(f.filename().string() + bytes);
    }
    return h;
}

}  // namespace

Report import_context(const EngineConfig& cfg_in, const std::filesystem::path& root, const RunMode& mode) {
    EngineConfig cfg = cfg_in;
    cfg.store.graph.threads = mode.workers();
    const auto t0 = Clock::now();
    auto db = DB::open(root, cfg.store);
    Workload w(cfg.workload);
    const auto samples = w.samples(cfg.workload.n_tokens, kBuildStream);
    const ContextId id = db->import_context(w.token_ids(), w.kv_cache(), &samples);
    const auto rec = db->context(id);
    std::size_t files = 0;
    const auto bytes = dir_bytes(root / ("ctx_" + std::to_string(id)), &files);

    Report report("import");
    auto& row = report.add("context");
    row["context_id"] = id;
    row["tokens"] = rec->length();
    row["layers"] = rec->kv.shape.n_layers;
    row["kv_heads"] = rec->kv.shape.n_kv_heads;
    row["indexes"] = index_summary(*rec);
    row["files"] = files;
    row["bytes"] = bytes;
    row["contexts_in_store"] = db->context_ids().size();
    if (!mode.deterministic) row["elapsed_s"] = seconds_since(t0);
    return report;
}

Report store_session(const EngineConfig& cfg_in, const StoreOptions& opt, const RunMode& mode) {
    EngineConfig cfg = cfg_in;
    cfg.store.graph.threads = mode.workers();
    const auto t0 = Clock::now();
    auto db = DB::open(opt.root, cfg.store);
    const auto ids = db->context_ids();
    if (ids.empty()) throw Error(opt.root.string() + ": store holds no contexts; run import first");
    const ContextId base_id = opt.base.value_or(ids.back());
    const auto base = db->context(base_id);
    const auto base_dir = opt.root / ("ctx_" + std::to_string(base_id));
    const std::size_t before = content_hash(base_dir);

    const std::size_t n = base->length();
    const auto P = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(opt.prefix_ratio * double(n))), 1, n);
    std::vector<VocabToken> prompt(base->token_ids.begin(), base->token_ids.begin() + std::ptrdiff_t(P));
    auto [session, rest] = db->create_session(prompt);

    WorkloadSpec spec = cfg.workload;
    spec.shape = base->kv.shape;
    Workload w(spec);
    const ModelShape& shape = spec.shape;
    for (std::size_t step = 0; step < opt.steps; ++step) {
        for (std::size_t l = 0; l < shape.n_layers; ++l) {
            std::vector<Vector> ks, vs, qs;
            for (std::size_t h = 0; h < shape.n_kv_heads; ++h) {
                auto [k, v] = w.token(l, h, step);
                ks.push_back(std::move(k));
                vs.push_back(std::move(v));
            }
            for (std::size_t h = 0; h < shape.n_query_heads; ++h) {
                qs.push_back(w.queries(l, h, 1, kDecodeStream + step).vector(0));
            }
            session.update(l, ks, vs);
            session.attention(l, qs);
        }
        const VocabToken generated = VocabToken(40000 + step);
        session.append_token_ids(std::span(&generated, 1));
    }
    const ContextId new_id = db->store(session);
    const auto stored = db->context(new_id);
    auto [reuse, truncated] = db->create_session(stored->token_ids);

    Report report("store");
    auto& row = report.add("store");
    row["base_id"] = base_id;
    row["prefix_len"] = session.prefix_len();
    row["generated"] = session.generated_token_ids().size();
    row["new_id"] = new_id;
    row["new_tokens"] = stored->length();
    row["indexes"] = index_summary(*stored);
    row["reuse_prefix_len"] = reuse.prefix_len();
    row["reuse_truncated"] = truncated.size();
    row["base_files_unchanged"] = content_hash(base_dir) == before;
    if (!mode.deterministic) row["elapsed_s"] = seconds_since(t0);
    return report;
}

// --- inspect ------------------------------------------------------------------

Report inspect(const std::vector<std::filesystem::path>& paths, bool blocks) {
    std::vector<std::filesystem::path> files;
    for (const auto& p : paths) {
        if (std::filesystem::is_directory(p)) {
            for (const auto& e : std::filesystem::recursive_directory_iterator(p)) {
                if (e.is_regular_file() && e.path().extension() == ".avdb") files.push_back(e.path());
            }
        } else {
            files.push_back(p);
        }
    }
    std::sort(files.begin(), files.end());
    Report report("inspect");
    for (const auto& path : files) {
        vfs::VectorFile f(path);
        const auto& h = f.header();
        auto& row = report.add("file");
        row["file"] = path.filename().string();
        row["version"] = h.version;
        row["role"] = h.role == vfs::Role::Key ? "K" : "V";
        row["dim"] = h.dim;
        row["elem_bits"] = h.elem_bits;
        row["vectors"] = h.n_vectors;
        row["blocks"] = h.n_blocks;
        row["slots_per_block"] = h.slots_per_data_block;
        row["index_nodes"] = h.n_index_nodes;
        row["max_degree"] = h.max_degree;
        row["entry_point"] = h.entry_point;
        row["tombstones"] = h.n_tombstones;
        row["directory_block"] = h.directory_block;
        row["bytes"] = std::filesystem::file_size(path);
        if (!blocks) continue;
        const auto& dir = f.directory();
        for (std::size_t b = 0; b < dir.size(); ++b) {
            static const char* names[] = {"?", "header", "data", "index", "directory", "free"};
            const auto t = static_cast<std::uint32_t>(dir[b].type);
            auto& br = report.add("block");
            br["file"] = path.filename().string();
            br["block"] = b;
            br["offset"] = dir[b].offset;
            br["type"] = t < 6 ? names[t] : "?";
            br["aux"] = dir[b].aux;
        }
    }
    return report;
}

// --- command line -------------------------------------------------------------

namespace {

struct Overrides {
    std::optional<std::string> config;
    // workload
    std::optional<std::size_t> tokens, layers, query_heads, kv_heads, dim, clusters, intrinsic_dim;
    std::optional<double> spread, skew, shift, key_norm, query_norm, flat_fraction, flat_scale;
    std::optional<std::string> distribution, query_model;
    std::vector<double> sharpness;
    std::optional<std::uint64_t> seed;
    // engine
    std::optional<std::size_t> l0, max_degree, knn_k, enhance_ef, window_initial, window_last, budget, block_size,
        representatives, topk_blocks;
    std::optional<double> beta;
    std::optional<std::string> two_hop;
    std::optional<std::uint32_t> elem_bits;

    void apply(EngineConfig& cfg) const {
        auto set = [](const auto& from, auto& to) {
            if (from) to = *from;
        };
        auto& w = cfg.workload;
        set(tokens, w.n_tokens);
        set(layers, w.shape.n_layers);
        set(query_heads, w.shape.n_query_heads);
        set(kv_heads, w.shape.n_kv_heads);
        set(dim, w.shape.dim);
        set(clusters, w.clusters);
        set(intrinsic_dim, w.intrinsic_dim);
        set(spread, w.spread);
        set(skew, w.cluster_skew);
        set(shift, w.shift);
        set(key_norm, w.key_norm);
        set(query_norm, w.query_norm);
        set(flat_fraction, w.flat_fraction);
        set(flat_scale, w.flat_scale);
        if (distribution) w.distribution = parse_distribution(*distribution);
        if (query_model) w.query_model = parse_query_model(*query_model);
        if (!sharpness.empty()) w.head_sharpness = sharpness;
        set(seed, w.seed);
        auto& s = cfg.store;
        set(l0, s.l0);
        set(max_degree, s.graph.max_degree);
        set(knn_k, s.graph.knn_k);
        set(enhance_ef, s.graph.enhance_ef);
        set(window_initial, s.window.initial);
        set(window_last, s.window.last);
        set(budget, s.memory_budget_bytes);
        set(block_size, s.block.block_size);
        set(representatives, s.block.representatives);
        set(topk_blocks, s.planner.topk_blocks);
        set(beta, s.planner.beta);
        if (two_hop) s.filter.two_hop = parse_two_hop(*two_hop);
        set(elem_bits, s.file_elem_bits);
    }
};

void add_engine_options(CLI::App& app, Overrides& o) {
    app.add_option("--config", o.config, "Engine config file (JSON); overrides $CTXDB_CONFIG");
    app.add_option("--tokens", o.tokens, "Context length");
    app.add_option("--layers", o.layers, "Layers");
    app.add_option("--query-heads", o.query_heads, "Query heads per layer");
    app.add_option("--kv-heads", o.kv_heads, "KV heads per layer");
    app.add_option("--dim", o.dim, "Head dimension");
    app.add_option("--distribution", o.distribution, "gaussian-clusters | uniform-sphere");
    app.add_option("--clusters", o.clusters, "Key clusters");
    app.add_option("--spread", o.spread, "Within-cluster noise scale");
    app.add_option("--intrinsic-dim", o.intrinsic_dim, "Rank of within-cluster noise (0 = isotropic)");
    app.add_option("--skew", o.skew, "Cluster population skew");
    app.add_option("--query-model", o.query_model, "in-distribution | shifted");
    app.add_option("--shift", o.shift, "Query offset for the shifted model");
    app.add_option("--key-norm", o.key_norm, "Key scale");
    app.add_option("--query-norm", o.query_norm, "Query scale");
    app.add_option("--flat-fraction", o.flat_fraction, "Share of low-sharpness queries");
    app.add_option("--flat-scale", o.flat_scale, "Scale applied to low-sharpness queries");
    app.add_option("--sharpness", o.sharpness, "Per query head sharpness multipliers")->delimiter(',');
    app.add_option("--seed", o.seed, "Workload seed");
    app.add_option("--l0", o.l0, "DIPRS capacity threshold");
    app.add_option("--beta", o.beta, "DIPR inner-product slack");
    app.add_option("--max-degree", o.max_degree, "Graph max degree");
    app.add_option("--knn-k", o.knn_k, "Query kNN depth for graph construction");
    app.add_option("--enhance-ef", o.enhance_ef, "Beam width of the connectivity pass");
    app.add_option("--two-hop", o.two_hop, "adaptive | always");
    app.add_option("--window-initial", o.window_initial, "Initial tokens always attended");
    app.add_option("--window-last", o.window_last, "Recent tokens always attended");
    app.add_option("--budget", o.budget, "Memory budget in bytes for the planner");
    app.add_option("--block-size", o.block_size, "Coarse index block size");
    app.add_option("--representatives", o.representatives, "Representatives per coarse block");
    app.add_option("--topk-blocks", o.topk_blocks, "Blocks fetched by coarse top-k");
    app.add_option("--elem-bits", o.elem_bits, "Vector file element width (16 or 32)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"ctxdb: KV-cache retrieval engine harness"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    std::string format = "table";
    std::optional<std::string> out_path;
    bool deterministic = false;
    std::optional<std::size_t> threads;
    add_engine_options(app, o);
    app.add_option("--format", format, "table | jsonl | both")->check(CLI::IsMember({"table", "jsonl", "both"}));
    app.add_option("--out", out_path, "Also write line-delimited JSON records to this file");
    app.add_flag("--deterministic", deterministic, "One worker and no timing fields (byte-identical reports)");
    app.add_option("--threads", threads, "Workers for parallel stages (0 = all cores; default graph.threads)");

    BenchDiprOptions dipr_opt;
    std::string dipr_index = "flat";
    auto* dipr_cmd = app.add_subcommand("bench-dipr", "DIPR vs top-k: retrieved tokens and recovery ratio");
    dipr_cmd->add_option("--queries", dipr_opt.queries, "Evaluation queries");
    dipr_cmd->add_option("--betas", dipr_opt.betas, "Beta sweep")->delimiter(',');
    dipr_cmd->add_option("--ks", dipr_opt.ks, "Top-k sweep")->delimiter(',');
    dipr_cmd->add_option("--index", dipr_index, "flat | fine");

    BenchHeadsOptions heads_opt;
    auto* heads_cmd = app.add_subcommand("bench-heads", "Per-head tokens needed for a recovery target vs DIPR counts");
    heads_cmd->add_option("--queries", heads_opt.queries, "Queries per head");
    heads_cmd->add_option("--target", heads_opt.target, "Recovery target");

    DecodeReplayOptions replay_opt;
    std::optional<std::string> replay_root;
    auto* replay_cmd = app.add_subcommand("decode-replay", "Replay decode steps through a session");
    replay_cmd->add_option("--steps", replay_opt.steps, "Decode steps");
    replay_cmd->add_option("--plan", replay_opt.plan, "auto | full | dipr-flat | dipr-fine | topk-coarse");
    replay_cmd->add_option("--prefix-ratio", replay_opt.prefix_ratio, "Share of the stored prompt reused");
    replay_cmd->add_option("--slo", replay_opt.slo_seconds, "TPOT SLO in seconds");
    replay_cmd->add_option("--root", replay_root, "Persist the context under this directory");

    BuildBenchOptions build_opt;
    auto* build_cmd = app.add_subcommand("build-bench", "Index construction: per-head vs shared, serial vs parallel");
    build_cmd->add_option("--sample-ratio", build_opt.sample_ratio, "Queries sampled per head");

    std::string import_root;
    auto* import_cmd = app.add_subcommand("import", "Generate a context and import it into a store");
    import_cmd->add_option("--root", import_root, "Store directory")->required();

    StoreOptions store_opt;
    std::string store_root;
    std::optional<ContextId> store_base;
    auto* store_cmd = app.add_subcommand("store", "Extend a stored context through a session and store it");
    store_cmd->add_option("--root", store_root, "Store directory")->required();
    store_cmd->add_option("--steps", store_opt.steps, "Generated tokens");
    store_cmd->add_option("--prefix-ratio", store_opt.prefix_ratio, "Share of the base context reused");
    store_cmd->add_option("--base", store_base, "Base context id (default: most recent)");

    std::vector<std::string> inspect_paths;
    bool inspect_blocks = false;
    auto* inspect_cmd = app.add_subcommand("inspect", "Print vector file headers and block directories");
    inspect_cmd->add_option("paths", inspect_paths, "Files or store directories")->required();
    inspect_cmd->add_flag("--blocks", inspect_blocks, "List every block");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        EngineConfig cfg;
        load_config(cfg, o.config ? std::optional<std::filesystem::path>(*o.config) : std::nullopt);
        o.apply(cfg);
        RunMode mode{deterministic, threads ? *threads : cfg.store.graph.threads};

        std::optional<Report> report;
        if (*dipr_cmd) {
            dipr_opt.index = parse_index_type(dipr_index);
            report = bench_dipr(cfg, dipr_opt, mode);
        } else if (*heads_cmd) {
            report = bench_heads(cfg, heads_opt, mode);
        } else if (*replay_cmd) {
            if (replay_root) replay_opt.root = *replay_root;
            report = decode_replay(cfg, replay_opt, mode);
        } else if (*build_cmd) {
            report = build_bench(cfg, build_opt, mode);
        } else if (*import_cmd) {
            report = import_context(cfg, import_root, mode);
        } else if (*store_cmd) {
            store_opt.root = store_root;
            store_opt.base = store_base;
            report = store_session(cfg, store_opt, mode);
        } else if (*inspect_cmd) {
            report = inspect({inspect_paths.begin(), inspect_paths.end()}, inspect_blocks);
        }

        if (format == "table" || format == "both") report->write_table(out);
        if (format == "both") out << '\n';
        if (format == "jsonl" || format == "both") report->write_jsonl(out);
        if (out_path) {
            std::ofstream f(*out_path);
            if (!f) throw Error(*out_path + ": cannot write report");
            report->write_jsonl(f);
        }
        return 0;
    } catch (const std::exception& e) {
        err << "ctxdb: error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace ctxdb::cli
