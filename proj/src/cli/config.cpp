#include "config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace ctxdb::cli {

using json = nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw Error(where + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) throw Error(where + ": unknown key '" + key + "'");
    }
}

template <class T>
void take(const json& obj, const char* key, T& out, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw Error(where + "." + key + ": wrong type");
    }
}

}  // namespace

EngineConfig::EngineConfig() {
    // Engine defaults that differ from the library's.
    store.l0 = 64;
}

IndexType parse_index_type(const std::string& s) {
    if (s == "none") return IndexType::None;
    if (s == "coarse") return IndexType::Coarse;
    if (s == "fine") return IndexType::Fine;
    if (s == "flat") return IndexType::Flat;
    throw Error("unknown index type '" + s + "' (none | coarse | fine | flat)");
}

TwoHopMode parse_two_hop(const std::string& s) {
    if (s == "adaptive") return TwoHopMode::Adaptive;
    if (s == "always") return TwoHopMode::Always;
    throw Error("unknown two-hop mode '" + s + "' (adaptive | always)");
}

std::string to_string(TwoHopMode m) { return m == TwoHopMode::Adaptive ? "adaptive" : "always"; }

void apply_json(EngineConfig& cfg, const json& doc) {
    check_keys(doc, {"workload", "window", "planner", "graph", "block", "filter", "search", "store"}, "config");

    if (auto it = doc.find("workload"); it != doc.end()) {
        const std::string w = "workload";
        check_keys(*it, {"tokens", "layers", "query_heads", "kv_heads", "dim", "distribution", "clusters", "spread",
                         "intrinsic_dim", "cluster_skew", "query_model", "shift", "key_norm", "query_norm",
                         "head_sharpness", "flat_fraction", "flat_scale", "seed"},
                   w);
        auto& s = cfg.workload;
        take(*it, "tokens", s.n_tokens, w);
        take(*it, "layers", s.shape.n_layers, w);
        take(*it, "query_heads", s.shape.n_query_heads, w);
        take(*it, "kv_heads", s.shape.n_kv_heads, w);
        take(*it, "dim", s.shape.dim, w);
        if (it->contains("distribution")) s.distribution = parse_distribution(it->at("distribution").get<std::string>());
        take(*it, "clusters", s.clusters, w);
        take(*it, "spread", s.spread, w);
        take(*it, "intrinsic_dim", s.intrinsic_dim, w);
        take(*it, "cluster_skew", s.cluster_skew, w);
        if (it->contains("query_model")) s.query_model = parse_query_model(it->at("query_model").get<std::string>());
        take(*it, "shift", s.shift, w);
        take(*it, "key_norm", s.key_norm, w);
        take(*it, "query_norm", s.query_norm, w);
        take(*it, "head_sharpness", s.head_sharpness, w);
        take(*it, "flat_fraction", s.flat_fraction, w);
        take(*it, "flat_scale", s.flat_scale, w);
        take(*it, "seed", s.seed, w);
    }
    if (auto it = doc.find("window"); it != doc.end()) {
        check_keys(*it, {"initial", "last"}, "window");
        take(*it, "initial", cfg.store.window.initial, "window");
        take(*it, "last", cfg.store.window.last, "window");
    }
    if (auto it = doc.find("planner"); it != doc.end()) {
        const std::string w = "planner";
        check_keys(*it, {"short_context_threshold", "resident_fraction", "flat_layers", "topk_blocks", "beta"}, w);
        auto& p = cfg.store.planner;
        take(*it, "short_context_threshold", p.short_context_threshold, w);
        take(*it, "resident_fraction", p.resident_fraction, w);
        take(*it, "flat_layers", p.flat_layers, w);
        take(*it, "topk_blocks", p.topk_blocks, w);
        take(*it, "beta", p.beta, w);
    }
    if (auto it = doc.find("graph"); it != doc.end()) {
        const std::string w = "graph";
        check_keys(*it, {"max_degree", "knn_k", "enhance_ef", "prune_alpha", "threads"}, w);
        auto& g = cfg.store.graph;
        take(*it, "max_degree", g.max_degree, w);
        take(*it, "knn_k", g.knn_k, w);
        take(*it, "enhance_ef", g.enhance_ef, w);
        take(*it, "prune_alpha", g.prune_alpha, w);
        take(*it, "threads", g.threads, w);
    }
    if (auto it = doc.find("block"); it != doc.end()) {
        check_keys(*it, {"block_size", "representatives"}, "block");
        take(*it, "block_size", cfg.store.block.block_size, "block");
        take(*it, "representatives", cfg.store.block.representatives, "block");
    }
    if (auto it = doc.find("filter"); it != doc.end()) {
        check_keys(*it, {"two_hop", "adaptive_threshold"}, "filter");
        if (it->contains("two_hop")) cfg.store.filter.two_hop = parse_two_hop(it->at("two_hop").get<std::string>());
        take(*it, "adaptive_threshold", cfg.store.filter.adaptive_threshold, "filter");
    }
    if (auto it = doc.find("search"); it != doc.end()) {
        check_keys(*it, {"l0"}, "search");
        take(*it, "l0", cfg.store.l0, "search");
    }
    if (auto it = doc.find("store"); it != doc.end()) {
        const std::string w = "store";
        check_keys(*it, {"memory_budget_bytes", "sample_ratio", "file_elem_bits", "pool_capacity_blocks", "extra_indexes"},
                   w);
        auto& s = cfg.store;
        take(*it, "memory_budget_bytes", s.memory_budget_bytes, w);
        take(*it, "sample_ratio", s.sample_ratio, w);
        take(*it, "file_elem_bits", s.file_elem_bits, w);
        take(*it, "pool_capacity_blocks", s.pool_capacity_blocks, w);
        if (it->contains("extra_indexes")) {
            s.extra_indexes.clear();
            for (const auto& name : it->at("extra_indexes")) s.extra_indexes.insert(parse_index_type(name.get<std::string>()));
        }
    }
}

json to_json(const EngineConfig& cfg) {
    const auto& s = cfg.workload;
    const auto& st = cfg.store;
    json extra = json::array();
    for (IndexType t : st.extra_indexes) extra.push_back(to_string(t));
    return {
        {"workload",
         {{"tokens", s.n_tokens},
          {"layers", s.shape.n_layers},
          {"query_heads", s.shape.n_query_heads},
          {"kv_heads", s.shape.n_kv_heads},
          {"dim", s.shape.dim},
          {"distribution", to_string(s.distribution)},
          {"clusters", s.clusters},
          {"spread", s.spread},
          {"intrinsic_dim", s.intrinsic_dim},
          {"cluster_skew", s.cluster_skew},
          {"query_model", to_string(s.query_model)},
          {"shift", s.shift},
          {"key_norm", s.key_norm},
          {"query_norm", s.query_norm},
          {"head_sharpness", s.head_sharpness},
          {"flat_fraction", s.flat_fraction},
          {"flat_scale", s.flat_scale},
          {"seed", s.seed}}},
        {"window", {{"initial", st.window.initial}, {"last", st.window.last}}},
        {"planner",
         {{"short_context_threshold", st.planner.short_context_threshold},
          {"resident_fraction", st.planner.resident_fraction},
          {"flat_layers", st.planner.flat_layers},
          {"topk_blocks", st.planner.topk_blocks},
          {"beta", st.planner.beta}}},
        {"graph",
         {{"max_degree", st.graph.max_degree},
          {"knn_k", st.graph.knn_k},
          {"enhance_ef", st.graph.enhance_ef},
          {"prune_alpha", st.graph.prune_alpha},
          {"threads", st.graph.threads}}},
        {"block", {{"block_size", st.block.block_size}, {"representatives", st.block.representatives}}},
        {"filter", {{"two_hop", to_string(st.filter.two_hop)}, {"adaptive_threshold", st.filter.adaptive_threshold}}},
        {"search", {{"l0", st.l0}}},
        {"store",
         {{"memory_budget_bytes", st.memory_budget_bytes},
          {"sample_ratio", st.sample_ratio},
          {"file_elem_bits", st.file_elem_bits},
          {"pool_capacity_blocks", st.pool_capacity_blocks},
          {"extra_indexes", extra}}},
    };
}

std::optional<std::filesystem::path> load_config(EngineConfig& cfg,
                                                 const std::optional<std::filesystem::path>& explicit_path) {
    std::optional<std::filesystem::path> path = explicit_path;
    if (!path) {
        if (const char* env = std::getenv(kConfigEnv); env && *env) path = env;
    }
    if (!path) return std::nullopt;
    std::ifstream in(*path);
    if (!in) throw Error(path->string() + ": cannot open config file");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw Error(path->string() + ": " + e.what());
    }
    try {
        apply_json(cfg, doc);
    } catch (const Error& e) {
        throw Error(path->string() + ": " + e.what());
    }
    return path;
}

}  // namespace ctxdb::cli
