#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <vector>

#include "ctxdb/attention.hpp"
#include "ctxdb/core.hpp"
#include "ctxdb/filter.hpp"
#include "ctxdb/graph.hpp"
#include "ctxdb/index.hpp"
#include "ctxdb/planner.hpp"
#include "ctxdb/vfs.hpp"

namespace ctxdb {

/// Vocabulary token id of a prompt; prefix matching keys on these.
using VocabToken = std::int32_t;
using ContextId = std::uint64_t;

struct HeadKV {
    std::shared_ptr<const VectorSet> keys;
    std::shared_ptr<const VectorSet> values;
};

/// K/V sequences for every (layer, kv head), stored layer-major.
struct KVCache {
    ModelShape shape;
    std::vector<HeadKV> heads;

    static KVCache empty_for(const ModelShape& shape);
    const HeadKV& at(std::size_t layer, std::size_t kv_head) const;
    HeadKV& at(std::size_t layer, std::size_t kv_head);
    /// Common sequence length; throws when heads disagree or shapes are off.
    std::size_t validate() const;
};

/// Sampled query vectors per (layer, query head), used to build the graphs.
struct QuerySamples {
    ModelShape shape;
    std::vector<VectorSet> heads;  // layer-major, n_query_heads per layer

    const VectorSet& at(std::size_t layer, std::size_t query_head) const;
};

struct HeadIndexes {
    std::shared_ptr<const FlatIndex> flat;
    std::shared_ptr<const GraphIndex> graph;
    std::shared_ptr<const BlockIndex> block;

    bool has(IndexType type) const;
};

struct ContextRecord {
    ContextId id = 0;
    std::uint64_t sequence = 0;  // store order, for tie-breaking
    std::vector<VocabToken> token_ids;
    KVCache kv;
    std::vector<HeadIndexes> indexes;  // same layout as kv.heads

    std::size_t length() const noexcept { return token_ids.size(); }
    const HeadIndexes& index(std::size_t layer, std::size_t kv_head) const;
};

struct StoreConfig {
    WindowConfig window;
    PlannerConfig planner;
    GraphParams graph;
    BlockParams block;
    FilterOptions filter;
    std::size_t l0 = 128;
    std::size_t memory_budget_bytes = 0;
    double sample_ratio = 0.4;
    std::uint32_t file_elem_bits = 32;
    std::size_t pool_capacity_blocks = 1024;
    /// Index types built at import regardless of the planner (flat is always available).
    std::set<IndexType> extra_indexes;
};

/// Logical K/V of one kv head: base prefix rows followed by window rows.
struct KVView {
    std::shared_ptr<const VectorSet> prefix_keys;
    std::shared_ptr<const VectorSet> prefix_values;
    std::size_t prefix_len = 0;
    const VectorSet* window_keys = nullptr;
    const VectorSet* window_values = nullptr;

    std::size_t length() const noexcept { return prefix_len + (window_keys ? window_keys->size() : 0); }
    std::span<const float> key(std::size_t i) const;
    std::span<const float> value(std::size_t i) const;
    /// Copies the two segments into contiguous sets.
    std::pair<VectorSet, VectorSet> materialize() const;
};

struct AttentionResult {
    std::vector<Vector> outputs;                  // one per query head of the layer
    std::vector<std::vector<TokenId>> selected;   // logical token ids, ascending
    std::vector<std::size_t> retrieved;           // tokens returned by the index query (before window union)
};

class DB;

class Session {
public:
    const ModelShape& shape() const noexcept { return shape_; }
    bool has_base() const noexcept { return base_ != nullptr; }
    std::optional<ContextId> base_id() const;
    std::size_t prefix_len() const noexcept { return prefix_len_; }
    const std::vector<VocabToken>& generated_token_ids() const noexcept { return generated_; }
    const Plan& plan(std::size_t layer) const { return plans_.at(layer); }

    /// Replaces the plan of one layer; the base context must carry the index it needs.
    void set_plan(std::size_t layer, const Plan& plan);

    /// Appends one token (k, v per kv head) to the layer's window and returns
    /// the logical K/V per kv head. The base context is never modified.
    std::vector<KVView> update(std::size_t layer, std::span<const Vector> k_per_kv_head,
                               std::span<const Vector> v_per_kv_head);

    /// Records the vocabulary ids of tokens appended through update().
    void append_token_ids(std::span<const VocabToken> ids);

    AttentionResult attention(std::size_t layer, std::span<const Vector> q_per_query_head) const;

    KVView view(std::size_t layer, std::size_t kv_head) const;
    std::size_t window_length(std::size_t layer) const;

private:
    friend class DB;
    Session(std::shared_ptr<const StoreConfig> config, ModelShape shape, std::shared_ptr<const ContextRecord> base,
            std::size_t prefix_len);

    std::shared_ptr<const StoreConfig> config_;
    ModelShape shape_;
    std::shared_ptr<const ContextRecord> base_;
    std::size_t prefix_len_ = 0;
    std::vector<VectorSet> window_keys_;    // layer-major per kv head
    std::vector<VectorSet> window_values_;
    std::vector<VocabToken> generated_;
    std::vector<Plan> plans_;
};

/// Context store: imports K/V caches with their indexes, matches prompts to
/// stored prefixes and materializes sessions back into contexts. With a root
/// directory every context is persisted as vector files plus a catalog.
class DB {
public:
    explicit DB(StoreConfig config = {}, std::optional<std::filesystem::path> root = std::nullopt);
    /// Reopens a persisted store.
    static std::unique_ptr<DB> open(const std::filesystem::path& root, StoreConfig config = {});

    ContextId import_context(std::vector<VocabToken> token_ids, KVCache kv, const QuerySamples* samples = nullptr);

    /// Session bound to the longest stored prefix and the uncovered suffix.
    std::pair<Session, std::vector<VocabToken>> create_session(std::span<const VocabToken> token_ids) const;

    ContextId store(const Session& session, const QuerySamples* samples = nullptr);

    std::shared_ptr<const ContextRecord> context(ContextId id) const;
    std::vector<ContextId> context_ids() const;
    const StoreConfig& config() const noexcept { return *config_; }
    const std::optional<std::filesystem::path>& root() const noexcept { return root_; }

    /// Path of the vector file for one (context, layer, kv head, K|V).
    std::filesystem::path file_path(ContextId id, std::size_t layer, std::size_t kv_head, vfs::Role role) const;
    /// All vectors of one file, read back from disk.
    VectorSet read_persisted(ContextId id, std::size_t layer, std::size_t kv_head, vfs::Role role) const;
    /// One vector fetched through the buffer pool.
    Vector fetch_vector(ContextId id, std::size_t layer, std::size_t kv_head, vfs::Role role, TokenId token) const;
    vfs::PoolStats pool_stats() const { return pool_.stats(); }

private:
    std::shared_ptr<ContextRecord> build_record(std::vector<VocabToken> token_ids, KVCache kv,
                                                const QuerySamples* samples) const;
    void persist(const ContextRecord& record) const;
    void write_catalog() const;
    const vfs::VectorFile& open_file(const std::filesystem::path& path) const;

    std::shared_ptr<const StoreConfig> config_;
    std::optional<std::filesystem::path> root_;
    mutable std::shared_mutex mu_;
    std::mutex writer_mu_;
    std::map<ContextId, std::shared_ptr<const ContextRecord>> contexts_;
    std::map<std::vector<VocabToken>, ContextId> by_tokens_;
    ContextId next_id_ = 1;
    std::uint64_t next_sequence_ = 1;

    mutable vfs::BufferPool pool_;
    mutable std::mutex files_mu_;
    mutable std::map<std::filesystem::path, std::unique_ptr<vfs::VectorFile>> files_;
};

}  // namespace ctxdb
