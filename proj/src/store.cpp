#include "ctxdb/store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace ctxdb {

using json = nlohmann::json;

// --- KVCache / QuerySamples / records ---------------------------------------

KVCache KVCache::empty_for(const ModelShape& shape) {
    shape.validate();
    KVCache kv;
    kv.shape = shape;
    kv.heads.resize(shape.n_layers * shape.n_kv_heads);
    for (auto& h : kv.heads) {
        h.keys = std::make_shared<VectorSet>(shape.dim);
        h.values = std::make_shared<VectorSet>(shape.dim);
    }
    return kv;
}

const HeadKV& KVCache::at(std::size_t layer, std::size_t kv_head) const {
    if (layer >= shape.n_layers || kv_head >= shape.n_kv_heads) throw Error("kv head address out of range");
    return heads[layer * shape.n_kv_heads + kv_head];
}

HeadKV& KVCache::at(std::size_t layer, std::size_t kv_head) {
    if (layer >= shape.n_layers || kv_head >= shape.n_kv_heads) throw Error("kv head address out of range");
    return heads[layer * shape.n_kv_heads + kv_head];
}

std::size_t KVCache::validate() const {
    shape.validate();
    if (heads.size() != shape.n_layers * shape.n_kv_heads) throw Error("kv cache head count does not match shape");
    std::optional<std::size_t> len;
    for (const auto& h : heads) {
        if (!h.keys || !h.values) throw Error("kv cache head is missing K or V");
        if (h.keys->size() != h.values->size()) throw Error("K and V lengths differ");
        if (!h.keys->empty() && (h.keys->dim() != shape.dim || h.values->dim() != shape.dim)) {
            throw DimensionMismatch(shape.dim, h.keys->dim());
        }
        if (len && *len != h.keys->size()) throw Error("kv heads have different sequence lengths");
        len = h.keys->size();
    }
    return len.value_or(0);
}

const VectorSet& QuerySamples::at(std::size_t layer, std::size_t query_head) const {
    if (layer >= shape.n_layers || query_head >= shape.n_query_heads) throw Error("query head address out of range");
    return heads.at(layer * shape.n_query_heads + query_head);
}

bool HeadIndexes::has(IndexType type) const {
    switch (type) {
        case IndexType::None: return true;
        case IndexType::Flat: return flat != nullptr;
        case IndexType::Fine: return graph != nullptr;
        case IndexType::Coarse: return block != nullptr;
    }
    return false;
}

const HeadIndexes& ContextRecord::index(std::size_t layer, std::size_t kv_head) const {
    if (layer >= kv.shape.n_layers || kv_head >= kv.shape.n_kv_heads) throw Error("kv head address out of range");
    return indexes[layer * kv.shape.n_kv_heads + kv_head];
}

std::span<const float> KVView::key(std::size_t i) const {
    return i < prefix_len ? prefix_keys->row(i) : window_keys->row(i - prefix_len);
}

std::span<const float> KVView::value(std::size_t i) const {
    return i < prefix_len ? prefix_values->row(i) : window_values->row(i - prefix_len);
}

std::pair<VectorSet, VectorSet> KVView::materialize() const {
    std::size_t dim = prefix_keys ? prefix_keys->dim() : window_keys->dim();
    VectorSet k(dim), v(dim);
    k.reserve(length());
    v.reserve(length());
    for (std::size_t i = 0; i < length(); ++i) {
        k.push_back(key(i));
        v.push_back(value(i));
    }
    return {std::move(k), std::move(v)};
}

// --- Session ------------------------------------------------------------------

Session::Session(std::shared_ptr<const StoreConfig> config, ModelShape shape,
                 std::shared_ptr<const ContextRecord> base, std::size_t prefix_len)
    : config_(std::move(config)), shape_(shape), base_(std::move(base)), prefix_len_(prefix_len) {
    const std::size_t heads = shape_.n_layers * shape_.n_kv_heads;
    window_keys_.assign(heads, VectorSet(shape_.dim));
    window_values_.assign(heads, VectorSet(shape_.dim));
    plans_.resize(shape_.n_layers);
    if (!base_) return;
    for (std::size_t layer = 0; layer < shape_.n_layers; ++layer) {
        PlanRequest req;
        req.context_len = base_->length();
        if (prefix_len_ < base_->length()) req.reused_prefix_len = prefix_len_;
        req.memory_budget_bytes = config_->memory_budget_bytes;
        req.layer = layer;
        req.shape = shape_;
        plans_[layer] = ctxdb::plan(req, config_->planner);
    }
}

std::optional<ContextId> Session::base_id() const {
    if (!base_) return std::nullopt;
    return base_->id;
}

void Session::set_plan(std::size_t layer, const Plan& p) {
    if (layer >= shape_.n_layers) throw Error("layer out of range: " + std::to_string(layer));
    if (!is_legal(p.query, p.index)) {
        throw Error("illegal plan: " + to_string(p.query) + " on " + to_string(p.index) + " index");
    }
    if (p.query != QueryType::FullAttention) {
        if (!base_) throw Error("a session without a base context only supports full attention");
        for (std::size_t h = 0; h < shape_.n_kv_heads; ++h) {
            if (!base_->index(layer, h).has(p.index)) {
                throw Error("base context has no " + to_string(p.index) + " index for layer " + std::to_string(layer));
            }
        }
    }
    Plan fixed = p;
    const bool filtered = p.query == QueryType::FilteredDIPR || p.query == QueryType::FilteredTopK;
    if (filtered && !fixed.prefix_len) fixed.prefix_len = prefix_len_;
    plans_[layer] = fixed;
}

std::vector<KVView> Session::update(std::size_t layer, std::span<const Vector> k_per_kv_head,
                                    std::span<const Vector> v_per_kv_head) {
    if (layer >= shape_.n_layers) throw Error("layer out of range: " + std::to_string(layer));
    if (k_per_kv_head.size() != shape_.n_kv_heads || v_per_kv_head.size() != shape_.n_kv_heads) {
        throw Error("update needs one k and one v per kv head");
    }
    for (std::size_t h = 0; h < shape_.n_kv_heads; ++h) {
        if (k_per_kv_head[h].dim() != shape_.dim) throw DimensionMismatch(shape_.dim, k_per_kv_head[h].dim());
        if (v_per_kv_head[h].dim() != shape_.dim) throw DimensionMismatch(shape_.dim, v_per_kv_head[h].dim());
    }
    std::vector<KVView> views;
    for (std::size_t h = 0; h < shape_.n_kv_heads; ++h) {
        window_keys_[layer * shape_.n_kv_heads + h].push_back(k_per_kv_head[h]);
        window_values_[layer * shape_.n_kv_heads + h].push_back(v_per_kv_head[h]);
        views.push_back(view(layer, h));
    }
    return views;
}

void Session::append_token_ids(std::span<const VocabToken> ids) { generated_.insert(generated_.end(), ids.begin(), ids.end()); }

KVView Session::view(std::size_t layer, std::size_t kv_head) const {
    if (layer >= shape_.n_layers || kv_head >= shape_.n_kv_heads) throw Error("kv head address out of range");
    KVView v;
    if (base_) {
        const auto& head = base_->kv.at(layer, kv_head);
        v.prefix_keys = head.keys;
        v.prefix_values = head.values;
        v.prefix_len = prefix_len_;
    }
    v.window_keys = &window_keys_[layer * shape_.n_kv_heads + kv_head];
    v.window_values = &window_values_[layer * shape_.n_kv_heads + kv_head];
    return v;
}

std::size_t Session::window_length(std::size_t layer) const {
    if (layer >= shape_.n_layers) throw Error("layer out of range: " + std::to_string(layer));
    return window_keys_[layer * shape_.n_kv_heads].size();
}

AttentionResult Session::attention(std::size_t layer, std::span<const Vector> q_per_query_head) const {
    if (layer >= shape_.n_layers) throw Error("layer out of range: " + std::to_string(layer));
    if (q_per_query_head.size() != shape_.n_query_heads) throw Error("attention needs one q per query head");
    const Plan& p = plans_[layer];
    const std::size_t P = prefix_len_;
    const WindowConfig& win = config_->window;

    AttentionResult out;
    for (std::size_t qh = 0; qh < shape_.n_query_heads; ++qh) {
        const Vector& q = q_per_query_head[qh];
        if (q.dim() != shape_.dim) throw DimensionMismatch(shape_.dim, q.dim());
        const std::size_t kvh = shape_.kv_head_of(qh);
        const VectorSet& wk = window_keys_[layer * shape_.n_kv_heads + kvh];
        const VectorSet& wv = window_values_[layer * shape_.n_kv_heads + kvh];
        if (P == 0 && wk.empty()) throw Error("attention over a session with no tokens");

        const VectorSet* bk = nullptr;
        const VectorSet* bv = nullptr;
        if (P > 0) {
            bk = base_->kv.at(layer, kvh).keys.get();
            bv = base_->kv.at(layer, kvh).values.get();
        }

        // Window: initial and last prefix tokens plus every session token.
        std::vector<std::uint8_t> in_window(P, 0);
        const bool whole_prefix = p.query == QueryType::FullAttention || win.covers(P);
        if (whole_prefix) {
            std::fill(in_window.begin(), in_window.end(), 1);
        } else {
            for (std::size_t i = 0; i < std::min(win.initial, P); ++i) in_window[i] = 1;
            for (std::size_t i = P - std::min(win.last, P); i < P; ++i) in_window[i] = 1;
        }

        PartialAttention window_part(shape_.dim);
        std::optional<double> window_max;
        auto note_window = [&](std::span<const float> k, std::span<const float> v) {
            const float ip = inner_product(q.values(), k);
            window_max = std::max(window_max.value_or(-std::numeric_limits<double>::infinity()), double(ip));
            window_part.absorb_score(ip / std::sqrt(static_cast<float>(shape_.dim)), v);  // same as scaled_score
        };
        std::vector<TokenId> selected;
        for (std::size_t i = 0; i < P; ++i) {
            if (!in_window[i]) continue;
            note_window(bk->row(i), bv->row(i));
            selected.push_back(TokenId(i));
        }
        for (std::size_t i = 0; i < wk.size(); ++i) note_window(wk.row(i), wv.row(i));

        std::vector<TokenId> retrieved;
        if (!whole_prefix) {
            const auto& idx = base_->index(layer, kvh);
            const bool filtered = p.query == QueryType::FilteredDIPR || p.query == QueryType::FilteredTopK;
            const std::size_t limit = filtered ? p.prefix_len.value_or(P) : P;
            switch (p.query) {
                case QueryType::DIPR:
                case QueryType::FilteredDIPR:
                    if (p.index == IndexType::Flat) {
                        retrieved = flat_dipr(*idx.flat, q, p.beta, limit, window_max);
                    } else if (!filtered && limit == base_->length()) {
                        retrieved = diprs(*idx.graph, q, idx.graph->entry_point(), config_->l0, p.beta, window_max).ids;
                    } else {
                        FilterOptions opts = config_->filter;
                        opts.window_max = window_max;
                        retrieved = filtered_diprs(*idx.graph, q, PrefixPredicate{limit}, config_->l0, p.beta, opts).ids;
                    }
                    break;
                case QueryType::TopK:
                case QueryType::FilteredTopK: {
                    if (p.index == IndexType::Coarse) {
                        const std::size_t eligible = (limit + idx.block->block_size() - 1) / idx.block->block_size();
                        for (const auto& r : block_topk(*idx.block, q, std::min(p.k, eligible), limit)) {
                            for (TokenId t = r.begin; t < r.end; ++t) retrieved.push_back(t);
                        }
                    } else if (p.index == IndexType::Flat) {
                        retrieved = flat_topk(*idx.flat, q, std::min(p.k, limit), limit);
                    } else {
                        // Over-fetch so that enough admitted ids survive the prefix filter.
                        const std::size_t fetch = std::min(base_->length(), std::max(p.k, p.k * base_->length() / limit));
                        for (TokenId t : graph_topk(*idx.graph, q, fetch, std::max<std::size_t>(fetch, 64))) {
                            if (t < limit && retrieved.size() < p.k) retrieved.push_back(t);
                        }
                    }
                    break;
                }
                case QueryType::FullAttention: break;
            }
        }

        PartialAttention retrieved_part(shape_.dim);
        for (TokenId t : retrieved) {
            if (t >= P || in_window[t]) continue;
            retrieved_part.absorb(q.values(), bk->row(t), bv->row(t));
            selected.push_back(t);
        }
        window_part.merge(retrieved_part);
        for (std::size_t i = 0; i < wk.size(); ++i) selected.push_back(TokenId(P + i));
        std::sort(selected.begin(), selected.end());

        out.outputs.push_back(window_part.finalize().o);
        out.selected.push_back(std::move(selected));
        out.retrieved.push_back(retrieved.size());
    }
    return out;
}

// --- DB -------------------------------------------------------------------------

DB::DB(StoreConfig config, std::optional<std::filesystem::path> root)
    : config_(std::make_shared<const StoreConfig>(std::move(config))),
      root_(std::move(root)),
      pool_(config_->pool_capacity_blocks) {
    if (root_) std::filesystem::create_directories(*root_);
}

std::shared_ptr<ContextRecord> DB::build_record(std::vector<VocabToken> token_ids, KVCache kv,
                                                const QuerySamples* samples) const {
    const std::size_t n = kv.validate();
    if (n != token_ids.size()) throw Error("token count does not match the K/V sequence length");
    if (n == 0) throw Error("cannot import an empty context");
    const ModelShape& shape = kv.shape;
    if (samples && !(samples->shape == shape)) throw Error("query samples shape does not match the context");

    auto rec = std::make_shared<ContextRecord>();
    rec->token_ids = std::move(token_ids);
    rec->indexes.resize(kv.heads.size());
    for (std::size_t layer = 0; layer < shape.n_layers; ++layer) {
        PlanRequest req;
        req.context_len = n;
        req.memory_budget_bytes = config_->memory_budget_bytes;
        req.layer = layer;
        req.shape = shape;
        std::set<IndexType> wanted = config_->extra_indexes;
        wanted.insert(plan(req, config_->planner).index);
        for (std::size_t h = 0; h < shape.n_kv_heads; ++h) {
            const auto& head = kv.at(layer, h);
            auto& idx = rec->indexes[layer * shape.n_kv_heads + h];
            idx.flat = std::make_shared<FlatIndex>(head.keys);
            if (wanted.contains(IndexType::Fine)) {
                if (samples) {
                    const auto g = shape.group_size();
                    std::span<const VectorSet> group(&samples->at(layer, h * g), g);
                    idx.graph = std::make_shared<GraphIndex>(
                        build_shared_graph(head.keys, group, config_->sample_ratio, config_->graph));
                } else {
                    idx.graph = std::make_shared<GraphIndex>(build_graph(head.keys, VectorSet(), config_->graph));
                }
            }
            if (wanted.contains(IndexType::Coarse)) {
                BlockParams bp = config_->block;
                bp.representatives = std::min(bp.representatives, bp.block_size);
                idx.block = std::make_shared<BlockIndex>(head.keys, bp);
            }
        }
    }
    rec->kv = std::move(kv);
    return rec;
}

ContextId DB::import_context(std::vector<VocabToken> token_ids, KVCache kv, const QuerySamples* samples) {
    std::lock_guard writer(writer_mu_);
    {
        std::shared_lock lock(mu_);
        if (auto it = by_tokens_.find(token_ids); it != by_tokens_.end()) return it->second;
    }
    auto rec = build_record(std::move(token_ids), std::move(kv), samples);
    rec->id = next_id_++;
    rec->sequence = next_sequence_++;
    if (root_) persist(*rec);
    {
        std::unique_lock lock(mu_);
        by_tokens_.emplace(rec->token_ids, rec->id);
        contexts_.emplace(rec->id, rec);
    }
    if (root_) write_catalog();
    return rec->id;
}

std::pair<Session, std::vector<VocabToken>> DB::create_session(std::span<const VocabToken> token_ids) const {
    std::shared_lock lock(mu_);
    std::shared_ptr<const ContextRecord> best;
    std::size_t best_len = 0;
    for (const auto& [id, rec] : contexts_) {
        const std::size_t limit = std::min(rec->length(), token_ids.size());
        std::size_t len = 0;
        while (len < limit && rec->token_ids[len] == token_ids[len]) ++len;
        if (len == 0) continue;
        if (len > best_len || (len == best_len && best && rec->sequence > best->sequence)) {
            best = rec;
            best_len = len;
        }
    }
    std::vector<VocabToken> truncated(token_ids.begin() + static_cast<std::ptrdiff_t>(best_len), token_ids.end());
    if (!best) {
        // Without a base the session shape comes from any stored context, else a default.
        ModelShape shape = contexts_.empty() ? ModelShape{} : contexts_.begin()->second->kv.shape;
        return {Session(config_, shape, nullptr, 0), std::move(truncated)};
    }
    return {Session(config_, best->kv.shape, best, best_len), std::move(truncated)};
}

ContextId DB::store(const Session& session, const QuerySamples* samples) {
    const ModelShape& shape = session.shape();
    const std::size_t P = session.prefix_len();
    const std::size_t W = session.window_length(0);
    for (std::size_t layer = 0; layer < shape.n_layers; ++layer) {
        if (session.window_length(layer) != W) throw Error("session layers have different window lengths");
    }
    if (P + W == 0) throw Error("cannot store an empty session");
    if (session.generated_token_ids().size() != W) {
        throw Error("session has " + std::to_string(W) + " window tokens but " +
                    std::to_string(session.generated_token_ids().size()) + " recorded token ids");
    }
    std::vector<VocabToken> tokens;
    if (session.base_) tokens.assign(session.base_->token_ids.begin(), session.base_->token_ids.begin() + static_cast<std::ptrdiff_t>(P));
    tokens.insert(tokens.end(), session.generated_token_ids().begin(), session.generated_token_ids().end());

    KVCache kv = KVCache::empty_for(shape);
    for (std::size_t layer = 0; layer < shape.n_layers; ++layer) {
        for (std::size_t h = 0; h < shape.n_kv_heads; ++h) {
            auto [k, v] = session.view(layer, h).materialize();
            kv.at(layer, h).keys = std::make_shared<const VectorSet>(std::move(k));
            kv.at(layer, h).values = std::make_shared<const VectorSet>(std::move(v));
        }
    }
    return import_context(std::move(tokens), std::move(kv), samples);
}

std::shared_ptr<const ContextRecord> DB::context(ContextId id) const {
    std::shared_lock lock(mu_);
    auto it = contexts_.find(id);
    if (it == contexts_.end()) throw Error("unknown context id " + std::to_string(id));
    return it->second;
}

std::vector<ContextId> DB::context_ids() const {
    std::shared_lock lock(mu_);
    std::vector<ContextId> out;
    for (const auto& [id, rec] : contexts_) out.push_back(id);
    return out;
}

// --- persistence ----------------------------------------------------------------

std::filesystem::path DB::file_path(ContextId id, std::size_t layer, std::size_t kv_head, vfs::Role role) const {
    if (!root_) throw Error("store has no root directory");
    return *root_ / ("ctx_" + std::to_string(id)) /
           ("L" + std::to_string(layer) + "_H" + std::to_string(kv_head) + (role == vfs::Role::Key ? "_K" : "_V") +
            ".avdb");
}

void DB::persist(const ContextRecord& rec) const {
    const ModelShape& shape = rec.kv.shape;
    std::filesystem::create_directories(*root_ / ("ctx_" + std::to_string(rec.id)));
    for (std::size_t layer = 0; layer < shape.n_layers; ++layer) {
        for (std::size_t h = 0; h < shape.n_kv_heads; ++h) {
            const auto& head = rec.kv.at(layer, h);
            const auto& idx = rec.index(layer, h);
            std::optional<vfs::Adjacency> adj;
            if (idx.graph) {
                const auto& g = *idx.graph;
                adj = vfs::Adjacency{static_cast<std::uint32_t>(g.max_degree()), g.entry_point(),
                                     {g.degrees().begin(), g.degrees().end()},
                                     {g.neighbor_slots().begin(), g.neighbor_slots().end()}};
            }
            vfs::WriteOptions opts;
            opts.elem_bits = config_->file_elem_bits;
            opts.role = vfs::Role::Key;
            vfs::write_vector_file(file_path(rec.id, layer, h, vfs::Role::Key), *head.keys, adj ? &*adj : nullptr, opts);
            opts.role = vfs::Role::Value;
            vfs::write_vector_file(file_path(rec.id, layer, h, vfs::Role::Value), *head.values, nullptr, opts);
        }
    }
}

void DB::write_catalog() const {
    json doc;
    doc["version"] = 1;
    doc["next_id"] = next_id_;
    doc["next_sequence"] = next_sequence_;
    json contexts = json::array();
    {
        std::shared_lock lock(mu_);
        for (const auto& [id, rec] : contexts_) {
            const ModelShape& s = rec->kv.shape;
            json entry;
            entry["id"] = id;
            entry["sequence"] = rec->sequence;
            entry["tokens"] = rec->token_ids;
            entry["shape"] = {{"n_layers", s.n_layers}, {"n_query_heads", s.n_query_heads},
                              {"n_kv_heads", s.n_kv_heads}, {"dim", s.dim}};
            bool coarse = false;
            for (const auto& idx : rec->indexes) coarse = coarse || idx.block;
            entry["coarse"] = coarse;
            contexts.push_back(std::move(entry));
        }
    }
    doc["contexts"] = std::move(contexts);
    const auto tmp = *root_ / "catalog.json.tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error(tmp.string() + ": cannot write catalog");
        out << doc.dump(1) << '\n';
        if (!out) throw Error(tmp.string() + ": catalog write failed");
    }
    std::filesystem::rename(tmp, *root_ / "catalog.json");
}

std::unique_ptr<DB> DB::open(const std::filesystem::path& root, StoreConfig config) {
    auto db = std::make_unique<DB>(std::move(config), root);
    const auto catalog = root / "catalog.json";
    if (!std::filesystem::exists(catalog)) return db;
    std::ifstream in(catalog);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw Error(catalog.string() + ": " + e.what());
    }
    db->next_id_ = doc.at("next_id").get<ContextId>();
    db->next_sequence_ = doc.at("next_sequence").get<std::uint64_t>();
    for (const auto& entry : doc.at("contexts")) {
        auto rec = std::make_shared<ContextRecord>();
        rec->id = entry.at("id").get<ContextId>();
        rec->sequence = entry.at("sequence").get<std::uint64_t>();
        rec->token_ids = entry.at("tokens").get<std::vector<VocabToken>>();
        const auto& js = entry.at("shape");
        ModelShape shape{js.at("n_layers").get<std::size_t>(), js.at("n_query_heads").get<std::size_t>(),
                         js.at("n_kv_heads").get<std::size_t>(), js.at("dim").get<std::size_t>()};
        rec->kv = KVCache::empty_for(shape);
        rec->indexes.resize(rec->kv.heads.size());
        const bool coarse = entry.value("coarse", false);
        for (std::size_t layer = 0; layer < shape.n_layers; ++layer) {
            for (std::size_t h = 0; h < shape.n_kv_heads; ++h) {
                vfs::VectorFile kf(db->file_path(rec->id, layer, h, vfs::Role::Key));
                vfs::VectorFile vf(db->file_path(rec->id, layer, h, vfs::Role::Value));
                auto keys = std::make_shared<const VectorSet>(kf.read_vectors());
                auto values = std::make_shared<const VectorSet>(vf.read_vectors());
                auto& idx = rec->indexes[layer * shape.n_kv_heads + h];
                idx.flat = std::make_shared<FlatIndex>(keys);
                if (auto adj = kf.read_adjacency()) {
                    idx.graph = std::make_shared<GraphIndex>(keys, adj->max_degree, adj->entry_point,
                                                             std::move(adj->degrees), std::move(adj->slots));
                }
                if (coarse) {
                    BlockParams bp = db->config_->block;
                    bp.representatives = std::min(bp.representatives, bp.block_size);
                    idx.block = std::make_shared<BlockIndex>(keys, bp);
                }
                rec->kv.at(layer, h) = {keys, values};
            }
        }
        if (rec->kv.validate() != rec->token_ids.size()) throw Error("persisted context length mismatch");
        db->by_tokens_.emplace(rec->token_ids, rec->id);
        db->contexts_.emplace(rec->id, std::move(rec));
    }
    return db;
}

const vfs::VectorFile& DB::open_file(const std::filesystem::path& path) const {
    std::lock_guard lock(files_mu_);
    auto it = files_.find(path);
    if (it == files_.end()) it = files_.emplace(path, std::make_unique<vfs::VectorFile>(path)).first;
    return *it->second;
}

VectorSet DB::read_persisted(ContextId id, std::size_t layer, std::size_t kv_head, vfs::Role role) const {
    return vfs::VectorFile(file_path(id, layer, kv_head, role)).read_vectors();
}

Vector DB::fetch_vector(ContextId id, std::size_t layer, std::size_t kv_head, vfs::Role role, TokenId token) const {
    return vfs::read_vector(pool_, open_file(file_path(id, layer, kv_head, role)), token);
}

}  // namespace ctxdb
