#include "ctxdb/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <queue>
#include <unordered_set>

namespace ctxdb {

namespace {

struct Scored {
    TokenId id;
    float score;  // higher is better
};

bool better(const Scored& a, const Scored& b) { return a.score > b.score || (a.score == b.score && a.id < b.id); }

/// Visited marks with O(1) reset between searches.
class VisitedMarks {
public:
    explicit VisitedMarks(std::size_t n) : marks_(n, 0) {}

    void reset() {
        if (++epoch_ == 0) {
            std::fill(marks_.begin(), marks_.end(), 0);
            epoch_ = 1;
        }
    }
    bool test_and_set(TokenId id) {
        if (marks_[id] == epoch_) return true;
        marks_[id] = epoch_;
        return false;
    }

private:
    std::vector<std::uint32_t> marks_;
    std::uint32_t epoch_ = 0;
};

/// Mutable adjacency used during construction.
struct BuildGraph {
    std::size_t max_degree;
    std::vector<std::vector<TokenId>> adj;
};

template <class ScoreFn>
std::vector<Scored> best_first(const BuildGraph& g, ScoreFn&& score, TokenId entry, std::size_t ef,
                               VisitedMarks& visited, std::vector<TokenId>* expanded = nullptr) {
    auto worse_first = [](const Scored& a, const Scored& b) { return better(a, b); };
    auto best_first_cmp = [](const Scored& a, const Scored& b) { return better(b, a); };
    std::priority_queue<Scored, std::vector<Scored>, decltype(best_first_cmp)> frontier(best_first_cmp);
    std::priority_queue<Scored, std::vector<Scored>, decltype(worse_first)> results(worse_first);

    visited.reset();
    visited.test_and_set(entry);
    const Scored start{entry, score(entry)};
    frontier.push(start);
    results.push(start);
    while (!frontier.empty()) {
        const Scored cur = frontier.top();
        frontier.pop();
        if (results.size() >= ef && better(results.top(), cur)) break;
        if (expanded) expanded->push_back(cur.id);
        for (TokenId nb : g.adj[cur.id]) {
            if (visited.test_and_set(nb)) continue;
            const Scored s{nb, score(nb)};
            if (results.size() < ef || better(s, results.top())) {
                frontier.push(s);
                results.push(s);
                if (results.size() > ef) results.pop();
            }
        }
    }
    std::vector<Scored> out;
    out.reserve(results.size());
    while (!results.empty()) {
        out.push_back(results.top());
        results.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

/// Occlusion pruning by L2: candidate c is dropped when an already kept
/// neighbor k satisfies alpha * d(k, c) <= d(u, c).
std::vector<TokenId> prune(const VectorSet& keys, TokenId u, std::vector<TokenId> candidates, std::size_t max_degree,
                           float alpha) {
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    std::vector<Scored> pool;
    pool.reserve(candidates.size());
    for (TokenId c : candidates) {
        if (c == u) continue;
        pool.push_back({c, -squared_l2(keys.row(u), keys.row(c))});
    }
    std::sort(pool.begin(), pool.end(), better);
    std::vector<TokenId> kept;
    kept.reserve(max_degree);
    const float alpha_sq = alpha * alpha;
    for (const auto& cand : pool) {
        if (kept.size() >= max_degree) break;
        const float d_uc = -cand.score;
        bool occluded = false;
        for (TokenId k : kept) {
            if (alpha_sq * squared_l2(keys.row(k), keys.row(cand.id)) <= d_uc) {
                occluded = true;
                break;
            }
        }
        if (!occluded) kept.push_back(cand.id);
    }
    return kept;
}

TokenId nearest_to_centroid(const VectorSet& keys) {
    std::vector<double> centroid(keys.dim(), 0.0);
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const auto r = keys.row(i);
        for (std::size_t t = 0; t < r.size(); ++t) centroid[t] += r[t];
    }
    std::vector<float> c(keys.dim());
    for (std::size_t t = 0; t < c.size(); ++t) c[t] = static_cast<float>(centroid[t] / double(keys.size()));
    TokenId best = 0;
    float best_d = std::numeric_limits<float>::infinity();
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const float d = squared_l2(keys.row(i), c);
        if (d < best_d) {
            best_d = d;
            best = static_cast<TokenId>(i);
        }
    }
    return best;
}

std::vector<TokenId> exact_topk_ip(const VectorSet& keys, std::span<const float> q, std::size_t k) {
    std::vector<Scored> all(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) all[i] = {static_cast<TokenId>(i), inner_product(q, keys.row(i))};
    k = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
    std::vector<TokenId> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = all[i].id;
    return out;
}

/// Farthest-point traversal from `start`: a spread of nodes across the key
/// set. Linked from the entry point so a search can leave its start region
/// even when regions are far apart and mutually orthogonal.
std::vector<TokenId> spread_pivots(const VectorSet& keys, TokenId start, std::size_t m) {
    const std::size_t n = keys.size();
    std::vector<float> dist(n, std::numeric_limits<float>::infinity());
    std::vector<TokenId> out;
    TokenId cur = start;
    dist[start] = 0;
    while (out.size() < std::min(m, n - 1)) {
        TokenId far = start;
        float far_d = -1;
        for (std::size_t i = 0; i < n; ++i) {
            dist[i] = std::min(dist[i], squared_l2(keys.row(cur), keys.row(i)));
            if (dist[i] > far_d) {
                far_d = dist[i];
                far = static_cast<TokenId>(i);
            }
        }
        if (far_d <= 0) break;
        out.push_back(far);
        dist[far] = 0;
        cur = far;
    }
    // Farthest points are outliers; move each to the key nearest the mean of
    // its cell, which sits inside the region and is better connected. The
    // start node seeds a cell of its own so its region does not skew another.
    if (out.empty()) return out;
    std::vector<TokenId> seeds = out;
    seeds.push_back(start);
    const std::size_t m_out = out.size(), d = keys.dim();
    std::vector<std::vector<double>> sums(m_out, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(m_out, 0);
    std::vector<std::uint32_t> cell(n);
    for (std::size_t i = 0; i < n; ++i) {
        float best = std::numeric_limits<float>::infinity();
        for (std::size_t c = 0; c < seeds.size(); ++c) {
            const float dc = squared_l2(keys.row(i), keys.row(seeds[c]));
            if (dc < best) {
                best = dc;
                cell[i] = static_cast<std::uint32_t>(c);
            }
        }
        if (cell[i] == m_out) continue;
        const auto r = keys.row(i);
        for (std::size_t t = 0; t < d; ++t) sums[cell[i]][t] += r[t];
        ++counts[cell[i]];
    }
    std::vector<std::vector<float>> means(m_out, std::vector<float>(d));
    for (std::size_t c = 0; c < m_out; ++c) {
        for (std::size_t t = 0; t < d; ++t) means[c][t] = static_cast<float>(sums[c][t] / double(counts[c]));
    }
    std::vector<float> best(m_out, std::numeric_limits<float>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        if (cell[i] == m_out) continue;
        const float dc = squared_l2(keys.row(i), means[cell[i]]);
        if (dc < best[cell[i]]) {
            best[cell[i]] = dc;
            out[cell[i]] = static_cast<TokenId>(i);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

constexpr TokenId kNoParent = std::numeric_limits<TokenId>::max();

/// BFS from `from`, recording a spanning-tree parent for every newly reached node.
void mark_reachable(const BuildGraph& g, TokenId from, std::vector<bool>& seen, std::vector<TokenId>& parent) {
    std::deque<TokenId> queue{from};
    seen[from] = true;
    while (!queue.empty()) {
        const TokenId u = queue.front();
        queue.pop_front();
        for (TokenId v : g.adj[u]) {
            if (!seen[v]) {
                seen[v] = true;
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
}

/// Links every node unreachable from `entry` into the graph. The link comes
/// from a reachable node near it (found by searching the graph): a free slot
/// if there is one, else the farthest edge that is not a spanning-tree edge.
/// Tree edges are never removed, so nothing reachable is lost.
void repair_reachability(const VectorSet& keys, BuildGraph& g, TokenId entry, std::size_t ef) {
    const std::size_t n = keys.size();
    std::vector<bool> seen(n, false);
    std::vector<TokenId> parent(n, kNoParent);
    mark_reachable(g, entry, seen, parent);
    VisitedMarks visited(n);
    for (std::size_t ui = 0; ui < n; ++ui) {
        if (seen[ui]) continue;
        const auto u = static_cast<TokenId>(ui);
        const auto target = keys.row(u);
        auto found = best_first(
            g, [&](TokenId id) { return -squared_l2(target, keys.row(id)); }, entry, std::max<std::size_t>(ef, 1),
            visited);
        // everything the search reached is reachable; fall back to a full scan
        // only if none of it can take an edge
        auto try_link = [&](TokenId r) {
            auto& row = g.adj[r];
            if (row.size() < g.max_degree) {
                row.push_back(u);
                return true;
            }
            std::ptrdiff_t drop = -1;
            float drop_d = -1;
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (parent[row[j]] == r) continue;
                const float d = squared_l2(keys.row(r), keys.row(row[j]));
                if (d > drop_d) {
                    drop_d = d;
                    drop = static_cast<std::ptrdiff_t>(j);
                }
            }
            if (drop < 0) return false;
            row[static_cast<std::size_t>(drop)] = u;
            return true;
        };
        TokenId linked_from = kNoParent;
        for (const auto& s : found) {
            if (seen[s.id] && try_link(s.id)) {
                linked_from = s.id;
                break;
            }
        }
        if (linked_from == kNoParent) {
            for (std::size_t r = 0; r < n && linked_from == kNoParent; ++r) {
                if (seen[r] && try_link(static_cast<TokenId>(r))) linked_from = static_cast<TokenId>(r);
            }
        }
        if (linked_from == kNoParent) throw Error("graph repair found no reachable node to link from");
        parent[u] = linked_from;
        mark_reachable(g, u, seen, parent);
    }
}

GraphIndex freeze(std::shared_ptr<const VectorSet> keys, const BuildGraph& g, TokenId entry) {
    const std::size_t n = g.adj.size();
    std::vector<std::uint32_t> degrees(n);
    std::vector<TokenId> slots(n * g.max_degree, 0);
    for (std::size_t i = 0; i < n; ++i) {
        degrees[i] = static_cast<std::uint32_t>(g.adj[i].size());
        std::copy(g.adj[i].begin(), g.adj[i].end(), slots.begin() + static_cast<std::ptrdiff_t>(i * g.max_degree));
    }
    return GraphIndex(std::move(keys), g.max_degree, entry, std::move(degrees), std::move(slots));
}

}  // namespace

GraphIndex::GraphIndex(std::shared_ptr<const VectorSet> keys, std::size_t max_degree, TokenId entry_point,
                       std::vector<std::uint32_t> degrees, std::vector<TokenId> neighbor_slots)
    : keys_(std::move(keys)),
      max_degree_(max_degree),
      entry_point_(entry_point),
      degrees_(std::move(degrees)),
      slots_(std::move(neighbor_slots)) {
    if (!keys_ || keys_->empty()) throw Error("graph index over an empty key set");
    const std::size_t n = degrees_.size();
    if (n != keys_->size()) throw Error("graph node count does not match key count");
    if (max_degree_ == 0) throw Error("max_degree must be positive");
    if (slots_.size() != n * max_degree_) throw Error("adjacency slot array has the wrong size");
    if (entry_point_ >= n) throw Error("entry point out of range");
    std::vector<TokenId> row;
    for (std::size_t i = 0; i < n; ++i) {
        if (degrees_[i] > max_degree_) throw Error("node degree exceeds max_degree");
        const auto nb = neighbors(static_cast<TokenId>(i));
        row.assign(nb.begin(), nb.end());
        for (TokenId v : row) {
            if (v >= n) throw Error("adjacency id out of range");
            if (v == i) throw Error("self loop at node " + std::to_string(i));
        }
        std::sort(row.begin(), row.end());
        if (std::adjacent_find(row.begin(), row.end()) != row.end()) {
            throw Error("duplicate neighbor at node " + std::to_string(i));
        }
    }
}

std::vector<bool> GraphIndex::reachable() const {
    std::vector<bool> seen(size(), false);
    std::deque<TokenId> queue{entry_point_};
    seen[entry_point_] = true;
    while (!queue.empty()) {
        const TokenId u = queue.front();
        queue.pop_front();
        for (TokenId v : neighbors(u)) {
            if (!seen[v]) {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    return seen;
}

bool GraphIndex::fully_reachable() const {
    const auto seen = reachable();
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

GraphIndex build_graph(std::shared_ptr<const VectorSet> keys_ptr, const VectorSet& sampled_queries,
                       const GraphParams& params) {
    if (!keys_ptr || keys_ptr->empty()) throw Error("cannot build a graph over zero keys");
    if (params.max_degree == 0) throw Error("max_degree must be positive");
    const VectorSet& keys = *keys_ptr;
    const std::size_t n = keys.size();
    BuildGraph g{params.max_degree, std::vector<std::vector<TokenId>>(n)};
    if (n == 1) return freeze(std::move(keys_ptr), g, 0);

    const bool projected = !sampled_queries.empty();
    if (projected) {
        if (sampled_queries.dim() != keys.dim()) throw DimensionMismatch(keys.dim(), sampled_queries.dim());
        // Stage (i): exact kNN of every sampled query, in parallel.
        std::vector<std::vector<TokenId>> knn(sampled_queries.size());
        parallel_for(sampled_queries.size(), params.threads, [&](std::size_t qi) {
            knn[qi] = exact_topk_ip(keys, sampled_queries.row(qi), params.knn_k);
        });
        // Keys co-retrieved by one query become mutual neighbor candidates.
        std::vector<std::vector<TokenId>> candidates(n);
        for (const auto& list : knn) {
            for (std::size_t a = 0; a < list.size(); ++a) {
                for (std::size_t b = a + 1; b < list.size(); ++b) {
                    candidates[list[a]].push_back(list[b]);
                    candidates[list[b]].push_back(list[a]);
                }
            }
        }
        for (std::size_t u = 0; u < n; ++u) {
            g.adj[u] = prune(keys, static_cast<TokenId>(u), std::move(candidates[u]), params.max_degree,
                             params.prune_alpha);
        }
    }

    // Stage (ii): link each key to the approximate nearest keys found by a
    // search over the current graph, plus reverse edges. Nodes expanded on
    // the way are candidates too; they supply the long-range edges.
    const TokenId build_entry = projected ? nearest_to_centroid(keys) : 0;
    VisitedMarks visited(n);
    std::vector<TokenId> path;
    for (std::size_t u = 0; u < n; ++u) {
        if (!projected && u == 0) continue;
        const auto target = keys.row(u);
        path.clear();
        auto found = best_first(
            g, [&](TokenId id) { return -squared_l2(target, keys.row(id)); }, build_entry,
            std::max<std::size_t>(params.enhance_ef, 1), visited, &path);
        std::vector<TokenId> cand = g.adj[u];
        cand.insert(cand.end(), path.begin(), path.end());
        for (const auto& s : found) cand.push_back(s.id);
        g.adj[u] = prune(keys, static_cast<TokenId>(u), std::move(cand), params.max_degree, params.prune_alpha);
        for (TokenId v : g.adj[u]) {
            auto& back = g.adj[v];
            if (std::find(back.begin(), back.end(), static_cast<TokenId>(u)) != back.end()) continue;
            if (back.size() < params.max_degree) {
                back.push_back(static_cast<TokenId>(u));
            } else {
                std::vector<TokenId> cand_v = back;
                cand_v.push_back(static_cast<TokenId>(u));
                back = prune(keys, v, std::move(cand_v), params.max_degree, params.prune_alpha);
            }
        }
    }

    const TokenId entry = nearest_to_centroid(keys);
    {
        // half local edges, half pivots
        auto& row = g.adj[entry];
        row.clear();
        for (TokenId p : spread_pivots(keys, entry, params.max_degree - row.size())) {
            if (row.size() < params.max_degree && std::find(row.begin(), row.end(), p) == row.end()) row.push_back(p);
        }
    }
    repair_reachability(keys, g, entry, params.enhance_ef);
    return freeze(std::move(keys_ptr), g, entry);
}

VectorSet sample_queries(const VectorSet& queries, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw Error("sample ratio must be in (0, 1]");
    if (queries.empty()) return queries;
    const std::size_t n = queries.size();
    const auto m = static_cast<std::size_t>(std::ceil(ratio * double(n) - 1e-9));
    VectorSet out(queries.dim());
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) out.push_back(queries.row(i * n / m));
    return out;
}

GraphIndex build_shared_graph(std::shared_ptr<const VectorSet> group_keys,
                              std::span<const VectorSet> per_query_head_queries, double sample_ratio,
                              const GraphParams& params) {
    if (per_query_head_queries.empty()) throw Error("shared graph needs at least one query head");
    if (!group_keys || group_keys->empty()) throw Error("cannot build a graph over zero keys");
    VectorSet merged(group_keys->dim());
    for (const auto& head : per_query_head_queries) {
        const auto sampled = sample_queries(head, sample_ratio);
        for (std::size_t i = 0; i < sampled.size(); ++i) merged.push_back(sampled.row(i));
    }
    return build_graph(std::move(group_keys), merged, params);
}

std::vector<TokenId> graph_topk(const GraphIndex& index, const Vector& q, std::size_t k, std::size_t ef) {
    if (q.dim() != index.keys().dim()) throw DimensionMismatch(index.keys().dim(), q.dim());
    if (k > index.size()) throw Error("k exceeds the number of indexed keys");
    ef = std::max(ef, k);
    auto worse_first = [](const Scored& a, const Scored& b) { return better(a, b); };
    auto best_first_cmp = [](const Scored& a, const Scored& b) { return better(b, a); };
    std::priority_queue<Scored, std::vector<Scored>, decltype(best_first_cmp)> frontier(best_first_cmp);
    std::priority_queue<Scored, std::vector<Scored>, decltype(worse_first)> results(worse_first);
    std::vector<bool> visited(index.size(), false);
    const auto& keys = index.keys();
    const TokenId entry = index.entry_point();
    visited[entry] = true;
    const Scored start{entry, inner_product(q.values(), keys.row(entry))};
    frontier.push(start);
    results.push(start);
    while (!frontier.empty()) {
        const Scored cur = frontier.top();
        frontier.pop();
        if (results.size() >= ef && better(results.top(), cur)) break;
        for (TokenId nb : index.neighbors(cur.id)) {
            if (visited[nb]) continue;
            visited[nb] = true;
            const Scored s{nb, inner_product(q.values(), keys.row(nb))};
            if (results.size() < ef || better(s, results.top())) {
                frontier.push(s);
                results.push(s);
                if (results.size() > ef) results.pop();
            }
        }
    }
    std::vector<Scored> all;
    while (!results.empty()) {
        all.push_back(results.top());
        results.pop();
    }
    std::sort(all.begin(), all.end(), better);
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].id);
    return out;
}

}  // namespace ctxdb
