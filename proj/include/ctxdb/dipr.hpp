#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ctxdb/core.hpp"
#include "ctxdb/graph.hpp"

namespace ctxdb {

/// beta = -sqrt(d) * ln(alpha). alpha must lie in (0, 1].
double alpha_to_beta(double alpha, std::size_t d);
/// Inverse of alpha_to_beta: exp(-beta / sqrt(d)).
double beta_to_alpha(double beta, std::size_t d);

/// Criticality threshold stated either as an attention-score proportion
/// (alpha) or as an inner-product slack (beta); the other side is derived.
class CriticalityThreshold {
public:
    static CriticalityThreshold from_alpha(double alpha, std::size_t d);
    static CriticalityThreshold from_beta(double beta, std::size_t d);

    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }
    std::size_t dim() const noexcept { return d_; }

private:
    CriticalityThreshold(double alpha, double beta, std::size_t d) : alpha_(alpha), beta_(beta), d_(d) {}
    double alpha_;
    double beta_;
    std::size_t d_;
};

/// a_j >= alpha * a_max, inclusive.
bool is_critical_by_attention(double a_j, double a_max, double alpha);

/// Exact DIPR: every j among the first `limit` rows (default all) with
/// q.k_j >= reference - beta, where reference is the max inner product,
/// raised to window_max when that is larger. Sorted ascending.
std::vector<TokenId> dipr_bruteforce(const Vector& q, const VectorSet& keys, double beta,
                                     std::optional<std::size_t> limit = std::nullopt,
                                     std::optional<double> window_max = std::nullopt);

/// Same with explicit token ids: ids[i] names keys.row(i).
std::vector<TokenId> dipr_bruteforce(const Vector& q, const VectorSet& keys, std::span<const TokenId> ids,
                                     double beta);

/// Compares the softmax-proportion critical set with the inner-product
/// critical set at beta = alpha_to_beta(alpha, d). Tokens whose inner product
/// lies within `boundary_tolerance` of the threshold are left out of the
/// comparison.
bool critical_sets_agree(const Vector& q, const VectorSet& keys, double alpha, double boundary_tolerance = 1e-6);

/// Append-only candidate list of the range search. Entries keep insertion
/// order; nothing is ever removed.
class CandidateList {
public:
    struct Entry {
        TokenId id;
        float score;
    };

    explicit CandidateList(std::size_t l0) : l0_(l0) {}

    /// Unconditional first insert.
    void seed(TokenId id, float score);

    /// Appends while size() <= l0, or when score >= reference() - beta.
    bool try_append(TokenId id, float score, double beta);

    /// Caps the reference score from below (window cache maximum).
    void set_window_max(std::optional<double> window_max) { window_max_ = window_max; }

    /// max(best score in the list, window_max).
    double reference() const noexcept;

    const Entry& best() const { return entries_.at(best_); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t l0() const noexcept { return l0_; }

    /// Entries with score >= reference() - beta, ids ascending.
    std::vector<TokenId> critical(double beta) const;

private:
    void push(TokenId id, float score);

    std::size_t l0_;
    std::vector<Entry> entries_;
    std::size_t best_ = 0;
    std::optional<double> window_max_;
};

struct RangeSearchResult {
    std::vector<TokenId> ids;  // ascending
    TokenId best_id = 0;
    float best_score = 0.0f;
    std::size_t candidates = 0;  // final candidate-list size
    std::size_t scored = 0;      // inner products computed
};

/// Graph-based approximate DIPR. `window_max` is the raw inner-product
/// maximum over the cached window tokens, if any.
RangeSearchResult diprs(const GraphIndex& index, const Vector& q, TokenId start, std::size_t l0, double beta,
                        std::optional<double> window_max = std::nullopt);

namespace detail {

/// Core traversal shared by plain and filtered searches. `expand(node, visit)`
/// must call visit(id) for each neighbor id to offer to the list.
template <class Expand>
RangeSearchResult range_search(const VectorSet& keys, std::span<const float> q, TokenId start, std::size_t l0,
                               double beta, std::optional<double> window_max, Expand&& expand) {
    std::vector<std::uint8_t> visited(keys.size(), 0);
    CandidateList list(l0);
    list.set_window_max(window_max);
    RangeSearchResult out;
    visited[start] = 1;
    list.seed(start, inner_product(q, keys.row(start)));
    out.scored = 1;
    std::size_t cursor = 0;
    while (cursor < list.size()) {
        const TokenId node = list.entries()[cursor].id;
        ++cursor;
        expand(node, [&](TokenId k) {
            if (visited[k]) return;
            visited[k] = 1;
            ++out.scored;
            list.try_append(k, inner_product(q, keys.row(k)), beta);
        });
    }
    out.ids = list.critical(beta);
    out.best_id = list.best().id;
    out.best_score = list.best().score;
    out.candidates = list.size();
    return out;
}

}  // namespace detail

}  // namespace ctxdb
