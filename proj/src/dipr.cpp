#include "ctxdb/dipr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ctxdb {

double alpha_to_beta(double alpha, std::size_t d) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("alpha must be in (0, 1], got " + std::to_string(alpha));
    if (d == 0) throw Error("dimension must be positive");
    const double beta = -std::sqrt(static_cast<double>(d)) * std::log(alpha);
    return beta <= 0.0 ? 0.0 : beta;
}

double beta_to_alpha(double beta, std::size_t d) {
    if (!(beta >= 0.0) || std::isinf(beta)) throw Error("beta must be finite and non-negative");
    if (d == 0) throw Error("dimension must be positive");
    return std::exp(-beta / std::sqrt(static_cast<double>(d)));
}

CriticalityThreshold CriticalityThreshold::from_alpha(double alpha, std::size_t d) {
    return {alpha, alpha_to_beta(alpha, d), d};
}

CriticalityThreshold CriticalityThreshold::from_beta(double beta, std::size_t d) {
    return {beta_to_alpha(beta, d), beta, d};
}

bool is_critical_by_attention(double a_j, double a_max, double alpha) { return a_j >= alpha * a_max; }

std::vector<TokenId> dipr_bruteforce(const Vector& q, const VectorSet& keys, double beta,
                                     std::optional<std::size_t> limit, std::optional<double> window_max) {
    if (keys.empty()) throw Error("DIPR over an empty key list");
    if (!(beta >= 0.0)) throw Error("beta must be non-negative");
    if (q.dim() != keys.dim()) throw DimensionMismatch(keys.dim(), q.dim());
    const std::size_t n = std::min(limit.value_or(keys.size()), keys.size());
    if (n == 0) throw Error("DIPR over an empty key list");
    std::vector<float> scores(n);
    double reference = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = inner_product(q.values(), keys.row(i));
        reference = std::max(reference, static_cast<double>(scores[i]));
    }
    if (window_max) reference = std::max(reference, *window_max);
    const double threshold = reference - beta;
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<double>(scores[i]) >= threshold) out.push_back(static_cast<TokenId>(i));
    }
    return out;
}

std::vector<TokenId> dipr_bruteforce(const Vector& q, const VectorSet& keys, std::span<const TokenId> ids,
                                     double beta) {
    if (ids.size() != keys.size()) throw Error("one token id per key is required");
    const auto rows = dipr_bruteforce(q, keys, beta);
    std::vector<TokenId> out;
    out.reserve(rows.size());
    for (TokenId r : rows) out.push_back(ids[r]);
    std::sort(out.begin(), out.end());
    return out;
}

bool critical_sets_agree(const Vector& q, const VectorSet& keys, double alpha, double boundary_tolerance) {
    if (keys.empty()) throw Error("DIPR over an empty key list");
    const std::size_t d = q.dim();
    const double beta = alpha_to_beta(alpha, d);

    // Attention-proportion side: softmax over scaled scores.
    std::vector<double> ip(keys.size());
    std::vector<double> a(keys.size());
    double z_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < keys.size(); ++j) {
        ip[j] = inner_product(q.values(), keys.row(j));
        a[j] = ip[j] / std::sqrt(static_cast<double>(d));
        z_max = std::max(z_max, a[j]);
    }
    double sum = 0.0;
    for (double& x : a) {
        x = std::exp(x - z_max);
        sum += x;
    }
    double a_max = 0.0;
    for (double& x : a) {
        x /= sum;
        a_max = std::max(a_max, x);
    }

    const auto by_ip = dipr_bruteforce(q, keys, beta);
    std::vector<bool> in_ip(keys.size(), false);
    for (TokenId id : by_ip) in_ip[id] = true;

    const double ip_max = *std::max_element(ip.begin(), ip.end());
    const double threshold = ip_max - beta;
    for (std::size_t j = 0; j < keys.size(); ++j) {
        if (std::abs(ip[j] - threshold) <= boundary_tolerance) continue;
        if (is_critical_by_attention(a[j], a_max, alpha) != in_ip[j]) return false;
    }
    return true;
}

void CandidateList::push(TokenId id, float score) {
    entries_.push_back({id, score});
    const Entry& b = entries_[best_];
    if (entries_.size() == 1 || score > b.score || (score == b.score && id < b.id)) best_ = entries_.size() - 1;
}

void CandidateList::seed(TokenId id, float score) {
    if (!entries_.empty()) throw Error("candidate list already seeded");
    push(id, score);
}

double CandidateList::reference() const noexcept {
    double r = entries_.empty() ? -std::numeric_limits<double>::infinity() : double(entries_[best_].score);
    if (window_max_) r = std::max(r, *window_max_);
    return r;
}

bool CandidateList::try_append(TokenId id, float score, double beta) {
    if (entries_.size() <= l0_ || static_cast<double>(score) >= reference() - beta) {
        push(id, score);
        return true;
    }
    return false;
}

std::vector<TokenId> CandidateList::critical(double beta) const {
    const double threshold = reference() - beta;
    std::vector<TokenId> out;
    for (const auto& e : entries_) {
        if (static_cast<double>(e.score) >= threshold) out.push_back(e.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

RangeSearchResult diprs(const GraphIndex& index, const Vector& q, TokenId start, std::size_t l0, double beta,
                        std::optional<double> window_max) {
    if (start >= index.size()) throw Error("start node " + std::to_string(start) + " is not in the graph");
    if (l0 == 0) throw Error("l0 must be at least 1");
    if (!(beta >= 0.0)) throw Error("beta must be non-negative");
    if (q.dim() != index.keys().dim()) throw DimensionMismatch(index.keys().dim(), q.dim());
    return detail::range_search(index.keys(), q.values(), start, l0, beta, window_max,
                                [&](TokenId node, auto&& visit) {
                                    for (TokenId nb : index.neighbors(node)) visit(nb);
                                });
}

}  // namespace ctxdb
