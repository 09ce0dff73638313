#include "ctxdb/attention.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <unordered_set>

namespace ctxdb {

PartialAttention::PartialAttention(std::size_t dim) : acc_(dim, 0.0) {}

void PartialAttention::absorb_score(double z, std::span<const float> v) {
    if (acc_.empty()) acc_.assign(v.size(), 0.0);
    if (v.size() != acc_.size()) throw DimensionMismatch(acc_.size(), v.size());
    if (count_ == 0) {
        m_ = z;
        l_ = 1.0;
        for (std::size_t t = 0; t < v.size(); ++t) acc_[t] = v[t];
        count_ = 1;
        return;
    }
    if (z > m_) {
        const double rescale = std::exp(m_ - z);
        l_ = l_ * rescale + 1.0;
        for (std::size_t t = 0; t < v.size(); ++t) acc_[t] = acc_[t] * rescale + v[t];
        m_ = z;
    } else {
        const double w = std::exp(z - m_);
        l_ += w;
        for (std::size_t t = 0; t < v.size(); ++t) acc_[t] += w * v[t];
    }
    ++count_;
}

void PartialAttention::absorb(std::span<const float> q, std::span<const float> k, std::span<const float> v) {
    absorb_score(scaled_score(q, k), v);
}

void PartialAttention::merge(const PartialAttention& other) {
    if (other.empty()) return;
    if (empty()) {
        *this = other;
        return;
    }
    if (other.dim() != dim()) throw DimensionMismatch(dim(), other.dim());
    const double m = std::max(m_, other.m_);
    const double s1 = std::exp(m_ - m);
    const double s2 = std::exp(other.m_ - m);
    l_ = l_ * s1 + other.l_ * s2;
    for (std::size_t t = 0; t < acc_.size(); ++t) acc_[t] = acc_[t] * s1 + other.acc_[t] * s2;
    m_ = m;
    count_ += other.count_;
}

AttentionOutput PartialAttention::finalize() const {
    if (empty()) throw Error("cannot finalize an empty partial attention");
    std::vector<float> o(acc_.size());
    for (std::size_t t = 0; t < acc_.size(); ++t) o[t] = static_cast<float>(acc_[t] / l_);
    return {Vector(std::move(o))};
}

PartialAttention partial_init() { return {}; }

PartialAttention partial_absorb(PartialAttention p, const Vector& q, const Vector& k, const Vector& v) {
    p.absorb(q.values(), k.values(), v.values());
    return p;
}

PartialAttention partial_merge(PartialAttention p1, const PartialAttention& p2) {
    p1.merge(p2);
    return p1;
}

AttentionOutput partial_finalize(const PartialAttention& p) { return p.finalize(); }

namespace {

void check_kv(const Vector& q, const VectorSet& keys, const VectorSet& values) {
    if (keys.empty()) throw Error("attention over an empty key list");
    if (keys.size() != values.size()) throw Error("key/value count mismatch");
    if (keys.dim() != q.dim()) throw DimensionMismatch(q.dim(), keys.dim());
}

}  // namespace

AttentionOutput full_attention(const Vector& q, const VectorSet& keys, const VectorSet& values) {
    check_kv(q, keys, values);
    PartialAttention p(values.dim());
    for (std::size_t s = 0; s < keys.size(); ++s) p.absorb(q.values(), keys.row(s), values.row(s));
    return p.finalize();
}

AttentionOutput sparse_attention(const Vector& q, std::span<const SelectedToken> selected) {
    if (selected.empty()) throw Error("sparse attention over an empty selection");
    std::unordered_set<TokenId> seen;
    PartialAttention p;
    for (const auto& tok : selected) {
        if (!seen.insert(tok.id).second) throw Error("duplicate token id " + std::to_string(tok.id));
        p.absorb(q.values(), tok.key, tok.value);
    }
    return p.finalize();
}

AttentionOutput sparse_attention(const Vector& q, const VectorSet& keys, const VectorSet& values,
                                 std::span<const TokenId> selected) {
    check_kv(q, keys, values);
    std::vector<SelectedToken> toks;
    toks.reserve(selected.size());
    for (TokenId id : selected) {
        if (id >= keys.size()) throw Error("token id out of range: " + std::to_string(id));
        toks.push_back({id, keys.row(id), values.row(id)});
    }
    return sparse_attention(q, toks);
}

std::vector<double> attention_weights(const Vector& q, const VectorSet& keys) {
    if (keys.empty()) return {};
    if (keys.dim() != q.dim()) throw DimensionMismatch(q.dim(), keys.dim());
    std::vector<double> w(keys.size());
    double m = -INFINITY;
    for (std::size_t s = 0; s < keys.size(); ++s) {
        w[s] = scaled_score(q.values(), keys.row(s));
        m = std::max(m, w[s]);
    }
    double sum = 0.0;
    for (double& x : w) {
        x = std::exp(x - m);
        sum += x;
    }
    for (double& x : w) x /= sum;
    return w;
}

double recovery_ratio(const Vector& q, const VectorSet& all_keys, std::span<const TokenId> selected) {
    if (selected.empty()) return 0.0;
    const auto w = attention_weights(q, all_keys);
    std::unordered_set<TokenId> seen;
    double r = 0.0;
    for (TokenId id : selected) {
        if (id >= w.size()) throw Error("selected token id out of range: " + std::to_string(id));
        if (seen.insert(id).second) r += w[id];
    }
    return std::min(1.0, r);
}

std::size_t tokens_for_recovery(const Vector& q, const VectorSet& all_keys, double target) {
    auto w = attention_weights(q, all_keys);
    std::sort(w.begin(), w.end(), std::greater<>());
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (acc >= target) return i + 1;
    }
    return w.size();
}

}  // namespace ctxdb
