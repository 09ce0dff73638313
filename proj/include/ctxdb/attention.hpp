#pragma once

#include <span>
#include <vector>

#include "ctxdb/core.hpp"

namespace ctxdb {

struct AttentionOutput {
    Vector o;
};

/// Online-softmax state over an absorbed token subset. Partials computed over
/// disjoint subsets merge into the state of their union, which is how results
/// produced where the vectors reside (window vs. retrieved context) combine.
///
/// The running state is kept in double; inputs and outputs are float.
class PartialAttention {
public:
    PartialAttention() = default;
    explicit PartialAttention(std::size_t dim);

    bool empty() const noexcept { return count_ == 0; }
    std::size_t count() const noexcept { return count_; }
    std::size_t dim() const noexcept { return acc_.size(); }
    double max_score() const noexcept { return m_; }
    double normalizer() const noexcept { return l_; }
    std::span<const double> accumulator() const noexcept { return acc_; }

    /// Absorb one token with a precomputed scaled score.
    void absorb_score(double z, std::span<const float> v);
    void absorb(std::span<const float> q, std::span<const float> k, std::span<const float> v);

    /// Folds `other` into this partial. Either side may be empty.
    void merge(const PartialAttention& other);

    AttentionOutput finalize() const;

private:
    double m_ = 0.0;
    double l_ = 0.0;
    std::vector<double> acc_;
    std::size_t count_ = 0;
};

PartialAttention partial_init();
PartialAttention partial_absorb(PartialAttention p, const Vector& q, const Vector& k, const Vector& v);
PartialAttention partial_merge(PartialAttention p1, const PartialAttention& p2);
AttentionOutput partial_finalize(const PartialAttention& p);

AttentionOutput full_attention(const Vector& q, const VectorSet& keys, const VectorSet& values);

struct SelectedToken {
    TokenId id;
    std::span<const float> key;
    std::span<const float> value;
};

/// Attention renormalized over the selected tokens only.
AttentionOutput sparse_attention(const Vector& q, std::span<const SelectedToken> selected);
/// Same, with the selection given as row ids into a context's K/V.
AttentionOutput sparse_attention(const Vector& q, const VectorSet& keys, const VectorSet& values,
                                 std::span<const TokenId> selected);

/// Softmax weights of q against all keys (max-subtracted, double precision).
std::vector<double> attention_weights(const Vector& q, const VectorSet& keys);

/// Share of the total softmax mass held by `selected`. Empty selection -> 0.
double recovery_ratio(const Vector& q, const VectorSet& all_keys, std::span<const TokenId> selected);

/// Smallest number of highest-weight tokens whose mass reaches `target`.
std::size_t tokens_for_recovery(const Vector& q, const VectorSet& all_keys, double target);

}  // namespace ctxdb
