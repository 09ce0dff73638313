#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctxdb {

/// Every failure surfaced by the library is an Error (or a subclass).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    DimensionMismatch(std::size_t expected, std::size_t actual);
};

/// 0-based position of a token inside one context sequence.
using TokenId = std::uint32_t;

/// Fixed-dimension, finite, 32-bit float embedding.
class Vector {
public:
    explicit Vector(std::vector<float> data);
    Vector(std::initializer_list<float> data);
    explicit Vector(std::span<const float> data);

    std::size_t dim() const noexcept { return data_.size(); }
    std::span<const float> values() const noexcept { return data_; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }
    const std::vector<float>& raw() const noexcept { return data_; }

    friend bool operator==(const Vector&, const Vector&) = default;

private:
    std::vector<float> data_;
};

/// Dense row-major n x dim matrix of finite floats. Row i belongs to token i.
class VectorSet {
public:
    VectorSet() = default;
    explicit VectorSet(std::size_t dim);
    VectorSet(std::size_t dim, std::vector<float> data);
    VectorSet(std::initializer_list<std::initializer_list<float>> rows);

    static VectorSet from_vectors(std::span<const Vector> vectors);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const float> row(std::size_t i) const noexcept {
        return {data_.data() + i * dim_, dim_};
    }
    Vector vector(std::size_t i) const { return Vector(row(i)); }

    void push_back(std::span<const float> row);
    void push_back(const Vector& v) { push_back(v.values()); }
    void reserve(std::size_t rows) { data_.reserve(rows * dim_); }

    /// First `rows` rows as a new set.
    VectorSet prefix(std::size_t rows) const;

    std::span<const float> flat() const noexcept { return data_; }
    std::size_t bytes() const noexcept { return data_.size() * sizeof(float); }

    friend bool operator==(const VectorSet&, const VectorSet&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

struct ModelShape {
    std::size_t n_layers = 1;
    std::size_t n_query_heads = 1;
    std::size_t n_kv_heads = 1;
    std::size_t dim = 64;

    void validate() const;
    std::size_t group_size() const noexcept { return n_query_heads / n_kv_heads; }
    std::size_t kv_head_of(std::size_t query_head) const noexcept { return query_head / group_size(); }

    friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct HeadAddress {
    std::size_t layer = 0;
    std::size_t kv_head = 0;
    std::size_t query_head = 0;

    /// Throws if any coordinate is out of range or query_head is not in kv_head's group.
    void validate(const ModelShape& shape) const;
};

/// Initial and most recent tokens that are always attended to.
struct WindowConfig {
    std::size_t initial = 32;
    std::size_t last = 32;

    bool covers(std::size_t context_len) const noexcept { return initial + last >= context_len; }
};

// Inner products accumulate in float, sequentially by ascending index, so
// results are bit-stable and inner_product(a, b) == inner_product(b, a).
float inner_product(std::span<const float> a, std::span<const float> b);
float inner_product(const Vector& a, const Vector& b);

/// inner_product(q, k) / sqrt(d).
float scaled_score(std::span<const float> q, std::span<const float> k);
float scaled_score(const Vector& q, const Vector& k);

float squared_l2(std::span<const float> a, std::span<const float> b);
float squared_norm(std::span<const float> a);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware concurrency).
/// Work is split in contiguous chunks; fn must only write to per-i state.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace ctxdb
