#include "ctxdb/core.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace ctxdb {

namespace {

void require_finite(std::span<const float> data) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) {
            throw Error("vector element " + std::to_string(i) + " is not finite");
        }
    }
}

}  // namespace

DimensionMismatch::DimensionMismatch(std::size_t expected, std::size_t actual)
    : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " + std::to_string(actual)) {}

Vector::Vector(std::vector<float> data) : data_(std::move(data)) {
    if (data_.empty()) throw Error("vector dimension must be positive");
    require_finite(data_);
}

Vector::Vector(std::initializer_list<float> data) : Vector(std::vector<float>(data)) {}

Vector::Vector(std::span<const float> data) : Vector(std::vector<float>(data.begin(), data.end())) {}

VectorSet::VectorSet(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw Error("vector dimension must be positive");
}

VectorSet::VectorSet(std::size_t dim, std::vector<float> data) : dim_(dim), data_(std::move(data)) {
    if (dim == 0) throw Error("vector dimension must be positive");
    if (data_.size() % dim != 0) throw Error("flat data length is not a multiple of dim");
    require_finite(data_);
}

VectorSet::VectorSet(std::initializer_list<std::initializer_list<float>> rows) {
    for (const auto& r : rows) {
        if (dim_ == 0) {
            if (r.size() == 0) throw Error("vector dimension must be positive");
            dim_ = r.size();
        }
        push_back(std::span<const float>(r.begin(), r.size()));
    }
}

VectorSet VectorSet::from_vectors(std::span<const Vector> vectors) {
    if (vectors.empty()) return {};
    VectorSet out(vectors.front().dim());
    out.reserve(vectors.size());
    for (const auto& v : vectors) out.push_back(v);
    return out;
}

void VectorSet::push_back(std::span<const float> row) {
    if (dim_ == 0) {
        if (row.empty()) throw Error("vector dimension must be positive");
        dim_ = row.size();
    }
    if (row.size() != dim_) throw DimensionMismatch(dim_, row.size());
    require_finite(row);
    data_.insert(data_.end(), row.begin(), row.end());
}

VectorSet VectorSet::prefix(std::size_t rows) const {
    if (rows > size()) throw Error("prefix longer than vector set");
    VectorSet out;
    out.dim_ = dim_;
    out.data_.assign(data_.begin(), data_.begin() + static_cast<std::ptrdiff_t>(rows * dim_));
    return out;
}

void ModelShape::validate() const {
    if (n_layers == 0 || n_query_heads == 0 || n_kv_heads == 0 || dim == 0) {
        throw Error("model shape fields must be positive");
    }
    if (n_query_heads % n_kv_heads != 0) {
        throw Error("n_query_heads must be a multiple of n_kv_heads");
    }
}

void HeadAddress::validate(const ModelShape& shape) const {
    if (layer >= shape.n_layers) throw Error("layer out of range: " + std::to_string(layer));
    if (kv_head >= shape.n_kv_heads) throw Error("kv head out of range: " + std::to_string(kv_head));
    if (query_head >= shape.n_query_heads) throw Error("query head out of range: " + std::to_string(query_head));
    if (shape.kv_head_of(query_head) != kv_head) throw Error("query head is not in the kv head's group");
}

float inner_product(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
    float acc = 0.0f;
    for (std::size_t t = 0; t < a.size(); ++t) acc += a[t] * b[t];
    return acc;
}

float inner_product(const Vector& a, const Vector& b) { return inner_product(a.values(), b.values()); }

float scaled_score(std::span<const float> q, std::span<const float> k) {
    return inner_product(q, k) / std::sqrt(static_cast<float>(q.size()));
}

float scaled_score(const Vector& q, const Vector& k) { return scaled_score(q.values(), k.values()); }

float squared_l2(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
    float acc = 0.0f;
    for (std::size_t t = 0; t < a.size(); ++t) {
        const float d = a[t] - b[t];
        acc += d * d;
    }
    return acc;
}

float squared_norm(std::span<const float> a) {
    float acc = 0.0f;
    for (float x : a) acc += x * x;
    return acc;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> workers;
    workers.reserve(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t w = 0; w < threads; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        workers.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace ctxdb
