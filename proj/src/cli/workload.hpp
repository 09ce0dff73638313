#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ctxdb/core.hpp"
#include "ctxdb/store.hpp"

namespace ctxdb::cli {

enum class KeyDistribution { GaussianClusters, UniformSphere };
enum class QueryModel { InDistribution, Shifted };

std::string to_string(KeyDistribution d);
std::string to_string(QueryModel m);
KeyDistribution parse_distribution(const std::string& s);
QueryModel parse_query_model(const std::string& s);

/// Seeded synthetic K/V/Q generator. The seed fully determines every vector.
struct WorkloadSpec {
    std::size_t n_tokens = 10000;
    ModelShape shape{1, 1, 1, 64};
    KeyDistribution distribution = KeyDistribution::GaussianClusters;
    std::size_t clusters = 64;
    double spread = 0.7;         // noise scale relative to a unit center
    std::size_t intrinsic_dim = 8;  // rank of the within-cluster noise; 0 = isotropic
    double cluster_skew = 0.0;   // cluster c holds a share proportional to 1/(c+1)^skew of the keys
    double key_norm = 8.0;
    QueryModel query_model = QueryModel::Shifted;
    double shift = 0.5;          // out-of-distribution offset, relative to a unit center
    double query_norm = 8.0;
    std::vector<double> head_sharpness;  // per query head multiplier of query_norm; empty = 1
    double flat_fraction = 0.0;  // share of queries scaled down by flat_scale
    double flat_scale = 0.25;
    std::uint64_t seed = 42;

    void validate() const;
};

class Workload {
public:
    explicit Workload(WorkloadSpec spec);

    const WorkloadSpec& spec() const noexcept { return spec_; }

    VectorSet keys(std::size_t layer, std::size_t kv_head) const;
    VectorSet values(std::size_t layer, std::size_t kv_head) const;
    /// `count` queries for one query head; `stream` separates independent draws
    /// (index building samples vs evaluation queries).
    VectorSet queries(std::size_t layer, std::size_t query_head, std::size_t count, std::uint64_t stream) const;
    /// One key/value row for a generated token (decode steps).
    std::pair<Vector, Vector> token(std::size_t layer, std::size_t kv_head, std::uint64_t step) const;

    KVCache kv_cache() const;
    QuerySamples samples(std::size_t per_head, std::uint64_t stream = 1) const;
    /// Vocabulary ids for the context; distinct per seed.
    std::vector<VocabToken> token_ids() const;

private:
    std::vector<float> unit_centers(std::size_t layer, std::size_t kv_head) const;
    // d x r basis per cluster, row-major per cluster.
    std::vector<float> noise_bases(std::size_t layer, std::size_t kv_head) const;
    void add_noise(std::span<float> row, std::size_t cluster, const std::vector<float>& bases,
                   std::mt19937_64& rng) const;
    // Each query head drifts from the keys in its own direction.
    std::vector<float> shift_direction(std::size_t layer, std::size_t query_head) const;

    WorkloadSpec spec_;
};

}  // namespace ctxdb::cli
