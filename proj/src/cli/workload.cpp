#include "workload.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ctxdb::cli {

namespace {

enum Stream : std::uint32_t { kCenters = 1, kKeys, kValues, kQueries, kShift, kTokens, kDecode, kBases };

std::mt19937_64 rng_for(std::uint64_t seed, std::uint32_t what, std::uint64_t a = 0, std::uint64_t b = 0,
                        std::uint64_t c = 0) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), what, std::uint32_t(a), std::uint32_t(b),
                      std::uint32_t(c), std::uint32_t(c >> 32)};
    return std::mt19937_64(seq);
}

void gaussian(std::mt19937_64& rng, std::span<float> out, double stddev) {
    std::normal_distribution<double> n(0.0, stddev);
    for (auto& x : out) x = float(n(rng));
}

void scale_to(std::span<float> v, double norm) {
    double s = 0;
    for (float x : v) s += double(x) * x;
    s = std::sqrt(s);
    if (s == 0) {
        v[0] = 1.0f;
        s = 1.0;
    }
    for (auto& x : v) x = float(x / s * norm);
}

}  // namespace

std::string to_string(KeyDistribution d) {
    return d == KeyDistribution::GaussianClusters ? "gaussian-clusters" : "uniform-sphere";
}

std::string to_string(QueryModel m) { return m == QueryModel::InDistribution ? "in-distribution" : "shifted"; }

KeyDistribution parse_distribution(const std::string& s) {
    if (s == "gaussian-clusters") return KeyDistribution::GaussianClusters;
    if (s == "uniform-sphere") return KeyDistribution::UniformSphere;
    throw Error("unknown distribution '" + s + "' (gaussian-clusters | uniform-sphere)");
}

QueryModel parse_query_model(const std::string& s) {
    if (s == "in-distribution") return QueryModel::InDistribution;
    if (s == "shifted") return QueryModel::Shifted;
    throw Error("unknown query model '" + s + "' (in-distribution | shifted)");
}

void WorkloadSpec::validate() const {
    shape.validate();
    if (n_tokens == 0) throw Error("workload needs at least one token");
    if (distribution == KeyDistribution::GaussianClusters && clusters == 0) throw Error("clusters must be positive");
    if (!head_sharpness.empty() && head_sharpness.size() != shape.n_query_heads) {
        throw Error("head_sharpness needs one entry per query head");
    }
    if (flat_fraction < 0 || flat_fraction > 1) throw Error("flat_fraction must lie in [0, 1]");
    if (!(key_norm > 0) || !(query_norm > 0)) throw Error("norms must be positive");
    if (cluster_skew < 0) throw Error("cluster_skew must be non-negative");
}

Workload::Workload(WorkloadSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

std::vector<float> Workload::unit_centers(std::size_t layer, std::size_t kv_head) const {
    const std::size_t d = spec_.shape.dim;
    auto rng = rng_for(spec_.seed, kCenters, layer, kv_head);
    std::vector<float> c(spec_.clusters * d);
    gaussian(rng, c, 1.0);
    for (std::size_t i = 0; i < spec_.clusters; ++i) scale_to(std::span(c).subspan(i * d, d), 1.0);
    return c;
}

std::vector<float> Workload::noise_bases(std::size_t layer, std::size_t kv_head) const {
    const std::size_t d = spec_.shape.dim;
    const std::size_t r = spec_.intrinsic_dim;
    if (r == 0) return {};
    auto rng = rng_for(spec_.seed, kBases, layer, kv_head);
    std::vector<float> b(spec_.clusters * d * r);
    gaussian(rng, b, 1.0 / std::sqrt(double(d * r)));
    return b;
}

void Workload::add_noise(std::span<float> row, std::size_t cluster, const std::vector<float>& bases,
                         std::mt19937_64& rng) const {
    const std::size_t d = row.size();
    std::normal_distribution<double> z(0.0, 1.0);
    if (bases.empty()) {
        const double s = spec_.spread / std::sqrt(double(d));
        for (auto& x : row) x += float(s * z(rng));
        return;
    }
    const std::size_t r = spec_.intrinsic_dim;
    const float* basis = bases.data() + cluster * d * r;
    for (std::size_t j = 0; j < r; ++j) {
        const double w = spec_.spread * z(rng);
        for (std::size_t t = 0; t < d; ++t) row[t] += float(w * basis[t * r + j]);
    }
}

std::vector<float> Workload::shift_direction(std::size_t layer, std::size_t query_head) const {
    auto rng = rng_for(spec_.seed, kShift, layer, query_head);
    std::vector<float> s(spec_.shape.dim);
    gaussian(rng, s, 1.0);
    scale_to(s, 1.0);
    return s;
}

VectorSet Workload::keys(std::size_t layer, std::size_t kv_head) const {
    const std::size_t d = spec_.shape.dim;
    auto rng = rng_for(spec_.seed, kKeys, layer, kv_head);
    std::vector<float> out(spec_.n_tokens * d);
    if (spec_.distribution == KeyDistribution::UniformSphere) {
        gaussian(rng, out, 1.0);
        for (std::size_t i = 0; i < spec_.n_tokens; ++i) scale_to(std::span(out).subspan(i * d, d), spec_.key_norm);
        return VectorSet(d, std::move(out));
    }
    const auto centers = unit_centers(layer, kv_head);
    const auto bases = noise_bases(layer, kv_head);
    std::vector<double> weights(spec_.clusters);
    for (std::size_t c = 0; c < weights.size(); ++c) weights[c] = std::pow(double(c + 1), -spec_.cluster_skew);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    for (std::size_t i = 0; i < spec_.n_tokens; ++i) {
        const std::size_t c = pick(rng);
        auto row = std::span(out).subspan(i * d, d);
        std::copy_n(centers.begin() + std::ptrdiff_t(c * d), d, row.begin());
        add_noise(row, c, bases, rng);
        for (auto& x : row) x = float(spec_.key_norm * x);
    }
    return VectorSet(d, std::move(out));
}

VectorSet Workload::values(std::size_t layer, std::size_t kv_head) const {
    auto rng = rng_for(spec_.seed, kValues, layer, kv_head);
    std::vector<float> out(spec_.n_tokens * spec_.shape.dim);
    gaussian(rng, out, 1.0);
    return VectorSet(spec_.shape.dim, std::move(out));
}

VectorSet Workload::queries(std::size_t layer, std::size_t query_head, std::size_t count, std::uint64_t stream) const {
    if (query_head >= spec_.shape.n_query_heads) throw Error("query head out of range");
    const std::size_t d = spec_.shape.dim;
    const std::size_t kv = spec_.shape.kv_head_of(query_head);
    auto rng = rng_for(spec_.seed, kQueries, layer, query_head, stream);
    const auto centers = spec_.distribution == KeyDistribution::GaussianClusters ? unit_centers(layer, kv)
                                                                                  : std::vector<float>{};
    const auto shift = shift_direction(layer, query_head);
    const double sharp = spec_.head_sharpness.empty() ? 1.0 : spec_.head_sharpness[query_head];
    const auto bases = centers.empty() ? std::vector<float>{} : noise_bases(layer, kv);
    std::uniform_int_distribution<std::size_t> pick(0, std::max<std::size_t>(spec_.clusters, 1) - 1);
    std::normal_distribution<double> unit(0.0, 1.0 / std::sqrt(double(d)));
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    std::vector<float> out(count * d);
    for (std::size_t i = 0; i < count; ++i) {
        auto row = std::span(out).subspan(i * d, d);
        if (centers.empty()) {
            for (auto& x : row) x = float(unit(rng));
        } else {
            const std::size_t c = pick(rng);
            std::copy_n(centers.begin() + std::ptrdiff_t(c * d), d, row.begin());
            add_noise(row, c, bases, rng);
        }
        if (spec_.query_model == QueryModel::Shifted) {
            for (std::size_t t = 0; t < d; ++t) row[t] += float(spec_.shift * shift[t]);
        }
        const bool flat = coin(rng) < spec_.flat_fraction;
        scale_to(row, spec_.query_norm * sharp * (flat ? spec_.flat_scale : 1.0));
    }
    return VectorSet(d, std::move(out));
}

std::pair<Vector, Vector> Workload::token(std::size_t layer, std::size_t kv_head, std::uint64_t step) const {
    const std::size_t d = spec_.shape.dim;
    auto rng = rng_for(spec_.seed, kDecode, layer, kv_head, step);
    std::vector<float> k(d), v(d);
    if (spec_.distribution == KeyDistribution::GaussianClusters) {
        const auto centers = unit_centers(layer, kv_head);
        const std::size_t c = std::uniform_int_distribution<std::size_t>(0, spec_.clusters - 1)(rng);
        std::copy_n(centers.begin() + std::ptrdiff_t(c * d), d, k.begin());
        add_noise(k, c, noise_bases(layer, kv_head), rng);
        for (auto& x : k) x = float(spec_.key_norm * x);
    } else {
        gaussian(rng, k, 1.0);
        scale_to(k, spec_.key_norm);
    }
    gaussian(rng, v, 1.0);
    return {Vector(std::move(k)), Vector(std::move(v))};
}

KVCache Workload::kv_cache() const {
    KVCache kv = KVCache::empty_for(spec_.shape);
    for (std::size_t l = 0; l < spec_.shape.n_layers; ++l) {
        for (std::size_t h = 0; h < spec_.shape.n_kv_heads; ++h) {
            kv.at(l, h) = {std::make_shared<const VectorSet>(keys(l, h)),
                           std::make_shared<const VectorSet>(values(l, h))};
        }
    }
    return kv;
}

QuerySamples Workload::samples(std::size_t per_head, std::uint64_t stream) const {
    QuerySamples s;
    s.shape = spec_.shape;
    for (std::size_t l = 0; l < spec_.shape.n_layers; ++l) {
        for (std::size_t h = 0; h < spec_.shape.n_query_heads; ++h) s.heads.push_back(queries(l, h, per_head, stream));
    }
    return s;
}

std::vector<VocabToken> Workload::token_ids() const {
    auto rng = rng_for(spec_.seed, kTokens);
    std::uniform_int_distribution<VocabToken> vocab(0, 31999);
    std::vector<VocabToken> ids(spec_.n_tokens);
    for (auto& t : ids) t = vocab(rng);
    return ids;
}

}  // namespace ctxdb::cli
