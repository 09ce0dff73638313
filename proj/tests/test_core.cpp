#include <doctest.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <random>

#include "ctxdb/core.hpp"
#include "ctxdb/half.hpp"
#include "oracles.hpp"

using namespace ctxdb;

TEST_CASE("inner product hand cases") {
    CHECK(inner_product(Vector{1, 0}, Vector{0, 1}) == 0.0f);
    CHECK(inner_product(Vector{1, 2, 3}, Vector{1, 2, 3}) == 14.0f);
    CHECK(inner_product(Vector{0.5f, -1, 2}, Vector{4, 1, 0.25f}) == doctest::Approx(1.5));
}

TEST_CASE("scaled score hand cases") {
    CHECK(scaled_score(Vector{1, 1, 1, 1}, Vector{1, 1, 1, 1}) == 2.0f);
    CHECK(scaled_score(Vector{3}, Vector{-2}) == -6.0f);
}

TEST_CASE("scaled score matches a long double reference at d=64") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        const auto q = oracle::gaussian_vector(rng, 64);
        const auto k = oracle::gaussian_vector(rng, 64);
        const long double ref = oracle::dot(q.values(), k.values()) / 8.0L;
        const double got = scaled_score(q, k);
        CHECK(std::fabs(got - double(ref)) <= 1e-6 * std::max(1.0, std::fabs(double(ref))) + 1e-6);
    }
}

TEST_CASE("inner product is symmetric bit for bit") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 500; ++i) {
        const auto a = oracle::gaussian_vector(rng, 1 + i % 130);
        const auto b = oracle::gaussian_vector(rng, a.dim());
        CHECK(inner_product(a, b) == inner_product(b, a));
        const float s = scaled_score(a, b) * std::sqrt(float(a.dim()));
        CHECK(s == doctest::Approx(inner_product(a, b)).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("dimension mismatch is an error") {
    CHECK_THROWS_AS(inner_product(Vector{1, 2}, Vector{1, 2, 3}), DimensionMismatch);
    CHECK_THROWS_AS(scaled_score(Vector{1}, Vector{1, 2}), DimensionMismatch);
}

TEST_CASE("vectors reject non-finite elements and zero dimension") {
    CHECK_THROWS_AS(Vector({1.0f, std::numeric_limits<float>::quiet_NaN()}), Error);
    CHECK_THROWS_AS(Vector({std::numeric_limits<float>::infinity()}), Error);
    CHECK_THROWS_AS(Vector(std::vector<float>{}), Error);
    VectorSet s(2);
    const float bad[] = {1.0f, -std::numeric_limits<float>::infinity()};
    CHECK_THROWS_AS(s.push_back(std::span<const float>(bad)), Error);
    CHECK_THROWS_AS(s.push_back(Vector{1, 2, 3}), DimensionMismatch);
}

TEST_CASE("vector set rows and prefixes") {
    VectorSet s{{1, 2}, {3, 4}, {5, 6}};
    CHECK(s.size() == 3);
    CHECK(s.dim() == 2);
    CHECK(s.vector(1) == Vector{3, 4});
    CHECK(s.prefix(2) == VectorSet{{1, 2}, {3, 4}});
    CHECK_THROWS_AS(s.prefix(4), Error);
}

TEST_CASE("model shape and head addressing") {
    ModelShape shape{2, 8, 2, 16};
    CHECK_NOTHROW(shape.validate());
    CHECK(shape.group_size() == 4);
    CHECK(shape.kv_head_of(3) == 0);
    CHECK(shape.kv_head_of(4) == 1);
    CHECK_NOTHROW((HeadAddress{1, 1, 7}.validate(shape)));
    CHECK_THROWS_AS((HeadAddress{2, 0, 0}.validate(shape)), Error);
    CHECK_THROWS_AS((HeadAddress{0, 0, 4}.validate(shape)), Error);
    CHECK_THROWS_AS((HeadAddress{0, 0, 8}.validate(shape)), Error);
    CHECK_THROWS_AS((ModelShape{1, 6, 4, 16}.validate()), Error);
    CHECK_THROWS_AS((ModelShape{1, 1, 1, 0}.validate()), Error);
}

TEST_CASE("window covers short contexts") {
    WindowConfig w{4, 4};
    CHECK(w.covers(8));
    CHECK(w.covers(3));
    CHECK_FALSE(w.covers(9));
    CHECK(WindowConfig{0, 0}.covers(0));
}

TEST_CASE("parallel_for visits every index once") {
    for (std::size_t threads : {1u, 2u, 3u, 0u}) {
        std::vector<std::atomic<int>> hits(1001);
        parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
        for (auto& h : hits) CHECK(h.load() == 1);
    }
    CHECK_THROWS_AS(parallel_for(10, 2, [](std::size_t i) {
                        if (i == 7) throw Error("boom");
                    }),
                    Error);
}

TEST_CASE("half conversion") {
    CHECK(half_to_float(float_to_half(1.0f)) == 1.0f);
    CHECK(half_to_float(float_to_half(-2.5f)) == -2.5f);
    CHECK(float_to_half(65504.0f) == 0x7bff);
    CHECK(std::isinf(half_to_float(float_to_half(1e6f))));
    CHECK(std::isnan(half_to_float(float_to_half(std::numeric_limits<float>::quiet_NaN()))));
    // 1 + 2^-11 sits exactly between two halves; ties go to even (1.0).
    CHECK(float_to_half(1.0f + std::ldexp(1.0f, -11)) == 0x3c00);
    CHECK(float_to_half(1.0f + 3 * std::ldexp(1.0f, -11)) == 0x3c02);
    // every half widens and narrows back to itself
    for (std::uint32_t h = 0; h < 0x10000; ++h) {
        const auto bits = static_cast<std::uint16_t>(h);
        const float f = half_to_float(bits);
        if (std::isnan(f)) continue;
        CHECK_MESSAGE(float_to_half(f) == bits, "half bits ", h);
    }
    CHECK(half_to_float(0x0001) == std::ldexp(1.0f, -24));
}
