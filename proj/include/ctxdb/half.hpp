#pragma once

#include <cstdint>

namespace ctxdb {

/// IEEE 754 binary16 narrowing with round-to-nearest-even. Values beyond the
/// half range become +/-inf; NaN stays NaN.
std::uint16_t float_to_half(float f) noexcept;

/// Exact widening of a binary16 bit pattern.
float half_to_float(std::uint16_t h) noexcept;

}  // namespace ctxdb
