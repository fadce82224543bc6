#pragma once

#include <array>
#include <cstdint>

namespace nst::detail {

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

using Glyph = std::array<std::uint8_t, kGlyphHeight>;

const Glyph& glyph_for(char ch);

}  // namespace nst::detail
