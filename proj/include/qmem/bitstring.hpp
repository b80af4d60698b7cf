#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace qmem {

/// Measurement outcome of `width` qubits; bits[i] is qubit i's outcome.
///
/// Bit ordering is little-endian throughout: qubit i contributes 2^i to
/// the basis index. Stated here once, relied on everywhere.
struct BitString {
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;
};

inline std::size_t index_of(const BitString& b) {
    if (b.bits.size() != b.width)
        throw std::invalid_argument("BitString width/bits mismatch");
    std::size_t index = 0;
    for (std::size_t i = 0; i < b.width; ++i) {
        if (b.bits[i] > 1) throw std::invalid_argument("BitString entries must be 0 or 1");
        index |= static_cast<std::size_t>(b.bits[i]) << i;
    }
    return index;
}

inline BitString bits_of(std::size_t index, std::size_t width) {
    if (width < 64 && index >> width)
        throw std::invalid_argument("index out of range for width");
    BitString b{width, std::vector<std::uint8_t>(width)};
    for (std::size_t i = 0; i < width; ++i)
        b.bits[i] = static_cast<std::uint8_t>((index >> i) & 1u);
    return b;
}

inline int bit_at(std::size_t index, std::size_t position) {
    return static_cast<int>((index >> position) & 1u);
}

}  // namespace qmem
