#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ltmia::base64 {

std::string encode(std::span<const std::uint8_t> bytes);

/// Strict RFC 4648 decoding (standard alphabet, padding required).
/// Throws Error{malformed_base64}.
std::vector<std::uint8_t> decode(std::string_view text);

// Little-endian 4-byte packing of numeric arrays.
std::string encode_f32(std::span<const float> values);
std::string encode_u32(std::span<const std::uint32_t> values);
std::vector<float> decode_f32(std::string_view text);
std::vector<std::uint32_t> decode_u32(std::string_view text);

}  // namespace ltmia::base64
