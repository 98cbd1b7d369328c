#include "ltmia/base64.hpp"

#include <array>
#include <bit>
#include <cstring>

#include "ltmia/error.hpp"

namespace ltmia {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::malformed_record: return "malformed_record";
    case ErrorKind::malformed_base64: return "malformed_base64";
    case ErrorKind::wrong_array_length: return "wrong_array_length";
    case ErrorKind::unknown_schema: return "unknown_schema";
    case ErrorKind::rank_out_of_range: return "rank_out_of_range";
    case ErrorKind::ordering_violation: return "ordering_violation";
    case ErrorKind::invariant_violation: return "invariant_violation";
    case ErrorKind::duplicate_id: return "duplicate_id";
    case ErrorKind::io: return "io";
    case ErrorKind::empty_sequence: return "empty_sequence";
    case ErrorKind::vocab_too_small: return "vocab_too_small";
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::single_class: return "single_class";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::insufficient_data: return "insufficient_data";
  }
  return "unknown";
}

namespace base64 {
namespace {

constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

constexpr std::array<int, 256> make_reverse() {
  std::array<int, 256> table{};
  for (auto& v : table) v = -1;
  for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kAlphabet[i])] = i;
  return table;
}

constexpr auto kReverse = make_reverse();

static_assert(std::endian::native == std::endian::little,
              "payload packing assumes a little-endian host");

template <typename T>
std::string encode_words(std::span<const T> values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  if (!values.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
  return encode(bytes);
}

template <typename T>
std::vector<T> decode_words(std::string_view text) {
  const auto bytes = decode(text);
  if (bytes.size() % 4 != 0) {
    throw Error(ErrorKind::malformed_base64, "payload length is not a multiple of 4 bytes");
  }
  std::vector<T> out(bytes.size() / 4);
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace

std::string encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw Error(ErrorKind::malformed_base64, "base64 length is not a multiple of 4");
  }
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    std::uint32_t v = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const unsigned char c = static_cast<unsigned char>(text[i + k]);
      if (c == '=' && last && k >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad > 0 || kReverse[c] < 0) {
        throw Error(ErrorKind::malformed_base64,
                    "invalid base64 character at offset " + std::to_string(i + k));
      }
      v = (v << 6) | static_cast<std::uint32_t>(kReverse[c]);
    }
    if ((pad == 1 && (v & 0xFFu) != 0) || (pad == 2 && (v & 0xFFFFu) != 0)) {
      throw Error(ErrorKind::malformed_base64, "non-zero padding bits at offset " + std::to_string(i));
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

std::string encode_f32(std::span<const float> values) { return encode_words(values); }
std::string encode_u32(std::span<const std::uint32_t> values) { return encode_words(values); }
std::vector<float> decode_f32(std::string_view text) { return decode_words<float>(text); }
std::vector<std::uint32_t> decode_u32(std::string_view text) {
  return decode_words<std::uint32_t>(text);
}

}  // namespace base64
}  // namespace ltmia
