#include "octobatch/base64.hpp"

#include <array>
#include <cctype>

namespace octobatch {

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

constexpr std::array<std::int8_t, 256> make_reverse() {
  std::array<std::int8_t, 256> r{};
  for (auto& e : r) e = -1;
  for (int k = 0; k < 64; ++k) r[static_cast<unsigned char>(kAlphabet[k])] = static_cast<std::int8_t>(k);
  return r;
}
constexpr auto kReverse = make_reverse();
}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t k = 0;
  for (; k + 3 <= bytes.size(); k += 3) {
    const std::uint32_t w = std::uint32_t(bytes[k]) << 16 | std::uint32_t(bytes[k + 1]) << 8 | bytes[k + 2];
    out += kAlphabet[w >> 18];
    out += kAlphabet[(w >> 12) & 63];
    out += kAlphabet[(w >> 6) & 63];
    out += kAlphabet[w & 63];
  }
  const std::size_t rest = bytes.size() - k;
  if (rest == 1) {
    const std::uint32_t w = std::uint32_t(bytes[k]) << 16;
    out += kAlphabet[w >> 18];
    out += kAlphabet[(w >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t w = std::uint32_t(bytes[k]) << 16 | std::uint32_t(bytes[k + 1]) << 8;
    out += kAlphabet[w >> 18];
    out += kAlphabet[(w >> 12) & 63];
    out += kAlphabet[(w >> 6) & 63];
    out += '=';
  }
  return out;
}

std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t symbols = 0;
  std::size_t padding = 0;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (c == '=') {
      ++padding;
      ++symbols;
      continue;
    }
    if (padding > 0) return std::nullopt;
    const int d = kReverse[static_cast<unsigned char>(c)];
    if (d < 0) return std::nullopt;
    ++symbols;
    acc = acc << 6 | static_cast<std::uint32_t>(d);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>(acc >> bits));
      acc &= (1u << bits) - 1;
    }
  }
  if (symbols % 4 != 0 || padding > 2) return std::nullopt;
  return out;
}

}  // namespace octobatch
