#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace octobatch {

// Standard alphabet with '=' padding.
std::string base64_encode(std::span<const std::uint8_t> bytes);

// Returns nullopt on characters outside the alphabet or bad padding.
// Whitespace is ignored.
std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view text);

}  // namespace octobatch
