#pragma once

#include <cstdint>
#include <span>
#include <string_view>

// Files compiled into the library by cmake/embed_files.cmake.
namespace octobatch::embedded {

struct File {
  std::string_view name;
  std::span<const std::uint8_t> bytes;
};

std::span<const File> roms();
std::span<const File> manifests();

}  // namespace octobatch::embedded
