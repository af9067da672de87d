#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "octobatch/expr.hpp"
#include "octobatch/machine.hpp"

namespace octobatch {

inline constexpr int kManifestVersion = 1;

class ManifestError : public std::runtime_error {
 public:
  ManifestError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Keys held for a number of frames while the environment resets.
struct StartupSegment {
  std::uint16_t keys = 0;
  int frames = 1;

  friend bool operator==(const StartupSegment&, const StartupSegment&) = default;
};

struct GameDef {
  std::string name;  // registry key; not part of the manifest document
  std::string title;
  std::vector<std::uint8_t> rom;
  std::string rom_path;  // as written in the manifest, empty when inline

  std::string score_source = "0";
  std::string terminated_source = "0";
  Expr score;
  Expr terminated;

  std::vector<std::uint8_t> action_set;
  std::vector<StartupSegment> startup;
  int frame_skip = 4;
  int cycles_per_frame = 12;
  int max_episode_steps = 10000;
  QuirkFlags quirks{};
  std::map<std::string, std::string> metadata;

  int num_actions() const { return static_cast<int>(action_set.size()) + 1; }
  bool autonomous() const;
};

struct ManifestOptions {
  // Directory against which a relative rom_path is resolved.
  std::filesystem::path base_dir;
  // Consulted before the filesystem; returns ROM bytes for a rom_path.
  std::optional<std::vector<std::uint8_t>> (*rom_lookup)(std::string_view path) = nullptr;
};

// Parses and validates a manifest document. Throws ManifestError naming the
// offending field, SyntaxError from expression parsing, or RomError.
GameDef load_manifest(std::string_view document, const ManifestOptions& options = {});
GameDef load_manifest_file(const std::filesystem::path& path);

// Serializes back to a manifest document. With `embed_rom` (or when the game
// has no rom_path) the ROM is written inline as base64.
std::string to_manifest(const GameDef& game, bool embed_rom = false);

// Shipped games: pong, brix, tetris, space_flight, worm, target_shooter1..3.
const std::vector<GameDef>& builtin_games();
std::optional<GameDef> find_builtin(std::string_view name);

// A built-in name, or else a path to a manifest file.
GameDef resolve_game(std::string_view name_or_path);

}  // namespace octobatch
