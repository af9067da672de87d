#include "octobatch/game.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "embedded.hpp"
#include "json.hpp"
#include "octobatch/base64.hpp"

namespace octobatch {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kVersionKey = "octobatch_manifest";

const json& require(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw ManifestError(key, "missing required field");
  return *it;
}

std::string require_string(const json& doc, const char* key) {
  const json& v = require(doc, key);
  if (!v.is_string()) throw ManifestError(key, "must be a string");
  return v.get<std::string>();
}

int positive_int(const json& doc, const char* key, int fallback) {
  auto it = doc.find(key);
  if (it == doc.end()) return fallback;
  if (!it->is_number_integer()) throw ManifestError(key, "must be an integer");
  const auto value = it->get<std::int64_t>();
  if (value < 1 || value > 1'000'000'000) throw ManifestError(key, "must be a positive integer");
  return static_cast<int>(value);
}

std::uint16_t parse_keys(const json& v, const std::string& field) {
  if (v.is_number_integer()) {
    const auto mask = v.get<std::int64_t>();
    if (mask < 0 || mask > 0xFFFF) throw ManifestError(field, "key mask must be in 0..0xFFFF");
    return static_cast<std::uint16_t>(mask);
  }
  if (v.is_array()) {
    std::uint16_t mask = 0;
    for (const auto& k : v) {
      if (!k.is_number_integer() || k.get<std::int64_t>() < 0 || k.get<std::int64_t>() > 15) {
        throw ManifestError(field, "key indices must be integers in 0..15");
      }
      mask = static_cast<std::uint16_t>(mask | 1u << k.get<int>());
    }
    return mask;
  }
  throw ManifestError(field, "expected a key mask or an array of key indices");
}

QuirkFlags parse_quirks(const json& v) {
  if (!v.is_object()) throw ManifestError("quirks", "must be an object");
  QuirkFlags q;
  const std::pair<const char*, bool QuirkFlags::*> fields[] = {
      {"shift_uses_vy", &QuirkFlags::shift_uses_vy},
      {"load_store_increments_i", &QuirkFlags::load_store_increments_i},
      {"jump_with_vx", &QuirkFlags::jump_with_vx},
      {"clip_sprites", &QuirkFlags::clip_sprites},
      {"fx0a_on_release", &QuirkFlags::fx0a_on_release},
  };
  for (const auto& [key, value] : v.items()) {
    auto it = std::find_if(std::begin(fields), std::end(fields), [&](const auto& f) { return key == f.first; });
    if (it == std::end(fields)) throw ManifestError("quirks." + key, "unknown quirk");
    if (!value.is_boolean()) throw ManifestError("quirks." + key, "must be a boolean");
    q.*(it->second) = value.get<bool>();
  }
  return q;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RomError(RomError::Code::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::optional<std::vector<std::uint8_t>> embedded_rom(std::string_view path) {
  const auto name = std::filesystem::path(path).filename().string();
  for (const auto& f : embedded::roms()) {
    if (f.name == name) return std::vector<std::uint8_t>(f.bytes.begin(), f.bytes.end());
  }
  return std::nullopt;
}

}  // namespace

bool GameDef::autonomous() const {
  auto it = metadata.find("autonomous");
  return it != metadata.end() && it->second == "true";
}

GameDef load_manifest(std::string_view document, const ManifestOptions& options) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ManifestError("", std::string("malformed document: ") + e.what());
  }
  if (!doc.is_object()) throw ManifestError("", "manifest must be an object");

  static constexpr std::string_view kKnown[] = {
      kVersionKey, "title",      "rom_path",         "rom_base64",        "score",  "terminated",
      "action_set", "startup",   "frame_skip",       "cycles_per_frame",  "max_episode_steps",
      "quirks",     "metadata",
  };
  for (const auto& item : doc.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), item.key()) == std::end(kKnown)) {
      throw ManifestError(item.key(), "unknown field");
    }
  }

  const json& version = require(doc, kVersionKey.data());
  if (!version.is_number_integer() || version.get<int>() != kManifestVersion) {
    throw ManifestError(std::string(kVersionKey), "unsupported manifest version");
  }

  GameDef g;
  g.title = require_string(doc, "title");

  const bool has_path = doc.contains("rom_path");
  const bool has_inline = doc.contains("rom_base64");
  if (has_path == has_inline) throw ManifestError("rom_path", "exactly one of rom_path or rom_base64 is required");
  if (has_path) {
    g.rom_path = require_string(doc, "rom_path");
    std::optional<std::vector<std::uint8_t>> bytes;
    if (options.rom_lookup) bytes = options.rom_lookup(g.rom_path);
    if (!bytes) {
      std::filesystem::path p(g.rom_path);
      if (p.is_relative() && !options.base_dir.empty()) p = options.base_dir / p;
      bytes = read_file(p);
    }
    g.rom = std::move(*bytes);
  } else {
    auto bytes = base64_decode(require_string(doc, "rom_base64"));
    if (!bytes) throw ManifestError("rom_base64", "invalid base64");
    g.rom = std::move(*bytes);
  }
  validate_rom(g.rom);

  g.score_source = require_string(doc, "score");
  g.terminated_source = require_string(doc, "terminated");
  g.score = parse_expr(g.score_source);
  g.terminated = parse_expr(g.terminated_source);

  if (auto it = doc.find("metadata"); it != doc.end()) {
    if (!it->is_object()) throw ManifestError("metadata", "must be an object of strings");
    for (const auto& [key, value] : it->items()) {
      if (!value.is_string()) throw ManifestError("metadata." + key, "must be a string");
      g.metadata[key] = value.get<std::string>();
    }
  }

  const json& actions = require(doc, "action_set");
  if (!actions.is_array()) throw ManifestError("action_set", "must be an array");
  for (const auto& a : actions) {
    if (!a.is_number_integer() || a.get<std::int64_t>() < 0 || a.get<std::int64_t>() > 15) {
      throw ManifestError("action_set", "entries must be key indices in 0..15");
    }
    const auto key = static_cast<std::uint8_t>(a.get<int>());
    if (std::find(g.action_set.begin(), g.action_set.end(), key) != g.action_set.end()) {
      throw ManifestError("action_set", "duplicate key " + std::to_string(key));
    }
    g.action_set.push_back(key);
  }
  if (g.action_set.empty() && !g.autonomous()) {
    throw ManifestError("action_set", "empty action set requires metadata.autonomous = \"true\"");
  }

  if (auto it = doc.find("startup"); it != doc.end()) {
    if (!it->is_array()) throw ManifestError("startup", "must be an array");
    for (std::size_t k = 0; k < it->size(); ++k) {
      const json& seg = (*it)[k];
      const std::string field = "startup[" + std::to_string(k) + "]";
      if (!seg.is_object()) throw ManifestError(field, "must be an object {keys, frames}");
      for (const auto& item : seg.items()) {
        if (item.key() != "keys" && item.key() != "frames") throw ManifestError(field + "." + item.key(), "unknown field");
      }
      StartupSegment s;
      s.keys = seg.contains("keys") ? parse_keys(seg["keys"], field + ".keys") : 0;
      s.frames = positive_int(seg, "frames", 0);
      if (s.frames == 0) throw ManifestError(field + ".frames", "missing required field");
      g.startup.push_back(s);
    }
  }

  g.frame_skip = positive_int(doc, "frame_skip", 4);
  g.cycles_per_frame = positive_int(doc, "cycles_per_frame", 12);
  g.max_episode_steps = positive_int(doc, "max_episode_steps", 10000);
  if (auto it = doc.find("quirks"); it != doc.end()) g.quirks = parse_quirks(*it);
  return g;
}

GameDef load_manifest_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("", "cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ManifestOptions options;
  options.base_dir = path.parent_path();
  GameDef g = load_manifest(ss.str(), options);
  g.name = path.stem().string();
  return g;
}

std::string to_manifest(const GameDef& g, bool embed_rom) {
  ordered_json doc;
  doc[std::string(kVersionKey)] = kManifestVersion;
  doc["title"] = g.title;
  if (embed_rom || g.rom_path.empty()) {
    doc["rom_base64"] = base64_encode(g.rom);
  } else {
    doc["rom_path"] = g.rom_path;
  }
  doc["score"] = g.score_source;
  doc["terminated"] = g.terminated_source;
  doc["action_set"] = ordered_json::array();
  for (auto k : g.action_set) doc["action_set"].push_back(k);
  doc["startup"] = ordered_json::array();
  for (const auto& s : g.startup) doc["startup"].push_back({{"keys", s.keys}, {"frames", s.frames}});
  doc["frame_skip"] = g.frame_skip;
  doc["cycles_per_frame"] = g.cycles_per_frame;
  doc["max_episode_steps"] = g.max_episode_steps;
  doc["quirks"] = {
      {"shift_uses_vy", g.quirks.shift_uses_vy},
      {"load_store_increments_i", g.quirks.load_store_increments_i},
      {"jump_with_vx", g.quirks.jump_with_vx},
      {"clip_sprites", g.quirks.clip_sprites},
      {"fx0a_on_release", g.quirks.fx0a_on_release},
  };
  doc["metadata"] = ordered_json::object();
  for (const auto& [k, v] : g.metadata) doc["metadata"][k] = v;
  return doc.dump(2) + "\n";
}

const std::vector<GameDef>& builtin_games() {
  static const std::vector<GameDef> games = [] {
    std::vector<GameDef> out;
    ManifestOptions options;
    options.rom_lookup = &embedded_rom;
    for (const auto& f : embedded::manifests()) {
      GameDef g = load_manifest(std::string_view(reinterpret_cast<const char*>(f.bytes.data()), f.bytes.size()),
                                options);
      g.name = std::filesystem::path(f.name).stem().string();
      out.push_back(std::move(g));
    }
    std::sort(out.begin(), out.end(), [](const GameDef& a, const GameDef& b) { return a.name < b.name; });
    return out;
  }();
  return games;
}

std::optional<GameDef> find_builtin(std::string_view name) {
  for (const auto& g : builtin_games()) {
    if (g.name == name) return g;
  }
  return std::nullopt;
}

GameDef resolve_game(std::string_view name_or_path) {
  if (auto g = find_builtin(name_or_path)) return *g;
  const std::filesystem::path p(name_or_path);
  if (!std::filesystem::exists(p)) {
    throw ManifestError("", "no built-in game or manifest file named '" + std::string(name_or_path) + "'");
  }
  return load_manifest_file(p);
}

}  // namespace octobatch
