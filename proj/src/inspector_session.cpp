#include <algorithm>
#include <fstream>

#include "octobatch/base64.hpp"
#include "octobatch/game.hpp"
#include "octobatch/inspector.hpp"

namespace octobatch {

namespace {

using Json = nlohmann::json;

struct ProtocolError {
  std::string code;
  std::string detail;
};

[[noreturn]] void bad(const std::string& code, const std::string& detail) { throw ProtocolError{code, detail}; }

Json error_event(const std::string& code, const std::string& detail) {
  return {{"type", "error"}, {"code", code}, {"detail", detail}};
}

std::int64_t int_field(const Json& msg, const char* key, std::int64_t lo, std::int64_t hi,
                       std::optional<std::int64_t> fallback = std::nullopt) {
  auto it = msg.find(key);
  if (it == msg.end()) {
    if (fallback) return *fallback;
    bad("bad_message", std::string("missing field '") + key + "'");
  }
  if (!it->is_number_integer()) bad("bad_message", std::string("field '") + key + "' must be an integer");
  const auto v = it->get<std::int64_t>();
  if (v < lo || v > hi) {
    bad("bad_message", std::string("field '") + key + "' must be in " + std::to_string(lo) + ".." + std::to_string(hi));
  }
  return v;
}

Expr parse_or_bad(const std::string& field, const std::string& text) {
  try {
    return parse_expr(text);
  } catch (const SyntaxError& e) {
    bad("bad_expr", field + ": " + e.what());
  }
}

}  // namespace

Json trend_report_json(const TrendReport& report) {
  Json series = Json::array();
  for (const auto& t : report.series) {
    series.push_back({{"name", t.name},
                      {"index", t.index},
                      {"samples", t.samples},
                      {"increases", t.increases},
                      {"decreases", t.decreases},
                      {"distinct_values", t.distinct_values},
                      {"trend_score", t.trend_score},
                      {"transient_runs", t.transient_runs}});
  }
  return {{"series", series}, {"score_ranking", report.score_ranking}, {"lives_ranking", report.lives_ranking}};
}

Session::Session(std::string client_id) : client_id_(std::move(client_id)) {}

std::vector<Json> Session::handle(std::string_view text) {
  Json msg;
  try {
    msg = Json::parse(text);
  } catch (const Json::parse_error& e) {
    return {error_event("bad_message", std::string("malformed JSON: ") + e.what())};
  }
  return handle_json(msg);
}

std::vector<Json> Session::handle_json(const Json& msg) {
  try {
    if (!msg.is_object()) bad("bad_message", "message must be a JSON object");
    return dispatch(msg);
  } catch (const ProtocolError& e) {
    return {error_event(e.code, e.detail)};
  }
}

void Session::restart(std::uint32_t seed) {
  seed_ = seed;
  MachineState m = new_machine(seed);
  load_rom(m, rom_);
  machine_ = std::move(m);
  frame_ = 0;
  frames_since_emit_ = 0;
  keys_ = 0;
  last_expr_.reset();
}

std::vector<Json> Session::dispatch(const Json& msg) {
  auto type_it = msg.find("type");
  if (type_it == msg.end() || !type_it->is_string()) bad("bad_message", "message needs a string 'type'");
  const std::string type = type_it->get<std::string>();
  std::vector<Json> out;

  auto require_rom = [&] {
    if (!machine_) bad("no_rom", type + " needs a loaded ROM");
  };

  if (type == "load_rom") {
    auto it = msg.find("base64");
    if (it == msg.end() || !it->is_string()) bad("bad_message", "load_rom needs a string 'base64'");
    auto bytes = base64_decode(it->get<std::string>());
    if (!bytes) bad("bad_message", "invalid base64");
    try {
      validate_rom(*bytes);
    } catch (const RomError& e) {
      bad("bad_message", e.what());
    }
    rom_ = std::move(*bytes);
    running_ = false;
    keys_used_.clear();
    restart(static_cast<std::uint32_t>(int_field(msg, "seed", 0, 0xFFFFFFFF, 0)));
    emit_frame(out);
    emit_expr(out);
  } else if (type == "reset") {
    require_rom();
    restart(static_cast<std::uint32_t>(int_field(msg, "seed", 0, 0xFFFFFFFF, seed_)));
    emit_frame(out);
    emit_expr(out);
  } else if (type == "play") {
    require_rom();
    running_ = true;
  } else if (type == "pause") {
    running_ = false;
  } else if (type == "set_speed") {
    fps_ = static_cast<int>(int_field(msg, "fps", 1, 1000));
  } else if (type == "step_frames") {
    require_rom();
    const auto n = int_field(msg, "n", 1, 1'000'000, 1);
    for (std::int64_t k = 0; k < n; ++k) advance();
    emit_frame(out);
    emit_expr(out);
  } else if (type == "key") {
    require_rom();
    const auto index = int_field(msg, "index", 0, 15);
    auto down = msg.find("down");
    if (down == msg.end() || !down->is_boolean()) bad("bad_message", "key needs a boolean 'down'");
    const auto bit = static_cast<std::uint16_t>(1u << index);
    keys_ = down->get<bool>() ? static_cast<std::uint16_t>(keys_ | bit) : static_cast<std::uint16_t>(keys_ & ~bit);
    if (down->get<bool>()) keys_used_.insert(static_cast<std::uint8_t>(index));
    set_keys(*machine_, keys_);
  } else if (type == "watch_mem") {
    auto it = msg.find("addrs");
    if (it == msg.end() || !it->is_array()) bad("bad_addr", "watch_mem needs an array 'addrs'");
    std::vector<std::uint16_t> addrs;
    for (const auto& a : *it) {
      if (!a.is_number_integer() || a.get<std::int64_t>() < 0 || a.get<std::int64_t>() > 0xFFF) {
        bad("bad_addr", "addresses must be integers in 0..4095");
      }
      addrs.push_back(static_cast<std::uint16_t>(a.get<int>()));
    }
    if (tracing_) bad("bad_message", "cannot change watched memory while tracing");
    watch_ = std::move(addrs);
  } else if (type == "start_trace") {
    require_rom();
    const auto every = int_field(msg, "sample_every", 1, 1'000'000, 1);
    recorder_ = std::make_unique<TraceRecorder>(static_cast<int>(every), watch_);
    tracing_ = true;
  } else if (type == "stop_trace") {
    tracing_ = false;
  } else if (type == "analyze") {
    if (!recorder_ || recorder_->trace().samples.empty()) bad("bad_message", "no trace samples to analyze");
    TrendOptions options;
    options.min_hold = static_cast<int>(int_field(msg, "min_hold", 1, 1'000'000, kGameplayMinHold));
    for (const auto& site : scan_bcd(rom_)) options.bcd_registers.push_back(site.reg);
    const TrendReport report = analyze_trends(recorder_->trace(), options);
    out.push_back({{"type", "trace_report"}, {"report", trend_report_json(report)}});
  } else if (type == "set_expr") {
    std::optional<Expr> score, terminated;
    if (auto it = msg.find("score"); it != msg.end()) {
      if (!it->is_string()) bad("bad_expr", "score must be a string");
      score = parse_or_bad("score", it->get<std::string>());
    }
    if (auto it = msg.find("terminated"); it != msg.end()) {
      if (!it->is_string()) bad("bad_expr", "terminated must be a string");
      terminated = parse_or_bad("terminated", it->get<std::string>());
    }
    if (score) {
      score_ = std::move(score);
      score_source_ = msg["score"].get<std::string>();
    }
    if (terminated) {
      terminated_ = std::move(terminated);
      terminated_source_ = msg["terminated"].get<std::string>();
    }
    last_expr_.reset();
    emit_expr(out);
  } else if (type == "export_manifest") {
    require_rom();
    out.push_back(export_manifest(msg));
  } else {
    bad("bad_message", "unknown message type '" + type + "'");
  }
  return out;
}

void Session::advance() {
  tick_frame(*machine_, GameDef{}.cycles_per_frame);
  ++frame_;
  ++frames_since_emit_;
  if (tracing_ && recorder_) recorder_->on_frame(*machine_, frame_);
}

std::vector<Json> Session::tick() {
  std::vector<Json> out;
  if (!running_ || !machine_) return out;
  advance();
  if (machine_->display != last_display_ || frames_since_emit_ >= static_cast<std::uint64_t>(fps_)) {
    emit_frame(out);
  }
  emit_expr(out);
  return out;
}

Json Session::frame_event() {
  const MachineState& m = *machine_;
  const PackedFrame packed = pack_display(m.display);
  Json v = Json::array();
  for (auto r : m.v) v.push_back(r);
  Json ev = {{"type", "frame"},
             {"seq", seq_},
             {"frame", frame_},
             {"display", base64_encode(packed)},
             {"v", v},
             {"i", m.i},
             {"pc", m.pc},
             {"dt", m.delay_timer},
             {"st", m.sound_timer},
             {"keys", m.keys},
             {"halted", m.halted}};
  if (!watch_.empty()) {
    Json mem = Json::array();
    for (auto a : watch_) mem.push_back(m.memory[a]);
    ev["mem"] = mem;
  }
  return ev;
}

void Session::emit_frame(std::vector<Json>& out) {
  ++seq_;
  out.push_back(frame_event());
  last_display_ = machine_->display;
  frames_since_emit_ = 0;
}

// Sends expr_value when at least one expression is set and the values
// differ from the last ones sent.
void Session::emit_expr(std::vector<Json>& out) {
  if (!machine_ || (!score_ && !terminated_)) return;
  const std::uint32_t s = score_ ? eval_expr(*score_, *machine_) : 0;
  const std::uint32_t t = terminated_ ? eval_expr(*terminated_, *machine_) : 0;
  if (last_expr_ && last_expr_->first == s && last_expr_->second == t) return;
  last_expr_ = std::make_pair(s, t);
  Json ev = {{"type", "expr_value"}, {"frame", frame_}};
  ev["score"] = score_ ? Json(s) : Json(nullptr);
  ev["terminated"] = terminated_ ? Json(t != 0) : Json(nullptr);
  out.push_back(ev);
}

Json Session::export_manifest(const Json& msg) {
  GameDef g;
  g.title = "Untitled";
  if (auto it = msg.find("title"); it != msg.end()) {
    if (!it->is_string()) bad("bad_message", "title must be a string");
    g.title = it->get<std::string>();
  }
  g.rom = rom_;
  g.score_source = score_ ? score_source_ : "0";
  g.terminated_source = terminated_ ? terminated_source_ : "0";
  if (auto it = msg.find("action_set"); it != msg.end()) {
    if (!it->is_array()) bad("bad_message", "action_set must be an array");
    for (const auto& k : *it) {
      if (!k.is_number_integer() || k.get<int>() < 0 || k.get<int>() > 15) {
        bad("bad_message", "action_set entries must be key indices 0..15");
      }
      g.action_set.push_back(static_cast<std::uint8_t>(k.get<int>()));
    }
  } else {
    g.action_set.assign(keys_used_.begin(), keys_used_.end());
  }
  g.metadata["source"] = "inspector";
  if (g.action_set.empty()) g.metadata["autonomous"] = "true";
  const std::string document = to_manifest(g, true);
  try {
    load_manifest(document);
  } catch (const std::exception& e) {
    bad("bad_message", std::string("exported manifest does not validate: ") + e.what());
  }
  return {{"type", "manifest"}, {"document", document}};
}

std::vector<std::string> read_message_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open message log " + path.string());
  std::vector<std::string> messages;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (auto tab = line.find('\t'); tab != std::string::npos) line = line.substr(tab + 1);
    messages.push_back(line);
  }
  return messages;
}

}  // namespace octobatch
