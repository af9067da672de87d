#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "octobatch/expr.hpp"
#include "octobatch/machine.hpp"
#include "octobatch/romtools.hpp"

namespace octobatch {

// One emulator driven by protocol messages. Pure and single-threaded: the
// server feeds it messages and pacing ticks; tests can drive it directly.
//
// Every message is a JSON object with a "type" field. Replies and events
// come back as JSON objects in emission order.
class Session {
 public:
  using Json = nlohmann::json;

  explicit Session(std::string client_id = "local");

  // Handles one client message given as JSON text.
  std::vector<Json> handle(std::string_view text);
  std::vector<Json> handle_json(const Json& message);

  // Advances one frame when running; emits a frame event on display change
  // and at least once per `fps` frames.
  std::vector<Json> tick();

  bool running() const { return running_; }
  int fps() const { return fps_; }
  bool has_rom() const { return machine_.has_value(); }
  const std::string& client_id() const { return client_id_; }
  const std::optional<MachineState>& machine() const { return machine_; }
  // Frames advanced since the last load_rom/reset.
  std::uint64_t frame() const { return frame_; }
  std::uint64_t last_seq() const { return seq_; }

 private:
  std::vector<Json> dispatch(const Json& msg);
  void advance();
  Json frame_event();
  void emit_frame(std::vector<Json>& out);
  void emit_expr(std::vector<Json>& out);
  Json export_manifest(const Json& msg);
  void restart(std::uint32_t seed);

  std::string client_id_;
  std::vector<std::uint8_t> rom_;
  std::optional<MachineState> machine_;
  std::uint32_t seed_ = 0;
  bool running_ = false;
  int fps_ = 60;
  std::uint64_t frame_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t frames_since_emit_ = 0;
  DisplayRows last_display_{};
  std::uint16_t keys_ = 0;
  std::set<std::uint8_t> keys_used_;
  std::vector<std::uint16_t> watch_;
  std::unique_ptr<TraceRecorder> recorder_;
  bool tracing_ = false;
  std::optional<Expr> score_;
  std::optional<Expr> terminated_;
  std::string score_source_;
  std::string terminated_source_;
  std::optional<std::pair<std::uint32_t, std::uint32_t>> last_expr_;
};

// TrendReport as sent in trace_report events.
nlohmann::json trend_report_json(const TrendReport& report);

class BindError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 7208;  // 0 picks a free port
  // When set, every received client message is appended here, one per line,
  // as "<client id>\t<message>".
  std::optional<std::filesystem::path> record_path;
};

// WebSocket service: one Session per connection. Text frames only.
class InspectorServer {
 public:
  // Binds immediately; throws BindError when the address is unavailable.
  explicit InspectorServer(ServerOptions options);
  ~InspectorServer();
  InspectorServer(const InspectorServer&) = delete;
  InspectorServer& operator=(const InspectorServer&) = delete;

  unsigned short port() const;
  // Serves on the calling thread until stop().
  void run();
  // Serves on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Connects to a running service, sends `messages` in order, and collects
// every server message until one reply of type "manifest" has arrived for
// each export_manifest sent (so logs must contain at least one). Returns the
// server messages as received.
std::vector<std::string> replay_over_websocket(const std::string& host, unsigned short port,
                                               const std::vector<std::string>& messages);

// Reads a message log: one JSON message per line; blank lines and lines
// starting with '#' are skipped; a "<client id>\t" prefix (as written by
// record_path) is stripped.
std::vector<std::string> read_message_log(const std::filesystem::path& path);

}  // namespace octobatch
