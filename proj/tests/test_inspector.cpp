#include <filesystem>
#include <fstream>
#include <future>

#include "doctest.h"
#include "inspector_log.hpp"
#include "octobatch/base64.hpp"
#include "octobatch/game.hpp"
#include "octobatch/inspector.hpp"
#include "test_util.hpp"

using namespace octobatch;
using nlohmann::json;
using testutil::game;
using testutil::words;

namespace {

json only(const std::vector<json>& events, const std::string& type) {
  for (const auto& e : events) {
    if (e["type"] == type) return e;
  }
  FAIL("no event of type " << type);
  return {};
}

std::string error_code(Session& s, const std::string& msg) {
  const auto out = s.handle(msg);
  REQUIRE(out.size() == 1);
  if (out[0]["type"] != "error") return "<" + out[0]["type"].get<std::string>() + ">";
  CHECK(out[0].contains("detail"));
  return out[0]["code"].get<std::string>();
}

std::string load_msg(const std::vector<std::uint8_t>& rom) {
  return json{{"type", "load_rom"}, {"base64", base64_encode(rom)}}.dump();
}

}  // namespace

TEST_SUITE("inspector") {
  TEST_CASE("protocol errors") {
    Session s;
    CHECK(error_code(s, "{oops") == "bad_message");
    CHECK(error_code(s, "[1, 2]") == "bad_message");
    CHECK(error_code(s, R"({"kind": "load_rom"})") == "bad_message");
    CHECK(error_code(s, R"({"type": "warp_drive"})") == "bad_message");
    CHECK(error_code(s, R"({"type": "step_frames", "n": 1})") == "no_rom");
    CHECK(error_code(s, R"({"type": "export_manifest"})") == "no_rom");
    CHECK(error_code(s, R"({"type": "load_rom", "base64": "!!"})") == "bad_message");
    CHECK(error_code(s, R"({"type": "load_rom", "base64": ""})") == "bad_message");
    CHECK(error_code(s, R"({"type": "watch_mem", "addrs": [4096]})") == "bad_addr");
    CHECK(error_code(s, R"({"type": "watch_mem", "addrs": 3})") == "bad_addr");
    CHECK(error_code(s, R"({"type": "set_expr", "score": "V5 +"})") == "bad_expr");
    CHECK(error_code(s, R"({"type": "set_speed", "fps": 0})") == "bad_message");
    CHECK(error_code(s, R"({"type": "analyze"})") == "bad_message");
    CHECK_FALSE(s.has_rom());
    CHECK(s.handle(R"({"type": "pause"})").empty());
  }

  TEST_CASE("load_rom and step_frames") {
    Session s;
    const auto out = s.handle(load_msg(words({0x6A07, 0x7A01, 0x1202})));
    const auto f = only(out, "frame");
    CHECK(f["frame"] == 0);
    CHECK(f["pc"] == 0x200);
    CHECK(f["seq"] == 1);
    CHECK(f["display"] == base64_encode(PackedFrame{}));
    CHECK(f["v"].size() == 16);
    const auto step = only(s.handle(R"({"type": "step_frames", "n": 2})"), "frame");
    CHECK(step["frame"] == 2);
    CHECK(step["seq"] == 2);
    // 24 slots: one LD then 23 more slots alternating ADD and JP (12 ADDs).
    CHECK(step["v"][10] == 7 + 12);
    CHECK(s.frame() == 2);

    const auto reset = only(s.handle(R"({"type": "reset"})"), "frame");
    CHECK(reset["frame"] == 0);
    CHECK(reset["v"][10] == 0);
  }

  TEST_CASE("key events drive EX9E") {
    Session s;
    // V1 = 5; wait on key 5; then V2 = 1 and spin.
    s.handle(load_msg(words({0x6105, 0xE19E, 0x1202, 0x6201, 0x1208})));
    CHECK(only(s.handle(R"({"type": "step_frames", "n": 3})"), "frame")["v"][2] == 0);
    CHECK(s.handle(R"({"type": "key", "index": 5, "down": true})").empty());
    const auto f = only(s.handle(R"({"type": "step_frames"})"), "frame");
    CHECK(f["v"][2] == 1);
    CHECK(f["keys"] == 0x20);
    CHECK(error_code(s, R"({"type": "key", "index": 16, "down": true})") == "bad_message");
    CHECK(error_code(s, R"({"type": "key", "index": 1, "down": 1})") == "bad_message");
  }

  TEST_CASE("expression values follow the machine") {
    Session s;
    s.handle(load_msg(words({0x7501, 0x1200})));
    const auto first = only(s.handle(R"({"type": "set_expr", "score": "V5", "terminated": "V5 >= 3"})"), "expr_value");
    CHECK(first["score"] == 0);
    CHECK(first["terminated"] == false);
    const auto later = only(s.handle(R"({"type": "step_frames"})"), "expr_value");
    CHECK(later["score"] == 6);
    CHECK(later["terminated"] == true);
    // Unchanged values are not resent.
    s.handle(R"({"type": "reset"})");
    s.handle(load_msg(words({0x1200})));
    s.handle(R"({"type": "set_expr", "score": "V5"})");
    for (const auto& e : s.handle(R"({"type": "step_frames", "n": 5})")) CHECK(e["type"] != "expr_value");
  }

  TEST_CASE("tick paces frames when running") {
    Session s;
    s.handle(load_msg(words({0x1200})));
    CHECK(s.tick().empty());
    s.handle(R"({"type": "set_speed", "fps": 10})");
    s.handle(R"({"type": "play"})");
    int frames = 0;
    for (int k = 0; k < 30; ++k) {
      for (const auto& e : s.tick()) frames += e["type"] == "frame";
    }
    // A static display is still reported once per fps frames.
    CHECK(frames == 3);
    s.handle(R"({"type": "pause"})");
    CHECK(s.tick().empty());
    CHECK(s.frame() == 30);
  }

  TEST_CASE("watched memory is reported") {
    Session s;
    s.handle(load_msg(words({0x1200})));
    s.handle(R"({"type": "watch_mem", "addrs": [512, 513]})");
    CHECK(only(s.handle(R"({"type": "step_frames"})"), "frame")["mem"] == json::array({0x12, 0x00}));
  }

  TEST_CASE("brix trace analysis ranks V5 and V14 first") {
    Session s;
    s.handle(json{{"type", "load_rom"}, {"base64", base64_encode(game("brix").rom)}, {"seed", 1}}.dump());
    s.handle(R"({"type": "start_trace"})");
    for (int block = 0; block < 20; ++block) {
      const int key = block % 2 ? 6 : 4;
      s.handle(json{{"type", "key"}, {"index", key}, {"down", true}}.dump());
      s.handle(R"({"type": "step_frames", "n": 30})");
      s.handle(json{{"type", "key"}, {"index", key}, {"down", false}}.dump());
    }
    const auto report = only(s.handle(R"({"type": "analyze"})"), "trace_report")["report"];
    CHECK(report["score_ranking"][0] == 5);
    CHECK(report["lives_ranking"][0] == 14);
    CHECK(report["series"].size() == 16);
    CHECK(report["series"][5]["name"] == "V5");
  }

  TEST_CASE("export produces a loadable manifest") {
    Session s;
    s.handle(load_msg(game("brix").rom));
    s.handle(R"({"type": "set_expr", "score": "V5", "terminated": "V14 == 0"})");
    s.handle(R"({"type": "key", "index": 6, "down": true})");
    s.handle(R"({"type": "key", "index": 4, "down": true})");
    const auto m = only(s.handle(R"({"type": "export_manifest", "title": "Brix capture"})"), "manifest");
    const GameDef g = load_manifest(m["document"].get<std::string>());
    CHECK(g.title == "Brix capture");
    CHECK(g.rom == game("brix").rom);
    CHECK(g.score_source == "V5");
    CHECK(g.terminated_source == "V14 == 0");
    CHECK(g.action_set == std::vector<std::uint8_t>{4, 6});

    Session bare;
    bare.handle(load_msg(words({0x1200})));
    const auto auto_doc = only(bare.handle(R"({"type": "export_manifest"})"), "manifest");
    const GameDef a = load_manifest(auto_doc["document"].get<std::string>());
    CHECK(a.action_set.empty());
    CHECK(a.metadata.at("autonomous") == "true");
    CHECK(error_code(bare, R"({"type": "export_manifest", "action_set": [3, 3]})") == "bad_message");
  }

  TEST_CASE("frame seq strictly increases") {
    Session s;
    std::int64_t last = 0;
    for (const auto& msg : testutil::paused_session_log(300, 5)) {
      for (const auto& e : s.handle(msg)) {
        if (e["type"] != "frame") continue;
        CHECK(e["seq"].get<std::int64_t>() > last);
        last = e["seq"].get<std::int64_t>();
      }
    }
    CHECK(last > 10);
  }

  TEST_CASE("message logs skip comments and strip client ids") {
    const auto path = std::filesystem::temp_directory_path() / "octobatch_test_log.txt";
    {
      std::ofstream out(path);
      out << "# header\n\nc1\t{\"type\": \"pause\"}\r\n{\"type\": \"play\"}\n";
    }
    CHECK(read_message_log(path) == std::vector<std::string>{R"({"type": "pause"})", R"({"type": "play"})"});
    CHECK_THROWS(read_message_log("/nonexistent/log.txt"));
  }

  TEST_CASE("server replays agree across clients and runs") {
    const auto log_path = std::filesystem::temp_directory_path() / "octobatch_test_record.txt";
    std::filesystem::remove(log_path);
    ServerOptions opt;
    opt.port = 0;
    opt.record_path = log_path;
    InspectorServer server(opt);
    server.start();
    const auto messages = testutil::paused_session_log(120, 8);
    auto a = std::async(std::launch::async, [&] { return replay_over_websocket("127.0.0.1", server.port(), messages); });
    auto b = std::async(std::launch::async, [&] { return replay_over_websocket("127.0.0.1", server.port(), messages); });
    const auto ra = a.get(), rb = b.get();
    server.stop();

    Session local;
    std::vector<std::string> rl;
    for (const auto& m : messages) {
      for (const auto& e : local.handle(m)) rl.push_back(e.dump());
    }
    CHECK(ra == rb);
    CHECK(ra == rl);
    CHECK_FALSE(testutil::frame_events(ra).empty());
    // Both clients' messages were recorded under their own ids.
    const auto recorded = read_message_log(log_path);
    CHECK(recorded.size() == 2 * messages.size());

    ServerOptions clash;
    clash.port = 0;
    InspectorServer first(clash);
    clash.port = first.port();
    CHECK_THROWS_AS(InspectorServer{clash}, BindError);
  }
}
