// octobatch command-line front end.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "octobatch/bench.hpp"
#include "octobatch/env.hpp"
#include "octobatch/game.hpp"
#include "octobatch/inspector.hpp"
#include "octobatch/romtools.hpp"

namespace ob = octobatch;

namespace {

struct KeySegment {
  std::uint64_t frames;
  std::uint16_t mask;
};

// "30:4,30:6,10:-" -> hold key 4 for 30 frames, key 6 for 30, nothing for 10;
// the script repeats. Keys may be joined with '+', e.g. "20:4+6".
std::vector<KeySegment> parse_key_script(const std::string& text) {
  std::vector<KeySegment> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--keys", "segment '" + part + "' must be FRAMES:KEYS");
    KeySegment seg{std::stoull(part.substr(0, colon)), 0};
    const std::string keys = part.substr(colon + 1);
    if (keys != "-") {
      std::stringstream ks(keys);
      std::string k;
      while (std::getline(ks, k, '+')) {
        const unsigned long idx = std::stoul(k, nullptr, 16);
        if (idx > 15) throw CLI::ValidationError("--keys", "key '" + k + "' outside 0..F");
        seg.mask = static_cast<std::uint16_t>(seg.mask | 1u << idx);
      }
    }
    if (seg.frames == 0) throw CLI::ValidationError("--keys", "segment lengths must be positive");
    out.push_back(seg);
  }
  return out;
}

ob::Policy make_policy(const std::string& name, int action, std::uint64_t seed) {
  if (name == "constant") return ob::Policy::constant(action);
  if (name == "random") return ob::Policy::uniform(seed);
  throw CLI::ValidationError("--policy", "expected 'constant' or 'random'");
}

ob::Dispatch make_dispatch(const std::string& name) {
  if (name == "lane") return ob::Dispatch::LaneMajor;
  if (name == "switch") return ob::Dispatch::Switch;
  if (name == "bucketed") return ob::Dispatch::Bucketed;
  throw CLI::ValidationError("--dispatch", "expected lane, switch or bucketed");
}

ob::InspectorServer* g_server = nullptr;
extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch-parallel CHIP-8 engine: benchmarks, rollouts, ROM analysis and the inspector service"};
  app.require_subcommand(1);

  // games
  auto* games = app.add_subcommand("games", "List built-in games");
  bool games_manifest = false;
  std::string games_name;
  games->add_option("name", games_name, "Print the manifest of one game");
  games->add_flag("--manifest", games_manifest, "Print manifests instead of a table");

  // bench
  auto* bench = app.add_subcommand("bench", "Throughput benchmark (CSV output)");
  std::string game_name = "pong";
  std::vector<std::size_t> env_counts{1, 64, 512, 4096};
  int steps = 100, reps = 50, action = 0;
  std::string policy_name = "constant", out_path, dispatch_name = "lane";
  std::uint32_t seed = 0;
  unsigned threads = 0;
  bool interleave = false;
  bench->add_option("--game", game_name, "Built-in game name or manifest path")->capture_default_str();
  bench->add_option("--envs", env_counts, "Comma-separated env counts")->delimiter(',')->capture_default_str();
  bench->add_option("--steps", steps, "Steps per rollout")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--reps", reps, "Timed rollouts per env count")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--policy", policy_name, "constant | random")->capture_default_str();
  bench->add_option("--action", action, "Action index for the constant policy")->capture_default_str();
  bench->add_option("--seed", seed, "Seed for lanes and the random policy")->capture_default_str();
  bench->add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
  bench->add_option("--dispatch", dispatch_name, "lane | switch | bucketed")->capture_default_str();
  bench->add_flag("--interleave", interleave, "Alternate env counts between repetitions");
  bench->add_option("--out", out_path, "CSV output file (default stdout)");

  // rollout
  auto* roll = app.add_subcommand("rollout", "Run a rollout and print per-lane returns");
  std::size_t roll_envs = 4;
  int roll_steps = 100;
  std::string roll_policy = "random", dump_dir;
  roll->add_option("--game", game_name, "Built-in game name or manifest path")->capture_default_str();
  roll->add_option("--envs", roll_envs, "Number of lanes")->capture_default_str();
  roll->add_option("--steps", roll_steps, "Steps")->capture_default_str();
  roll->add_option("--seed", seed, "Seed")->capture_default_str();
  roll->add_option("--policy", roll_policy, "constant | random")->capture_default_str();
  roll->add_option("--action", action, "Action index for the constant policy")->capture_default_str();
  roll->add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
  roll->add_option("--dump-frames", dump_dir, "Write lane 0 frames as PGM files into this directory");

  // disasm / scan-bcd
  std::string rom_path;
  auto* disasm = app.add_subcommand("disasm", "Disassemble a ROM");
  disasm->add_option("rom", rom_path, "ROM file")->required();
  auto* scan = app.add_subcommand("scan-bcd", "List FX33 (BCD store) sites: static score candidates");
  scan->add_option("rom", rom_path, "ROM file")->required();

  // record-trace
  auto* rec = app.add_subcommand("record-trace", "Play a game with a key script and record a register trace");
  std::uint64_t rec_frames = 600;
  int sample_every = 1;
  std::string key_script = "60:-";
  std::vector<std::string> mem_addrs;
  rec->add_option("--game", game_name, "Built-in game name or manifest path")->capture_default_str();
  rec->add_option("--frames", rec_frames, "Frames to play")->capture_default_str();
  rec->add_option("--seed", seed, "Seed")->capture_default_str();
  rec->add_option("--sample-every", sample_every, "Sampling period in frames")->capture_default_str();
  rec->add_option("--keys", key_script, "Repeating key script FRAMES:KEYS,... (KEYS hex, '+'-joined, '-' = none)")
      ->capture_default_str();
  rec->add_option("--mem", mem_addrs, "Memory addresses to watch (e.g. 0x3A0)")->delimiter(',');
  rec->add_option("--out", out_path, "Trace file (default stdout)");

  // analyze-trace
  auto* analyze = app.add_subcommand("analyze-trace", "Rank score and lives candidates in a trace file");
  std::string trace_path;
  int min_hold = ob::kGameplayMinHold;
  std::size_t top = 5;
  std::string hint_rom;
  analyze->add_option("trace", trace_path, "Trace file")->required();
  analyze->add_option("--min-hold", min_hold, "Ignore values held for fewer samples")->capture_default_str();
  analyze->add_option("--top", top, "Candidates to show")->capture_default_str();
  analyze->add_option("--rom", hint_rom, "ROM whose FX33 sites break ties between score candidates");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the inspector WebSocket service");
  ob::ServerOptions server_options;
  std::string record_path;
  serve->add_option("--address", server_options.address, "Bind address")->capture_default_str();
  serve->add_option("--port", server_options.port, "Port (0 = any free port)")->capture_default_str();
  serve->add_option("--record", record_path, "Append every client message to this log");

  // replay
  auto* replay = app.add_subcommand("replay", "Replay an inspector message log and print the server messages");
  std::string log_path, host = "127.0.0.1";
  unsigned short port = 0;
  bool frames_only = false;
  replay->add_option("log", log_path, "Message log, one JSON message per line")->required();
  replay->add_option("--port", port, "Replay against a running service instead of an in-process session");
  replay->add_option("--host", host, "Service host")->capture_default_str();
  replay->add_flag("--frames-only", frames_only, "Print only frame events");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*games) {
      if (!games_name.empty()) {
        auto g = ob::find_builtin(games_name);
        if (!g) {
          std::cerr << "no built-in game '" << games_name << "'\n";
          return 1;
        }
        std::cout << ob::to_manifest(*g);
        return 0;
      }
      for (const auto& g : ob::builtin_games()) {
        if (games_manifest) {
          std::cout << "# " << g.name << '\n' << ob::to_manifest(g);
          continue;
        }
        std::string actions;
        for (auto k : g.action_set) actions += (actions.empty() ? "" : ",") + std::to_string(k);
        std::printf("%-16s %-26s score=%-26s terminated=%-30s actions=[%s]\n", g.name.c_str(), g.title.c_str(),
                    g.score_source.c_str(), g.terminated_source.c_str(), actions.c_str());
      }
      return 0;
    }

    if (*bench) {
      const ob::GameDef game = ob::resolve_game(game_name);
      ob::BenchConfig config;
      config.env_counts = env_counts;
      config.steps = steps;
      config.reps = reps;
      config.policy = make_policy(policy_name, action, seed);
      config.seed = seed;
      config.execution.threads = threads;
      config.execution.dispatch = make_dispatch(dispatch_name);
      config.interleave = interleave;
      const auto results = ob::run_benchmark(game, config);
      if (out_path.empty()) {
        ob::write_csv(std::cout, results);
      } else {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        ob::write_csv(out, results);
      }
      std::cerr << ob::format_summary(results);
      bool any_failed = false;
      for (const auto& r : results) any_failed |= !r.ok();
      return any_failed ? 2 : 0;
    }

    if (*roll) {
      const ob::GameDef game = ob::resolve_game(game_name);
      ob::ExecutionConfig exec;
      exec.threads = threads;
      std::optional<std::filesystem::path> dump;
      if (!dump_dir.empty()) dump = dump_dir;
      const auto summary =
          ob::rollout(game, roll_envs, roll_steps, seed, make_policy(roll_policy, action, seed), dump, exec);
      std::cout << ob::format_rollout(summary);
      return 0;
    }

    if (*disasm) {
      std::cout << ob::format_disassembly(ob::disassemble(ob::load_rom_file(rom_path)));
      return 0;
    }

    if (*scan) {
      const auto sites = ob::scan_bcd(ob::load_rom_file(rom_path));
      for (const auto& s : sites) {
        std::printf("0x%03zX: F%X33  LD B, V%X\n", s.offset + ob::kProgramStart, s.reg, s.reg);
      }
      if (sites.empty()) std::cout << "no FX33 sites\n";
      return 0;
    }

    if (*rec) {
      const ob::GameDef game = ob::resolve_game(game_name);
      const auto script = parse_key_script(key_script);
      std::uint64_t period = 0;
      for (const auto& s : script) period += s.frames;
      std::vector<std::uint16_t> addrs;
      for (const auto& a : mem_addrs) {
        const unsigned long v = std::stoul(a, nullptr, 0);
        if (v > 0xFFF) throw std::invalid_argument("address " + a + " outside 0..0xFFF");
        addrs.push_back(static_cast<std::uint16_t>(v));
      }
      const auto trace = ob::record_trace(
          game, seed, rec_frames,
          [&](std::uint64_t f, const ob::MachineState&) {
            std::uint64_t t = f % period;
            for (const auto& s : script) {
              if (t < s.frames) return s.mask;
              t -= s.frames;
            }
            return std::uint16_t{0};
          },
          sample_every, addrs);
      if (out_path.empty()) {
        ob::write_trace(std::cout, trace);
      } else {
        ob::write_trace_file(out_path, trace);
      }
      return 0;
    }

    if (*analyze) {
      ob::TrendOptions options;
      options.min_hold = min_hold;
      if (!hint_rom.empty()) {
        for (const auto& site : ob::scan_bcd(ob::load_rom_file(hint_rom))) options.bcd_registers.push_back(site.reg);
      }
      std::cout << ob::format_trend_report(ob::analyze_trends(ob::read_trace_file(trace_path), options), top);
      return 0;
    }

    if (*serve) {
      if (!record_path.empty()) server_options.record_path = record_path;
      ob::InspectorServer server(server_options);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "inspector listening on ws://" << server_options.address << ':' << server.port() << "/\n";
      server.run();
      g_server = nullptr;
      return 0;
    }

    if (*replay) {
      const auto messages = ob::read_message_log(log_path);
      std::vector<std::string> received;
      if (port != 0) {
        received = ob::replay_over_websocket(host, port, messages);
      } else {
        ob::Session session;
        for (const auto& m : messages) {
          for (const auto& ev : session.handle(m)) received.push_back(ev.dump());
        }
      }
      for (const auto& r : received) {
        if (frames_only && nlohmann::json::parse(r).value("type", "") != "frame") continue;
        std::cout << r << '\n';
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
