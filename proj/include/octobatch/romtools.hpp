#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "octobatch/game.hpp"
#include "octobatch/machine.hpp"

namespace octobatch {

// Reads a .ch8 file. Throws RomError (Io, TooLarge, Empty).
std::vector<std::uint8_t> load_rom_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Disassembly

struct DisasmLine {
  std::uint16_t address = 0;
  std::uint16_t opcode = 0;  // low byte only for a trailing odd byte
  std::string mnemonic;      // "CLS", "JP", ... or ".word" / ".byte"
  std::string operands;      // "V1, 0x20" etc., may be empty
  bool is_data = false;
  bool is_byte = false;  // trailing odd byte
};

struct Disassembly {
  std::vector<DisasmLine> lines;
  std::set<std::uint16_t> labels;  // JP/CALL/"JP V0" targets inside the ROM
};

// Linear sweep from 0x200, one line per 2-byte word (plus one for an odd
// trailing byte). Words that do not decode are reported as `.word` data.
Disassembly disassemble(std::span<const std::uint8_t> rom);

// "0x200: 00E0  CLS", with "  ; L200" appended on label targets.
std::string format_line(const DisasmLine& line, bool is_label = false);
std::string format_disassembly(const Disassembly& d);

// ---------------------------------------------------------------------------
// Static score discovery: FX33 (BCD store) sites.

struct BcdSite {
  std::size_t offset = 0;  // byte offset within the ROM
  std::uint8_t reg = 0;

  friend bool operator==(const BcdSite&, const BcdSite&) = default;
};

std::vector<BcdSite> scan_bcd(std::span<const std::uint8_t> rom);

// ---------------------------------------------------------------------------
// Dynamic score discovery: register/memory traces and trend ranking.

class TraceError : public std::runtime_error {
 public:
  enum class Code { EmptyTrace, Format, Io };
  TraceError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct TraceSample {
  std::uint64_t frame = 0;
  std::array<std::uint8_t, 16> v{};
  std::vector<std::uint8_t> mem;  // one byte per Trace::mem_addrs entry

  friend bool operator==(const TraceSample&, const TraceSample&) = default;
};

struct Trace {
  std::vector<std::uint16_t> mem_addrs;  // watched addresses, masked to 12 bits
  std::vector<TraceSample> samples;

  friend bool operator==(const Trace&, const Trace&) = default;
};

// Samples a machine every `sample_every` frames, starting at the first frame
// offered.
class TraceRecorder {
 public:
  explicit TraceRecorder(int sample_every = 1, std::vector<std::uint16_t> mem_addrs = {});

  void on_frame(const MachineState& m, std::uint64_t frame);
  const Trace& trace() const { return trace_; }
  Trace take() { return std::move(trace_); }
  int sample_every() const { return sample_every_; }

 private:
  int sample_every_;
  std::uint64_t seen_ = 0;
  Trace trace_;
};

// Key mask to hold during frame `frame` (0-based, counted after reset).
using KeyScript = std::function<std::uint16_t(std::uint64_t frame, const MachineState&)>;

// Resets the game (including startup), then runs `frames` frames driven by
// `script`, sampling after each frame according to `sample_every`.
Trace record_trace(const GameDef& game, std::uint32_t seed, std::uint64_t frames, const KeyScript& script,
                   int sample_every = 1, std::vector<std::uint16_t> mem_addrs = {});

// Line format: `<frame> <v0> ... <v15> [<mem>...]`, decimal. Lines starting
// with '#' are comments; `# mem <addr> ...` declares watched addresses (hex).
void write_trace(std::ostream& out, const Trace& trace);
Trace read_trace(std::istream& in);
Trace read_trace_file(const std::filesystem::path& path);
void write_trace_file(const std::filesystem::path& path, const Trace& trace);

struct SeriesTrend {
  std::string name;     // "V5" or "mem[0x3A0]"
  int index = 0;        // 0..15 for registers, 16 + k for watched memory k
  std::size_t samples = 0;
  std::size_t increases = 0;
  std::size_t decreases = 0;
  std::size_t distinct_values = 0;
  std::int64_t trend_score = 0;  // increases - decreases
  // Runs shorter than min_hold, skipped before counting. Always 0 when
  // min_hold is 1.
  std::size_t transient_runs = 0;
};

// Hold used for recorded gameplay. Scratch registers used by drawing and
// collision code flicker for a few frames at a time; score and lives values
// persist far longer.
inline constexpr int kGameplayMinHold = 8;

struct TrendOptions {
  // A value counts as observed only when it persists for at least this many
  // consecutive samples; shorter runs are skipped before counting changes.
  // 1 compares every pair of consecutive samples.
  int min_hold = 1;
  // Registers the ROM stores with FX33 (static candidates from scan_bcd).
  // Among score candidates with equal trend_score these rank first: a score
  // and a scratch copy of it can be indistinguishable in the trace alone.
  // Next, in both rankings, fewer transient_runs wins: counters step and
  // hold, while positions and scratch values pass through short runs.
  std::vector<int> bcd_registers;
};

struct TrendReport {
  std::vector<SeriesTrend> series;  // registers first, then watched memory
  std::vector<int> score_ranking;   // indices into series, best candidate first
  std::vector<int> lives_ranking;

  const SeriesTrend& top_score() const { return series[static_cast<std::size_t>(score_ranking.front())]; }
  const SeriesTrend& top_lives() const { return series[static_cast<std::size_t>(lives_ranking.front())]; }
};

// Throws TraceError(EmptyTrace) when the trace has no samples.
TrendReport analyze_trends(const Trace& trace, const TrendOptions& options = {});

std::string format_trend_report(const TrendReport& report, std::size_t top = 5);

}  // namespace octobatch
