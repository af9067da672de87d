#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "octobatch/huge_alloc.hpp"
#include "octobatch/machine.hpp"
#include "octobatch/worker_pool.hpp"

namespace octobatch {

class SeedCountMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// How a chunk of lanes is advanced. All strategies are observationally
// identical; they differ only in memory access order.
//  LaneMajor: each lane runs all requested frames before the next lane
//             starts, keeping one lane's 4 KB of memory hot in cache.
//  Switch:    cycle-major lockstep; every lane executes instruction slot c
//             before any lane executes slot c + 1.
//  Bucketed:  cycle-major, but each slot decodes every lane first, groups
//             lanes by instruction kind, then runs each group together.
enum class Dispatch { LaneMajor, Switch, Bucketed };

struct ExecutionConfig {
  unsigned threads = 0;          // 0 = hardware concurrency
  std::size_t chunk_lanes = 64;  // lanes per scheduling unit
  Dispatch dispatch = Dispatch::LaneMajor;
};

inline constexpr std::uint8_t kNotWaiting = 0xFF;

// N machines in structure-of-arrays layout. Every per-machine field is a flat
// array indexed by lane (times the field's width).
struct BatchState {
  std::size_t n = 0;
  QuirkFlags quirks{};
  std::vector<std::uint8_t> rom;

  std::vector<std::uint8_t, HugePageAllocator<std::uint8_t>> memory;  // n * 4096
  std::vector<std::uint8_t> v;         // n * 16
  std::vector<std::uint16_t> i;        // n
  std::vector<std::uint16_t> pc;       // n
  std::vector<std::uint16_t> stack;    // n * 16
  std::vector<std::uint8_t> sp;        // n
  std::vector<std::uint8_t> delay;     // n
  std::vector<std::uint8_t> sound;     // n
  std::vector<std::uint64_t, HugePageAllocator<std::uint64_t>> display;  // n * 32, bit 63 = leftmost pixel
  std::vector<std::uint16_t> keys;     // n
  std::vector<std::uint8_t> waiting;   // n, register index or kNotWaiting
  std::vector<std::uint32_t> rng;      // n
  std::vector<std::uint8_t> halted;    // n
  std::vector<std::uint8_t> fault;     // n, Fault enumerator

  // Instructions executed per kind since construction.
  std::array<std::uint64_t, kKindCount> kind_histogram{};

  ExecutionConfig config{};
  std::shared_ptr<WorkerPool> pool;

  std::size_t size() const { return n; }

  // Copies lane j out as a scalar machine.
  MachineState lane(std::size_t j) const;

  std::span<const std::uint64_t> lane_display(std::size_t j) const {
    return {display.data() + j * kDisplayHeight, kDisplayHeight};
  }

  // Bytes of per-lane machine state held by the arrays above.
  static constexpr std::size_t bytes_per_lane() {
    return kMemorySize + 16 + 2 + 2 + 2 * kStackDepth + 1 + 1 + 1 + 8 * kDisplayHeight + 2 + 1 + 4 + 1 + 1;
  }
};

BatchState new_batch(std::size_t n, std::span<const std::uint8_t> rom, std::span<const std::uint32_t> seeds,
                     QuirkFlags quirks = {}, ExecutionConfig config = {});

// Called once per stepped lane after its frames have run, on the worker that
// ran it. Different lanes may be visited concurrently.
struct LaneHook {
  void (*fn)(void* ctx, std::size_t lane) = nullptr;
  void* ctx = nullptr;
  explicit operator bool() const { return fn != nullptr; }
  void operator()(std::size_t lane) const { fn(ctx, lane); }
};

// Applies `keymasks` then runs `frames` frames of `cycles_per_frame` slots on
// every lane. With a non-empty `active` span, lanes whose entry is false are
// left completely untouched.
void batch_tick_frames(BatchState& b, int frames, int cycles_per_frame, std::span<const std::uint16_t> keymasks,
                       std::span<const std::uint8_t> active = {}, LaneHook after_lane = {});

// Re-initializes lanes whose mask entry is true with the given seed.
void reset_lanes(BatchState& b, std::span<const std::uint8_t> mask, std::span<const std::uint32_t> seeds);

std::vector<PackedFrame> gather_displays(const BatchState& b);
void gather_display(const BatchState& b, std::size_t j, std::span<std::uint8_t, kPackedFrameBytes> out);

}  // namespace octobatch
