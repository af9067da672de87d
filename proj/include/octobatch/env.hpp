#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "octobatch/batch.hpp"
#include "octobatch/game.hpp"
#include "octobatch/machine.hpp"

namespace octobatch {

inline constexpr int kStackedFrames = 4;
inline constexpr std::size_t kObservationBytes = kStackedFrames * kPackedFrameBytes;

class EnvError : public std::logic_error {
 public:
  enum class Code { StepAfterDone, ActionOutOfRange };
  EnvError(Code code, const std::string& what) : std::logic_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

// The last four step-end displays, oldest in plane 0.
struct Observation {
  std::array<PackedFrame, kStackedFrames> planes{};

  bool at(int plane, int x, int y) const {
    const auto byte = planes[static_cast<std::size_t>(plane)][static_cast<std::size_t>(y * 8 + x / 8)];
    return (byte >> (7 - x % 8)) & 1;
  }

  // Dense booleans in (4, 64, 32) order: index = (plane * 64 + x) * 32 + y.
  std::vector<std::uint8_t> dense() const;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct EnvState {
  MachineState machine;
  std::array<PackedFrame, kStackedFrames> ring{};
  std::uint8_t newest = kStackedFrames - 1;  // ring slot holding the newest frame
  std::uint32_t prev_score = 0;
  std::uint64_t steps = 0;
  bool done = false;
};

struct StepResult {
  Observation observation;
  std::int32_t reward = 0;
  bool terminated = false;
  bool truncated = false;
};

// Score difference reinterpreted as two's complement, so a score that
// decreases yields a negative reward.
constexpr std::int32_t score_delta(std::uint32_t now, std::uint32_t before) {
  return static_cast<std::int32_t>(now - before);
}

// Action 0 releases every key; action k >= 1 holds action_set[k - 1].
std::uint16_t action_keymask(const GameDef& game, int action);

EnvState env_reset(const GameDef& game, std::uint32_t seed);
StepResult env_step(EnvState& s, const GameDef& game, int action);
Observation env_observation(const EnvState& s);

// Seed used for the given episode of a lane whose first episode used `base`.
// Episode 0 is `base` itself.
std::uint32_t episode_seed(std::uint32_t base, std::uint64_t episode);

struct VecStepResult {
  std::vector<std::int32_t> reward;
  std::vector<std::uint8_t> terminated;
  std::vector<std::uint8_t> truncated;
  // Lanes that were reset by this call instead of stepped.
  std::vector<std::uint8_t> was_reset;
};

// N environments of one game stepping in lockstep on a BatchState.
//
// Autoreset: a lane whose step reports terminated or truncated keeps its
// terminal observation until the next step() call. That call resets the lane
// (with episode_seed(base, episode + 1)) instead of stepping it, ignores its
// action, and reports reward 0, terminated = truncated = false and
// was_reset = true. Its observation is then the fresh reset observation.
class VecEnv {
 public:
  VecEnv(GameDef game, std::span<const std::uint32_t> seeds, ExecutionConfig config = {});

  void reset(std::span<const std::uint32_t> seeds);
  const VecStepResult& step(std::span<const int> actions);

  std::size_t size() const { return batch_.size(); }
  const GameDef& game() const { return game_; }
  const BatchState& batch() const { return batch_; }
  int num_actions() const { return game_.num_actions(); }

  Observation observation(std::size_t j) const;
  // Packed observations for every lane, n * 1024 bytes, lane-major.
  void copy_observations(std::span<std::uint8_t> out) const;

  std::uint32_t score(std::size_t j) const { return prev_score_[j]; }
  std::uint64_t steps(std::size_t j) const { return steps_[j]; }
  std::uint64_t episode(std::size_t j) const { return episode_[j]; }
  bool done(std::size_t j) const { return done_[j] != 0; }

 private:
  void reset_masked(std::span<const std::uint8_t> mask);
  void push_frame(std::size_t j);
  // Post-step bookkeeping for lane j; runs on the worker that stepped it.
  void finish_step(std::size_t j);

  GameDef game_;
  BatchState batch_;
  std::vector<std::uint8_t, HugePageAllocator<std::uint8_t>> ring_;  // n * 4 * 256
  std::vector<std::uint8_t> newest_;
  std::vector<std::uint32_t> prev_score_;
  std::vector<std::uint64_t> steps_;
  std::vector<std::uint8_t> done_;
  std::vector<std::uint32_t> base_seed_;
  std::vector<std::uint64_t> episode_;
  std::vector<std::uint32_t> seed_scratch_;
  std::vector<std::uint16_t> keys_scratch_;
  std::vector<std::uint16_t> step_keys_;
  std::vector<std::uint8_t> mask_scratch_;
  VecStepResult result_;
};

// Reader over lane j of a batch, for expression evaluation.
struct BatchLaneReader {
  const BatchState& b;
  std::size_t j;
  std::uint32_t reg(unsigned k) const { return b.v[j * 16 + k]; }
  std::uint32_t index() const { return b.i[j]; }
  std::uint32_t delay() const { return b.delay[j]; }
  std::uint32_t mem(std::uint32_t addr) const { return b.memory[j * kMemorySize + (addr & 0x0FFF)]; }
};

}  // namespace octobatch
