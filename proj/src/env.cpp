#include "octobatch/env.hpp"

#include <algorithm>
#include <cstring>

namespace octobatch {

std::vector<std::uint8_t> Observation::dense() const {
  std::vector<std::uint8_t> out(kStackedFrames * kDisplayWidth * kDisplayHeight);
  for (int p = 0; p < kStackedFrames; ++p) {
    for (int x = 0; x < kDisplayWidth; ++x) {
      for (int y = 0; y < kDisplayHeight; ++y) {
        out[static_cast<std::size_t>((p * kDisplayWidth + x) * kDisplayHeight + y)] = at(p, x, y) ? 1 : 0;
      }
    }
  }
  return out;
}

std::uint16_t action_keymask(const GameDef& game, int action) {
  if (action < 0 || action > static_cast<int>(game.action_set.size())) {
    throw EnvError(EnvError::Code::ActionOutOfRange, "action " + std::to_string(action) + " outside 0.." +
                                                         std::to_string(game.action_set.size()));
  }
  if (action == 0) return 0;
  return static_cast<std::uint16_t>(1u << game.action_set[static_cast<std::size_t>(action - 1)]);
}

std::uint32_t episode_seed(std::uint32_t base, std::uint64_t episode) {
  if (episode == 0) return base;
  // splitmix64 finalizer over (base, episode)
  std::uint64_t z = (std::uint64_t{base} << 32 | (episode & 0xFFFFFFFFu)) + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return static_cast<std::uint32_t>(z ^ (z >> 32));
}

EnvState env_reset(const GameDef& game, std::uint32_t seed) {
  EnvState s;
  s.machine = new_machine(seed, game.quirks);
  load_rom(s.machine, game.rom);
  for (const auto& seg : game.startup) {
    set_keys(s.machine, seg.keys);
    for (int f = 0; f < seg.frames; ++f) tick_frame(s.machine, game.cycles_per_frame);
  }
  const PackedFrame frame = pack_display(s.machine.display);
  s.ring.fill(frame);
  s.newest = kStackedFrames - 1;
  s.prev_score = eval_expr(game.score, s.machine);
  return s;
}

Observation env_observation(const EnvState& s) {
  Observation obs;
  for (int p = 0; p < kStackedFrames; ++p) {
    obs.planes[static_cast<std::size_t>(p)] = s.ring[static_cast<std::size_t>((s.newest + 1 + p) % kStackedFrames)];
  }
  return obs;
}

StepResult env_step(EnvState& s, const GameDef& game, int action) {
  if (s.done) throw EnvError(EnvError::Code::StepAfterDone, "step called on a finished episode; reset first");
  set_keys(s.machine, action_keymask(game, action));
  for (int f = 0; f < game.frame_skip; ++f) tick_frame(s.machine, game.cycles_per_frame);

  s.newest = static_cast<std::uint8_t>((s.newest + 1) % kStackedFrames);
  s.ring[s.newest] = pack_display(s.machine.display);

  const std::uint32_t score = eval_expr(game.score, s.machine);
  StepResult r;
  r.reward = score_delta(score, s.prev_score);
  r.terminated = eval_expr(game.terminated, s.machine) != 0 || s.machine.halted;
  r.truncated = s.steps + 1 >= static_cast<std::uint64_t>(game.max_episode_steps);
  s.prev_score = score;
  ++s.steps;
  s.done = r.terminated || r.truncated;
  r.observation = env_observation(s);
  return r;
}

// ---------------------------------------------------------------------------

VecEnv::VecEnv(GameDef game, std::span<const std::uint32_t> seeds, ExecutionConfig config)
    : game_(std::move(game)), batch_(new_batch(seeds.size(), game_.rom, seeds, game_.quirks, config)) {
  const std::size_t n = seeds.size();
  ring_.resize(n * kObservationBytes);
  newest_.resize(n);
  prev_score_.resize(n);
  steps_.resize(n);
  done_.resize(n);
  base_seed_.assign(seeds.begin(), seeds.end());
  episode_.resize(n);
  seed_scratch_.resize(n);
  keys_scratch_.resize(n);
  step_keys_.resize(n);
  mask_scratch_.resize(n);
  result_.reward.resize(n);
  result_.terminated.resize(n);
  result_.truncated.resize(n);
  result_.was_reset.resize(n);
  reset(seeds);
}

void VecEnv::reset(std::span<const std::uint32_t> seeds) {
  if (seeds.size() != size()) throw SeedCountMismatch("reset needs one seed per lane");
  base_seed_.assign(seeds.begin(), seeds.end());
  std::fill(episode_.begin(), episode_.end(), 0);
  std::vector<std::uint8_t> all(size(), 1);
  reset_masked(all);
}

void VecEnv::reset_masked(std::span<const std::uint8_t> mask) {
  const std::size_t n = size();
  for (std::size_t j = 0; j < n; ++j) seed_scratch_[j] = episode_seed(base_seed_[j], episode_[j]);
  reset_lanes(batch_, mask, seed_scratch_);
  for (const auto& seg : game_.startup) {
    std::fill(keys_scratch_.begin(), keys_scratch_.end(), seg.keys);
    batch_tick_frames(batch_, seg.frames, game_.cycles_per_frame, keys_scratch_, mask);
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask[j]) continue;
    std::uint8_t* lane = ring_.data() + j * kObservationBytes;
    gather_display(batch_, j, std::span<std::uint8_t, kPackedFrameBytes>(lane, kPackedFrameBytes));
    for (int p = 1; p < kStackedFrames; ++p) std::memcpy(lane + p * kPackedFrameBytes, lane, kPackedFrameBytes);
    newest_[j] = kStackedFrames - 1;
    prev_score_[j] = game_.score.eval(BatchLaneReader{batch_, j});
    steps_[j] = 0;
    done_[j] = 0;
  }
}

void VecEnv::push_frame(std::size_t j) {
  newest_[j] = static_cast<std::uint8_t>((newest_[j] + 1) % kStackedFrames);
  std::uint8_t* slot = ring_.data() + j * kObservationBytes + newest_[j] * kPackedFrameBytes;
  gather_display(batch_, j, std::span<std::uint8_t, kPackedFrameBytes>(slot, kPackedFrameBytes));
}

const VecStepResult& VecEnv::step(std::span<const int> actions) {
  const std::size_t n = size();
  if (actions.size() != n) throw std::invalid_argument("step needs one action per lane");
  bool any_reset = false;
  for (std::size_t j = 0; j < n; ++j) {
    if (done_[j]) {
      any_reset = true;
      continue;
    }
    step_keys_[j] = action_keymask(game_, actions[j]);
  }

  std::fill(result_.was_reset.begin(), result_.was_reset.end(), 0);
  std::span<const std::uint8_t> active;
  if (any_reset) {
    for (std::size_t j = 0; j < n; ++j) {
      if (done_[j]) ++episode_[j];
      result_.was_reset[j] = done_[j];
      mask_scratch_[j] = done_[j];
    }
    reset_masked(mask_scratch_);
    for (std::size_t j = 0; j < n; ++j) mask_scratch_[j] = !result_.was_reset[j];
    active = mask_scratch_;
  }

  for (std::size_t j = 0; j < n; ++j) {
    if (result_.was_reset[j]) {
      result_.reward[j] = 0;
      result_.terminated[j] = 0;
      result_.truncated[j] = 0;
    }
  }
  const LaneHook finish{[](void* self, std::size_t j) { static_cast<VecEnv*>(self)->finish_step(j); }, this};
  batch_tick_frames(batch_, game_.frame_skip, game_.cycles_per_frame, step_keys_, active, finish);
  return result_;
}

void VecEnv::finish_step(std::size_t j) {
  push_frame(j);
  const BatchLaneReader reader{batch_, j};
  const std::uint32_t score = game_.score.eval(reader);
  result_.reward[j] = score_delta(score, prev_score_[j]);
  result_.terminated[j] = game_.terminated.eval(reader) != 0 || batch_.halted[j] != 0;
  result_.truncated[j] = steps_[j] + 1 >= static_cast<std::uint64_t>(game_.max_episode_steps);
  prev_score_[j] = score;
  ++steps_[j];
  done_[j] = result_.terminated[j] || result_.truncated[j];
}

Observation VecEnv::observation(std::size_t j) const {
  Observation obs;
  const std::uint8_t* lane = ring_.data() + j * kObservationBytes;
  for (int p = 0; p < kStackedFrames; ++p) {
    const std::size_t slot = static_cast<std::size_t>((newest_[j] + 1 + p) % kStackedFrames);
    std::memcpy(obs.planes[static_cast<std::size_t>(p)].data(), lane + slot * kPackedFrameBytes, kPackedFrameBytes);
  }
  return obs;
}

void VecEnv::copy_observations(std::span<std::uint8_t> out) const {
  if (out.size() != size() * kObservationBytes) throw std::invalid_argument("observation buffer size mismatch");
  for (std::size_t j = 0; j < size(); ++j) {
    const Observation obs = observation(j);
    for (int p = 0; p < kStackedFrames; ++p) {
      std::memcpy(out.data() + j * kObservationBytes + static_cast<std::size_t>(p) * kPackedFrameBytes,
                  obs.planes[static_cast<std::size_t>(p)].data(), kPackedFrameBytes);
    }
  }
}

}  // namespace octobatch
