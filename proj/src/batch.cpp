#include "octobatch/batch.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <mutex>

namespace octobatch {

namespace {

using KindCounts = std::array<std::uint64_t, kKindCount>;

void init_lane(BatchState& b, std::size_t j, std::uint32_t seed) {
  auto* mem = b.memory.data() + j * kMemorySize;
  std::fill(mem, mem + kMemorySize, std::uint8_t{0});
  std::copy(kFont.begin(), kFont.end(), mem + kFontStart);
  std::copy(b.rom.begin(), b.rom.end(), mem + kProgramStart);
  std::fill_n(b.v.begin() + static_cast<std::ptrdiff_t>(j * 16), 16, std::uint8_t{0});
  std::fill_n(b.stack.begin() + static_cast<std::ptrdiff_t>(j * kStackDepth), kStackDepth, std::uint16_t{0});
  std::fill_n(b.display.begin() + static_cast<std::ptrdiff_t>(j * kDisplayHeight), kDisplayHeight, std::uint64_t{0});
  b.i[j] = 0;
  b.pc[j] = kProgramStart;
  b.sp[j] = 0;
  b.delay[j] = 0;
  b.sound[j] = 0;
  b.keys[j] = 0;
  b.waiting[j] = kNotWaiting;
  b.rng[j] = seed_to_rng(seed);
  b.halted[j] = 0;
  b.fault[j] = static_cast<std::uint8_t>(Fault::None);
}

// Per-chunk execution context. Handlers address lane j through raw base
// pointers into the SoA arrays.
struct LaneExec {
  BatchState& b;
  const QuirkFlags q;
  KindCounts counts{};

  void halt(std::size_t j, Fault f) {
    b.halted[j] = 1;
    b.fault[j] = static_cast<std::uint8_t>(f);
  }

  // Fetch for lane j. Returns false when the lane does not execute this slot.
  // Pulls the lines lane j is about to touch toward the cache: the code
  // around pc, the sprite data at I, the stack and the display.
  void prefetch(std::size_t j) const {
    const std::uint8_t* mem = b.memory.data() + j * kMemorySize + (b.pc[j] & 0x0FC0);
    __builtin_prefetch(mem);
    __builtin_prefetch(mem + 64);
    __builtin_prefetch(b.memory.data() + j * kMemorySize + (b.i[j] & 0x0FFF));
    __builtin_prefetch(b.stack.data() + j * kStackDepth);
    const std::uint64_t* rows = b.display.data() + j * kDisplayHeight;
    for (int k = 0; k < 4; ++k) __builtin_prefetch(rows + 8 * k);
  }

  bool fetch(std::size_t j, std::uint16_t& op) {
    if (b.halted[j] || b.waiting[j] != kNotWaiting) return false;
    const std::uint16_t pc = b.pc[j];
    if (pc > kMemorySize - 2) {
      halt(j, Fault::PcOutOfRange);
      return false;
    }
    const std::uint8_t* mem = b.memory.data() + j * kMemorySize;
    op = static_cast<std::uint16_t>(mem[pc] << 8 | mem[pc + 1u]);
    b.pc[j] = static_cast<std::uint16_t>(pc + 2);
    return true;
  }

  template <Kind K>
  void exec(std::size_t j, const DecodedInstr& d) {
    std::uint8_t* v = b.v.data() + j * 16;
    std::uint8_t* mem = b.memory.data() + j * kMemorySize;
    std::uint8_t& vx = v[d.x];
    const std::uint8_t vy = v[d.y];
    std::uint16_t& pc = b.pc[j];
    std::uint16_t& idx = b.i[j];
    auto at = [&](unsigned offset) -> std::uint8_t& { return mem[(idx + offset) & 0x0FFF]; };

    if constexpr (K == Kind::Sys) {
    } else if constexpr (K == Kind::Cls) {
      std::fill_n(b.display.begin() + static_cast<std::ptrdiff_t>(j * kDisplayHeight), kDisplayHeight,
                  std::uint64_t{0});
    } else if constexpr (K == Kind::Ret) {
      if (b.sp[j] == 0) return halt(j, Fault::StackUnderflow);
      pc = b.stack[j * kStackDepth + --b.sp[j]];
    } else if constexpr (K == Kind::Jump) {
      pc = d.nnn;
    } else if constexpr (K == Kind::Call) {
      if (b.sp[j] >= kStackDepth) return halt(j, Fault::StackOverflow);
      b.stack[j * kStackDepth + b.sp[j]++] = pc;
      pc = d.nnn;
    } else if constexpr (K == Kind::SkipEqImm) {
      pc = static_cast<std::uint16_t>(pc + (vx == d.nn ? 2 : 0));
    } else if constexpr (K == Kind::SkipNeImm) {
      pc = static_cast<std::uint16_t>(pc + (vx != d.nn ? 2 : 0));
    } else if constexpr (K == Kind::SkipEqReg) {
      pc = static_cast<std::uint16_t>(pc + (vx == vy ? 2 : 0));
    } else if constexpr (K == Kind::SkipNeReg) {
      pc = static_cast<std::uint16_t>(pc + (vx != vy ? 2 : 0));
    } else if constexpr (K == Kind::LoadImm) {
      vx = d.nn;
    } else if constexpr (K == Kind::AddImm) {
      vx = static_cast<std::uint8_t>(vx + d.nn);
    } else if constexpr (K == Kind::Move) {
      vx = vy;
    } else if constexpr (K == Kind::Or) {
      vx = vx | vy;
    } else if constexpr (K == Kind::And) {
      vx = vx & vy;
    } else if constexpr (K == Kind::Xor) {
      vx = vx ^ vy;
    } else if constexpr (K == Kind::Add) {
      const unsigned sum = vx + vy;
      vx = static_cast<std::uint8_t>(sum);
      v[15] = static_cast<std::uint8_t>(sum >> 8);
    } else if constexpr (K == Kind::Sub) {
      const std::uint8_t no_borrow = vx >= vy;
      vx = static_cast<std::uint8_t>(vx - vy);
      v[15] = no_borrow;
    } else if constexpr (K == Kind::SubReverse) {
      const std::uint8_t no_borrow = vy >= vx;
      vx = static_cast<std::uint8_t>(vy - vx);
      v[15] = no_borrow;
    } else if constexpr (K == Kind::ShiftRight) {
      const std::uint8_t src = q.shift_uses_vy ? vy : vx;
      vx = static_cast<std::uint8_t>(src >> 1);
      v[15] = src & 1;
    } else if constexpr (K == Kind::ShiftLeft) {
      const std::uint8_t src = q.shift_uses_vy ? vy : vx;
      vx = static_cast<std::uint8_t>(src << 1);
      v[15] = static_cast<std::uint8_t>(src >> 7);
    } else if constexpr (K == Kind::LoadIndex) {
      idx = d.nnn;
    } else if constexpr (K == Kind::JumpOffset) {
      const unsigned x = d.nnn >> 8;
      pc = static_cast<std::uint16_t>((d.nnn + (q.jump_with_vx ? v[x] : v[0])) & 0x0FFF);
    } else if constexpr (K == Kind::Random) {
      std::uint32_t s = b.rng[j];
      s ^= s << 13;
      s ^= s >> 17;
      s ^= s << 5;
      b.rng[j] = s;
      vx = static_cast<std::uint8_t>(s & d.nn);
    } else if constexpr (K == Kind::Draw) {
      draw(j, vx, vy, d.n);
    } else if constexpr (K == Kind::SkipKey) {
      pc = static_cast<std::uint16_t>(pc + (((b.keys[j] >> (vx & 15)) & 1) ? 2 : 0));
    } else if constexpr (K == Kind::SkipNoKey) {
      pc = static_cast<std::uint16_t>(pc + (((b.keys[j] >> (vx & 15)) & 1) ? 0 : 2));
    } else if constexpr (K == Kind::LoadDelay) {
      vx = b.delay[j];
    } else if constexpr (K == Kind::WaitKey) {
      b.waiting[j] = d.x;
    } else if constexpr (K == Kind::SetDelay) {
      b.delay[j] = vx;
    } else if constexpr (K == Kind::SetSound) {
      b.sound[j] = vx;
    } else if constexpr (K == Kind::AddIndex) {
      idx = static_cast<std::uint16_t>(idx + vx);
    } else if constexpr (K == Kind::FontChar) {
      idx = static_cast<std::uint16_t>(kFontStart + 5 * (vx & 15));
    } else if constexpr (K == Kind::BcdStore) {
      const std::uint8_t value = vx;
      at(0) = static_cast<std::uint8_t>(value / 100);
      at(1) = static_cast<std::uint8_t>(value / 10 % 10);
      at(2) = static_cast<std::uint8_t>(value % 10);
    } else if constexpr (K == Kind::StoreRegs) {
      for (unsigned k = 0; k <= d.x; ++k) at(k) = v[k];
      if (q.load_store_increments_i) idx = static_cast<std::uint16_t>(idx + d.x + 1);
    } else if constexpr (K == Kind::LoadRegs) {
      for (unsigned k = 0; k <= d.x; ++k) v[k] = at(k);
      if (q.load_store_increments_i) idx = static_cast<std::uint16_t>(idx + d.x + 1);
    } else {
      static_assert(K == Kind::Invalid);
      halt(j, Fault::InvalidOpcode);
    }
  }

  void draw(std::size_t j, std::uint8_t x, std::uint8_t y, unsigned height) {
    std::uint64_t* rows = b.display.data() + j * kDisplayHeight;
    const std::uint8_t* mem = b.memory.data() + j * kMemorySize;
    const unsigned col = x & 63;
    const unsigned top = y & 31;
    const unsigned base = b.i[j] & 0x0FFF;
    unsigned rows_drawn = height;
    if (q.clip_sprites) rows_drawn = std::min(height, kDisplayHeight - top);
    std::uint64_t hit = 0;
    for (unsigned r = 0; r < rows_drawn; ++r) {
      const unsigned a = base + r;
      const std::uint64_t sprite = (a < kMemorySize ? std::uint64_t{mem[a]} : 0) << 56;
      const std::uint64_t placed = q.clip_sprites ? sprite >> col : std::rotr(sprite, static_cast<int>(col));
      std::uint64_t& row = rows[(top + r) & 31];
      hit |= row & placed;
      row ^= placed;
    }
    b.v[j * 16 + 15] = hit ? 1 : 0;
  }

  void dispatch(std::size_t j, const DecodedInstr& d) {
    ++counts[static_cast<std::size_t>(d.kind)];
    switch (d.kind) {
#define OCTOBATCH_KIND(K) \
  case Kind::K:           \
    return exec<Kind::K>(j, d);
      OCTOBATCH_KIND(Sys)
      OCTOBATCH_KIND(Cls)
      OCTOBATCH_KIND(Ret)
      OCTOBATCH_KIND(Jump)
      OCTOBATCH_KIND(Call)
      OCTOBATCH_KIND(SkipEqImm)
      OCTOBATCH_KIND(SkipNeImm)
      OCTOBATCH_KIND(SkipEqReg)
      OCTOBATCH_KIND(LoadImm)
      OCTOBATCH_KIND(AddImm)
      OCTOBATCH_KIND(Move)
      OCTOBATCH_KIND(Or)
      OCTOBATCH_KIND(And)
      OCTOBATCH_KIND(Xor)
      OCTOBATCH_KIND(Add)
      OCTOBATCH_KIND(Sub)
      OCTOBATCH_KIND(ShiftRight)
      OCTOBATCH_KIND(SubReverse)
      OCTOBATCH_KIND(ShiftLeft)
      OCTOBATCH_KIND(SkipNeReg)
      OCTOBATCH_KIND(LoadIndex)
      OCTOBATCH_KIND(JumpOffset)
      OCTOBATCH_KIND(Random)
      OCTOBATCH_KIND(Draw)
      OCTOBATCH_KIND(SkipKey)
      OCTOBATCH_KIND(SkipNoKey)
      OCTOBATCH_KIND(LoadDelay)
      OCTOBATCH_KIND(WaitKey)
      OCTOBATCH_KIND(SetDelay)
      OCTOBATCH_KIND(SetSound)
      OCTOBATCH_KIND(AddIndex)
      OCTOBATCH_KIND(FontChar)
      OCTOBATCH_KIND(BcdStore)
      OCTOBATCH_KIND(StoreRegs)
      OCTOBATCH_KIND(LoadRegs)
      OCTOBATCH_KIND(Invalid)
#undef OCTOBATCH_KIND
    }
  }

  void end_frame(std::size_t j) {
    if (b.halted[j]) return;
    if (b.delay[j]) --b.delay[j];
    if (b.sound[j]) --b.sound[j];
  }
};

struct Pending {
  std::uint32_t lane;
  DecodedInstr instr;
};

void run_chunk_lane_major(LaneExec& ex, std::size_t lo, std::size_t hi, int frames, int cycles,
                          std::span<const std::uint8_t> active) {
  for (std::size_t j = lo; j < hi; ++j) {
    if (!active.empty() && !active[j]) continue;
    if (j + 1 < hi) ex.prefetch(j + 1);
    for (int f = 0; f < frames; ++f) {
      for (int c = 0; c < cycles; ++c) {
        std::uint16_t op;
        if (ex.fetch(j, op)) ex.dispatch(j, decode(op));
      }
      ex.end_frame(j);
    }
  }
}

void run_chunk_switch(LaneExec& ex, std::size_t lo, std::size_t hi, int frames, int cycles,
                      std::span<const std::uint8_t> active) {
  for (int f = 0; f < frames; ++f) {
    for (int c = 0; c < cycles; ++c) {
      for (std::size_t j = lo; j < hi; ++j) {
        if (!active.empty() && !active[j]) continue;
        std::uint16_t op;
        if (ex.fetch(j, op)) ex.dispatch(j, decode(op));
      }
    }
    for (std::size_t j = lo; j < hi; ++j) {
      if (active.empty() || active[j]) ex.end_frame(j);
    }
  }
}

void run_chunk_bucketed(LaneExec& ex, std::size_t lo, std::size_t hi, int frames, int cycles,
                        std::span<const std::uint8_t> active) {
  std::vector<Pending> pending;
  std::vector<Pending> sorted;
  pending.reserve(hi - lo);
  sorted.resize(hi - lo);
  std::array<std::uint32_t, kKindCount + 1> offsets{};
  for (int f = 0; f < frames; ++f) {
    for (int c = 0; c < cycles; ++c) {
      pending.clear();
      offsets.fill(0);
      for (std::size_t j = lo; j < hi; ++j) {
        if (!active.empty() && !active[j]) continue;
        std::uint16_t op;
        if (!ex.fetch(j, op)) continue;
        const DecodedInstr d = decode(op);
        ++offsets[static_cast<std::size_t>(d.kind) + 1];
        pending.push_back({static_cast<std::uint32_t>(j), d});
      }
      for (std::size_t k = 1; k <= kKindCount; ++k) offsets[k] += offsets[k - 1];
      auto cursor = offsets;
      for (const auto& p : pending) sorted[cursor[static_cast<std::size_t>(p.instr.kind)]++] = p;
      for (std::size_t k = 0; k < kKindCount; ++k) {
        const std::uint32_t begin = offsets[k];
        const std::uint32_t end = offsets[k + 1];
        if (begin == end) continue;
        // Every entry in [begin, end) shares one kind; the switch inside
        // dispatch is perfectly predicted across the group.
        for (std::uint32_t e = begin; e < end; ++e) ex.dispatch(sorted[e].lane, sorted[e].instr);
      }
    }
    for (std::size_t j = lo; j < hi; ++j) {
      if (active.empty() || active[j]) ex.end_frame(j);
    }
  }
}

void apply_keys(BatchState& b, std::size_t j, std::uint16_t mask) {
  const std::uint16_t previous = b.keys[j];
  b.keys[j] = mask;
  if (b.waiting[j] == kNotWaiting) return;
  const unsigned candidates = b.quirks.fx0a_on_release ? (previous & ~mask) & 0xFFFFu : (mask & ~previous) & 0xFFFFu;
  if (candidates == 0) return;
  b.v[j * 16 + b.waiting[j]] = static_cast<std::uint8_t>(std::countr_zero(candidates));
  b.waiting[j] = kNotWaiting;
}

}  // namespace

MachineState BatchState::lane(std::size_t j) const {
  MachineState m;
  std::copy_n(memory.begin() + static_cast<std::ptrdiff_t>(j * kMemorySize), kMemorySize, m.memory.begin());
  std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(j * 16), 16, m.v.begin());
  m.i = i[j];
  m.pc = pc[j];
  std::copy_n(stack.begin() + static_cast<std::ptrdiff_t>(j * kStackDepth), kStackDepth, m.stack.begin());
  m.sp = sp[j];
  m.delay_timer = delay[j];
  m.sound_timer = sound[j];
  std::copy_n(display.begin() + static_cast<std::ptrdiff_t>(j * kDisplayHeight), kDisplayHeight, m.display.begin());
  m.keys = keys[j];
  if (waiting[j] != kNotWaiting) m.waiting_for_key = waiting[j];
  m.rng = rng[j];
  m.halted = halted[j] != 0;
  m.fault = static_cast<Fault>(fault[j]);
  m.quirks = quirks;
  return m;
}

BatchState new_batch(std::size_t n, std::span<const std::uint8_t> rom, std::span<const std::uint32_t> seeds,
                     QuirkFlags quirks, ExecutionConfig config) {
  if (n == 0) throw std::invalid_argument("batch needs at least one lane");
  validate_rom(rom);
  if (seeds.size() != n) {
    throw SeedCountMismatch("expected " + std::to_string(n) + " seeds, got " + std::to_string(seeds.size()));
  }
  if (config.chunk_lanes == 0) config.chunk_lanes = 64;
  BatchState b;
  b.n = n;
  b.quirks = quirks;
  b.rom.assign(rom.begin(), rom.end());
  b.memory.resize(n * kMemorySize);
  b.v.resize(n * 16);
  b.i.resize(n);
  b.pc.resize(n);
  b.stack.resize(n * kStackDepth);
  b.sp.resize(n);
  b.delay.resize(n);
  b.sound.resize(n);
  b.display.resize(n * kDisplayHeight);
  b.keys.resize(n);
  b.waiting.resize(n);
  b.rng.resize(n);
  b.halted.resize(n);
  b.fault.resize(n);
  b.config = config;
  b.pool = std::make_shared<WorkerPool>(config.threads);
  for (std::size_t j = 0; j < n; ++j) init_lane(b, j, seeds[j]);
  return b;
}

void batch_tick_frames(BatchState& b, int frames, int cycles_per_frame, std::span<const std::uint16_t> keymasks,
                       std::span<const std::uint8_t> active, LaneHook after_lane) {
  if (keymasks.size() != b.n) throw std::invalid_argument("keymask count does not match lane count");
  if (!active.empty() && active.size() != b.n) throw std::invalid_argument("active mask size does not match lane count");
  if (frames < 0 || cycles_per_frame < 0) throw std::invalid_argument("frames and cycles must be non-negative");

  for (std::size_t j = 0; j < b.n; ++j) {
    if (active.empty() || active[j]) apply_keys(b, j, keymasks[j]);
  }
  if (frames == 0) {
    if (after_lane) {
      for (std::size_t j = 0; j < b.n; ++j) {
        if (active.empty() || active[j]) after_lane(j);
      }
    }
    return;
  }

  const std::size_t chunk = b.config.chunk_lanes;
  const std::size_t tasks = (b.n + chunk - 1) / chunk;
  std::mutex merge;
  b.pool->run(tasks, [&](std::size_t t) {
    LaneExec ex{b, b.quirks};
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(b.n, lo + chunk);
    if (b.config.dispatch == Dispatch::LaneMajor) {
      run_chunk_lane_major(ex, lo, hi, frames, cycles_per_frame, active);
    } else if (b.config.dispatch == Dispatch::Bucketed) {
      run_chunk_bucketed(ex, lo, hi, frames, cycles_per_frame, active);
    } else {
      run_chunk_switch(ex, lo, hi, frames, cycles_per_frame, active);
    }
    if (after_lane) {
      for (std::size_t j = lo; j < hi; ++j) {
        if (active.empty() || active[j]) after_lane(j);
      }
    }
    std::lock_guard lock(merge);
    for (std::size_t k = 0; k < kKindCount; ++k) b.kind_histogram[k] += ex.counts[k];
  });
}

void reset_lanes(BatchState& b, std::span<const std::uint8_t> mask, std::span<const std::uint32_t> seeds) {
  if (mask.size() != b.n || seeds.size() != b.n) throw std::invalid_argument("reset mask/seed size mismatch");
  for (std::size_t j = 0; j < b.n; ++j) {
    if (mask[j]) init_lane(b, j, seeds[j]);
  }
}

void gather_display(const BatchState& b, std::size_t j, std::span<std::uint8_t, kPackedFrameBytes> out) {
  const std::uint64_t* rows = b.display.data() + j * kDisplayHeight;
  for (std::size_t r = 0; r < kDisplayHeight; ++r) {
    std::uint64_t be = rows[r];
    if constexpr (std::endian::native == std::endian::little) be = __builtin_bswap64(be);
    std::memcpy(out.data() + r * 8, &be, 8);
  }
}

std::vector<PackedFrame> gather_displays(const BatchState& b) {
  std::vector<PackedFrame> frames(b.n);
  for (std::size_t j = 0; j < b.n; ++j) gather_display(b, j, frames[j]);
  return frames;
}

}  // namespace octobatch
