#include "octobatch/machine.hpp"

#include <algorithm>
#include <bit>

namespace octobatch {

const char* to_string(Fault f) {
  switch (f) {
    case Fault::None: return "none";
    case Fault::PcOutOfRange: return "pc_out_of_range";
    case Fault::StackOverflow: return "stack_overflow";
    case Fault::StackUnderflow: return "stack_underflow";
    case Fault::InvalidOpcode: return "invalid_opcode";
  }
  return "unknown";
}

const char* to_string(Kind k) {
  static constexpr const char* kNames[kKindCount] = {
      "Sys",       "Cls",        "Ret",        "Jump",      "Call",      "SkipEqImm",
      "SkipNeImm", "SkipEqReg",  "LoadImm",    "AddImm",    "Move",      "Or",
      "And",       "Xor",        "Add",        "Sub",       "ShiftRight", "SubReverse",
      "ShiftLeft", "SkipNeReg",  "LoadIndex",  "JumpOffset", "Random",   "Draw",
      "SkipKey",   "SkipNoKey",  "LoadDelay",  "WaitKey",   "SetDelay",  "SetSound",
      "AddIndex",  "FontChar",   "BcdStore",   "StoreRegs", "LoadRegs",  "Invalid",
  };
  return kNames[static_cast<std::size_t>(k)];
}

std::uint32_t seed_to_rng(std::uint32_t seed) { return seed == 0 ? kZeroSeedReplacement : seed; }

MachineState new_machine(std::uint32_t seed, QuirkFlags quirks) {
  MachineState m;
  std::copy(kFont.begin(), kFont.end(), m.memory.begin() + kFontStart);
  m.rng = seed_to_rng(seed);
  m.quirks = quirks;
  return m;
}

void validate_rom(std::span<const std::uint8_t> rom) {
  if (rom.empty()) throw RomError(RomError::Code::Empty, "ROM is empty");
  if (rom.size() > kMaxRomSize) {
    throw RomError(RomError::Code::TooLarge,
                   "ROM is " + std::to_string(rom.size()) + " bytes; at most " +
                       std::to_string(kMaxRomSize) + " fit above 0x200");
  }
}

void load_rom(MachineState& m, std::span<const std::uint8_t> rom) {
  validate_rom(rom);
  std::copy(rom.begin(), rom.end(), m.memory.begin() + kProgramStart);
}

namespace {

inline void halt(MachineState& m, Fault f) {
  m.halted = true;
  m.fault = f;
}

inline std::uint16_t addr(std::uint32_t a) { return static_cast<std::uint16_t>(a & 0x0FFF); }

}  // namespace

std::optional<std::uint16_t> fetch(MachineState& m) {
  if (m.pc > kMemorySize - 2) {
    halt(m, Fault::PcOutOfRange);
    return std::nullopt;
  }
  const auto op = static_cast<std::uint16_t>(m.memory[m.pc] << 8 | m.memory[m.pc + 1u]);
  m.pc = static_cast<std::uint16_t>(m.pc + 2);
  return op;
}

void draw_sprite(MachineState& m, std::uint8_t x, std::uint8_t y, std::uint8_t height) {
  const unsigned x0 = x % kDisplayWidth;
  const unsigned y0 = y % kDisplayHeight;
  const unsigned base = m.i & 0x0FFF;
  bool collision = false;
  for (unsigned r = 0; r < height; ++r) {
    unsigned row = y0 + r;
    if (row >= kDisplayHeight) {
      if (m.quirks.clip_sprites) break;
      row %= kDisplayHeight;
    }
    const unsigned a = base + r;
    const std::uint64_t bits = a < kMemorySize ? m.memory[a] : 0;
    const std::uint64_t placed = m.quirks.clip_sprites ? (bits << 56) >> x0 : std::rotr(bits << 56, static_cast<int>(x0));
    collision |= (m.display[row] & placed) != 0;
    m.display[row] ^= placed;
  }
  m.v[0xF] = collision ? 1 : 0;
}

void execute(MachineState& m, const DecodedInstr& d) {
  auto& v = m.v;
  auto& vx = v[d.x];
  const std::uint8_t vy = v[d.y];
  switch (d.kind) {
    case Kind::Sys:
      break;
    case Kind::Cls:
      m.display.fill(0);
      break;
    case Kind::Ret:
      if (m.sp == 0) return halt(m, Fault::StackUnderflow);
      m.pc = m.stack[--m.sp];
      break;
    case Kind::Jump:
      m.pc = d.nnn;
      break;
    case Kind::Call:
      if (m.sp >= kStackDepth) return halt(m, Fault::StackOverflow);
      m.stack[m.sp++] = m.pc;
      m.pc = d.nnn;
      break;
    case Kind::SkipEqImm:
      if (vx == d.nn) m.pc += 2;
      break;
    case Kind::SkipNeImm:
      if (vx != d.nn) m.pc += 2;
      break;
    case Kind::SkipEqReg:
      if (vx == vy) m.pc += 2;
      break;
    case Kind::LoadImm:
      vx = d.nn;
      break;
    case Kind::AddImm:
      vx = static_cast<std::uint8_t>(vx + d.nn);
      break;
    case Kind::Move:
      vx = vy;
      break;
    case Kind::Or:
      vx |= vy;
      break;
    case Kind::And:
      vx &= vy;
      break;
    case Kind::Xor:
      vx ^= vy;
      break;
    case Kind::Add: {
      const unsigned sum = unsigned(vx) + vy;
      vx = static_cast<std::uint8_t>(sum);
      v[0xF] = sum > 0xFF ? 1 : 0;
      break;
    }
    case Kind::Sub: {
      const std::uint8_t flag = vx >= vy ? 1 : 0;
      vx = static_cast<std::uint8_t>(vx - vy);
      v[0xF] = flag;
      break;
    }
    case Kind::SubReverse: {
      const std::uint8_t flag = vy >= vx ? 1 : 0;
      vx = static_cast<std::uint8_t>(vy - vx);
      v[0xF] = flag;
      break;
    }
    case Kind::ShiftRight: {
      const std::uint8_t src = m.quirks.shift_uses_vy ? vy : vx;
      vx = static_cast<std::uint8_t>(src >> 1);
      v[0xF] = src & 1u;
      break;
    }
    case Kind::ShiftLeft: {
      const std::uint8_t src = m.quirks.shift_uses_vy ? vy : vx;
      vx = static_cast<std::uint8_t>(src << 1);
      v[0xF] = src >> 7;
      break;
    }
    case Kind::SkipNeReg:
      if (vx != vy) m.pc += 2;
      break;
    case Kind::LoadIndex:
      m.i = d.nnn;
      break;
    case Kind::JumpOffset:
      m.pc = addr(d.nnn + (m.quirks.jump_with_vx ? vx : v[0]));
      break;
    case Kind::Random: {
      const auto step = rng_next(m.rng);
      m.rng = step.state;
      vx = step.byte & d.nn;
      break;
    }
    case Kind::Draw:
      draw_sprite(m, vx, vy, d.n);
      break;
    case Kind::SkipKey:
      if ((m.keys >> (vx & 0xF)) & 1u) m.pc += 2;
      break;
    case Kind::SkipNoKey:
      if (!((m.keys >> (vx & 0xF)) & 1u)) m.pc += 2;
      break;
    case Kind::LoadDelay:
      vx = m.delay_timer;
      break;
    case Kind::WaitKey:
      m.waiting_for_key = d.x;
      break;
    case Kind::SetDelay:
      m.delay_timer = vx;
      break;
    case Kind::SetSound:
      m.sound_timer = vx;
      break;
    case Kind::AddIndex:
      m.i = static_cast<std::uint16_t>(m.i + vx);
      break;
    case Kind::FontChar:
      m.i = static_cast<std::uint16_t>(kFontStart + 5 * (vx & 0xF));
      break;
    case Kind::BcdStore: {
      const std::uint8_t value = vx;
      m.memory[addr(m.i + 0u)] = value / 100;
      m.memory[addr(m.i + 1u)] = (value / 10) % 10;
      m.memory[addr(m.i + 2u)] = value % 10;
      break;
    }
    case Kind::StoreRegs:
      for (unsigned k = 0; k <= d.x; ++k) m.memory[addr(m.i + k)] = v[k];
      if (m.quirks.load_store_increments_i) m.i = static_cast<std::uint16_t>(m.i + d.x + 1);
      break;
    case Kind::LoadRegs:
      for (unsigned k = 0; k <= d.x; ++k) v[k] = m.memory[addr(m.i + k)];
      if (m.quirks.load_store_increments_i) m.i = static_cast<std::uint16_t>(m.i + d.x + 1);
      break;
    case Kind::Invalid:
      halt(m, Fault::InvalidOpcode);
      break;
  }
}

void tick_frame(MachineState& m, int cycles) {
  if (m.halted) return;
  for (int c = 0; c < cycles; ++c) {
    if (m.waiting_for_key) continue;
    const auto op = fetch(m);
    if (!op) return;
    execute(m, decode(*op));
    // A fault ends the frame before the timers move.
    if (m.halted) return;
  }
  if (m.delay_timer > 0) --m.delay_timer;
  if (m.sound_timer > 0) --m.sound_timer;
}

void set_keys(MachineState& m, std::uint16_t mask) {
  const std::uint16_t previous = m.keys;
  m.keys = mask;
  if (!m.waiting_for_key) return;
  const std::uint16_t candidates = m.quirks.fx0a_on_release
                                       ? static_cast<std::uint16_t>(previous & ~mask)
                                       : static_cast<std::uint16_t>(mask & ~previous);
  if (candidates == 0) return;
  m.v[*m.waiting_for_key] = static_cast<std::uint8_t>(std::countr_zero(candidates));
  m.waiting_for_key.reset();
}

PackedFrame pack_display(const DisplayRows& rows) {
  PackedFrame out{};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t b = 0; b < 8; ++b) {
      out[r * 8 + b] = static_cast<std::uint8_t>(rows[r] >> (56 - 8 * b));
    }
  }
  return out;
}

DisplayRows unpack_display(const PackedFrame& frame) {
  DisplayRows rows{};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::uint64_t row = 0;
    for (std::size_t b = 0; b < 8; ++b) row = row << 8 | frame[r * 8 + b];
    rows[r] = row;
  }
  return rows;
}

}  // namespace octobatch
