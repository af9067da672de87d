#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace octobatch {

inline constexpr std::size_t kMemorySize = 4096;
inline constexpr std::uint16_t kProgramStart = 0x200;
inline constexpr std::uint16_t kFontStart = 0x50;
inline constexpr std::size_t kMaxRomSize = kMemorySize - kProgramStart;  // 3584
inline constexpr int kDisplayWidth = 64;
inline constexpr int kDisplayHeight = 32;
inline constexpr std::size_t kPackedFrameBytes = kDisplayWidth * kDisplayHeight / 8;  // 256
inline constexpr std::size_t kStackDepth = 16;
inline constexpr std::uint32_t kZeroSeedReplacement = 0x9E3779B9u;

// Canonical 4x5 hexadecimal glyphs installed at 0x50..0x9F.
inline constexpr std::array<std::uint8_t, 80> kFont = {
    0xF0, 0x90, 0x90, 0x90, 0xF0,  // 0
    0x20, 0x60, 0x20, 0x20, 0x70,  // 1
    0xF0, 0x10, 0xF0, 0x80, 0xF0,  // 2
    0xF0, 0x10, 0xF0, 0x10, 0xF0,  // 3
    0x90, 0x90, 0xF0, 0x10, 0x10,  // 4
    0xF0, 0x80, 0xF0, 0x10, 0xF0,  // 5
    0xF0, 0x80, 0xF0, 0x90, 0xF0,  // 6
    0xF0, 0x10, 0x20, 0x40, 0x40,  // 7
    0xF0, 0x90, 0xF0, 0x90, 0xF0,  // 8
    0xF0, 0x90, 0xF0, 0x10, 0xF0,  // 9
    0xF0, 0x90, 0xF0, 0x90, 0x90,  // A
    0xE0, 0x90, 0xE0, 0x90, 0xE0,  // B
    0xF0, 0x80, 0x80, 0x80, 0xF0,  // C
    0xE0, 0x90, 0x90, 0x90, 0xE0,  // D
    0xF0, 0x80, 0xF0, 0x80, 0xF0,  // E
    0xF0, 0x80, 0xF0, 0x80, 0x80,  // F
};

// Interpreter-variant behaviors. Defaults are the "modern" profile.
struct QuirkFlags {
  bool shift_uses_vy = false;            // 8XY6/8XYE shift VY into VX
  bool load_store_increments_i = false;  // FX55/FX65 leave I = I + X + 1
  bool jump_with_vx = false;             // BXNN jumps to XNN + VX
  bool clip_sprites = true;              // sprites clip instead of wrapping
  bool fx0a_on_release = false;          // FX0A completes on key release

  friend bool operator==(const QuirkFlags&, const QuirkFlags&) = default;
};

// Why a machine stopped. The machine keeps its state; only `halted` flips.
enum class Fault : std::uint8_t {
  None = 0,
  PcOutOfRange,
  StackOverflow,
  StackUnderflow,
  InvalidOpcode,
};

const char* to_string(Fault f);

// One row per display line, bit 63 is the leftmost pixel (x = 0).
using DisplayRows = std::array<std::uint64_t, kDisplayHeight>;
using PackedFrame = std::array<std::uint8_t, kPackedFrameBytes>;

struct MachineState {
  std::array<std::uint8_t, kMemorySize> memory{};
  std::array<std::uint8_t, 16> v{};
  std::uint16_t i = 0;
  std::uint16_t pc = kProgramStart;
  std::array<std::uint16_t, kStackDepth> stack{};
  std::uint8_t sp = 0;
  std::uint8_t delay_timer = 0;
  std::uint8_t sound_timer = 0;
  DisplayRows display{};
  std::uint16_t keys = 0;
  std::optional<std::uint8_t> waiting_for_key;
  std::uint32_t rng = 1;
  bool halted = false;
  Fault fault = Fault::None;
  QuirkFlags quirks{};

  bool pixel(int x, int y) const {
    return (display[static_cast<std::size_t>(y)] >> (63 - x)) & 1u;
  }

  friend bool operator==(const MachineState&, const MachineState&) = default;
};

enum class Kind : std::uint8_t {
  Sys,         // 0NNN (no-op)
  Cls,         // 00E0
  Ret,         // 00EE
  Jump,        // 1NNN
  Call,        // 2NNN
  SkipEqImm,   // 3XNN
  SkipNeImm,   // 4XNN
  SkipEqReg,   // 5XY0
  LoadImm,     // 6XNN
  AddImm,      // 7XNN
  Move,        // 8XY0
  Or,          // 8XY1
  And,         // 8XY2
  Xor,         // 8XY3
  Add,         // 8XY4
  Sub,         // 8XY5
  ShiftRight,  // 8XY6
  SubReverse,  // 8XY7
  ShiftLeft,   // 8XYE
  SkipNeReg,   // 9XY0
  LoadIndex,   // ANNN
  JumpOffset,  // BNNN
  Random,      // CXNN
  Draw,        // DXYN
  SkipKey,     // EX9E
  SkipNoKey,   // EXA1
  LoadDelay,   // FX07
  WaitKey,     // FX0A
  SetDelay,    // FX15
  SetSound,    // FX18
  AddIndex,    // FX1E
  FontChar,    // FX29
  BcdStore,    // FX33
  StoreRegs,   // FX55
  LoadRegs,    // FX65
  Invalid,
};

inline constexpr std::size_t kKindCount = static_cast<std::size_t>(Kind::Invalid) + 1;

const char* to_string(Kind k);

struct DecodedInstr {
  std::uint16_t opcode = 0;
  std::uint8_t x = 0;
  std::uint8_t y = 0;
  std::uint8_t n = 0;
  std::uint8_t nn = 0;
  std::uint16_t nnn = 0;
  Kind kind = Kind::Invalid;
};

// Raised by ROM loading; execution faults never throw (they halt the machine).
class RomError : public std::runtime_error {
 public:
  enum class Code { TooLarge, Empty, Io };
  RomError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

std::uint32_t seed_to_rng(std::uint32_t seed);

// xorshift32 step. Returns the low byte of the new state.
struct RngStep {
  std::uint8_t byte;
  std::uint32_t state;
};
constexpr RngStep rng_next(std::uint32_t s) {
  s ^= s << 13;
  s ^= s >> 17;
  s ^= s << 5;
  return {static_cast<std::uint8_t>(s & 0xFF), s};
}

MachineState new_machine(std::uint32_t seed, QuirkFlags quirks = {});

// Throws RomError when the ROM is empty or larger than 3584 bytes.
void validate_rom(std::span<const std::uint8_t> rom);
void load_rom(MachineState& m, std::span<const std::uint8_t> rom);

// Returns the opcode at pc and advances pc by 2, or nullopt and halts the
// machine with PcOutOfRange when pc > 4094.
std::optional<std::uint16_t> fetch(MachineState& m);

constexpr DecodedInstr decode(std::uint16_t op);

void execute(MachineState& m, const DecodedInstr& instr);

// XOR a `height`-row sprite from memory[I..] at (x, y); sets VF on collision.
void draw_sprite(MachineState& m, std::uint8_t x, std::uint8_t y, std::uint8_t height);

// Runs `cycles` instruction slots then decrements both timers once.
void tick_frame(MachineState& m, int cycles);

void set_keys(MachineState& m, std::uint16_t mask);

PackedFrame pack_display(const DisplayRows& rows);
DisplayRows unpack_display(const PackedFrame& frame);

// ---------------------------------------------------------------------------

constexpr DecodedInstr decode(std::uint16_t op) {
  DecodedInstr d;
  d.opcode = op;
  d.x = static_cast<std::uint8_t>((op >> 8) & 0xF);
  d.y = static_cast<std::uint8_t>((op >> 4) & 0xF);
  d.n = static_cast<std::uint8_t>(op & 0xF);
  d.nn = static_cast<std::uint8_t>(op & 0xFF);
  d.nnn = static_cast<std::uint16_t>(op & 0xFFF);

  switch (op >> 12) {
    case 0x0:
      if (op == 0x00E0) d.kind = Kind::Cls;
      else if (op == 0x00EE) d.kind = Kind::Ret;
      else d.kind = Kind::Sys;
      break;
    case 0x1: d.kind = Kind::Jump; break;
    case 0x2: d.kind = Kind::Call; break;
    case 0x3: d.kind = Kind::SkipEqImm; break;
    case 0x4: d.kind = Kind::SkipNeImm; break;
    case 0x5: d.kind = d.n == 0 ? Kind::SkipEqReg : Kind::Invalid; break;
    case 0x6: d.kind = Kind::LoadImm; break;
    case 0x7: d.kind = Kind::AddImm; break;
    case 0x8:
      switch (d.n) {
        case 0x0: d.kind = Kind::Move; break;
        case 0x1: d.kind = Kind::Or; break;
        case 0x2: d.kind = Kind::And; break;
        case 0x3: d.kind = Kind::Xor; break;
        case 0x4: d.kind = Kind::Add; break;
        case 0x5: d.kind = Kind::Sub; break;
        case 0x6: d.kind = Kind::ShiftRight; break;
        case 0x7: d.kind = Kind::SubReverse; break;
        case 0xE: d.kind = Kind::ShiftLeft; break;
        default: d.kind = Kind::Invalid; break;
      }
      break;
    case 0x9: d.kind = d.n == 0 ? Kind::SkipNeReg : Kind::Invalid; break;
    case 0xA: d.kind = Kind::LoadIndex; break;
    case 0xB: d.kind = Kind::JumpOffset; break;
    case 0xC: d.kind = Kind::Random; break;
    case 0xD: d.kind = Kind::Draw; break;
    case 0xE:
      if (d.nn == 0x9E) d.kind = Kind::SkipKey;
      else if (d.nn == 0xA1) d.kind = Kind::SkipNoKey;
      else d.kind = Kind::Invalid;
      break;
    case 0xF:
      switch (d.nn) {
        case 0x07: d.kind = Kind::LoadDelay; break;
        case 0x0A: d.kind = Kind::WaitKey; break;
        case 0x15: d.kind = Kind::SetDelay; break;
        case 0x18: d.kind = Kind::SetSound; break;
        case 0x1E: d.kind = Kind::AddIndex; break;
        case 0x29: d.kind = Kind::FontChar; break;
        case 0x33: d.kind = Kind::BcdStore; break;
        case 0x55: d.kind = Kind::StoreRegs; break;
        case 0x65: d.kind = Kind::LoadRegs; break;
        default: d.kind = Kind::Invalid; break;
      }
      break;
  }
  return d;
}

}  // namespace octobatch
