// Instruction semantics, one case per instruction form. The 8XYn ALU forms
// run over every operand pair.

#include "doctest.h"
#include "octobatch/machine.hpp"
#include "test_util.hpp"

using namespace octobatch;
using testutil::machine_with;
using testutil::run_op;
using testutil::step;

namespace {

struct AluCase {
  std::uint8_t result;
  std::uint8_t flag;
};

// Independent statement of each ALU rule: b is VY, a is VX.
AluCase alu_oracle(unsigned n, unsigned a, unsigned b) {
  switch (n) {
    case 0x1: return {static_cast<std::uint8_t>(a | b), 0xFF};
    case 0x2: return {static_cast<std::uint8_t>(a & b), 0xFF};
    case 0x3: return {static_cast<std::uint8_t>(a ^ b), 0xFF};
    case 0x4: return {static_cast<std::uint8_t>((a + b) % 256), static_cast<std::uint8_t>(a + b >= 256)};
    case 0x5: return {static_cast<std::uint8_t>((a + 256 - b) % 256), static_cast<std::uint8_t>(a >= b)};
    case 0x6: return {static_cast<std::uint8_t>(a / 2), static_cast<std::uint8_t>(a % 2)};
    case 0x7: return {static_cast<std::uint8_t>((b + 256 - a) % 256), static_cast<std::uint8_t>(b >= a)};
    case 0xE: return {static_cast<std::uint8_t>((a * 2) % 256), static_cast<std::uint8_t>(a >= 128)};
  }
  return {0, 0};
}

// Runs 8(x)(y)(n) over all 65536 operand pairs; 0xFF flag means "VF untouched".
int alu_mismatches(unsigned n, unsigned x, unsigned y) {
  int bad = 0;
  for (unsigned a = 0; a < 256; ++a) {
    for (unsigned b = 0; b < 256; ++b) {
      MachineState m = new_machine(1);
      m.v[0xF] = 0xAA;
      m.v[y] = static_cast<std::uint8_t>(b);
      m.v[x] = static_cast<std::uint8_t>(a);
      if (x == y) b = a;
      const std::uint8_t vf_before = m.v[0xF];
      run_op(m, static_cast<std::uint16_t>(0x8000 | x << 8 | y << 4 | n));
      const AluCase want = alu_oracle(n, a, b);
      if (x == 0xF) {
        // Flag write lands after the result.
        const std::uint8_t expect = want.flag == 0xFF ? want.result : want.flag;
        bad += m.v[0xF] != expect;
      } else {
        bad += m.v[x] != want.result;
        bad += m.v[0xF] != (want.flag == 0xFF ? vf_before : want.flag);
      }
      if (x == y) break;
    }
  }
  return bad;
}

}  // namespace

TEST_SUITE("opcodes") {
  TEST_CASE("decode fields and kinds") {
    const auto d = decode(0xD015);
    CHECK(d.kind == Kind::Draw);
    CHECK(d.x == 0);
    CHECK(d.y == 1);
    CHECK(d.n == 5);
    CHECK(decode(0xF533).kind == Kind::BcdStore);
    CHECK(decode(0xF533).x == 5);
    CHECK(decode(0xFFFF).kind == Kind::Invalid);
    CHECK(decode(0xA2F0).nnn == 0x2F0);
    CHECK(decode(0x6A7B).nn == 0x7B);
  }

  TEST_CASE("decode is total and matches the instruction table") {
    auto expected = [](unsigned op) -> Kind {
      const unsigned hi = op >> 12, n = op & 0xF, nn = op & 0xFF;
      switch (hi) {
        case 0x0:
          if (op == 0x00E0) return Kind::Cls;
          if (op == 0x00EE) return Kind::Ret;
          return Kind::Sys;
        case 0x1: return Kind::Jump;
        case 0x2: return Kind::Call;
        case 0x3: return Kind::SkipEqImm;
        case 0x4: return Kind::SkipNeImm;
        case 0x5: return n == 0 ? Kind::SkipEqReg : Kind::Invalid;
        case 0x6: return Kind::LoadImm;
        case 0x7: return Kind::AddImm;
        case 0x8: {
          static constexpr Kind k[16] = {Kind::Move,    Kind::Or,      Kind::And,        Kind::Xor,
                                         Kind::Add,     Kind::Sub,     Kind::ShiftRight, Kind::SubReverse,
                                         Kind::Invalid, Kind::Invalid, Kind::Invalid,    Kind::Invalid,
                                         Kind::Invalid, Kind::Invalid, Kind::ShiftLeft,  Kind::Invalid};
          return k[n];
        }
        case 0x9: return n == 0 ? Kind::SkipNeReg : Kind::Invalid;
        case 0xA: return Kind::LoadIndex;
        case 0xB: return Kind::JumpOffset;
        case 0xC: return Kind::Random;
        case 0xD: return Kind::Draw;
        case 0xE: return nn == 0x9E ? Kind::SkipKey : nn == 0xA1 ? Kind::SkipNoKey : Kind::Invalid;
        default:
          switch (nn) {
            case 0x07: return Kind::LoadDelay;
            case 0x0A: return Kind::WaitKey;
            case 0x15: return Kind::SetDelay;
            case 0x18: return Kind::SetSound;
            case 0x1E: return Kind::AddIndex;
            case 0x29: return Kind::FontChar;
            case 0x33: return Kind::BcdStore;
            case 0x55: return Kind::StoreRegs;
            case 0x65: return Kind::LoadRegs;
          }
          return Kind::Invalid;
      }
    };
    int bad = 0;
    std::array<int, kKindCount> seen{};
    for (unsigned op = 0; op <= 0xFFFF; ++op) {
      const auto d = decode(static_cast<std::uint16_t>(op));
      bad += d.kind != expected(op);
      bad += d.x != ((op >> 8) & 0xF) || d.y != ((op >> 4) & 0xF) || d.n != (op & 0xF) || d.nn != (op & 0xFF) ||
             d.nnn != (op & 0xFFF);
      ++seen[static_cast<std::size_t>(d.kind)];
    }
    CHECK(bad == 0);
    for (std::size_t k = 0; k < kKindCount; ++k) CHECK_MESSAGE(seen[k] > 0, to_string(static_cast<Kind>(k)));
  }

  TEST_CASE("0NNN is a no-op") {
    auto m = machine_with({0x0123});
    auto before = m;
    step(m);
    before.pc = 0x202;
    CHECK(m == before);
  }

  TEST_CASE("00E0 clears the display") {
    auto m = machine_with({0x00E0});
    m.display.fill(~0ull);
    step(m);
    for (auto row : m.display) CHECK(row == 0);
  }

  TEST_CASE("2NNN and 00EE call and return") {
    auto m = machine_with({0x2206, 0x0000, 0x0000, 0x00EE});
    step(m);
    CHECK(m.pc == 0x206);
    CHECK(m.sp == 1);
    CHECK(m.stack[0] == 0x202);
    step(m);
    CHECK(m.pc == 0x202);
    CHECK(m.sp == 0);
  }

  TEST_CASE("call at sp=16 overflows, return at sp=0 underflows") {
    auto m = machine_with({0x2200});
    for (int k = 0; k < 16; ++k) step(m);
    CHECK(m.sp == 16);
    CHECK_FALSE(m.halted);
    step(m);
    CHECK(m.halted);
    CHECK(m.fault == Fault::StackOverflow);
    CHECK(m.sp == 16);

    auto r = machine_with({0x00EE});
    step(r);
    CHECK(r.halted);
    CHECK(r.fault == Fault::StackUnderflow);
  }

  TEST_CASE("1NNN jumps; self-jump holds pc") {
    auto m = machine_with({0x1200}, 7);
    tick_frame(m, 100);
    CHECK(m.pc == 0x200);
    auto j = machine_with({0x1ABC});
    step(j);
    CHECK(j.pc == 0xABC);
  }

  TEST_CASE("3XNN 4XNN 5XY0 9XY0 skips") {
    struct Case {
      std::uint16_t op;
      std::uint8_t vx, vy;
      bool skips;
    };
    const Case cases[] = {
        {0x3142, 0x42, 0, true},  {0x3142, 0x41, 0, false}, {0x4142, 0x42, 0, false}, {0x4142, 0x00, 0, true},
        {0x5120, 0x07, 7, true},  {0x5120, 0x07, 8, false}, {0x9120, 0x07, 7, false}, {0x9120, 0x07, 8, true},
        {0x31FF, 0xFF, 0, true},  {0x4100, 0x00, 0, false},
    };
    for (const auto& c : cases) {
      auto m = machine_with({c.op});
      m.v[1] = c.vx;
      m.v[2] = c.vy;
      step(m);
      CHECK(m.pc == (c.skips ? 0x204 : 0x202));
    }
  }

  TEST_CASE("6XNN loads, 7XNN adds without touching VF") {
    for (unsigned a = 0; a < 256; ++a) {
      for (unsigned nn = 0; nn < 256; nn += 15) {
        MachineState m = new_machine(1);
        m.v[3] = static_cast<std::uint8_t>(a);
        m.v[0xF] = 0x5A;
        run_op(m, static_cast<std::uint16_t>(0x7300 | nn));
        REQUIRE(m.v[3] == (a + nn) % 256);
        REQUIRE(m.v[0xF] == 0x5A);
      }
    }
    MachineState m = new_machine(1);
    run_op(m, 0x6A7B);
    CHECK(m.v[0xA] == 0x7B);
  }

  TEST_CASE("8XY0 copies") {
    MachineState m = new_machine(1);
    m.v[2] = 99;
    run_op(m, 0x8120);
    CHECK(m.v[1] == 99);
  }

  TEST_CASE("8XYn ALU ops are exhaustively correct") {
    for (unsigned n : {0x1u, 0x2u, 0x3u, 0x4u, 0x5u, 0x6u, 0x7u, 0xEu}) {
      CAPTURE(n);
      CHECK(alu_mismatches(n, 1, 2) == 0);
      // VF as destination: the flag overwrites the result.
      CHECK(alu_mismatches(n, 0xF, 2) == 0);
      // VF as source.
      CHECK(alu_mismatches(n, 3, 0xF) == 0);
      // Same register on both sides.
      CHECK(alu_mismatches(n, 4, 4) == 0);
    }
  }

  TEST_CASE("8XY4 example: 200 + 100") {
    MachineState m = new_machine(1);
    m.v[1] = 200;
    m.v[2] = 100;
    run_op(m, 0x8124);
    CHECK(m.v[1] == 44);
    CHECK(m.v[0xF] == 1);
  }

  TEST_CASE("shift quirk uses VY") {
    QuirkFlags q;
    q.shift_uses_vy = true;
    MachineState m = new_machine(1, q);
    m.v[1] = 0;
    m.v[2] = 0x81;
    run_op(m, 0x8126);
    CHECK(m.v[1] == 0x40);
    CHECK(m.v[0xF] == 1);
    m.v[2] = 0x81;
    run_op(m, 0x812E);
    CHECK(m.v[1] == 0x02);
    CHECK(m.v[0xF] == 1);
  }

  TEST_CASE("ANNN and BNNN") {
    MachineState m = new_machine(1);
    run_op(m, 0xA123);
    CHECK(m.i == 0x123);
    m.v[0] = 0x10;
    m.v[3] = 0x20;
    run_op(m, 0xB300);
    CHECK(m.pc == 0x310);
    m.v[0] = 0xFF;
    run_op(m, 0xBFFF);  // wraps into the 12-bit address space
    CHECK(m.pc == ((0xFFF + 0xFF) & 0xFFF));

    QuirkFlags q;
    q.jump_with_vx = true;
    MachineState w = new_machine(1, q);
    w.v[0] = 0x10;
    w.v[3] = 0x20;
    run_op(w, 0xB300);
    CHECK(w.pc == 0x320);
  }

  TEST_CASE("CXNN masks the xorshift byte") {
    MachineState m = new_machine(1);
    run_op(m, 0xC1FF);
    CHECK(m.v[1] == 0x21);
    CHECK(m.rng == 0x42021u);
    run_op(m, 0xC200);
    CHECK(m.v[2] == 0);
    MachineState k = new_machine(1);
    run_op(k, 0xC10F);
    CHECK(k.v[1] == 0x01);
  }

  TEST_CASE("DXYN draws from VX, VY") {
    MachineState m = new_machine(1);
    m.i = kFontStart;  // glyph 0: F0 90 90 90 F0
    m.v[1] = 3;
    m.v[2] = 4;
    run_op(m, 0xD125);
    CHECK(m.pixel(3, 4));
    CHECK(m.pixel(6, 4));
    CHECK_FALSE(m.pixel(7, 4));
    CHECK(m.pixel(3, 5));
    CHECK_FALSE(m.pixel(4, 5));
    CHECK(m.v[0xF] == 0);
    run_op(m, 0xD125);
    CHECK(m.v[0xF] == 1);
    for (auto row : m.display) CHECK(row == 0);
  }

  TEST_CASE("EX9E and EXA1 test the key in VX") {
    for (unsigned key = 0; key < 16; ++key) {
      for (bool down : {false, true}) {
        auto a = machine_with({0xE59E});
        auto b = machine_with({0xE5A1});
        a.v[5] = b.v[5] = static_cast<std::uint8_t>(key | 0xF0);  // only the low nibble names the key
        const std::uint16_t mask = down ? static_cast<std::uint16_t>(1u << key) : 0x0000;
        set_keys(a, mask);
        set_keys(b, mask);
        step(a);
        step(b);
        CHECK(a.pc == (down ? 0x204 : 0x202));
        CHECK(b.pc == (down ? 0x202 : 0x204));
      }
    }
  }

  TEST_CASE("FX07 FX15 FX18 timers") {
    MachineState m = new_machine(1);
    m.v[4] = 77;
    run_op(m, 0xF415);
    run_op(m, 0xF418);
    CHECK(m.delay_timer == 77);
    CHECK(m.sound_timer == 77);
    m.delay_timer = 9;
    run_op(m, 0xF607);
    CHECK(m.v[6] == 9);
  }

  TEST_CASE("FX0A waits, press completes, lowest key wins") {
    auto m = machine_with({0xF40A, 0x7101});
    step(m);
    REQUIRE(m.waiting_for_key == 4);
    tick_frame(m, 12);
    CHECK(m.pc == 0x202);  // cycles consumed, nothing executed
    CHECK(m.v[1] == 0);
    set_keys(m, 1u << 6);
    CHECK(m.v[4] == 6);
    CHECK_FALSE(m.waiting_for_key.has_value());

    auto t = machine_with({0xF40A});
    step(t);
    set_keys(t, (1u << 2) | (1u << 6));
    CHECK(t.v[4] == 2);

    // Already-held keys do not complete a wait; a new press does.
    auto h = machine_with({0xF40A});
    set_keys(h, 1u << 3);
    step(h);
    set_keys(h, 1u << 3);
    CHECK(h.waiting_for_key.has_value());
    set_keys(h, (1u << 3) | (1u << 9));
    CHECK(h.v[4] == 9);

    auto n = machine_with({0x1200});
    set_keys(n, 0x0003);
    CHECK(n.keys == 0x0003);
    CHECK(n.v == std::array<std::uint8_t, 16>{});
  }

  TEST_CASE("FX0A release quirk") {
    QuirkFlags q;
    q.fx0a_on_release = true;
    auto m = machine_with({0xF40A}, 1, q);
    step(m);
    set_keys(m, 1u << 7);
    CHECK(m.waiting_for_key.has_value());
    set_keys(m, 0);
    CHECK(m.v[4] == 7);
    CHECK_FALSE(m.waiting_for_key.has_value());
  }

  TEST_CASE("FX1E adds to I without flags; FX29 points at glyphs") {
    MachineState m = new_machine(1);
    m.i = 0xFFE;
    m.v[2] = 5;
    m.v[0xF] = 0x33;
    run_op(m, 0xF21E);
    CHECK(m.i == 0x1003);
    CHECK(m.v[0xF] == 0x33);
    for (unsigned d = 0; d < 16; ++d) {
      m.v[1] = static_cast<std::uint8_t>(d);
      run_op(m, 0xF129);
      CHECK(m.i == kFontStart + 5 * d);
    }
  }

  TEST_CASE("FX33 stores decimal digits for every value") {
    for (unsigned value = 0; value < 256; ++value) {
      MachineState m = new_machine(1);
      m.v[3] = static_cast<std::uint8_t>(value);
      m.i = 0x300;
      run_op(m, 0xF333);
      REQUIRE(m.memory[0x300] == value / 100);
      REQUIRE(m.memory[0x301] == value / 10 % 10);
      REQUIRE(m.memory[0x302] == value % 10);
    }
    MachineState m = new_machine(1);
    m.v[3] = 156;
    m.i = 0x300;
    run_op(m, 0xF333);
    CHECK(m.memory[0x300] == 1);
    CHECK(m.memory[0x301] == 5);
    CHECK(m.memory[0x302] == 6);
    // Stores past 0xFFF wrap instead of escaping memory.
    m.i = 0xFFF;
    run_op(m, 0xF333);
    CHECK(m.memory[0xFFF] == 1);
    CHECK(m.memory[0x000] == 5);
    CHECK(m.memory[0x001] == 6);
  }

  TEST_CASE("FX55 and FX65 round trip through memory") {
    for (unsigned x = 0; x < 16; ++x) {
      MachineState m = new_machine(1);
      for (unsigned k = 0; k < 16; ++k) m.v[k] = static_cast<std::uint8_t>(0x10 + k);
      m.i = 0x400;
      run_op(m, static_cast<std::uint16_t>(0xF055 | x << 8));
      CHECK(m.i == 0x400);
      for (unsigned k = 0; k < 16; ++k) CHECK(m.memory[0x400 + k] == (k <= x ? 0x10 + k : 0));
      m.v.fill(0);
      run_op(m, static_cast<std::uint16_t>(0xF065 | x << 8));
      for (unsigned k = 0; k < 16; ++k) CHECK(m.v[k] == (k <= x ? 0x10 + k : 0));
    }
    QuirkFlags q;
    q.load_store_increments_i = true;
    MachineState m = new_machine(1, q);
    m.i = 0x400;
    run_op(m, 0xF355);
    CHECK(m.i == 0x404);
    run_op(m, 0xF265);
    CHECK(m.i == 0x407);
  }

  TEST_CASE("invalid opcode halts") {
    auto m = machine_with({0xFFFF});
    step(m);
    CHECK(m.halted);
    CHECK(m.fault == Fault::InvalidOpcode);
    const auto frozen = m;
    tick_frame(m, 12);
    CHECK(m == frozen);
  }
}
