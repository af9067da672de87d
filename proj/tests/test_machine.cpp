#include "doctest.h"
#include "octobatch/machine.hpp"
#include "test_util.hpp"

using namespace octobatch;
using testutil::machine_with;
using testutil::Rng;
using testutil::step;

namespace {

// xorshift32 written out longhand on 64-bit integers with explicit masking.
std::uint64_t xorshift_oracle(std::uint64_t s) {
  const std::uint64_t mask = 0xFFFFFFFFull;
  s = (s ^ (s << 13)) & mask;
  s = (s ^ (s >> 17)) & mask;
  s = (s ^ (s << 5)) & mask;
  return s;
}

}  // namespace

TEST_SUITE("machine") {
  TEST_CASE("new_machine") {
    const auto m = new_machine(1);
    CHECK(m.pc == 0x200);
    CHECK(m.v == std::array<std::uint8_t, 16>{});
    CHECK(m.memory[0x50] == 0xF0);
    CHECK(std::equal(kFont.begin(), kFont.end(), m.memory.begin() + 0x50));
    CHECK(m.memory[0x4F] == 0);
    CHECK(m.memory[0xA0] == 0);
    CHECK(new_machine(0).rng == 0x9E3779B9u);
    CHECK(new_machine(5).rng == 5u);
    CHECK(m.quirks == QuirkFlags{false, false, false, true, false});
  }

  TEST_CASE("load_rom boundaries") {
    auto m = new_machine(1);
    load_rom(m, std::vector<std::uint8_t>{0xA2, 0xF0});
    CHECK(m.memory[0x200] == 0xA2);
    CHECK(m.memory[0x201] == 0xF0);

    std::vector<std::uint8_t> full(3584, 0x11);
    full.back() = 0x99;
    auto f = new_machine(1);
    load_rom(f, full);
    CHECK(f.memory[0xFFF] == 0x99);

    std::vector<std::uint8_t> over(3585, 0);
    try {
      load_rom(f, over);
      FAIL("expected RomError");
    } catch (const RomError& e) {
      CHECK(e.code() == RomError::Code::TooLarge);
    }
    try {
      load_rom(f, std::vector<std::uint8_t>{});
      FAIL("expected RomError");
    } catch (const RomError& e) {
      CHECK(e.code() == RomError::Code::Empty);
    }
  }

  TEST_CASE("fetch") {
    auto m = machine_with({0xA2F0, 0x00E0});
    CHECK(fetch(m) == 0xA2F0);
    CHECK(m.pc == 0x202);
    CHECK(fetch(m) == 0x00E0);
    CHECK(m.pc == 0x204);

    auto edge = new_machine(1);
    edge.pc = 0xFFE;
    edge.memory[0xFFE] = 0x12;
    edge.memory[0xFFF] = 0x34;
    CHECK(fetch(edge) == 0x1234);

    auto out = new_machine(1);
    out.pc = 0x0FFF;
    CHECK_FALSE(fetch(out).has_value());
    CHECK(out.halted);
    CHECK(out.fault == Fault::PcOutOfRange);
  }

  TEST_CASE("running off the end of memory halts instead of leaving range") {
    auto m = new_machine(1);
    m.pc = 0xFFE;  // 0x0000 there is a SYS no-op, then pc = 0x1000 would be next
    tick_frame(m, 12);
    CHECK(m.halted);
    CHECK(m.fault == Fault::PcOutOfRange);
    // pc stays where the failed fetch found it; only running machines keep pc < 4096.
    CHECK(m.pc == 0x1000);
    CHECK(m.delay_timer == 0);
  }

  TEST_CASE("rng_next matches the oracle") {
    const auto r = rng_next(1);
    CHECK(r.state == 0x42021u);
    CHECK(r.byte == 0x21);
    CHECK(xorshift_oracle(1) == 0x42021u);
    CHECK(rng_next(r.state).state == rng_next(rng_next(1).state).state);
    std::uint32_t s = 1;
    std::uint64_t o = 1;
    for (int k = 0; k < 100000; ++k) {
      const auto step = rng_next(s);
      o = xorshift_oracle(o);
      REQUIRE(step.state == o);
      REQUIRE(step.byte == (o & 0xFF));
      REQUIRE(step.state != 0u);
      s = step.state;
    }
  }

  TEST_CASE("draw twice erases") {
    auto m = new_machine(1);
    m.i = 0x300;
    const std::uint8_t sprite[] = {0xFF, 0x81, 0xA5, 0x3C};
    std::copy(std::begin(sprite), std::end(sprite), m.memory.begin() + 0x300);
    draw_sprite(m, 10, 10, 4);
    CHECK(m.v[0xF] == 0);
    CHECK(m.pixel(10, 10));
    CHECK(m.pixel(17, 10));
    draw_sprite(m, 10, 10, 4);
    CHECK(m.v[0xF] == 1);
    for (auto row : m.display) CHECK(row == 0);
  }

  TEST_CASE("clipping at the right and bottom edges") {
    auto m = new_machine(1);
    m.i = 0x300;
    m.memory[0x300] = 0xFF;
    m.memory[0x301] = 0xFF;
    draw_sprite(m, 60, 31, 2);
    CHECK(m.display[31] == 0xFull);
    CHECK(m.display[0] == 0);  // second row clipped, not wrapped

    QuirkFlags wrap;
    wrap.clip_sprites = false;
    auto w = new_machine(1, wrap);
    w.i = 0x300;
    w.memory[0x300] = 0xFF;
    w.memory[0x301] = 0xFF;
    draw_sprite(w, 60, 31, 2);
    CHECK(w.display[31] == 0xF00000000000000Full);
    CHECK(w.display[0] == 0xF00000000000000Full);
  }

  TEST_CASE("start coordinates wrap") {
    auto a = new_machine(1);
    auto b = new_machine(1);
    a.i = b.i = kFontStart;
    draw_sprite(a, 74, 40, 5);
    draw_sprite(b, 10, 8, 5);
    CHECK(a.display == b.display);
  }

  TEST_CASE("sprite reads past 0xFFF are zero") {
    auto m = new_machine(1);
    m.i = 0xFFE;
    m.memory[0xFFE] = 0x80;
    m.memory[0xFFF] = 0x80;
    m.memory[0x000] = 0xFF;
    draw_sprite(m, 0, 0, 4);
    CHECK(m.display[0] == 1ull << 63);
    CHECK(m.display[1] == 1ull << 63);
    CHECK(m.display[2] == 0);
    CHECK(m.display[3] == 0);
  }

  TEST_CASE("double draw identity on random machines") {
    Rng rng(11);
    for (int t = 0; t < 2000; ++t) {
      QuirkFlags q;
      q.clip_sprites = rng.below(2) == 0;
      auto m = new_machine(1, q);
      for (auto& row : m.display) row = rng.next();
      for (auto& b : m.memory) b = static_cast<std::uint8_t>(rng.next());
      m.i = static_cast<std::uint16_t>(rng.below(0x1000));
      const auto x = static_cast<std::uint8_t>(rng.below(256));
      const auto y = static_cast<std::uint8_t>(rng.below(256));
      const auto n = static_cast<std::uint8_t>(rng.below(16));
      const auto before = m.display;
      draw_sprite(m, x, y, n);
      draw_sprite(m, x, y, n);
      REQUIRE(m.display == before);
    }
  }

  TEST_CASE("tick_frame timers") {
    auto m = machine_with({0x1200});
    m.delay_timer = 5;
    m.sound_timer = 1;
    tick_frame(m, 12);
    CHECK(m.delay_timer == 4);
    CHECK(m.sound_timer == 0);
    tick_frame(m, 12);
    CHECK(m.sound_timer == 0);
  }

  TEST_CASE("12 cycles over a 2-instruction loop") {
    // 0x200: ADD V1, 1 ; 0x202: JP 0x200
    auto m = machine_with({0x7101, 0x1200});
    tick_frame(m, 12);
    CHECK(m.v[1] == 6);
    CHECK(m.pc == 0x200);
  }

  TEST_CASE("timer monotonicity on random programs") {
    Rng rng(5);
    int checked = 0;
    for (int t = 0; t < 300; ++t) {
      std::vector<std::uint8_t> rom(64);
      for (auto& b : rom) b = static_cast<std::uint8_t>(rng.next());
      auto m = new_machine(static_cast<std::uint32_t>(t + 1));
      load_rom(m, rom);
      for (int f = 0; f < 20 && !m.halted; ++f) {
        // Timer writes inside the frame are legitimate; compare against the
        // value the program left behind by replaying without the decrement.
        auto probe = m;
        auto ref = m;
        tick_frame(probe, 12);
        for (int c = 0; c < 12 && !ref.halted; ++c) {
          if (ref.waiting_for_key) continue;
          step(ref);
        }
        if (ref.halted) continue;
        CHECK(probe.delay_timer == (ref.delay_timer == 0 ? 0 : ref.delay_timer - 1));
        CHECK(probe.sound_timer == (ref.sound_timer == 0 ? 0 : ref.sound_timer - 1));
        m = probe;
        ++checked;
      }
    }
    CHECK(checked > 100);
  }

  TEST_CASE("execution stays inside memory for every opcode") {
    // With I near the top, every memory-touching instruction must wrap or clip.
    for (unsigned op = 0; op <= 0xFFFF; ++op) {
      auto m = new_machine(3);
      m.i = 0xFFD;
      for (unsigned k = 0; k < 16; ++k) m.v[k] = static_cast<std::uint8_t>(0xF0 + k);
      m.sp = 1;
      m.stack[0] = 0x300;
      execute(m, decode(static_cast<std::uint16_t>(op)));
      REQUIRE(m.sp <= 16);
      if (!m.halted) REQUIRE(m.pc < 4096);
    }
  }

  TEST_CASE("same inputs, same machine") {
    Rng keys(3);
    std::vector<std::uint8_t> rom(200);
    Rng bytes(8);
    for (auto& b : rom) b = static_cast<std::uint8_t>(bytes.next());
    auto a = new_machine(42);
    auto b = new_machine(42);
    load_rom(a, rom);
    load_rom(b, rom);
    for (int f = 0; f < 500; ++f) {
      const auto mask = static_cast<std::uint16_t>(keys.next());
      set_keys(a, mask);
      set_keys(b, mask);
      tick_frame(a, 12);
      tick_frame(b, 12);
    }
    CHECK(a == b);
  }

  TEST_CASE("pack and unpack") {
    DisplayRows rows{};
    CHECK(pack_display(rows) == PackedFrame{});
    rows[0] = 1ull << 63;
    CHECK(pack_display(rows)[0] == 0x80);
    rows = {};
    rows[31] = 1;
    CHECK(pack_display(rows)[255] == 0x01);
    Rng rng(1);
    for (auto& r : rows) r = rng.next();
    CHECK(unpack_display(pack_display(rows)) == rows);
  }
}
