#include "octobatch/romtools.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "octobatch/env.hpp"

namespace octobatch {

std::vector<std::uint8_t> load_rom_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RomError(RomError::Code::Io, "cannot open ROM " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw RomError(RomError::Code::Io, "error reading ROM " + path.string());
  validate_rom(bytes);
  return bytes;
}

// ---------------------------------------------------------------------------

namespace {

std::string hex(unsigned value, int digits) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%0*X", digits, value);
  return buf;
}

std::string reg(unsigned r) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "V%X", r & 0xF);
  return buf;
}

std::pair<const char*, std::string> render(const DecodedInstr& d) {
  const std::string vx = reg(d.x), vy = reg(d.y);
  const std::string nnn = hex(d.nnn, 3), nn = hex(d.nn, 2);
  switch (d.kind) {
    case Kind::Sys: return {"SYS", nnn};
    case Kind::Cls: return {"CLS", ""};
    case Kind::Ret: return {"RET", ""};
    case Kind::Jump: return {"JP", nnn};
    case Kind::Call: return {"CALL", nnn};
    case Kind::SkipEqImm: return {"SE", vx + ", " + nn};
    case Kind::SkipNeImm: return {"SNE", vx + ", " + nn};
    case Kind::SkipEqReg: return {"SE", vx + ", " + vy};
    case Kind::LoadImm: return {"LD", vx + ", " + nn};
    case Kind::AddImm: return {"ADD", vx + ", " + nn};
    case Kind::Move: return {"LD", vx + ", " + vy};
    case Kind::Or: return {"OR", vx + ", " + vy};
    case Kind::And: return {"AND", vx + ", " + vy};
    case Kind::Xor: return {"XOR", vx + ", " + vy};
    case Kind::Add: return {"ADD", vx + ", " + vy};
    case Kind::Sub: return {"SUB", vx + ", " + vy};
    case Kind::ShiftRight: return {"SHR", vx + ", " + vy};
    case Kind::SubReverse: return {"SUBN", vx + ", " + vy};
    case Kind::ShiftLeft: return {"SHL", vx + ", " + vy};
    case Kind::SkipNeReg: return {"SNE", vx + ", " + vy};
    case Kind::LoadIndex: return {"LD", "I, " + nnn};
    case Kind::JumpOffset: return {"JP", "V0, " + nnn};
    case Kind::Random: return {"RND", vx + ", " + nn};
    case Kind::Draw: return {"DRW", vx + ", " + vy + ", " + std::to_string(d.n)};
    case Kind::SkipKey: return {"SKP", vx};
    case Kind::SkipNoKey: return {"SKNP", vx};
    case Kind::LoadDelay: return {"LD", vx + ", DT"};
    case Kind::WaitKey: return {"LD", vx + ", K"};
    case Kind::SetDelay: return {"LD", "DT, " + vx};
    case Kind::SetSound: return {"LD", "ST, " + vx};
    case Kind::AddIndex: return {"ADD", "I, " + vx};
    case Kind::FontChar: return {"LD", "F, " + vx};
    case Kind::BcdStore: return {"LD", "B, " + vx};
    case Kind::StoreRegs: return {"LD", "[I], " + vx};
    case Kind::LoadRegs: return {"LD", vx + ", [I]"};
    case Kind::Invalid: break;
  }
  return {".word", hex(d.opcode, 4)};
}

}  // namespace

Disassembly disassemble(std::span<const std::uint8_t> rom) {
  Disassembly out;
  const std::size_t words = rom.size() / 2;
  out.lines.reserve(words + 1);
  const std::size_t end = kProgramStart + rom.size();
  for (std::size_t w = 0; w < words; ++w) {
    DisasmLine line;
    line.address = static_cast<std::uint16_t>(kProgramStart + 2 * w);
    line.opcode = static_cast<std::uint16_t>(rom[2 * w] << 8 | rom[2 * w + 1]);
    const DecodedInstr d = decode(line.opcode);
    auto [mnemonic, operands] = render(d);
    line.mnemonic = mnemonic;
    line.operands = std::move(operands);
    line.is_data = d.kind == Kind::Invalid;
    if ((d.kind == Kind::Jump || d.kind == Kind::Call || d.kind == Kind::JumpOffset) && d.nnn >= kProgramStart &&
        d.nnn < end) {
      out.labels.insert(d.nnn);
    }
    out.lines.push_back(std::move(line));
  }
  if (rom.size() % 2 == 1) {
    DisasmLine line;
    line.address = static_cast<std::uint16_t>(kProgramStart + rom.size() - 1);
    line.opcode = rom.back();
    line.mnemonic = ".byte";
    line.operands = hex(rom.back(), 2);
    line.is_data = true;
    line.is_byte = true;
    out.lines.push_back(std::move(line));
  }
  return out;
}

std::string format_line(const DisasmLine& line, bool is_label) {
  char head[32];
  if (line.is_byte) {
    std::snprintf(head, sizeof head, "0x%03X: %02X    ", line.address, line.opcode & 0xFF);
  } else {
    std::snprintf(head, sizeof head, "0x%03X: %04X  ", line.address, line.opcode);
  }
  std::string s = head + line.mnemonic;
  if (!line.operands.empty()) s += " " + line.operands;
  if (is_label) {
    char tag[16];
    std::snprintf(tag, sizeof tag, "  ; L%03X", line.address);
    s += tag;
  }
  return s;
}

std::string format_disassembly(const Disassembly& d) {
  std::string out;
  for (const auto& line : d.lines) {
    out += format_line(line, d.labels.count(line.address) != 0);
    out += '\n';
  }
  return out;
}

std::vector<BcdSite> scan_bcd(std::span<const std::uint8_t> rom) {
  std::vector<BcdSite> sites;
  for (std::size_t k = 0; k + 1 < rom.size(); k += 2) {
    if ((rom[k] & 0xF0) == 0xF0 && rom[k + 1] == 0x33) {
      sites.push_back({k, static_cast<std::uint8_t>(rom[k] & 0x0F)});
    }
  }
  return sites;
}

// ---------------------------------------------------------------------------

TraceRecorder::TraceRecorder(int sample_every, std::vector<std::uint16_t> mem_addrs) : sample_every_(sample_every) {
  if (sample_every < 1) throw std::invalid_argument("sample_every must be at least 1");
  for (auto& a : mem_addrs) a &= 0x0FFF;
  trace_.mem_addrs = std::move(mem_addrs);
}

void TraceRecorder::on_frame(const MachineState& m, std::uint64_t frame) {
  if (seen_++ % static_cast<std::uint64_t>(sample_every_) != 0) return;
  TraceSample s;
  s.frame = frame;
  s.v = m.v;
  s.mem.reserve(trace_.mem_addrs.size());
  for (auto a : trace_.mem_addrs) s.mem.push_back(m.memory[a]);
  trace_.samples.push_back(std::move(s));
}

Trace record_trace(const GameDef& game, std::uint32_t seed, std::uint64_t frames, const KeyScript& script,
                   int sample_every, std::vector<std::uint16_t> mem_addrs) {
  EnvState env = env_reset(game, seed);
  MachineState& m = env.machine;
  TraceRecorder recorder(sample_every, std::move(mem_addrs));
  for (std::uint64_t f = 0; f < frames; ++f) {
    set_keys(m, script ? script(f, m) : 0);
    tick_frame(m, game.cycles_per_frame);
    recorder.on_frame(m, f);
  }
  return recorder.take();
}

void write_trace(std::ostream& out, const Trace& trace) {
  out << "# frame v0..v15" << (trace.mem_addrs.empty() ? "" : " mem...") << '\n';
  if (!trace.mem_addrs.empty()) {
    out << "# mem";
    for (auto a : trace.mem_addrs) out << ' ' << hex(a, 3);
    out << '\n';
  }
  for (const auto& s : trace.samples) {
    out << s.frame;
    for (auto r : s.v) out << ' ' << unsigned{r};
    for (auto b : s.mem) out << ' ' << unsigned{b};
    out << '\n';
  }
}

Trace read_trace(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw TraceError(TraceError::Code::Format, "line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string word;
      ss >> word;
      if (word != "mem") continue;
      if (!trace.samples.empty()) fail("'# mem' must precede samples");
      trace.mem_addrs.clear();
      while (ss >> word) {
        try {
          std::size_t used = 0;
          const unsigned long a = std::stoul(word, &used, 0);
          if (used != word.size() || a > 0xFFF) fail("bad address '" + word + "'");
          trace.mem_addrs.push_back(static_cast<std::uint16_t>(a));
        } catch (const std::logic_error&) {
          fail("bad address '" + word + "'");
        }
      }
      continue;
    }
    std::istringstream ss(line);
    std::vector<std::uint64_t> fields;
    std::string word;
    while (ss >> word) {
      if (word.find_first_not_of("0123456789") != std::string::npos) fail("non-numeric field '" + word + "'");
      try {
        fields.push_back(std::stoull(word));
      } catch (const std::out_of_range&) {
        fail("value out of range '" + word + "'");
      }
    }
    if (fields.size() != 17 + trace.mem_addrs.size()) {
      fail("expected " + std::to_string(17 + trace.mem_addrs.size()) + " fields, got " + std::to_string(fields.size()));
    }
    TraceSample s;
    s.frame = fields[0];
    if (!trace.samples.empty() && s.frame <= trace.samples.back().frame) fail("frame indices must increase");
    for (std::size_t k = 1; k < fields.size(); ++k) {
      if (fields[k] > 255) fail("byte value out of range");
    }
    for (std::size_t k = 0; k < 16; ++k) s.v[k] = static_cast<std::uint8_t>(fields[1 + k]);
    for (std::size_t k = 17; k < fields.size(); ++k) s.mem.push_back(static_cast<std::uint8_t>(fields[k]));
    trace.samples.push_back(std::move(s));
  }
  return trace;
}

Trace read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TraceError(TraceError::Code::Io, "cannot open trace " + path.string());
  return read_trace(in);
}

void write_trace_file(const std::filesystem::path& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) throw TraceError(TraceError::Code::Io, "cannot write trace " + path.string());
  write_trace(out, trace);
  if (!out) throw TraceError(TraceError::Code::Io, "error writing trace " + path.string());
}

namespace {

SeriesTrend summarize(std::string name, int index, const std::vector<std::uint8_t>& values, int min_hold) {
  SeriesTrend t;
  t.name = std::move(name);
  t.index = index;
  t.samples = values.size();
  std::array<bool, 256> seen{};
  for (auto x : values) seen[x] = true;
  t.distinct_values = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));

  // Collapse into runs of equal values; keep runs long enough to count.
  bool have_prev = false;
  std::uint8_t prev = 0;
  for (std::size_t i = 0; i < values.size();) {
    std::size_t j = i;
    while (j < values.size() && values[j] == values[i]) ++j;
    if (static_cast<int>(j - i) >= min_hold) {
      if (have_prev) {
        if (values[i] > prev) ++t.increases;
        if (values[i] < prev) ++t.decreases;
      }
      prev = values[i];
      have_prev = true;
    } else {
      ++t.transient_runs;
    }
    i = j;
  }
  t.trend_score = static_cast<std::int64_t>(t.increases) - static_cast<std::int64_t>(t.decreases);
  return t;
}

}  // namespace

TrendReport analyze_trends(const Trace& trace, const TrendOptions& options) {
  if (trace.samples.empty()) throw TraceError(TraceError::Code::EmptyTrace, "trace has no samples");
  if (options.min_hold < 1) throw std::invalid_argument("min_hold must be at least 1");
  TrendReport report;
  std::vector<std::uint8_t> values(trace.samples.size());
  for (int r = 0; r < 16; ++r) {
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = trace.samples[k].v[static_cast<std::size_t>(r)];
    report.series.push_back(summarize("V" + std::to_string(r), r, values, options.min_hold));
  }
  for (std::size_t m = 0; m < trace.mem_addrs.size(); ++m) {
    for (std::size_t k = 0; k < values.size(); ++k) {
      const auto& mem = trace.samples[k].mem;
      if (mem.size() != trace.mem_addrs.size()) {
        throw TraceError(TraceError::Code::Format, "sample has wrong number of memory values");
      }
      values[k] = mem[m];
    }
    report.series.push_back(summarize("mem[" + hex(trace.mem_addrs[m], 3) + "]", 16 + static_cast<int>(m), values,
                                      options.min_hold));
  }

  std::vector<int> order(report.series.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& s = report.series;
  auto is_bcd = [&](int index) {
    return std::find(options.bcd_registers.begin(), options.bcd_registers.end(), index) !=
           options.bcd_registers.end();
  };
  auto ranked = [&](int sign) {
    std::vector<int> r = order;
    std::stable_sort(r.begin(), r.end(), [&](int a, int b) {
      const auto& ta = s[static_cast<std::size_t>(a)];
      const auto& tb = s[static_cast<std::size_t>(b)];
      if (ta.trend_score != tb.trend_score) return sign * ta.trend_score > sign * tb.trend_score;
      if (sign > 0) {
        const bool ba = is_bcd(ta.index), bb = is_bcd(tb.index);
        if (ba != bb) return ba;
      }
      if (ta.transient_runs != tb.transient_runs) return ta.transient_runs < tb.transient_runs;
      if (ta.distinct_values != tb.distinct_values) return ta.distinct_values > tb.distinct_values;
      return ta.index < tb.index;
    });
    return r;
  };
  report.score_ranking = ranked(+1);
  report.lives_ranking = ranked(-1);
  return report;
}

std::string format_trend_report(const TrendReport& report, std::size_t top) {
  std::ostringstream out;
  auto row = [&](const SeriesTrend& t) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "  %-12s trend=%+lld inc=%zu dec=%zu distinct=%zu transient=%zu samples=%zu\n",
                  t.name.c_str(), static_cast<long long>(t.trend_score), t.increases, t.decreases, t.distinct_values,
                  t.transient_runs, t.samples);
    out << buf;
  };
  out << "score candidates:\n";
  for (std::size_t k = 0; k < std::min(top, report.score_ranking.size()); ++k) {
    row(report.series[static_cast<std::size_t>(report.score_ranking[k])]);
  }
  out << "lives candidates:\n";
  for (std::size_t k = 0; k < std::min(top, report.lives_ranking.size()); ++k) {
    row(report.series[static_cast<std::size_t>(report.lives_ranking[k])]);
  }
  return out.str();
}

}  // namespace octobatch
