#include "octobatch/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <new>
#include <numeric>
#include <ostream>
#include <sstream>

#include "octobatch/env.hpp"

namespace octobatch {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

ActionSource::ActionSource(Policy policy, int num_actions)
    : policy_(policy), num_actions_(num_actions), state_(policy.seed) {
  if (policy.kind == Policy::Kind::Constant && (policy.action < 0 || policy.action >= num_actions)) {
    throw EnvError(EnvError::Code::ActionOutOfRange,
                   "constant action " + std::to_string(policy.action) + " outside 0.." + std::to_string(num_actions - 1));
  }
}

void ActionSource::next(std::vector<int>& actions) {
  if (policy_.kind == Policy::Kind::Constant) {
    std::fill(actions.begin(), actions.end(), policy_.action);
    return;
  }
  const auto n = static_cast<std::uint64_t>(num_actions_);
  for (auto& a : actions) a = static_cast<int>(splitmix64(state_) % n);
}

std::vector<std::uint32_t> lane_seeds(std::uint32_t seed, std::size_t n) {
  std::vector<std::uint32_t> seeds(n);
  std::uint64_t state = seed;
  for (auto& s : seeds) s = static_cast<std::uint32_t>(splitmix64(state));
  return seeds;
}

double BenchResult::steps_per_second(std::size_t rep) const {
  return static_cast<double>(num_envs) * static_cast<double>(steps_per_rollout) / wall_time_s.at(rep);
}

double BenchResult::frames_per_second(std::size_t rep) const { return steps_per_second(rep) * frame_skip; }

std::vector<double> BenchResult::steps_per_second_all() const {
  std::vector<double> out;
  for (std::size_t r = 0; r < wall_time_s.size(); ++r) out.push_back(steps_per_second(r));
  return out;
}

std::vector<BenchResult> run_benchmark(const GameDef& game, const BenchConfig& config) {
  if (config.env_counts.empty()) throw std::invalid_argument("env_counts must not be empty");
  if (config.steps < 1 || config.reps < 1) throw std::invalid_argument("steps and reps must be positive");
  for (auto n : config.env_counts) {
    if (n < 1) throw std::invalid_argument("env counts must be at least 1");
  }
  // Validate the policy once so a bad constant action is a config error, not a per-row failure.
  [[maybe_unused]] const ActionSource check(config.policy, game.num_actions());

  using clock = std::chrono::steady_clock;
  struct Slot {
    std::vector<std::uint32_t> seeds;
    std::unique_ptr<VecEnv> env;
    std::unique_ptr<ActionSource> source;
    std::vector<int> actions;
  };
  std::vector<BenchResult> results(config.env_counts.size());
  std::vector<Slot> slots(config.env_counts.size());

  auto fail = [&](std::size_t k, const std::string& why) {
    results[k].wall_time_s.clear();
    results[k].error = why;
    slots[k] = Slot{};
  };
  // Runs `body` for count k, turning exceptions into a failure row.
  auto guarded = [&](std::size_t k, auto&& body) {
    if (!results[k].ok()) return;
    try {
      body(results[k], slots[k]);
    } catch (const std::bad_alloc&) {
      fail(k, "out of memory");
    } catch (const std::exception& e) {
      fail(k, e.what());
    }
  };
  auto setup = [&](BenchResult& r, Slot& slot) {
    slot.seeds = lane_seeds(config.seed, r.num_envs);
    slot.env = std::make_unique<VecEnv>(game, slot.seeds, config.execution);
    slot.source = std::make_unique<ActionSource>(config.policy, game.num_actions());
    slot.actions.assign(r.num_envs, 0);
  };
  auto run_steps = [&](Slot& slot) {
    for (int s = 0; s < config.steps; ++s) {
      slot.source->next(slot.actions);
      slot.env->step(slot.actions);
    }
  };
  auto warm_up = [&](BenchResult&, Slot& slot) { run_steps(slot); };
  auto timed = [&](BenchResult& r, Slot& slot) {
    slot.env->reset(slot.seeds);
    const auto t0 = clock::now();
    run_steps(slot);
    const auto t1 = clock::now();
    r.wall_time_s.push_back(std::chrono::duration<double>(t1 - t0).count());
  };

  for (std::size_t k = 0; k < results.size(); ++k) {
    auto& r = results[k];
    r.num_envs = config.env_counts[k];
    r.steps_per_rollout = config.steps;
    r.repetitions = config.reps;
    r.frame_skip = game.frame_skip;
  }
  if (config.interleave) {
    for (std::size_t k = 0; k < results.size(); ++k) {
      guarded(k, setup);
      guarded(k, warm_up);
    }
    for (int rep = 0; rep < config.reps; ++rep) {
      for (std::size_t k = 0; k < results.size(); ++k) guarded(k, timed);
    }
  } else {
    for (std::size_t k = 0; k < results.size(); ++k) {
      guarded(k, setup);
      guarded(k, warm_up);
      for (int rep = 0; rep < config.reps; ++rep) guarded(k, timed);
      slots[k] = Slot{};  // release before the next count
    }
  }
  return results;
}

void write_csv_header(std::ostream& out) {
  out << "num_envs,rep,wall_time_s,steps_per_s,frames_per_s,steps_per_rollout,frame_skip,status\n";
}

void write_csv_rows(std::ostream& out, const BenchResult& r) {
  if (!r.ok()) {
    std::string detail = r.error;
    std::replace(detail.begin(), detail.end(), ',', ';');
    std::replace(detail.begin(), detail.end(), '\n', ' ');
    out << r.num_envs << ",,,,," << r.steps_per_rollout << ',' << r.frame_skip << ",error: " << detail << '\n';
    return;
  }
  for (std::size_t k = 0; k < r.wall_time_s.size(); ++k) {
    out << r.num_envs << ',' << k << ',' << fmt_double(r.wall_time_s[k]) << ',' << fmt_double(r.steps_per_second(k))
        << ',' << fmt_double(r.frames_per_second(k)) << ',' << r.steps_per_rollout << ',' << r.frame_skip << ",ok\n";
  }
}

void write_csv(std::ostream& out, const std::vector<BenchResult>& results) {
  write_csv_header(out);
  for (const auto& r : results) write_csv_rows(out, r);
}

Spread spread(std::vector<double> values) {
  if (values.empty()) return {};
  std::sort(values.begin(), values.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
  };
  return {q(0.5), q(0.25), q(0.75)};
}

std::string format_summary(const std::vector<BenchResult>& results) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%10s %16s %14s %16s\n", "num_envs", "median steps/s", "IQR steps/s",
                "median frames/s");
  out << buf;
  for (const auto& r : results) {
    if (!r.ok()) {
      std::snprintf(buf, sizeof buf, "%10zu  failed: %s\n", r.num_envs, r.error.c_str());
      out << buf;
      continue;
    }
    const Spread s = spread(r.steps_per_second_all());
    std::snprintf(buf, sizeof buf, "%10zu %16.0f %14.0f %16.0f\n", r.num_envs, s.median, s.iqr(),
                  s.median * r.frame_skip);
    out << buf;
  }
  return out.str();
}

RolloutSummary rollout(const GameDef& game, std::size_t n, int steps, std::uint32_t seed, Policy policy,
                       const std::optional<std::filesystem::path>& frame_dump, ExecutionConfig execution) {
  if (n < 1) throw std::invalid_argument("rollout needs at least one lane");
  if (steps < 0) throw std::invalid_argument("steps must be non-negative");
  if (frame_dump) {
    std::error_code ec;
    std::filesystem::create_directories(*frame_dump, ec);
    if (ec) throw RomError(RomError::Code::Io, "cannot create " + frame_dump->string() + ": " + ec.message());
  }
  VecEnv env(game, lane_seeds(seed, n), execution);
  ActionSource source(policy, game.num_actions());
  std::vector<int> actions(n);
  RolloutSummary summary;
  summary.returns.assign(n, 0.0);
  summary.episodes_finished.assign(n, 0);
  for (int s = 0; s < steps; ++s) {
    source.next(actions);
    const VecStepResult& r = env.step(actions);
    for (std::size_t j = 0; j < n; ++j) {
      summary.returns[j] += r.reward[j];
      if (r.terminated[j] || r.truncated[j]) ++summary.episodes_finished[j];
    }
    if (frame_dump) {
      const Observation obs = env.observation(0);
      const PackedFrame& frame = obs.planes[kStackedFrames - 1];
      char name[32];
      std::snprintf(name, sizeof name, "frame_%05d.pgm", s);
      const auto path = *frame_dump / name;
      std::ofstream out(path, std::ios::binary);
      out << "P5\n" << kDisplayWidth << ' ' << kDisplayHeight << "\n255\n";
      for (int y = 0; y < kDisplayHeight; ++y) {
        for (int x = 0; x < kDisplayWidth; ++x) {
          const bool lit = (frame[static_cast<std::size_t>(y * 8 + x / 8)] >> (7 - x % 8)) & 1;
          out.put(lit ? static_cast<char>(255) : 0);
        }
      }
      if (!out) throw RomError(RomError::Code::Io, "cannot write " + path.string());
      ++summary.frames_written;
    }
  }
  const auto [lo, hi] = std::minmax_element(summary.returns.begin(), summary.returns.end());
  summary.min_return = *lo;
  summary.max_return = *hi;
  summary.mean_return = std::accumulate(summary.returns.begin(), summary.returns.end(), 0.0) / static_cast<double>(n);
  return summary;
}

std::string format_rollout(const RolloutSummary& s) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "lanes=%zu mean_return=%.3f min_return=%.0f max_return=%.0f\n", s.returns.size(),
                s.mean_return, s.min_return, s.max_return);
  out << buf;
  for (std::size_t j = 0; j < s.returns.size(); ++j) {
    std::snprintf(buf, sizeof buf, "lane %zu: return=%.0f episodes_finished=%llu\n", j, s.returns[j],
                  static_cast<unsigned long long>(s.episodes_finished[j]));
    out << buf;
  }
  if (s.frames_written) out << "frames written: " << s.frames_written << '\n';
  return out.str();
}

}  // namespace octobatch
