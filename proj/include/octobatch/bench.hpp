#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "octobatch/batch.hpp"
#include "octobatch/game.hpp"

namespace octobatch {

struct Policy {
  enum class Kind { Constant, UniformRandom };
  Kind kind = Kind::Constant;
  int action = 0;          // for Constant
  std::uint64_t seed = 0;  // for UniformRandom

  static Policy constant(int action = 0) { return {Kind::Constant, action, 0}; }
  static Policy uniform(std::uint64_t seed) { return {Kind::UniformRandom, 0, seed}; }
};

// Fills `actions` for one step. Random actions come from a splitmix64 stream
// advanced once per lane per step, so runs with equal seeds agree.
class ActionSource {
 public:
  ActionSource(Policy policy, int num_actions);
  void next(std::vector<int>& actions);

 private:
  Policy policy_;
  int num_actions_;
  std::uint64_t state_;
};

// Per-lane seeds derived from one rollout seed.
std::vector<std::uint32_t> lane_seeds(std::uint32_t seed, std::size_t n);

struct BenchResult {
  std::size_t num_envs = 0;
  int steps_per_rollout = 100;
  int repetitions = 50;
  int frame_skip = 4;
  std::vector<double> wall_time_s;  // one per repetition
  std::string error;                // non-empty when this count failed

  bool ok() const { return error.empty(); }
  double steps_per_second(std::size_t rep) const;
  double frames_per_second(std::size_t rep) const;
  std::vector<double> steps_per_second_all() const;
};

struct BenchConfig {
  std::vector<std::size_t> env_counts{1, 64, 512, 4096};
  int steps = 100;
  int reps = 50;
  Policy policy = Policy::constant(0);
  std::uint32_t seed = 0;
  ExecutionConfig execution{};
  // Time repetition r of every count before repetition r + 1 of any, so
  // slow drift in host speed spreads evenly over the counts.
  bool interleave = false;
};

// One warm-up rollout (not timed) and `reps` timed rollouts per env count.
// A count that throws (including std::bad_alloc) yields a result with
// `error` set; later counts still run.
std::vector<BenchResult> run_benchmark(const GameDef& game, const BenchConfig& config);

// Columns: num_envs,rep,wall_time_s,steps_per_s,frames_per_s,
//          steps_per_rollout,frame_skip,status
// Doubles are written with 17 significant digits. A failed count is one row
// with empty numeric fields and status "error: ...".
void write_csv(std::ostream& out, const std::vector<BenchResult>& results);
void write_csv_header(std::ostream& out);
void write_csv_rows(std::ostream& out, const BenchResult& result);

struct Spread {
  double median = 0;
  double q1 = 0;
  double q3 = 0;
  double iqr() const { return q3 - q1; }
};

// Quartiles by linear interpolation between order statistics.
Spread spread(std::vector<double> values);

std::string format_summary(const std::vector<BenchResult>& results);

struct RolloutSummary {
  std::vector<double> returns;  // summed rewards per lane over the rollout
  std::vector<std::uint64_t> episodes_finished;
  double mean_return = 0;
  double min_return = 0;
  double max_return = 0;
  std::size_t frames_written = 0;
};

// Runs `steps` vec-env steps over `n` lanes. With a dump directory, writes the
// newest frame of lane 0 after every step as a binary PGM (64x32).
RolloutSummary rollout(const GameDef& game, std::size_t n, int steps, std::uint32_t seed, Policy policy,
                       const std::optional<std::filesystem::path>& frame_dump = std::nullopt,
                       ExecutionConfig execution = {});

std::string format_rollout(const RolloutSummary& summary);

}  // namespace octobatch
