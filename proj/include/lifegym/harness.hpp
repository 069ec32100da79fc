#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "lifegym/agents.hpp"
#include "lifegym/engine.hpp"
#include "lifegym/pattern_io.hpp"
#include "lifegym/rewards.hpp"
#include "lifegym/run_config.hpp"

namespace lifegym {

// ---------------------------------------------------------------------------
// Rollouts

struct RolloutOptions {
  bool record_frames = false;
  int frame_stride = 1;
};

struct RolloutTrace {
  double fitness = 0.0;                          // cumulative reward, averaged over episodes and instances
  std::vector<double> rewards;                   // per-step total reward, first episode, instance 0
  std::vector<std::vector<double>> components;   // [wrapper][step], unweighted, first episode, instance 0
  std::vector<GridBatch> frames;                 // post-step observations at the frame stride, first episode
  std::vector<int> frame_steps;                  // step index (1-based) of each frame
  ToggleAction first_action;                     // the agent's step-0 action
};

/// Runs cfg.episodes episodes of cfg.steps steps. The agent and chain are
/// reset at each episode start; the chain keeps any learned state.
RolloutTrace rollout(const RunConfig& cfg, Agent& agent, WrapperChain& chain, const RolloutOptions& options = {});

/// Fresh agent with `params` and a fresh chain from cfg.wrappers.
RolloutTrace rollout_genome(const RunConfig& cfg, const std::vector<double>& params, const RolloutOptions& options = {});

// ---------------------------------------------------------------------------
// Evolution

struct GenerationStats {
  long generation = 0;
  double best = 0.0;
  double mean = 0.0;
  double best_ever = 0.0;
  double sigma = 0.0;
};

struct EvolveResult {
  std::vector<GenerationStats> history;
  std::vector<double> champion;
  double champion_fitness = -std::numeric_limits<double>::infinity();
  long champion_generation = -1;
};

/// Return false to stop after this generation.
using GenerationCallback = std::function<bool(const GenerationStats&, const EvolveResult&)>;

/// Initial CMA-ES mean for the configured agent family.
std::vector<double> initial_mean(const RunConfig& cfg);

/// Fitness of each candidate. Rollouts run in parallel unless novelty is
/// persistent, in which case `shared` is used in candidate order.
std::vector<double> evaluate_population(const RunConfig& cfg, const std::vector<std::vector<double>>& candidates,
                                        WrapperChain* shared = nullptr);

/// ask -> rollouts -> tell for cfg.generations generations. With cfg.out set,
/// writes config.json, history.csv, a CMA-ES checkpoint each generation and
/// champion artifacts on every improvement. Non-finite values abort the run
/// after logging the generation.
EvolveResult evolve(const RunConfig& cfg, const GenerationCallback& on_generation = {});

// ---------------------------------------------------------------------------
// Mobility

struct MobilityReport {
  bool mobile = false;
  int period = 0;  // smallest recurrence period found (0 = none within the horizon)
  int dr = 0;
  int dc = 0;
  int first_step = -1;  // t at which the recurrence starts
  std::size_t population = 0;
  nlohmann::json to_json() const;
};

/// Simulates the pattern on an empty grid large enough that it never wraps
/// within `horizon` steps, and looks for the smallest p with state(t+p) a
/// translation of state(t). Mobile iff that translation is nonzero.
MobilityReport detect_mobility(const Pattern& pattern, const RuleSet& rule, int horizon);

/// Objects present after `horizon` steps (clusters of live cells separated by
/// at least `gap` dead cells) that are themselves mobile.
std::vector<MobilityReport> emitted_ships(const Pattern& pattern, const RuleSet& rule, int horizon, int gap = 3);

// ---------------------------------------------------------------------------
// Replay and export

/// Toggle logits (+1 live, -1 dead) placing `pattern` centred in the action
/// region. Throws ShapeMismatch if it does not fit.
std::vector<double> toggle_params_for(const Pattern& pattern, int act_h, int act_w);

/// The agent's step-0 action on an empty board, as a pattern.
Pattern action_pattern(Agent& agent, const RuleSet& rule);

/// Writes frames.rle (one RLE block per frame, preceded by `#C step t`),
/// rewards.csv (step,total,<wrapper>...) and summary.json into dir.
void write_replay(const std::filesystem::path& dir, const RunConfig& cfg, const RolloutTrace& trace);

// ---------------------------------------------------------------------------
// Benchmark

struct BenchRow {
  std::string rule;
  std::string exec;
  engine::BenchResult result;
};

/// Throws UsageError if seconds <= 0.
std::vector<BenchRow> run_bench(const std::vector<int>& sizes, const std::vector<RuleSet>& rules,
                                const std::vector<int>& batches, double seconds,
                                const std::vector<engine::Exec>& execs = {engine::Exec::serial});
std::string bench_csv(const std::vector<BenchRow>& rows);
std::string bench_table(const std::vector<BenchRow>& rows);

}  // namespace lifegym
