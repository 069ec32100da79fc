#pragma once

#include <cstdint>
#include <vector>

#include "lifegym/engine.hpp"
#include "lifegym/grid.hpp"
#include "lifegym/rules.hpp"

namespace lifegym {

struct EnvConfig {
  int obs_h = 128;
  int obs_w = 128;
  int act_h = 64;
  int act_w = 64;
  RuleSet rule = rules::kLife;
  int batch_n = 1;
  int episode_steps = 0;  // 0 = unbounded

  // The action region is centred in the observation grid.
  int act_row0() const { return (obs_h - act_h) / 2; }
  int act_col0() const { return (obs_w - act_w) / 2; }
  bool in_action_region(int r, int c) const {
    return r >= act_row0() && r < act_row0() + act_h && c >= act_col0() && c < act_col0() + act_w;
  }

  /// Throws InvalidConfig.
  void validate() const;
};

/// batch_n x 1 x act_h x act_w binary toggle mask.
class ToggleAction {
 public:
  ToggleAction() = default;
  ToggleAction(int n, int h, int w) : n_(n), h_(h), w_(w), mask_(static_cast<std::size_t>(n) * h * w, 0) {}
  static ToggleAction zeros(const EnvConfig& cfg) { return {cfg.batch_n, cfg.act_h, cfg.act_w}; }
  static ToggleAction ones(const EnvConfig& cfg);

  int batch() const { return n_; }
  int height() const { return h_; }
  int width() const { return w_; }

  bool get(int b, int r, int c) const { return mask_[offset(b, r, c)] != 0; }
  void set(int b, int r, int c, bool on) { mask_[offset(b, r, c)] = on ? 1 : 0; }

  bool all_ones(int b) const;
  bool any(int b) const;

  bool operator==(const ToggleAction&) const = default;

 private:
  std::size_t offset(int b, int r, int c) const {
    return (static_cast<std::size_t>(b) * h_ + r) * w_ + c;
  }

  int n_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<std::uint8_t> mask_;
};

struct StepInfo {
  int step = 0;                     // steps taken since reset, including this one
  std::vector<std::size_t> live;    // live cells per instance after the step
  std::vector<std::uint8_t> reset;  // 1 where an all-ones action cleared the instance
};

struct StepResult {
  GridBatch observation;
  std::vector<double> reward;
  std::vector<std::uint8_t> done;
  StepInfo info;
};

/// Life-like universe behind a toggle-mask action interface.
///
/// step(): an all-ones mask clears its instance and skips the update for
/// that tick; otherwise the mask is XOR-ed into the centred action region
/// and one rule update is applied. The base reward is always 0.0.
class Environment {
 public:
  explicit Environment(EnvConfig config);

  const GridBatch& reset();
  StepResult step(const ToggleAction& action);

  const EnvConfig& config() const { return config_; }
  const GridBatch& observation() const { return grid_; }
  int step_count() const { return steps_; }

 private:
  EnvConfig config_;
  GridBatch grid_;
  engine::Simulator sim_;
  int steps_ = 0;
};

}  // namespace lifegym
