#include "lifegym/environment.hpp"

#include <algorithm>
#include <string>

#include "lifegym/errors.hpp"

namespace lifegym {

void EnvConfig::validate() const {
  if (obs_h < 3 || obs_w < 3) throw InvalidConfig("observation grid must be at least 3x3");
  if (act_h < 1 || act_w < 1) throw InvalidConfig("action region must be at least 1x1");
  if (act_h > obs_h || act_w > obs_w) throw InvalidConfig("action region larger than observation grid");
  if (batch_n < 1) throw InvalidConfig("batch_n must be >= 1");
  if (episode_steps < 0) throw InvalidConfig("episode_steps must be >= 0");
}

ToggleAction ToggleAction::ones(const EnvConfig& cfg) {
  ToggleAction action(cfg.batch_n, cfg.act_h, cfg.act_w);
  std::fill(action.mask_.begin(), action.mask_.end(), std::uint8_t{1});
  return action;
}

bool ToggleAction::all_ones(int b) const {
  const auto first = mask_.begin() + static_cast<std::ptrdiff_t>(offset(b, 0, 0));
  return std::all_of(first, first + static_cast<std::ptrdiff_t>(h_) * w_, [](auto v) { return v != 0; });
}

bool ToggleAction::any(int b) const {
  const auto first = mask_.begin() + static_cast<std::ptrdiff_t>(offset(b, 0, 0));
  return std::any_of(first, first + static_cast<std::ptrdiff_t>(h_) * w_, [](auto v) { return v != 0; });
}

Environment::Environment(EnvConfig config) : config_(std::move(config)), sim_(engine::Exec::serial) {
  config_.validate();
  grid_ = GridBatch(config_.batch_n, config_.obs_h, config_.obs_w);
}

const GridBatch& Environment::reset() {
  grid_.clear();
  steps_ = 0;
  return grid_;
}

StepResult Environment::step(const ToggleAction& action) {
  const int n = config_.batch_n;
  if (action.batch() != n || action.height() != config_.act_h || action.width() != config_.act_w) {
    throw ShapeMismatch("action mask " + std::to_string(action.batch()) + "x" +
                        std::to_string(action.height()) + "x" + std::to_string(action.width()) +
                        " does not match config " + std::to_string(n) + "x" +
                        std::to_string(config_.act_h) + "x" + std::to_string(config_.act_w));
  }

  StepInfo info;
  info.reset.assign(static_cast<std::size_t>(n), 0);
  const int r0 = config_.act_row0();
  const int c0 = config_.act_col0();
  for (int b = 0; b < n; ++b) {
    if (action.all_ones(b)) {
      info.reset[static_cast<std::size_t>(b)] = 1;
      continue;
    }
    if (!action.any(b)) continue;
    for (int r = 0; r < config_.act_h; ++r) {
      for (int c = 0; c < config_.act_w; ++c) {
        if (action.get(b, r, c)) grid_.toggle(b, r0 + r, c0 + c);
      }
    }
  }

  // Reset instances stay cleared this tick (B0 rules would otherwise ignite them).
  sim_.advance(grid_, config_.rule, 1);
  for (int b = 0; b < n; ++b) {
    if (info.reset[static_cast<std::size_t>(b)]) grid_.clear(b);
  }
  ++steps_;

  info.step = steps_;
  info.live.resize(static_cast<std::size_t>(n));
  for (int b = 0; b < n; ++b) info.live[static_cast<std::size_t>(b)] = grid_.live_count(b);

  StepResult result;
  result.observation = grid_;
  result.reward.assign(static_cast<std::size_t>(n), 0.0);
  const bool finished = config_.episode_steps > 0 && steps_ >= config_.episode_steps;
  result.done.assign(static_cast<std::size_t>(n), finished ? 1 : 0);
  result.info = std::move(info);
  return result;
}

}  // namespace lifegym
