#include "lifegym/rewards.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "lifegym/errors.hpp"

namespace lifegym {

// ---------------------------------------------------------------------------
// Speed

SpeedReward::SpeedReward(const EnvConfig& env, SpeedConfig config)
    : env_(env), config_(config), prev_(static_cast<std::size_t>(env.batch_n), {0.0, 0.0}) {}

std::array<double, 2> SpeedReward::center(const GridBatch& obs, int b) const {
  const double cr = (obs.height() - 1) / 2.0;
  const double cc = (obs.width() - 1) / 2.0;
  double sr = 0.0, sc = 0.0;
  std::size_t mass = 0;
  for (int r = 0; r < obs.height(); ++r) {
    const auto row = obs.row(b, r);
    for (int wi = 0; wi < obs.words_per_row(); ++wi) {
      for (auto word = row[static_cast<std::size_t>(wi)]; word; word &= word - 1) {
        const int c = wi * GridBatch::kWordBits + std::countr_zero(word);
        if (env_.in_action_region(r, c)) {
          if (!config_.ignore_action_region) ++mass;  // contributes (0,0)
          continue;
        }
        sr += r - cr;
        sc += c - cc;
        ++mass;
      }
    }
  }
  if (mass == 0) return {0.0, 0.0};
  return {sr / static_cast<double>(mass), sc / static_cast<double>(mass)};
}

std::vector<double> SpeedReward::compute(const GridBatch& obs, const StepInfo&) {
  std::vector<double> out(static_cast<std::size_t>(obs.batch()));
  prev_.resize(out.size(), {0.0, 0.0});
  for (int b = 0; b < obs.batch(); ++b) {
    const auto now = center(obs, b);
    auto& before = prev_[static_cast<std::size_t>(b)];
    out[static_cast<std::size_t>(b)] = std::hypot(now[0] - before[0], now[1] - before[1]);
    before = now;
  }
  return out;
}

void SpeedReward::on_reset() { std::fill(prev_.begin(), prev_.end(), std::array<double, 2>{0.0, 0.0}); }

// ---------------------------------------------------------------------------
// Corner

namespace {

// Chebyshev distance from (r, c) to the segment (0,0)-(r1, c1). The distance
// along the segment parameter is convex, so a ternary search finds the minimum.
double chebyshev_to_segment(double r, double c, double r1, double c1) {
  auto f = [&](double t) { return std::max(std::abs(r - t * r1), std::abs(c - t * c1)); };
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 100; ++i) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (f(m1) <= f(m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  return std::min({f(0.5 * (lo + hi)), f(0.0), f(1.0)});
}

}  // namespace

CornerReward::CornerReward(const EnvConfig& env, CornerConfig config)
    : h_(env.obs_h), w_(env.obs_w), config_(config), regions_(static_cast<std::size_t>(h_) * w_, none) {
  const int sh = config_.square_h > 0 ? config_.square_h : h_ / 8;
  const int sw = config_.square_w > 0 ? config_.square_w : w_ / 8;
  const double r1 = env.act_row0();
  const double c1 = env.act_col0();
  for (int r = 0; r < h_; ++r) {
    for (int c = 0; c < w_; ++c) {
      Region reg = none;
      if (r < sh && c < sw) {
        reg = top_left;
      } else if (c >= w_ - sw && (r < sh || r >= h_ - sh)) {
        reg = right_corner;
      } else if (chebyshev_to_segment(r, c, r1, c1) <= config_.band_radius + 1e-9) {
        reg = band;
      }
      regions_[static_cast<std::size_t>(r) * w_ + c] = reg;
    }
  }
}

std::array<std::size_t, 4> CornerReward::occupancy(const GridBatch& obs, int b) const {
  if (obs.height() != h_ || obs.width() != w_) throw ShapeMismatch("corner reward: observation size differs");
  std::array<std::size_t, 4> counts{};
  for (int r = 0; r < h_; ++r) {
    const auto row = obs.row(b, r);
    for (int wi = 0; wi < obs.words_per_row(); ++wi) {
      for (auto word = row[static_cast<std::size_t>(wi)]; word; word &= word - 1) {
        const int c = wi * GridBatch::kWordBits + std::countr_zero(word);
        ++counts[region(r, c)];
      }
    }
  }
  return counts;
}

std::vector<double> CornerReward::compute(const GridBatch& obs, const StepInfo&) {
  std::vector<double> out(static_cast<std::size_t>(obs.batch()));
  for (int b = 0; b < obs.batch(); ++b) {
    const auto n = occupancy(obs, b);
    out[static_cast<std::size_t>(b)] = config_.positive * static_cast<double>(n[top_left] + n[band]) +
                                       config_.negative * static_cast<double>(n[right_corner]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Novelty models

std::vector<nn::LayerSpec> rnd_layers(const RndConfig& config, int h, int w) {
  if (config.channels.empty() || config.pool < 1 || config.embed < 1) throw InvalidConfig("rnd: bad architecture");
  if (h % config.pool != 0 || w % config.pool != 0) {
    throw InvalidConfig("rnd: pool " + std::to_string(config.pool) + " must divide the observation size");
  }
  std::vector<nn::LayerSpec> layers;
  int in = 1;
  for (int ch : config.channels) {
    layers.push_back(nn::LayerSpec::conv2d(in, ch, 3));
    layers.push_back(nn::LayerSpec::relu());
    in = ch;
  }
  layers.push_back(nn::LayerSpec::avg_pool(config.pool));
  layers.push_back(nn::LayerSpec::flatten());
  layers.push_back(nn::LayerSpec::dense(in * (h / config.pool) * (w / config.pool), config.embed));
  return layers;
}

std::vector<nn::LayerSpec> ae_layers(const AeConfig& config) {
  std::vector<nn::LayerSpec> layers;
  int in = 1;
  for (int ch : config.channels) {
    layers.push_back(nn::LayerSpec::conv2d(in, ch, 3));
    layers.push_back(nn::LayerSpec::relu());
    in = ch;
  }
  layers.push_back(nn::LayerSpec::conv2d(in, 1, 3));
  layers.push_back(nn::LayerSpec::sigmoid());
  return layers;
}

nn::Tensor to_tensor(const GridBatch& obs, int b) {
  nn::Tensor t({1, 1, obs.height(), obs.width()});
  const auto bytes = obs.to_bytes(b);
  for (std::size_t i = 0; i < bytes.size(); ++i) t[i] = bytes[i];
  return t;
}

nn::Tensor to_tensor(const GridBatch& obs) {
  nn::Tensor t({obs.batch(), 1, obs.height(), obs.width()});
  const std::size_t plane = static_cast<std::size_t>(obs.height()) * obs.width();
  for (int b = 0; b < obs.batch(); ++b) {
    const auto bytes = obs.to_bytes(b);
    std::copy(bytes.begin(), bytes.end(), t.data() + static_cast<std::size_t>(b) * plane);
  }
  return t;
}

namespace {

nn::Tensor slice(const nn::Tensor& t, int b) {
  std::vector<int> shape = t.shape();
  shape[0] = 1;
  nn::Tensor out(shape);
  const std::size_t per = out.size();
  std::copy(t.data() + static_cast<std::size_t>(b) * per, t.data() + static_cast<std::size_t>(b + 1) * per, out.data());
  return out;
}

// Per-instance pre-step losses, then one SGD step per model (or one batched
// step on the shared model).
std::vector<double> learn(std::vector<nn::Network>& models, bool shared, const nn::Tensor& x, const nn::Tensor& target,
                          double lr) {
  const int n = x.dim(0);
  std::vector<double> out(static_cast<std::size_t>(n));
  if (shared) {
    const auto y = models[0].forward(x);
    for (int b = 0; b < n; ++b) out[static_cast<std::size_t>(b)] = nn::mse(slice(y, b), slice(target, b));
    models[0].sgd_step(x, target, lr);
    return out;
  }
  for (int b = 0; b < n; ++b) {
    out[static_cast<std::size_t>(b)] = models[static_cast<std::size_t>(b)].sgd_step(slice(x, b), slice(target, b), lr);
  }
  return out;
}

}  // namespace

RndReward::RndReward(const EnvConfig& env, RndConfig config)
    : config_(std::move(config)), target_(rnd_layers(config_, env.obs_h, env.obs_w), config_.target_seed) {
  if (!(config_.lr > 0.0)) throw InvalidConfig("rnd: lr must be positive");
  const nn::Network predictor(target_.layers(), config_.predictor_seed);
  predictors_.assign(config_.shared ? 1 : static_cast<std::size_t>(env.batch_n), predictor);
}

std::vector<double> RndReward::compute(const GridBatch& obs, const StepInfo&) {
  const auto x = to_tensor(obs);
  const auto embedding = target_.forward(x);
  return learn(predictors_, config_.shared, x, embedding, config_.lr);
}

AutoencoderReward::AutoencoderReward(const EnvConfig& env, AeConfig config) : config_(std::move(config)) {
  if (!(config_.lr > 0.0)) throw InvalidConfig("ae: lr must be positive");
  const nn::Network model(ae_layers(config_), config_.seed);
  models_.assign(config_.shared ? 1 : static_cast<std::size_t>(env.batch_n), model);
}

std::vector<double> AutoencoderReward::compute(const GridBatch& obs, const StepInfo&) {
  const auto x = to_tensor(obs);
  return learn(models_, config_.shared, x, x, config_.lr);
}

// ---------------------------------------------------------------------------
// Chain

std::unique_ptr<RewardWrapper> make_wrapper(const WrapperSpec& spec, const EnvConfig& env) {
  if (spec.name == "speed") return std::make_unique<SpeedReward>(env, spec.speed);
  if (spec.name == "corner") return std::make_unique<CornerReward>(env, spec.corner);
  if (spec.name == "rnd") return std::make_unique<RndReward>(env, spec.rnd);
  if (spec.name == "ae") return std::make_unique<AutoencoderReward>(env, spec.ae);
  throw InvalidConfig("unknown reward wrapper '" + spec.name + "'");
}

WrapperChain::WrapperChain(const std::vector<WrapperSpec>& specs, const EnvConfig& env) {
  for (const auto& spec : specs) add(make_wrapper(spec, env), spec.weight);
}

void WrapperChain::add(std::unique_ptr<RewardWrapper> wrapper, double weight) {
  if (!std::isfinite(weight)) throw InvalidConfig("wrapper weight must be finite");
  links_.push_back({std::move(wrapper), weight});
}

std::vector<double> WrapperChain::compute(const GridBatch& obs, const StepInfo& info, const std::vector<double>& base) {
  std::vector<double> total = base;
  total.resize(static_cast<std::size_t>(obs.batch()), 0.0);
  last_.resize(links_.size());
  for (std::size_t i = 0; i < links_.size(); ++i) {
    last_[i] = links_[i].wrapper->compute(obs, info);
    for (std::size_t b = 0; b < total.size(); ++b) total[b] += links_[i].weight * last_[i][b];
  }
  return total;
}

void WrapperChain::on_reset() {
  for (auto& link : links_) link.wrapper->on_reset();
}

WrappedEnvironment::WrappedEnvironment(EnvConfig config, WrapperChain chain)
    : env_(std::move(config)), chain_(std::move(chain)) {}

const GridBatch& WrappedEnvironment::reset() {
  chain_.on_reset();
  return env_.reset();
}

StepResult WrappedEnvironment::step(const ToggleAction& action) {
  auto result = env_.step(action);
  result.reward = chain_.compute(result.observation, result.info, result.reward);
  return result;
}

}  // namespace lifegym
