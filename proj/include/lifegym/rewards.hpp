#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lifegym/environment.hpp"
#include "lifegym/grid.hpp"
#include "lifegym/nn.hpp"

namespace lifegym {

/// A reward source that observes each post-update observation.
class RewardWrapper {
 public:
  virtual ~RewardWrapper() = default;
  virtual std::string name() const = 0;
  /// One reward per batch instance. May update internal state.
  virtual std::vector<double> compute(const GridBatch& obs, const StepInfo& info) = 0;
  /// Called on environment reset. Learned state survives; per-episode state does not.
  virtual void on_reset() {}
};

struct SpeedConfig {
  bool ignore_action_region = false;  // drop action-region cells instead of mapping them to (0,0)
};

/// Euclidean change of the live-cell centre of mass between consecutive steps,
/// in coordinates centred on the grid. Cells inside the action region count as
/// sitting at (0,0); an empty grid has centre (0,0).
class SpeedReward : public RewardWrapper {
 public:
  SpeedReward(const EnvConfig& env, SpeedConfig config = {});
  std::string name() const override { return "speed"; }
  std::vector<double> compute(const GridBatch& obs, const StepInfo& info) override;
  void on_reset() override;

  std::array<double, 2> center(const GridBatch& obs, int b) const;
  const std::vector<std::array<double, 2>>& previous() const { return prev_; }

 private:
  EnvConfig env_;
  SpeedConfig config_;
  std::vector<std::array<double, 2>> prev_;
};

struct CornerConfig {
  int square_h = 0;  // 0 = obs_h / 8
  int square_w = 0;  // 0 = obs_w / 8
  double band_radius = 2.0;  // Chebyshev distance to the diagonal segment
  double positive = 1.0;
  double negative = -1.0;
};

/// Region occupancy reward. Each cell belongs to at most one class; the
/// top-left square takes priority over the diagonal band.
class CornerReward : public RewardWrapper {
 public:
  enum Region : std::uint8_t { none = 0, top_left = 1, band = 2, right_corner = 3 };

  CornerReward(const EnvConfig& env, CornerConfig config = {});
  std::string name() const override { return "corner"; }
  std::vector<double> compute(const GridBatch& obs, const StepInfo& info) override;

  Region region(int r, int c) const { return regions_[static_cast<std::size_t>(r) * w_ + c]; }
  /// Per-class live-cell counts of one instance.
  std::array<std::size_t, 4> occupancy(const GridBatch& obs, int b) const;

 private:
  int h_;
  int w_;
  CornerConfig config_;
  std::vector<Region> regions_;
};

struct RndConfig {
  std::vector<int> channels{8, 16, 16};
  int pool = 4;
  int embed = 16;
  double lr = 2e-3;
  std::uint64_t target_seed = 1;
  std::uint64_t predictor_seed = 2;
  bool shared = false;  // one predictor for the whole batch
};

struct AeConfig {
  std::vector<int> channels{8, 4};  // hidden conv widths; a 1-channel sigmoid layer follows
  double lr = 0.5;
  std::uint64_t seed = 3;
  bool shared = false;
};

std::vector<nn::LayerSpec> rnd_layers(const RndConfig& config, int h, int w);
std::vector<nn::LayerSpec> ae_layers(const AeConfig& config);

/// Observation instance b as a (1, 1, h, w) tensor of 0.0/1.0.
nn::Tensor to_tensor(const GridBatch& obs, int b);
nn::Tensor to_tensor(const GridBatch& obs);

/// Random network distillation: reward is the predictor's MSE against a
/// frozen random target, measured before one SGD step on the observation.
class RndReward : public RewardWrapper {
 public:
  RndReward(const EnvConfig& env, RndConfig config = {});
  std::string name() const override { return "rnd"; }
  std::vector<double> compute(const GridBatch& obs, const StepInfo& info) override;

  const nn::Network& target() const { return target_; }
  const nn::Network& predictor(int b = 0) const { return predictors_[config_.shared ? 0 : b]; }

 private:
  RndConfig config_;
  nn::Network target_;
  std::vector<nn::Network> predictors_;
};

/// Reconstruction error of a fully convolutional toroidal autoencoder,
/// measured before one SGD step on the observation.
class AutoencoderReward : public RewardWrapper {
 public:
  AutoencoderReward(const EnvConfig& env, AeConfig config = {});
  std::string name() const override { return "ae"; }
  std::vector<double> compute(const GridBatch& obs, const StepInfo& info) override;

  const nn::Network& model(int b = 0) const { return models_[config_.shared ? 0 : b]; }

 private:
  AeConfig config_;
  std::vector<nn::Network> models_;
};

/// Configuration for one link of a chain.
struct WrapperSpec {
  std::string name;  // speed | corner | rnd | ae
  double weight = 1.0;
  SpeedConfig speed;
  CornerConfig corner;
  RndConfig rnd;
  AeConfig ae;
};

/// Throws InvalidConfig on an unknown name.
std::unique_ptr<RewardWrapper> make_wrapper(const WrapperSpec& spec, const EnvConfig& env);

/// Weighted sum of wrapper rewards.
class WrapperChain {
 public:
  WrapperChain() = default;
  WrapperChain(const std::vector<WrapperSpec>& specs, const EnvConfig& env);

  void add(std::unique_ptr<RewardWrapper> wrapper, double weight);
  std::size_t size() const { return links_.size(); }
  bool empty() const { return links_.empty(); }
  const RewardWrapper& wrapper(std::size_t i) const { return *links_[i].wrapper; }
  double weight(std::size_t i) const { return links_[i].weight; }

  /// Returns base + sum_i weight_i * reward_i per instance.
  std::vector<double> compute(const GridBatch& obs, const StepInfo& info, const std::vector<double>& base);
  void on_reset();

  /// Unweighted rewards of the last compute(), [wrapper][instance].
  const std::vector<std::vector<double>>& last_components() const { return last_; }

 private:
  struct Link {
    std::unique_ptr<RewardWrapper> wrapper;
    double weight;
  };
  std::vector<Link> links_;
  std::vector<std::vector<double>> last_;
};

/// Environment whose step() reward includes the chain's bonuses.
class WrappedEnvironment {
 public:
  WrappedEnvironment(EnvConfig config, WrapperChain chain);

  const GridBatch& reset();
  StepResult step(const ToggleAction& action);

  Environment& env() { return env_; }
  const Environment& env() const { return env_; }
  WrapperChain& chain() { return chain_; }
  const EnvConfig& config() const { return env_.config(); }
  const GridBatch& observation() const { return env_.observation(); }

 private:
  Environment env_;
  WrapperChain chain_;
};

}  // namespace lifegym
