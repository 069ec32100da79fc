#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lifegym/environment.hpp"
#include "lifegym/grid.hpp"
#include "lifegym/nn.hpp"

namespace lifegym {

enum class AgentFamily { toggle, carla, harli };

std::string to_string(AgentFamily family);
/// Throws InvalidConfig.
AgentFamily parse_agent_family(const std::string& name);

struct AgentConfig {
  AgentFamily family = AgentFamily::toggle;
  int obs_h = 128;
  int obs_w = 128;
  int act_h = 64;
  int act_w = 64;
  // CARLA / HARLI
  int hidden = 8;
  int expand = 16;
  int iterations = 4;
  double threshold = 0.5;  // toggle iff output > threshold
  double w_max = 3.0;      // HARLI plastic weight bound

  static AgentConfig for_env(AgentFamily family, const EnvConfig& env);
  /// Throws InvalidConfig.
  void validate() const;
};

/// An evolvable policy. One instance serves one environment; batched
/// observations get one independent internal state per instance.
class Agent {
 public:
  virtual ~Agent() = default;

  const AgentConfig& config() const { return config_; }
  AgentFamily family() const { return config_.family; }

  /// Throws ShapeMismatch if obs does not match the configured size.
  virtual ToggleAction act(const GridBatch& obs) = 0;
  /// Restores the deterministic initial per-episode state.
  virtual void reset() = 0;

  virtual std::size_t param_count() const = 0;
  virtual std::vector<double> get_params() const = 0;
  /// Throws LengthMismatch. Also resets the agent.
  virtual void set_params(std::span<const double> params) = 0;

 protected:
  explicit Agent(AgentConfig config);
  void check_obs(const GridBatch& obs) const;

  AgentConfig config_;
};

/// One logit per action cell; the thresholded mask is applied on the first
/// step of an episode only.
class ToggleAgent : public Agent {
 public:
  explicit ToggleAgent(AgentConfig config);

  ToggleAction act(const GridBatch& obs) override;
  void reset() override { fired_ = false; }
  std::size_t param_count() const override { return logits_.size(); }
  std::vector<double> get_params() const override { return logits_; }
  void set_params(std::span<const double> params) override;

  bool fired() const { return fired_; }
  /// The mask emitted at step 0, for one instance.
  ToggleAction pattern(int batch = 1) const;

 private:
  std::vector<double> logits_;
  bool fired_ = false;
};

/// Weights of the neural-CA policy, in genome order.
struct CaWeights {
  static constexpr int kLayers = 4;
  enum Layer { obs_in = 0, perceive = 1, update = 2, head = 3 };
  std::array<nn::LayerParams, kLayers> layers;

  static CaWeights zeros(const AgentConfig& config);
  std::size_t param_count() const;
  std::size_t weight_count() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> values);
};

/// Layer geometry of the neural-CA policy.
std::array<nn::LayerSpec, CaWeights::kLayers> ca_layer_specs(const AgentConfig& config);

/// Activations recorded during one environment step, used by the Hebbian rule.
struct CaTrace {
  // per layer: inputs and (post-nonlinearity) outputs of each application
  std::array<std::vector<nn::Tensor>, CaWeights::kLayers> pre;
  std::array<std::vector<nn::Tensor>, CaWeights::kLayers> post;
};

/// One environment step of the neural CA on a single instance. Updates
/// `hidden` in place and returns the head output in (0, 1).
nn::Tensor ca_forward(const AgentConfig& config, const CaWeights& weights, const nn::Tensor& obs_window,
                      nn::Tensor& hidden, CaTrace* trace = nullptr);

/// Central act_h x act_w window of instance b as a (1, 1, act_h, act_w) tensor.
nn::Tensor crop_observation(const GridBatch& obs, int b, const AgentConfig& config);

/// Continuous-valued neural cellular automaton policy.
class CarlaAgent : public Agent {
 public:
  explicit CarlaAgent(AgentConfig config);

  ToggleAction act(const GridBatch& obs) override;
  void reset() override { hidden_.clear(); }
  std::size_t param_count() const override { return weights_.param_count(); }
  std::vector<double> get_params() const override { return weights_.flatten(); }
  void set_params(std::span<const double> params) override;

  const CaWeights& weights() const { return weights_; }
  /// Last head output per instance.
  const std::vector<nn::Tensor>& last_output() const { return output_; }

 private:
  CaWeights weights_;
  std::vector<nn::Tensor> hidden_;
  std::vector<nn::Tensor> output_;
};

/// Neural CA whose weights change during the episode under evolved
/// Hebbian rules: w += eta * (A <pre*post> + B <pre> + C <post> + D),
/// clamped to [-w_max, w_max]. Biases are not plastic.
class HarliAgent : public Agent {
 public:
  static constexpr int kCoefficients = 5;  // eta, A, B, C, D

  explicit HarliAgent(AgentConfig config);

  ToggleAction act(const GridBatch& obs) override;
  void reset() override;
  std::size_t param_count() const override;
  std::vector<double> get_params() const override { return genome_; }
  void set_params(std::span<const double> params) override;

  /// Current plastic weights of one instance (the initial weights before any step).
  CaWeights plastic(int b = 0) const;

 private:
  CaWeights initial_weights() const;
  void hebbian_update(CaWeights& weights, const CaTrace& trace) const;

  std::vector<double> genome_;
  CaWeights base_;
  std::vector<CaWeights> plastic_;
  std::vector<nn::Tensor> hidden_;
};

/// Throws InvalidConfig.
std::unique_ptr<Agent> make_agent(const AgentConfig& config);

/// Initial genome: U(-a, a) network weights (a = sqrt(1/fan_in)) for the CA
/// families, zero plasticity coefficients, zero logits for Toggle.
std::vector<double> initial_params(const AgentConfig& config, std::uint64_t seed);

/// `<base>.bin` holds the float64 genome, `<base>.manifest` the family and config.
void save_genome(const std::filesystem::path& base, const Agent& agent);
std::unique_ptr<Agent> load_genome(const std::filesystem::path& base);

}  // namespace lifegym
