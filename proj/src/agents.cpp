#include "lifegym/agents.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lifegym/errors.hpp"
#include "lifegym/tensor_io.hpp"

namespace lifegym {

std::string to_string(AgentFamily family) {
  switch (family) {
    case AgentFamily::toggle: return "toggle";
    case AgentFamily::carla: return "carla";
    case AgentFamily::harli: return "harli";
  }
  return "?";
}

AgentFamily parse_agent_family(const std::string& name) {
  for (auto f : {AgentFamily::toggle, AgentFamily::carla, AgentFamily::harli}) {
    if (to_string(f) == name) return f;
  }
  throw InvalidConfig("unknown agent family '" + name + "'");
}

AgentConfig AgentConfig::for_env(AgentFamily family, const EnvConfig& env) {
  AgentConfig c;
  c.family = family;
  c.obs_h = env.obs_h;
  c.obs_w = env.obs_w;
  c.act_h = env.act_h;
  c.act_w = env.act_w;
  return c;
}

void AgentConfig::validate() const {
  if (act_h < 1 || act_w < 1 || act_h > obs_h || act_w > obs_w) throw InvalidConfig("agent: bad action size");
  if (family != AgentFamily::toggle) {
    if (hidden < 1 || expand < 1 || iterations < 0) throw InvalidConfig("agent: bad CA architecture");
    if (!(w_max > 0.0)) throw InvalidConfig("agent: w_max must be positive");
  }
}

Agent::Agent(AgentConfig config) : config_(config) { config_.validate(); }

void Agent::check_obs(const GridBatch& obs) const {
  if (obs.height() != config_.obs_h || obs.width() != config_.obs_w) {
    throw ShapeMismatch("agent expects " + std::to_string(config_.obs_h) + "x" + std::to_string(config_.obs_w) +
                        " observations, got " + std::to_string(obs.height()) + "x" + std::to_string(obs.width()));
  }
}

namespace {

void check_length(std::size_t expected, std::size_t got) {
  if (expected != got) {
    throw LengthMismatch("expected " + std::to_string(expected) + " parameters, got " + std::to_string(got));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Toggle

ToggleAgent::ToggleAgent(AgentConfig config)
    : Agent(config), logits_(static_cast<std::size_t>(config.act_h) * config.act_w, 0.0) {}

void ToggleAgent::set_params(std::span<const double> params) {
  check_length(logits_.size(), params.size());
  logits_.assign(params.begin(), params.end());
  reset();
}

ToggleAction ToggleAgent::pattern(int batch) const {
  ToggleAction mask(batch, config_.act_h, config_.act_w);
  for (int b = 0; b < batch; ++b)
    for (int r = 0; r < config_.act_h; ++r)
      for (int c = 0; c < config_.act_w; ++c) mask.set(b, r, c, logits_[static_cast<std::size_t>(r) * config_.act_w + c] > 0.0);
  return mask;
}

ToggleAction ToggleAgent::act(const GridBatch& obs) {
  check_obs(obs);
  if (fired_) return ToggleAction(obs.batch(), config_.act_h, config_.act_w);
  fired_ = true;
  return pattern(obs.batch());
}

// ---------------------------------------------------------------------------
// Neural CA

std::array<nn::LayerSpec, CaWeights::kLayers> ca_layer_specs(const AgentConfig& c) {
  // The cropped observation window has no toroidal neighbourhood, so its conv is zero-padded.
  return {nn::LayerSpec::conv2d(1, c.hidden, 3, nn::Padding::zero), nn::LayerSpec::conv2d(c.hidden, c.expand, 3),
          nn::LayerSpec::conv2d(c.expand, c.hidden, 1), nn::LayerSpec::conv2d(c.hidden, 1, 1)};
}

CaWeights CaWeights::zeros(const AgentConfig& config) {
  CaWeights w;
  const auto specs = ca_layer_specs(config);
  for (int l = 0; l < kLayers; ++l) {
    w.layers[l].weight = nn::Tensor(specs[l].weight_shape());
    w.layers[l].bias = nn::Tensor({specs[l].out_ch});
  }
  return w;
}

std::size_t CaWeights::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::size_t CaWeights::weight_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size();
  return n;
}

std::vector<double> CaWeights::flatten() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const auto& l : layers) {
    out.insert(out.end(), l.weight.values().begin(), l.weight.values().end());
    out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
  }
  return out;
}

void CaWeights::assign(std::span<const double> values) {
  check_length(param_count(), values.size());
  std::size_t k = 0;
  for (auto& l : layers) {
    for (auto& v : l.weight.values()) v = values[k++];
    for (auto& v : l.bias.values()) v = values[k++];
  }
}

nn::Tensor crop_observation(const GridBatch& obs, int b, const AgentConfig& config) {
  const int r0 = (config.obs_h - config.act_h) / 2;
  const int c0 = (config.obs_w - config.act_w) / 2;
  nn::Tensor t({1, 1, config.act_h, config.act_w});
  for (int r = 0; r < config.act_h; ++r)
    for (int c = 0; c < config.act_w; ++c) t.at(0, 0, r, c) = obs.get(b, r0 + r, c0 + c) ? 1.0 : 0.0;
  return t;
}

nn::Tensor ca_forward(const AgentConfig& config, const CaWeights& weights, const nn::Tensor& obs_window,
                      nn::Tensor& hidden, CaTrace* trace) {
  const auto specs = ca_layer_specs(config);
  auto conv = [&](int layer, const nn::Tensor& x) {
    return nn::conv2d_forward(x, weights.layers[layer].weight, weights.layers[layer].bias, specs[layer].padding);
  };
  auto record = [&](int layer, const nn::Tensor& pre, const nn::Tensor& post) {
    if (!trace) return;
    trace->pre[layer].push_back(pre);
    trace->post[layer].push_back(post);
  };

  if (hidden.size() == 0) hidden = nn::Tensor({1, config.hidden, config.act_h, config.act_w});
  const auto injected = conv(CaWeights::obs_in, obs_window);
  record(CaWeights::obs_in, obs_window, injected);
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] += injected[i];

  for (int it = 0; it < config.iterations; ++it) {
    auto features = conv(CaWeights::perceive, hidden);
    for (auto& v : features.values()) v = v > 0.0 ? v : 0.0;
    auto delta = conv(CaWeights::update, features);
    for (auto& v : delta.values()) v = std::tanh(v);
    record(CaWeights::perceive, hidden, features);
    record(CaWeights::update, features, delta);
    for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] += delta[i];
  }

  auto out = conv(CaWeights::head, hidden);
  for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  record(CaWeights::head, hidden, out);
  if (!out.all_finite()) throw NonFiniteValue("CA policy output is not finite");
  return out;
}

namespace {

void threshold_into(ToggleAction& action, int b, const nn::Tensor& out, double threshold) {
  for (int r = 0; r < action.height(); ++r)
    for (int c = 0; c < action.width(); ++c) action.set(b, r, c, out.at(0, 0, r, c) > threshold);
}

}  // namespace

CarlaAgent::CarlaAgent(AgentConfig config) : Agent(config), weights_(CaWeights::zeros(config_)) {}

void CarlaAgent::set_params(std::span<const double> params) {
  weights_.assign(params);
  reset();
}

ToggleAction CarlaAgent::act(const GridBatch& obs) {
  check_obs(obs);
  hidden_.resize(static_cast<std::size_t>(obs.batch()));
  output_.resize(hidden_.size());
  ToggleAction action(obs.batch(), config_.act_h, config_.act_w);
  for (int b = 0; b < obs.batch(); ++b) {
    auto& out = output_[static_cast<std::size_t>(b)];
    out = ca_forward(config_, weights_, crop_observation(obs, b, config_), hidden_[static_cast<std::size_t>(b)]);
    threshold_into(action, b, out, config_.threshold);
  }
  return action;
}

// ---------------------------------------------------------------------------
// HARLI

HarliAgent::HarliAgent(AgentConfig config) : Agent(config), base_(CaWeights::zeros(config_)) {
  genome_.assign(param_count(), 0.0);
}

std::size_t HarliAgent::param_count() const {
  return base_.param_count() + kCoefficients * base_.weight_count();
}

void HarliAgent::set_params(std::span<const double> params) {
  check_length(param_count(), params.size());
  genome_.assign(params.begin(), params.end());
  base_.assign(std::span<const double>(genome_).first(base_.param_count()));
  reset();
}

void HarliAgent::reset() {
  plastic_.clear();
  hidden_.clear();
}

CaWeights HarliAgent::initial_weights() const {
  CaWeights w = base_;
  for (auto& l : w.layers)
    for (auto& v : l.weight.values()) v = std::clamp(v, -config_.w_max, config_.w_max);
  return w;
}

CaWeights HarliAgent::plastic(int b) const {
  if (static_cast<std::size_t>(b) < plastic_.size()) return plastic_[static_cast<std::size_t>(b)];
  return initial_weights();
}

void HarliAgent::hebbian_update(CaWeights& weights, const CaTrace& trace) const {
  const auto specs = ca_layer_specs(config_);
  const double* coeff = genome_.data() + base_.param_count();
  for (int l = 0; l < CaWeights::kLayers; ++l) {
    auto& W = weights.layers[l].weight;
    const std::size_t nw = W.size();
    const bool idle = std::all_of(coeff, coeff + kCoefficients * nw, [](double v) { return v == 0.0; });
    if (idle || trace.pre[l].empty()) {
      coeff += kCoefficients * nw;
      continue;
    }
    nn::Tensor corr(W.shape()), pre(W.shape());
    nn::Tensor post_sum({W.dim(0)}), unused({W.dim(0)});
    double count = 0.0;
    for (std::size_t k = 0; k < trace.pre[l].size(); ++k) {
      const auto& x = trace.pre[l][k];
      const auto& y = trace.post[l][k];
      nn::conv2d_weight_grad(x, y, specs[l].padding, corr, post_sum);
      nn::conv2d_weight_grad(x, nn::Tensor(y.shape(), 1.0), specs[l].padding, pre, unused);
      count += static_cast<double>(y.dim(2)) * y.dim(3);
    }
    const std::size_t per_out = nw / static_cast<std::size_t>(W.dim(0));
    for (std::size_t j = 0; j < nw; ++j, coeff += kCoefficients) {
      const double eta = coeff[0], A = coeff[1], B = coeff[2], C = coeff[3], D = coeff[4];
      const double post = post_sum[j / per_out] / count;
      const double dw = eta * (A * corr[j] / count + B * pre[j] / count + C * post + D);
      W[j] = std::clamp(W[j] + dw, -config_.w_max, config_.w_max);
    }
  }
}

ToggleAction HarliAgent::act(const GridBatch& obs) {
  check_obs(obs);
  const auto n = static_cast<std::size_t>(obs.batch());
  if (plastic_.size() != n) {
    plastic_.assign(n, initial_weights());
    hidden_.assign(n, nn::Tensor{});
  }
  ToggleAction action(obs.batch(), config_.act_h, config_.act_w);
  for (int b = 0; b < obs.batch(); ++b) {
    CaTrace trace;
    const auto out = ca_forward(config_, plastic_[static_cast<std::size_t>(b)], crop_observation(obs, b, config_),
                                hidden_[static_cast<std::size_t>(b)], &trace);
    threshold_into(action, b, out, config_.threshold);
    hebbian_update(plastic_[static_cast<std::size_t>(b)], trace);
  }
  return action;
}

// ---------------------------------------------------------------------------
// Construction and genomes

std::unique_ptr<Agent> make_agent(const AgentConfig& config) {
  switch (config.family) {
    case AgentFamily::toggle: return std::make_unique<ToggleAgent>(config);
    case AgentFamily::carla: return std::make_unique<CarlaAgent>(config);
    case AgentFamily::harli: return std::make_unique<HarliAgent>(config);
  }
  throw InvalidConfig("unknown agent family");
}

std::vector<double> initial_params(const AgentConfig& config, std::uint64_t seed) {
  auto agent = make_agent(config);
  std::vector<double> params(agent->param_count(), 0.0);
  if (config.family == AgentFamily::toggle) return params;
  std::mt19937_64 rng(seed);
  auto weights = CaWeights::zeros(config);
  const auto specs = ca_layer_specs(config);
  for (int l = 0; l < CaWeights::kLayers; ++l) {
    const double a = std::sqrt(1.0 / specs[l].fan_in());
    std::uniform_real_distribution<double> init(-a, a);
    for (auto& v : weights.layers[l].weight.values()) v = init(rng);
    for (auto& v : weights.layers[l].bias.values()) v = init(rng);
  }
  const auto flat = weights.flatten();
  std::copy(flat.begin(), flat.end(), params.begin());
  return params;
}

void save_genome(const std::filesystem::path& base, const Agent& agent) {
  const auto& c = agent.config();
  io::Manifest m;
  m.add("format", std::string("lifegym-genome"));
  m.add("version", 1);
  m.add("family", to_string(c.family));
  m.add("obs_h", c.obs_h);
  m.add("obs_w", c.obs_w);
  m.add("act_h", c.act_h);
  m.add("act_w", c.act_w);
  m.add("hidden", c.hidden);
  m.add("expand", c.expand);
  m.add("iterations", c.iterations);
  m.add("threshold", c.threshold);
  m.add("w_max", c.w_max);
  m.add("params", static_cast<long long>(agent.param_count()));
  m.save(base.string() + ".manifest");
  io::write_f64_le(base.string() + ".bin", agent.get_params());
}

std::unique_ptr<Agent> load_genome(const std::filesystem::path& base) {
  const auto m = io::Manifest::load(base.string() + ".manifest");
  if (m.get("format") != "lifegym-genome") throw IoError("not a genome manifest");
  AgentConfig c;
  c.family = parse_agent_family(m.get("family"));
  c.obs_h = static_cast<int>(m.get_int("obs_h"));
  c.obs_w = static_cast<int>(m.get_int("obs_w"));
  c.act_h = static_cast<int>(m.get_int("act_h"));
  c.act_w = static_cast<int>(m.get_int("act_w"));
  c.hidden = static_cast<int>(m.get_int("hidden"));
  c.expand = static_cast<int>(m.get_int("expand"));
  c.iterations = static_cast<int>(m.get_int("iterations"));
  c.threshold = m.get_double("threshold");
  c.w_max = m.get_double("w_max");
  auto agent = make_agent(c);
  agent->set_params(io::read_f64_le(base.string() + ".bin"));
  return agent;
}

}  // namespace lifegym
