#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "lifegym/agents.hpp"
#include "lifegym/errors.hpp"

using namespace lifegym;

namespace {

AgentConfig small(AgentFamily family, int obs = 24, int act = 8) {
  AgentConfig c;
  c.family = family;
  c.obs_h = c.obs_w = obs;
  c.act_h = c.act_w = act;
  return c;
}

GridBatch random_obs(std::mt19937_64& rng, int n, int size, double density = 0.3) {
  GridBatch g(n, size, size);
  std::bernoulli_distribution coin(density);
  for (int b = 0; b < n; ++b)
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) g.set(b, r, c, coin(rng));
  return g;
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

std::size_t count_on(const ToggleAction& a) {
  std::size_t n = 0;
  for (int b = 0; b < a.batch(); ++b)
    for (int r = 0; r < a.height(); ++r)
      for (int c = 0; c < a.width(); ++c) n += a.get(b, r, c);
  return n;
}

}  // namespace

TEST_CASE("toggle: fires its thresholded mask once per episode") {
  auto cfg = small(AgentFamily::toggle);
  ToggleAgent agent(cfg);
  std::vector<double> logits(64, -1.0);
  logits[0] = 0.5;
  logits[9] = 2.0;
  logits[10] = 0.0;  // not strictly positive
  agent.set_params(logits);
  GridBatch obs(1, 24, 24);
  const auto first = agent.act(obs);
  CHECK(first.get(0, 0, 0));
  CHECK(first.get(0, 1, 1));
  CHECK_FALSE(first.get(0, 1, 2));
  CHECK(count_on(first) == 2);
  for (int t = 0; t < 5; ++t) CHECK_FALSE(agent.act(obs).any(0));

  agent.reset();
  CHECK(agent.act(obs) == first);
}

TEST_CASE("toggle: strongly negative logits give an empty action") {
  ToggleAgent agent(small(AgentFamily::toggle));
  agent.set_params(std::vector<double>(64, -100.0));
  CHECK(count_on(agent.act(GridBatch(1, 24, 24))) == 0);
}

TEST_CASE("toggle: genome length is one logit per action cell") {
  EnvConfig env;
  ToggleAgent agent(AgentConfig::for_env(AgentFamily::toggle, env));
  CHECK(agent.param_count() == 4096);
  CHECK_THROWS_AS(agent.set_params(std::vector<double>(4095)), LengthMismatch);
}

TEST_CASE("CA genome sizes") {
  EnvConfig env;
  CHECK(make_agent(AgentConfig::for_env(AgentFamily::carla, env))->param_count() == 1393);
  CHECK(make_agent(AgentConfig::for_env(AgentFamily::harli, env))->param_count() == 1393 + 5 * 1360);
}

TEST_CASE("get/set round-trips for every family") {
  std::mt19937_64 rng(1);
  for (auto f : {AgentFamily::toggle, AgentFamily::carla, AgentFamily::harli}) {
    auto agent = make_agent(small(f));
    const auto p = random_vector(rng, agent->param_count(), 1.0);
    agent->set_params(p);
    CHECK(agent->get_params() == p);
    auto twin = make_agent(small(f));
    twin->set_params(agent->get_params());
    const auto obs = random_obs(rng, 1, 24);
    for (int t = 0; t < 3; ++t) CHECK(agent->act(obs) == twin->act(obs));
  }
}

TEST_CASE("carla: zero weights output 0.5 and toggle nothing") {
  CarlaAgent agent(small(AgentFamily::carla));
  std::mt19937_64 rng(2);
  const auto action = agent.act(random_obs(rng, 1, 24));
  CHECK(count_on(action) == 0);
  for (double v : agent.last_output()[0].values()) CHECK(v == 0.5);
}

TEST_CASE("carla: a large head bias toggles every cell (reset exploit)") {
  auto cfg = small(AgentFamily::carla);
  CarlaAgent agent(cfg);
  auto p = agent.get_params();
  p.back() = 5.0;  // head bias
  agent.set_params(p);
  const auto action = agent.act(GridBatch(1, 24, 24));
  CHECK(action.all_ones(0));

  EnvConfig env;
  env.obs_h = env.obs_w = 24;
  env.act_h = env.act_w = 8;
  Environment e(env);
  e.reset();
  e.step(ToggleAction::zeros(env));
  const auto r = e.step(action);
  CHECK(r.info.reset[0] == 1);
}

TEST_CASE("carla: replay after reset is bit-exact") {
  std::mt19937_64 rng(3);
  auto cfg = small(AgentFamily::carla);
  CarlaAgent agent(cfg);
  agent.set_params(initial_params(cfg, 7));
  std::vector<GridBatch> stream;
  for (int t = 0; t < 10; ++t) stream.push_back(random_obs(rng, 2, 24));
  std::vector<ToggleAction> first;
  for (const auto& o : stream) first.push_back(agent.act(o));
  agent.reset();
  for (std::size_t t = 0; t < stream.size(); ++t) CHECK(agent.act(stream[t]) == first[t]);
}

TEST_CASE("harli with zero plasticity matches carla") {
  std::mt19937_64 rng(4);
  auto ccfg = small(AgentFamily::carla);
  auto hcfg = small(AgentFamily::harli);
  const auto base = initial_params(ccfg, 11);
  CarlaAgent carla(ccfg);
  carla.set_params(base);
  HarliAgent harli(hcfg);
  auto genome = std::vector<double>(harli.param_count(), 0.0);
  std::copy(base.begin(), base.end(), genome.begin());
  harli.set_params(genome);
  int toggles = 0;
  for (int t = 0; t < 20; ++t) {
    const auto obs = random_obs(rng, 2, 24);
    const auto a = carla.act(obs);
    CHECK(harli.act(obs) == a);
    toggles += static_cast<int>(count_on(a));
  }
  CHECK(harli.plastic(0).flatten() == carla.get_params());
  CHECK(toggles > 0);
}

TEST_CASE("harli: plastic weights stay within bounds and replay exactly") {
  std::mt19937_64 rng(5);
  auto cfg = small(AgentFamily::harli);
  HarliAgent agent(cfg);
  auto genome = random_vector(rng, agent.param_count(), 2.0);
  agent.set_params(genome);
  std::vector<GridBatch> stream;
  for (int t = 0; t < 50; ++t) stream.push_back(random_obs(rng, 1, 24));
  std::vector<ToggleAction> first;
  bool changed = false;
  const auto initial = agent.plastic(0);
  for (const auto& o : stream) {
    first.push_back(agent.act(o));
    for (const auto& l : agent.plastic(0).layers)
      for (double w : l.weight.values()) CHECK(std::abs(w) <= cfg.w_max);
    changed = changed || !(agent.plastic(0).flatten() == initial.flatten());
  }
  CHECK(changed);
  agent.reset();
  CHECK(agent.plastic(0).flatten() == initial.flatten());
  for (std::size_t t = 0; t < stream.size(); ++t) CHECK(agent.act(stream[t]) == first[t]);
  CHECK(agent.get_params() == genome);
}

TEST_CASE("harli: Hebbian update of the head matches a direct computation") {
  auto cfg = small(AgentFamily::harli, 12, 6);
  cfg.iterations = 0;  // hidden = obs conv only
  HarliAgent agent(cfg);
  std::mt19937_64 rng(6);
  auto genome = initial_params(cfg, 3);  // base weights, zero coefficients
  const auto weights = CaWeights::zeros(cfg);
  const std::size_t coeff0 = weights.param_count();
  const std::size_t head_offset = weights.weight_count() - weights.layers[CaWeights::head].weight.size();
  const double coeffs[5] = {0.5, 2.0, -1.0, 0.25, 0.1};  // eta, A, B, C, D
  for (std::size_t j = 0; j < weights.layers[CaWeights::head].weight.size(); ++j)
    for (int k = 0; k < 5; ++k) genome[coeff0 + (head_offset + j) * 5 + k] = coeffs[k];
  agent.set_params(genome);

  const auto obs = random_obs(rng, 1, 12, 0.5);
  const auto before = agent.plastic(0);
  agent.act(obs);
  const auto after = agent.plastic(0);

  // Direct recomputation: hidden = zero-padded conv of the window, out = sigmoid(head(hidden)).
  const auto& w0 = before.layers[CaWeights::obs_in];
  const auto& wh = before.layers[CaWeights::head];
  const int H = 6, W = 6, C = cfg.hidden;
  std::vector<double> hidden(static_cast<std::size_t>(C) * H * W), out(static_cast<std::size_t>(H) * W);
  for (int ch = 0; ch < C; ++ch)
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        double acc = w0.bias[ch];
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int rr = r + ky - 1, cc = c + kx - 1;
            if (rr < 0 || rr >= H || cc < 0 || cc >= W) continue;
            acc += w0.weight.at(ch, 0, ky, kx) * obs.get(0, 3 + rr, 3 + cc);
          }
        hidden[(ch * H + r) * W + c] = acc;
      }
  for (int p = 0; p < H * W; ++p) {
    double acc = wh.bias[0];
    for (int ch = 0; ch < C; ++ch) acc += wh.weight[ch] * hidden[ch * H * W + p];
    out[p] = 1.0 / (1.0 + std::exp(-acc));
  }
  double post = 0.0;
  for (double v : out) post += v / (H * W);
  for (int ch = 0; ch < C; ++ch) {
    double corr = 0.0, pre = 0.0;
    for (int p = 0; p < H * W; ++p) {
      corr += hidden[ch * H * W + p] * out[p] / (H * W);
      pre += hidden[ch * H * W + p] / (H * W);
    }
    const double expect = std::clamp(wh.weight[ch] + 0.5 * (2.0 * corr - pre + 0.25 * post + 0.1), -3.0, 3.0);
    CHECK(after.layers[CaWeights::head].weight[ch] == doctest::Approx(expect).epsilon(1e-12));
  }
  // Non-plastic layers and all biases are unchanged.
  CHECK(after.layers[CaWeights::obs_in] == before.layers[CaWeights::obs_in]);
  CHECK(after.layers[CaWeights::head].bias == before.layers[CaWeights::head].bias);
}

TEST_CASE("agents reject mismatched observations") {
  for (auto f : {AgentFamily::toggle, AgentFamily::carla, AgentFamily::harli}) {
    auto agent = make_agent(small(f));
    CHECK_THROWS_AS(agent->act(GridBatch(1, 20, 24)), ShapeMismatch);
  }
  CHECK_THROWS_AS(parse_agent_family("dqn"), InvalidConfig);
}

TEST_CASE("genome files round-trip bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "lifegym_test_agents";
  std::filesystem::remove_all(dir);
  std::mt19937_64 rng(9);
  for (auto f : {AgentFamily::toggle, AgentFamily::carla, AgentFamily::harli}) {
    auto agent = make_agent(small(f));
    agent->set_params(random_vector(rng, agent->param_count(), 1.0));
    save_genome(dir / to_string(f), *agent);
    const auto loaded = load_genome(dir / to_string(f));
    CHECK(loaded->family() == f);
    CHECK(loaded->config().act_h == 8);
    CHECK(loaded->get_params() == agent->get_params());
  }
  std::filesystem::remove_all(dir);
}
