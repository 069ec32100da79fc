#include <doctest.h>

#include <cmath>
#include <random>

#include "lifegym/engine.hpp"
#include "lifegym/errors.hpp"
#include "lifegym/rewards.hpp"

using namespace lifegym;

namespace {

EnvConfig small_env(int obs = 32, int act = 8, int batch = 1) {
  EnvConfig cfg;
  cfg.obs_h = cfg.obs_w = obs;
  cfg.act_h = cfg.act_w = act;
  cfg.batch_n = batch;
  return cfg;
}

void place(GridBatch& g, int b, std::initializer_list<const char*> rows, int r0, int c0) {
  int r = r0;
  for (const char* row : rows) {
    for (int c = 0; row[c]; ++c)
      if (row[c] == 'O') g.set(b, r, c0 + c, true);
    ++r;
  }
}

// Naive centre of mass, written independently of SpeedReward.
std::array<double, 2> oracle_center(const GridBatch& g, const EnvConfig& cfg) {
  double sr = 0, sc = 0, m = 0;
  for (int r = 0; r < g.height(); ++r)
    for (int c = 0; c < g.width(); ++c) {
      if (!g.get(0, r, c)) continue;
      m += 1;
      if (cfg.in_action_region(r, c)) continue;
      sr += r - (g.height() - 1) / 2.0;
      sc += c - (g.width() - 1) / 2.0;
    }
  return m == 0 ? std::array<double, 2>{0, 0} : std::array<double, 2>{sr / m, sc / m};
}

const StepInfo kNoInfo{};

}  // namespace

TEST_CASE("speed: stationary block outside the action region") {
  const auto cfg = small_env();
  SpeedReward speed(cfg);
  GridBatch g(1, 32, 32);
  place(g, 0, {"OO", "OO"}, 2, 3);
  const double first = speed.compute(g, kNoInfo)[0];
  const auto c = oracle_center(g, cfg);
  CHECK(first == doctest::Approx(std::hypot(c[0], c[1])).epsilon(1e-12));
  for (int t = 0; t < 5; ++t) {
    g = engine::step(g, rules::kLife);
    CHECK(speed.compute(g, kNoInfo)[0] == 0.0);
  }
}

TEST_CASE("speed: empty grid has centre (0,0) and zero reward") {
  const auto cfg = small_env();
  SpeedReward speed(cfg);
  GridBatch g(1, 32, 32);
  CHECK(speed.center(g, 0) == std::array<double, 2>{0.0, 0.0});
  CHECK(speed.compute(g, kNoInfo)[0] == 0.0);
}

TEST_CASE("speed: cells inside the action region sit at (0,0)") {
  const auto cfg = small_env();
  SpeedReward speed(cfg);
  GridBatch g(1, 32, 32);
  g.set(0, cfg.act_row0(), cfg.act_col0(), true);
  CHECK(speed.center(g, 0) == std::array<double, 2>{0.0, 0.0});
  g.set(0, 0, 0, true);
  const auto c = speed.center(g, 0);
  CHECK(c[0] == doctest::Approx(-15.5 / 2));
  CHECK(c[1] == doctest::Approx(-15.5 / 2));

  SpeedReward ignoring(cfg, {.ignore_action_region = true});
  const auto ci = ignoring.center(g, 0);
  CHECK(ci[0] == doctest::Approx(-15.5));
  CHECK(ci[1] == doctest::Approx(-15.5));
}

TEST_CASE("speed: Life glider trace is period 4 and matches the oracle") {
  const auto cfg = small_env(32, 4);
  SpeedReward speed(cfg);
  GridBatch g(1, 32, 32);
  place(g, 0, {".O.", "..O", "OOO"}, 1, 1);
  speed.compute(g, kNoInfo);
  std::vector<double> trace;
  auto prev = oracle_center(g, cfg);
  for (int t = 0; t < 16; ++t) {
    g = engine::step(g, rules::kLife);
    trace.push_back(speed.compute(g, kNoInfo)[0]);
    const auto now = oracle_center(g, cfg);
    CHECK(trace.back() == doctest::Approx(std::hypot(now[0] - prev[0], now[1] - prev[1])).epsilon(1e-12));
    prev = now;
  }
  for (std::size_t t = 4; t < trace.size(); ++t) CHECK(trace[t] == doctest::Approx(trace[t - 4]).epsilon(1e-12));
  // Per-step centre displacements over one period are 0.4, sqrt(0.2), 0.4, sqrt(0.2):
  // the mean step length is (0.8 + 2 sqrt(0.2)) / 4, while the net drift is sqrt(2)/4.
  const double mean = (trace[0] + trace[1] + trace[2] + trace[3]) / 4;
  CHECK(mean == doctest::Approx((0.8 + 2 * std::sqrt(0.2)) / 4).epsilon(1e-12));
}

TEST_CASE("speed: first escape from the action region spikes") {
  const auto cfg = small_env(32, 8);
  SpeedReward speed(cfg);
  GridBatch g(1, 32, 32);
  const int r0 = cfg.act_row0(), c0 = cfg.act_col0();
  place(g, 0, {"OOO"}, r0 + 3, c0 + 2);
  CHECK(speed.compute(g, kNoInfo)[0] == 0.0);
  g.set(0, r0 - 1, c0 + 3, true);  // one cell just above the action region
  const double spike = speed.compute(g, kNoInfo)[0];
  const double pull = std::hypot((r0 - 1) - 15.5, (c0 + 3) - 15.5) / 4;
  CHECK(spike == doctest::Approx(pull).epsilon(1e-12));
  CHECK(spike > 1.0);
}

TEST_CASE("speed: reset produces a spike of the previous centre's norm") {
  auto cfg = small_env(32, 8);
  WrapperChain chain;
  chain.add(std::make_unique<SpeedReward>(cfg), 1.0);
  WrappedEnvironment env(cfg, std::move(chain));
  env.reset();
  auto act = ToggleAction::zeros(cfg);
  for (int r = 0; r < 3; ++r) act.set(0, 0, r, true);  // blinker at the region edge
  env.step(act);
  const auto empty = ToggleAction::zeros(cfg);
  for (int t = 0; t < 6; ++t) env.step(empty);
  const auto before = oracle_center(env.observation(), cfg);
  REQUIRE(env.observation().live_count() > 0);
  const auto result = env.step(ToggleAction::ones(cfg));
  CHECK(result.info.reset[0] == 1);
  CHECK(result.reward[0] == doctest::Approx(std::hypot(before[0], before[1])).epsilon(1e-12));
}

TEST_CASE("speed: reward is non-negative on random trajectories") {
  const auto cfg = small_env(24, 8, 3);
  SpeedReward speed(cfg);
  std::mt19937_64 rng(8);
  GridBatch g(3, 24, 24);
  for (int b = 0; b < 3; ++b)
    for (int r = 0; r < 24; ++r)
      for (int c = 0; c < 24; ++c) g.set(b, r, c, rng() % 3 == 0);
  for (int t = 0; t < 20; ++t) {
    for (double v : speed.compute(g, kNoInfo)) CHECK(v >= 0.0);
    g = engine::step(g, rules::kMorley);
  }
}

TEST_CASE("corner: spec examples") {
  const auto cfg = small_env(64, 16);
  CornerReward corner(cfg);
  GridBatch g(1, 64, 64);
  CHECK(corner.compute(g, kNoInfo)[0] == 0.0);

  // k cells inside the 8x8 top-left square
  place(g, 0, {"OO.O", "...O", "O..."}, 1, 2);
  CHECK(corner.compute(g, kNoInfo)[0] == 5.0);

  GridBatch right(1, 64, 64);
  right.set(0, 0, 63, true);
  right.set(0, 63, 63, true);
  CHECK(corner.compute(right, kNoInfo)[0] == -2.0);
}

TEST_CASE("corner: region geometry") {
  const auto cfg = small_env(64, 16);
  CornerReward corner(cfg);
  CHECK(corner.region(0, 0) == CornerReward::top_left);
  CHECK(corner.region(7, 7) == CornerReward::top_left);
  CHECK(corner.region(0, 56) == CornerReward::right_corner);
  CHECK(corner.region(63, 56) == CornerReward::right_corner);
  CHECK(corner.region(63, 0) == CornerReward::none);  // bottom-left is neutral
  CHECK(corner.region(32, 32) == CornerReward::none);  // action region centre
  // The diagonal from (24,24) to (0,0) passes through (12,12); the band is 2 cells wide each side.
  CHECK(corner.region(12, 12) == CornerReward::band);
  CHECK(corner.region(12, 16) == CornerReward::band);  // Chebyshev distance |r - c| / 2
  CHECK(corner.region(12, 17) == CornerReward::none);
  CHECK(corner.region(26, 26) == CornerReward::band);
  CHECK(corner.region(27, 27) == CornerReward::none);
}

TEST_CASE("corner: superposition of disjoint patterns adds rewards") {
  const auto cfg = small_env(64, 16);
  CornerReward corner(cfg);
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    GridBatch a(1, 64, 64), b(1, 64, 64), both(1, 64, 64);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) {
        const auto roll = rng() % 4;
        if (roll == 1) a.set(0, r, c, true);
        if (roll == 2) b.set(0, r, c, true);
        if (roll == 1 || roll == 2) both.set(0, r, c, true);
      }
    CHECK(corner.compute(both, kNoInfo)[0] == corner.compute(a, kNoInfo)[0] + corner.compute(b, kNoInfo)[0]);
  }
}

TEST_CASE("rnd: identical predictor and target give zero reward") {
  const auto cfg = small_env(16, 8);
  RndConfig rc;
  rc.channels = {4, 4};
  rc.predictor_seed = rc.target_seed;
  RndReward rnd(cfg, rc);
  GridBatch g(1, 16, 16);
  place(g, 0, {"OOO", "O..", ".O."}, 5, 5);
  for (int t = 0; t < 5; ++t) {
    CHECK(rnd.compute(g, kNoInfo)[0] == 0.0);
    g = engine::step(g, rules::kMorley);
  }
}

TEST_CASE("rnd: target stays frozen while the predictor learns") {
  const auto cfg = small_env(16, 8);
  RndConfig rc;
  rc.channels = {4, 4};
  rc.lr = 0.02;
  RndReward rnd(cfg, rc);
  const auto target = rnd.target();
  GridBatch g(1, 16, 16);
  place(g, 0, {"OOO", "O..", ".O."}, 5, 5);
  double prev = INFINITY;
  for (int t = 0; t < 20; ++t) {
    const double r = rnd.compute(g, kNoInfo)[0];
    CHECK(r > 0.0);
    CHECK(r <= prev);
    prev = r;
  }
  CHECK(rnd.target() == target);
}

TEST_CASE("rnd: a toroidal shift changes the fresh reward") {
  const auto cfg = small_env(16, 8);
  RndConfig rc;
  rc.channels = {4, 4};
  GridBatch g(1, 16, 16);
  place(g, 0, {"OOO", "O..", ".O."}, 5, 5);
  const double base = RndReward(cfg, rc).compute(g, kNoInfo)[0];
  const double moved = RndReward(cfg, rc).compute(g.shifted(3, 7), kNoInfo)[0];
  CHECK(std::abs(base - moved) > 1e-9);
}

TEST_CASE("ae: fresh reward is invariant under toroidal shifts") {
  const auto cfg = small_env(16, 8);
  GridBatch g(1, 16, 16);
  place(g, 0, {"OOO", "O..", ".O."}, 5, 5);
  const double base = AutoencoderReward(cfg).compute(g, kNoInfo)[0];
  for (auto [dr, dc] : {std::pair{1, 0}, {0, 11}, {9, 14}}) {
    CHECK(std::abs(AutoencoderReward(cfg).compute(g.shifted(dr, dc), kNoInfo)[0] - base) <= 1e-9);
  }
}

TEST_CASE("ae: repeated presentation does not increase the reward") {
  const auto cfg = small_env(16, 8);
  AutoencoderReward ae(cfg);
  GridBatch g(1, 16, 16);
  place(g, 0, {"OOO", "O..", ".O."}, 5, 5);
  double prev = INFINITY;
  for (int t = 0; t < 30; ++t) {
    const double r = ae.compute(g, kNoInfo)[0];
    CHECK(r <= prev);
    prev = r;
  }
}

TEST_CASE("ae: empty observations are learned to near-zero loss") {
  const auto cfg = small_env(16, 8);
  AutoencoderReward ae(cfg);
  GridBatch g(1, 16, 16);
  double first = ae.compute(g, kNoInfo)[0], last = first;
  for (int t = 0; t < 200; ++t) last = ae.compute(g, kNoInfo)[0];
  CHECK(first > 0.1);
  CHECK(last < 0.005);
}

TEST_CASE("novelty models keep batch instances independent unless shared") {
  const auto cfg = small_env(16, 8, 2);
  RndConfig rc;
  rc.channels = {4, 4};
  RndReward per_instance(cfg, rc);
  GridBatch g(2, 16, 16);
  place(g, 0, {"OOO", "O..", ".O."}, 5, 5);
  place(g, 1, {"OO", "OO"}, 2, 2);
  per_instance.compute(g, kNoInfo);

  // Instance 0 trained on its own observation equals a batch-1 model fed the same data.
  RndReward single(small_env(16, 8, 1), rc);
  GridBatch g0(1, 16, 16);
  place(g0, 0, {"OOO", "O..", ".O."}, 5, 5);
  single.compute(g0, kNoInfo);
  CHECK(per_instance.predictor(0) == single.predictor(0));
  CHECK_FALSE(per_instance.predictor(0) == per_instance.predictor(1));

  rc.shared = true;
  RndReward shared(cfg, rc);
  shared.compute(g, kNoInfo);
  CHECK(&shared.predictor(0) == &shared.predictor(1));
}

TEST_CASE("chain reward equals the weighted sum of individual rewards") {
  const auto cfg = small_env(16, 8, 2);
  std::vector<WrapperSpec> specs(3);
  specs[0].name = "speed";
  specs[0].weight = 2.0;
  specs[1].name = "corner";
  specs[1].weight = -0.5;
  specs[2].name = "rnd";
  specs[2].weight = 10.0;
  specs[2].rnd.channels = {4};

  WrappedEnvironment env(cfg, WrapperChain(specs, cfg));
  std::vector<std::unique_ptr<RewardWrapper>> solo;
  for (const auto& s : specs) solo.push_back(make_wrapper(s, cfg));

  env.reset();
  std::mt19937_64 rng(4);
  for (int t = 0; t < 12; ++t) {
    auto act = ToggleAction::zeros(cfg);
    for (int b = 0; b < 2; ++b)
      for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) act.set(b, r, c, t == 0 && rng() % 2);
    const auto result = env.step(act);
    std::vector<double> expect(2, 0.0);
    for (std::size_t i = 0; i < solo.size(); ++i) {
      const auto r = solo[i]->compute(result.observation, result.info);
      for (int b = 0; b < 2; ++b) expect[b] += specs[i].weight * r[b];
    }
    for (int b = 0; b < 2; ++b) CHECK(result.reward[b] == doctest::Approx(expect[b]).epsilon(1e-12));
  }
}

TEST_CASE("wrapper configuration errors") {
  const auto cfg = small_env(18, 8);
  WrapperSpec spec;
  spec.name = "glider-detector";
  CHECK_THROWS_AS(make_wrapper(spec, cfg), InvalidConfig);
  spec.name = "rnd";  // pool 4 does not divide 18
  CHECK_THROWS_AS(make_wrapper(spec, cfg), InvalidConfig);
}
