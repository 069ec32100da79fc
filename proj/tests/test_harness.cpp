#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lifegym/engine.hpp"
#include "lifegym/errors.hpp"
#include "lifegym/harness.hpp"

using namespace lifegym;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lifegym_test_harness_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Pattern pat(const char* rle) { return parse_rle(rle); }

RunConfig tiny_config(int obs = 16, int act = 4) {
  RunConfig c;
  c.env.obs_h = c.env.obs_w = obs;
  c.env.act_h = c.env.act_w = act;
  c.env.rule = rules::kLife;
  c.agent = AgentConfig::for_env(AgentFamily::toggle, c.env);
  WrapperSpec speed;
  speed.name = "speed";
  c.wrappers = {speed};
  c.steps = 16;
  c.generations = 3;
  c.optimizer.cma.lambda = 6;
  c.seed = 5;
  return c;
}

std::size_t file_count(const std::filesystem::path& dir) {
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++n;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Mobility

TEST_CASE("mobility: Life glider moves one diagonal cell every 4 steps") {
  const auto r = detect_mobility(pat("x = 3, y = 3\nbo$2bo$3o!"), rules::kLife, 32);
  CHECK(r.mobile);
  CHECK(r.period == 4);
  CHECK(r.dr == 1);
  CHECK(r.dc == 1);
  CHECK(r.first_step == 0);
  CHECK(r.population == 5);
}

TEST_CASE("mobility: still lifes and oscillators are not mobile") {
  const auto block = detect_mobility(pat("x = 2, y = 2\n2o$2o!"), rules::kLife, 16);
  CHECK_FALSE(block.mobile);
  CHECK(block.period == 1);
  const auto blinker = detect_mobility(pat("x = 3, y = 1\n3o!"), rules::kLife, 16);
  CHECK_FALSE(blinker.mobile);
  CHECK(blinker.period == 2);
  const auto dies = detect_mobility(pat("x = 1, y = 1\no!"), rules::kLife, 16);
  CHECK_FALSE(dies.mobile);
  CHECK(dies.period == 0);
  const auto empty = detect_mobility(Pattern(4, 4), rules::kLife, 16);
  CHECK_FALSE(empty.mobile);
  CHECK(empty.population == 0);
}

TEST_CASE("mobility: the B368/S245 ship has period 7") {
  const auto r = detect_mobility(pat("x = 3, y = 3\n3o$2o$o!"), rules::kMorley, 64);
  CHECK(r.mobile);
  CHECK(r.period == 7);
  CHECK(std::abs(r.dr) == 1);
  CHECK(std::abs(r.dc) == 1);
}

TEST_CASE("mobility: a glider too slow for the horizon is not found") {
  const auto r = detect_mobility(pat("x = 3, y = 3\nbo$2bo$3o!"), rules::kLife, 3);
  CHECK_FALSE(r.mobile);
  CHECK_THROWS_AS(detect_mobility(Pattern(1, 1), rules::kLife, 0), UsageError);
}

TEST_CASE("emitted ships: a glider leaving a block behind") {
  // glider at the top-left, block far to the right; together they never recur
  const auto both = pat("x = 14, y = 3\nbo10b2o$2bo9b2o$3o!");
  CHECK_FALSE(detect_mobility(both, rules::kLife, 64).mobile);
  const auto ships = emitted_ships(both, rules::kLife, 64);
  REQUIRE(ships.size() == 1);
  CHECK(ships[0].period == 4);
  CHECK(ships[0].population == 5);
  CHECK(emitted_ships(pat("x = 2, y = 2\n2o$2o!"), rules::kLife, 64).empty());
}

// ---------------------------------------------------------------------------
// Rollouts

TEST_CASE("toggle params centre the pattern in the action region") {
  const auto p = pat("x = 3, y = 3\nbo$2bo$3o!");
  const auto logits = toggle_params_for(p, 5, 5);
  REQUIRE(logits.size() == 25);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) {
      const bool inside = r >= 1 && r < 4 && c >= 1 && c < 4 && p.at(r - 1, c - 1);
      CHECK(logits[static_cast<std::size_t>(r * 5 + c)] == (inside ? 1.0 : -1.0));
    }
  CHECK_THROWS_AS(toggle_params_for(p, 2, 8), ShapeMismatch);

  auto cfg = tiny_config(16, 5);
  ToggleAgent agent(cfg.agent);
  agent.set_params(logits);
  const auto back = action_pattern(agent, rules::kLife);
  CHECK(crop(back).cells == p.cells);
}

TEST_CASE("empty pattern rollout earns nothing") {
  const auto cfg = tiny_config();
  const std::vector<double> off(16, -1.0);
  const auto trace = rollout_genome(cfg, off);
  CHECK(trace.fitness == 0.0);
  REQUIRE(trace.rewards.size() == 16);
  for (double r : trace.rewards) CHECK(r == 0.0);
  CHECK_FALSE(trace.first_action.any(0));
}

TEST_CASE("rollouts replay bit-exactly and average over instances and episodes") {
  auto cfg = tiny_config(32, 4);
  cfg.steps = 40;
  const auto glider = toggle_params_for(pat("x = 3, y = 3\nbo$2bo$3o!"), 4, 4);
  RolloutOptions opts;
  opts.record_frames = true;
  opts.frame_stride = 5;
  const auto a = rollout_genome(cfg, glider, opts);
  const auto b = rollout_genome(cfg, glider, opts);
  CHECK(a.fitness > 0.0);
  CHECK(a.rewards == b.rewards);
  REQUIRE(a.frames.size() == 8);
  CHECK(a.frame_steps.front() == 5);
  for (std::size_t i = 0; i < a.frames.size(); ++i) CHECK(a.frames[i].words().size() == b.frames[i].words().size());
  for (std::size_t i = 0; i < a.frames.size(); ++i)
    CHECK(std::equal(a.frames[i].words().begin(), a.frames[i].words().end(), b.frames[i].words().begin()));

  double sum = 0.0;
  for (double r : a.rewards) sum += r;
  CHECK(a.fitness == doctest::Approx(sum).epsilon(1e-12));

  auto wide = cfg;
  wide.env.batch_n = 3;
  wide.episodes = 2;
  CHECK(rollout_genome(wide, glider).fitness == doctest::Approx(a.fitness).epsilon(1e-12));
}

TEST_CASE("replay output files") {
  auto cfg = tiny_config(32, 4);
  const auto glider = toggle_params_for(pat("x = 3, y = 3\nbo$2bo$3o!"), 4, 4);
  RolloutOptions opts;
  opts.record_frames = true;
  const auto trace = rollout_genome(cfg, glider, opts);
  const auto dir = scratch("replay");
  write_replay(dir, cfg, trace);
  const auto frames = read_text_file(dir / "frames.rle");
  CHECK(frames.rfind("#C step 1\n", 0) == 0);
  const auto first = parse_rle(frames.substr(0, frames.find("#C step 2")));
  CHECK(first.width == 32);
  CHECK(first.population() == 5);

  std::ifstream csv(dir / "rewards.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "step,total,speed");
  std::size_t lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  CHECK(lines == 16);
  const auto summary = nlohmann::json::parse(read_text_file(dir / "summary.json"));
  CHECK(summary["fitness"].get<double>() == trace.fitness);
}

// ---------------------------------------------------------------------------
// Exploit regressions

TEST_CASE("exploit: an all-ones action resets the board and spikes the speed reward") {
  const auto cfg = tiny_config(32, 4).env;
  Environment env(cfg);
  SpeedReward speed(cfg);
  env.reset();
  const auto glider = pat("x = 3, y = 3\nbo$2bo$3o!");
  auto act = ToggleAction::zeros(cfg);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) act.set(0, r, c, glider.at(r, c));
  for (int t = 0; t < 24; ++t) {
    const auto res = env.step(t == 0 ? act : ToggleAction::zeros(cfg));
    speed.compute(res.observation, res.info);
  }
  const auto prev = speed.previous()[0];
  const double norm = std::hypot(prev[0], prev[1]);
  CHECK(norm > 1.0);
  const auto cleared = env.step(ToggleAction::ones(cfg));
  CHECK(cleared.info.reset[0] == 1);
  CHECK(cleared.observation.live_count(0) == 0);
  CHECK(speed.compute(cleared.observation, cleared.info)[0] == doctest::Approx(norm).epsilon(1e-12));
}

TEST_CASE("exploit: a boundary line under B3/S23 sends a wave outward") {
  auto cfg = tiny_config(64, 16).env;
  Environment env(cfg);
  SpeedReward speed(cfg);
  env.reset();
  auto line = ToggleAction::zeros(cfg);
  for (int c = 0; c < cfg.act_w; ++c) line.set(0, 0, c, true);
  int run = 0, best = 0;
  for (int t = 0; t < 12; ++t) {
    const auto res = env.step(t == 0 ? line : ToggleAction::zeros(cfg));
    run = speed.compute(res.observation, res.info)[0] > 0.0 ? run + 1 : 0;
    best = std::max(best, run);
  }
  CHECK(best >= 5);
}

// ---------------------------------------------------------------------------
// Evolution

TEST_CASE("zero generations writes only the config echo") {
  auto cfg = tiny_config();
  cfg.generations = 0;
  const auto dir = scratch("zero");
  cfg.out = dir.string();
  const auto result = evolve(cfg);
  CHECK(result.history.empty());
  CHECK(result.champion.empty());
  CHECK(file_count(dir) == 1);
  CHECK(std::filesystem::exists(dir / "config.json"));
  CHECK(to_json(run_config_from_json(nlohmann::json::parse(read_text_file(dir / "config.json")))) == to_json(cfg));
}

TEST_CASE("evolution is reproducible from the seed and writes artifacts") {
  auto cfg = tiny_config();
  const auto dir = scratch("evolve");
  cfg.out = dir.string();
  const auto a = evolve(cfg);
  cfg.out.clear();
  const auto b = evolve(cfg);
  REQUIRE(a.history.size() == 3);
  REQUIRE(b.history.size() == 3);
  for (std::size_t g = 0; g < 3; ++g) {
    CHECK(a.history[g].best == b.history[g].best);
    CHECK(a.history[g].mean == b.history[g].mean);
    CHECK(a.history[g].sigma == b.history[g].sigma);
    CHECK(a.history[g].best_ever >= a.history[g].best);
  }
  CHECK(a.champion == b.champion);
  CHECK(rollout_genome(cfg, a.champion).fitness == a.champion_fitness);

  for (const char* f : {"config.json", "history.csv", "checkpoint.manifest", "checkpoint.bin", "champion.manifest",
                        "champion.rle", "mobility.json", "champion_rewards.csv"})
    CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
  const auto es = CmaEs::load(dir / "checkpoint");
  CHECK(es.generation() == 3);
  const auto champ = load_genome(dir / "champion");
  CHECK(champ->get_params() == a.champion);

  cfg.seed = 6;
  CHECK(evolve(cfg).history[0].mean != a.history[0].mean);
}

TEST_CASE("evolution stops early on target or callback") {
  auto cfg = tiny_config(32, 4);
  cfg.generations = 50;
  cfg.optimizer.init_value = 0.5;  // every toggle on at first
  std::size_t calls = 0;
  const auto stopped = evolve(cfg, [&](const GenerationStats&, const EvolveResult&) { return ++calls < 2; });
  CHECK(stopped.history.size() == 2);

  cfg.stop_at_target = true;
  cfg.target_fitness = -1.0;
  CHECK(evolve(cfg).history.size() == 1);
}

TEST_CASE("persistent novelty runs serially through one shared chain") {
  auto cfg = tiny_config();
  WrapperSpec ae;
  ae.name = "ae";
  ae.ae.channels = {2};
  cfg.wrappers.push_back(ae);
  cfg.generations = 2;
  cfg.persistent_novelty = true;
  const auto a = evolve(cfg);
  const auto b = evolve(cfg);
  REQUIRE(a.history.size() == 2);
  CHECK(a.history[1].mean == b.history[1].mean);
}

// ---------------------------------------------------------------------------
// Benchmark

TEST_CASE("bench rows, csv and table") {
  CHECK_THROWS_AS(run_bench({16}, {rules::kLife}, {1}, 0.0), UsageError);
  const auto rows = run_bench({16, 32}, {rules::kLife}, {1}, 0.01);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].result.height == 32);
  CHECK(rows[0].result.updates_per_second > 0.0);
  const auto csv = bench_csv(rows);
  CHECK(csv.rfind("height,width,batch,rule,exec,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(bench_table(rows).find("B3/S23") != std::string::npos);
}
