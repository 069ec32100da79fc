#include "lifegym/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "lifegym/errors.hpp"
#include "lifegym/tensor_io.hpp"

namespace lifegym {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Rollouts

RolloutTrace rollout(const RunConfig& cfg, Agent& agent, WrapperChain& chain, const RolloutOptions& options) {
  RolloutTrace trace;
  trace.components.assign(chain.size(), {});
  Environment env(cfg.env);
  const int n = cfg.env.batch_n;
  const int stride = std::max(1, options.frame_stride);
  double total = 0.0;

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    env.reset();
    agent.reset();
    chain.on_reset();
    std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
    for (int t = 0; t < cfg.steps; ++t) {
      const auto action = agent.act(env.observation());
      if (ep == 0 && t == 0) trace.first_action = action;
      auto result = env.step(action);
      const auto reward = chain.compute(result.observation, result.info, result.reward);
      for (int b = 0; b < n; ++b) sums[static_cast<std::size_t>(b)] += reward[static_cast<std::size_t>(b)];
      if (ep == 0) {
        trace.rewards.push_back(reward[0]);
        for (std::size_t i = 0; i < chain.size(); ++i) trace.components[i].push_back(chain.last_components()[i][0]);
        if (options.record_frames && (t + 1) % stride == 0) {
          trace.frames.push_back(std::move(result.observation));
          trace.frame_steps.push_back(t + 1);
        }
      }
    }
    double mean = 0.0;
    for (double s : sums) mean += s / n;
    total += mean;
  }
  trace.fitness = total / cfg.episodes;
  if (!std::isfinite(trace.fitness)) throw NonFiniteFitness("rollout produced a non-finite fitness");
  return trace;
}

RolloutTrace rollout_genome(const RunConfig& cfg, const std::vector<double>& params, const RolloutOptions& options) {
  auto agent = make_agent(cfg.agent);
  agent->set_params(params);
  WrapperChain chain(cfg.wrappers, cfg.env);
  return rollout(cfg, *agent, chain, options);
}

// ---------------------------------------------------------------------------
// Evolution

std::vector<double> initial_mean(const RunConfig& cfg) {
  std::vector<double> mean;
  if (cfg.optimizer.init == "random") {
    mean = initial_params(cfg.agent, cfg.seed);
  } else {
    mean.assign(make_agent(cfg.agent)->param_count(), 0.0);
  }
  for (auto& v : mean) v += cfg.optimizer.init_value;
  return mean;
}

std::vector<double> evaluate_population(const RunConfig& cfg, const std::vector<std::vector<double>>& candidates,
                                        WrapperChain* shared) {
  const int count = static_cast<int>(candidates.size());
  std::vector<double> fitness(candidates.size(), 0.0);
  if (shared) {
    for (int i = 0; i < count; ++i) {
      auto agent = make_agent(cfg.agent);
      agent->set_params(candidates[static_cast<std::size_t>(i)]);
      fitness[static_cast<std::size_t>(i)] = rollout(cfg, *agent, *shared).fitness;
    }
    return fitness;
  }
  std::vector<std::exception_ptr> errors(candidates.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < count; ++i) {
    try {
      fitness[static_cast<std::size_t>(i)] = rollout_genome(cfg, candidates[static_cast<std::size_t>(i)]).fitness;
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return fitness;
}

namespace {

void write_champion(const std::filesystem::path& dir, const RunConfig& cfg, const std::vector<double>& genome,
                    double fitness, long generation) {
  auto agent = make_agent(cfg.agent);
  agent->set_params(genome);
  save_genome(dir / "champion", *agent);
  const auto pattern = action_pattern(*agent, cfg.env.rule);
  write_text_file(dir / "champion.rle", to_rle(pattern));

  json mobility = detect_mobility(pattern, cfg.env.rule, cfg.steps).to_json();
  json ships = json::array();
  for (const auto& s : emitted_ships(pattern, cfg.env.rule, cfg.steps)) ships.push_back(s.to_json());
  mobility["emitted_ships"] = ships;
  mobility["fitness"] = fitness;
  mobility["generation"] = generation;
  write_text_file(dir / "mobility.json", mobility.dump(2) + "\n");

  const auto trace = rollout_genome(cfg, genome);
  std::ostringstream csv;
  csv << "step,total";
  for (const auto& w : cfg.wrappers) csv << "," << w.name;
  csv << "\n";
  for (std::size_t t = 0; t < trace.rewards.size(); ++t) {
    csv << t + 1 << "," << io::format_double(trace.rewards[t]);
    for (const auto& c : trace.components) csv << "," << io::format_double(c[t]);
    csv << "\n";
  }
  write_text_file(dir / "champion_rewards.csv", csv.str());
}

}  // namespace

EvolveResult evolve(const RunConfig& cfg, const GenerationCallback& on_generation) {
  cfg.validate();
  EvolveResult result;
  const std::filesystem::path out = cfg.out;
  std::ofstream history;
  if (!out.empty()) {
    write_text_file(out / "config.json", to_json(cfg).dump(2) + "\n");
    if (cfg.generations > 0) {
      history.open(out / "history.csv");
      history << "generation,best,mean,best_ever,sigma\n";
    }
  }
  if (cfg.generations == 0) return result;

  CmaOptions options = cfg.optimizer.cma;
  options.seed = cfg.seed;
  CmaEs es(initial_mean(cfg), cfg.optimizer.sigma, options);
  std::unique_ptr<WrapperChain> shared;
  if (cfg.persistent_novelty) shared = std::make_unique<WrapperChain>(cfg.wrappers, cfg.env);

  for (int g = 0; g < cfg.generations; ++g) {
    const auto candidates = es.ask();
    std::vector<double> fitness;
    try {
      fitness = evaluate_population(cfg, candidates, shared.get());
    } catch (const NonFiniteValue&) {
      std::cerr << "evolve: non-finite value in generation " << g << "\n";
      throw;
    } catch (const NonFiniteFitness&) {
      std::cerr << "evolve: non-finite fitness in generation " << g << "\n";
      throw;
    }

    GenerationStats stats;
    stats.generation = g;
    const auto best_it = std::max_element(fitness.begin(), fitness.end());
    stats.best = *best_it;
    for (double f : fitness) stats.mean += f / static_cast<double>(fitness.size());
    if (stats.best > result.champion_fitness) {
      result.champion_fitness = stats.best;
      result.champion = candidates[static_cast<std::size_t>(best_it - fitness.begin())];
      result.champion_generation = g;
      if (!out.empty()) write_champion(out, cfg, result.champion, stats.best, g);
    }
    stats.best_ever = result.champion_fitness;

    es.tell(candidates, fitness);
    stats.sigma = es.sigma();
    result.history.push_back(stats);
    if (history.is_open()) {
      history << g << "," << io::format_double(stats.best) << "," << io::format_double(stats.mean) << ","
              << io::format_double(stats.best_ever) << "," << io::format_double(stats.sigma) << "\n";
      history.flush();
      es.save(out / "checkpoint");
    }
    if (on_generation && !on_generation(stats, result)) break;
    if (cfg.stop_at_target && result.champion_fitness > cfg.target_fitness) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Mobility

json MobilityReport::to_json() const {
  return json{{"mobile", mobile}, {"period", period},         {"displacement", {dr, dc}},
              {"first_step", first_step}, {"population", population}};
}

namespace {

struct Snapshot {
  int r0 = 0, c0 = 0, h = 0, w = 0;
  std::string cells;  // row-major bytes of the bounding box
};

// Bounding box of instance 0 and its contents; h == 0 when empty.
Snapshot snapshot(const GridBatch& g) {
  Snapshot s;
  int rmin = g.height(), rmax = -1, cmin = g.width(), cmax = -1;
  for (int r = 0; r < g.height(); ++r) {
    const auto row = g.row(0, r);
    for (int wi = 0; wi < g.words_per_row(); ++wi) {
      const auto word = row[static_cast<std::size_t>(wi)];
      if (!word) continue;
      rmin = std::min(rmin, r);
      rmax = r;
      cmin = std::min(cmin, wi * GridBatch::kWordBits + std::countr_zero(word));
      cmax = std::max(cmax, wi * GridBatch::kWordBits + 63 - std::countl_zero(word));
    }
  }
  if (rmax < 0) return s;
  s.r0 = rmin;
  s.c0 = cmin;
  s.h = rmax - rmin + 1;
  s.w = cmax - cmin + 1;
  s.cells.resize(static_cast<std::size_t>(s.h) * s.w);
  for (int r = 0; r < s.h; ++r)
    for (int c = 0; c < s.w; ++c) s.cells[static_cast<std::size_t>(r) * s.w + c] = g.get(0, rmin + r, cmin + c) ? 'O' : '.';
  return s;
}

// An empty board big enough that the pattern cannot reach the edge within `horizon` steps.
GridBatch padded_board(const Pattern& pattern, int horizon, int& row, int& col) {
  const int margin = horizon + 2;
  row = col = margin;
  GridBatch g(1, std::max(3, pattern.height + 2 * margin), std::max(3, pattern.width + 2 * margin));
  stamp(g, 0, pattern, row, col);
  return g;
}

}  // namespace

MobilityReport detect_mobility(const Pattern& pattern, const RuleSet& rule, int horizon) {
  if (horizon < 1) throw UsageError("mobility horizon must be >= 1");
  MobilityReport report;
  const auto tight = crop(pattern);
  report.population = tight.population();
  if (report.population == 0 || rule.births_on(0)) return report;

  int row = 0, col = 0;
  auto board = padded_board(tight, horizon, row, col);
  engine::Simulator sim(engine::Exec::serial);
  std::map<std::string, std::vector<std::pair<int, Snapshot>>> seen;
  int any_period = 0;
  for (int t = 0; t <= horizon; ++t) {
    auto snap = snapshot(board);
    if (snap.h == 0) break;  // died out
    const std::string key = std::to_string(snap.h) + "x" + std::to_string(snap.w) + ":" + snap.cells;
    auto& earlier = seen[key];
    for (const auto& [t1, s1] : earlier) {
      const int p = t - t1;
      const int dr = snap.r0 - s1.r0, dc = snap.c0 - s1.c0;
      if (any_period == 0 || p < any_period) any_period = p;
      if ((dr != 0 || dc != 0) && (!report.mobile || p < report.period)) {
        report.mobile = true;
        report.period = p;
        report.dr = dr;
        report.dc = dc;
        report.first_step = t1;
      }
    }
    earlier.emplace_back(t, Snapshot{snap.r0, snap.c0, 0, 0, {}});
    if (t < horizon) sim.advance(board, rule);
  }
  if (!report.mobile) {
    report.period = any_period;
    for (const auto& [key, list] : seen) {
      for (std::size_t i = 1; i < list.size(); ++i) {
        if (list[i].first - list[i - 1].first == any_period) {
          report.first_step = report.first_step < 0 ? list[i - 1].first : std::min(report.first_step, list[i - 1].first);
        }
      }
    }
  }
  return report;
}

std::vector<MobilityReport> emitted_ships(const Pattern& pattern, const RuleSet& rule, int horizon, int gap) {
  std::vector<MobilityReport> ships;
  const auto tight = crop(pattern);
  if (tight.population() == 0 || rule.births_on(0)) return ships;
  int row = 0, col = 0;
  auto board = padded_board(tight, horizon, row, col);
  engine::Simulator(engine::Exec::serial).advance(board, rule, horizon);

  const int H = board.height(), W = board.width();
  std::vector<int> label(static_cast<std::size_t>(H) * W, -1);
  int next = 0;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (!board.get(0, r, c) || label[static_cast<std::size_t>(r) * W + c] >= 0) continue;
      std::vector<std::pair<int, int>> stack{{r, c}}, members;
      label[static_cast<std::size_t>(r) * W + c] = next;
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        members.emplace_back(y, x);
        for (int dy = -gap; dy <= gap; ++dy)
          for (int dx = -gap; dx <= gap; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
            auto& l = label[static_cast<std::size_t>(yy) * W + xx];
            if (l < 0 && board.get(0, yy, xx)) {
              l = next;
              stack.emplace_back(yy, xx);
            }
          }
      }
      int rmin = H, rmax = 0, cmin = W, cmax = 0;
      for (const auto& [y, x] : members) {
        rmin = std::min(rmin, y);
        rmax = std::max(rmax, y);
        cmin = std::min(cmin, x);
        cmax = std::max(cmax, x);
      }
      Pattern object(cmax - cmin + 1, rmax - rmin + 1);
      for (const auto& [y, x] : members) object.set(y - rmin, x - cmin, true);
      const auto report = detect_mobility(object, rule, std::min(horizon, 64));
      if (report.mobile) ships.push_back(report);
      ++next;
    }
  }
  return ships;
}

// ---------------------------------------------------------------------------
// Replay and export

std::vector<double> toggle_params_for(const Pattern& pattern, int act_h, int act_w) {
  if (pattern.height > act_h || pattern.width > act_w) {
    throw ShapeMismatch("pattern " + std::to_string(pattern.width) + "x" + std::to_string(pattern.height) +
                        " does not fit the " + std::to_string(act_w) + "x" + std::to_string(act_h) + " action region");
  }
  std::vector<double> logits(static_cast<std::size_t>(act_h) * act_w, -1.0);
  const int r0 = (act_h - pattern.height) / 2, c0 = (act_w - pattern.width) / 2;
  for (int r = 0; r < pattern.height; ++r)
    for (int c = 0; c < pattern.width; ++c)
      if (pattern.at(r, c)) logits[static_cast<std::size_t>(r0 + r) * act_w + c0 + c] = 1.0;
  return logits;
}

Pattern action_pattern(Agent& agent, const RuleSet& rule) {
  const auto& c = agent.config();
  agent.reset();
  const auto action = agent.act(GridBatch(1, c.obs_h, c.obs_w));
  agent.reset();
  Pattern p(c.act_w, c.act_h);
  for (int r = 0; r < c.act_h; ++r)
    for (int col = 0; col < c.act_w; ++col) p.set(r, col, action.get(0, r, col));
  p.rule = rule;
  return p;
}

void write_replay(const std::filesystem::path& dir, const RunConfig& cfg, const RolloutTrace& trace) {
  std::string frames;
  for (std::size_t i = 0; i < trace.frames.size(); ++i) {
    auto p = extract(trace.frames[i], 0);
    p.rule = cfg.env.rule;
    frames += "#C step " + std::to_string(trace.frame_steps[i]) + "\n" + to_rle(p);
  }
  write_text_file(dir / "frames.rle", frames);

  std::ostringstream csv;
  csv << "step,total";
  for (const auto& w : cfg.wrappers) csv << "," << w.name;
  csv << "\n";
  for (std::size_t t = 0; t < trace.rewards.size(); ++t) {
    csv << t + 1 << "," << io::format_double(trace.rewards[t]);
    for (const auto& c : trace.components) csv << "," << io::format_double(c[t]);
    csv << "\n";
  }
  write_text_file(dir / "rewards.csv", csv.str());

  const json summary{{"fitness", trace.fitness}, {"steps", cfg.steps}, {"frames", trace.frames.size()},
                     {"config", to_json(cfg)}};
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Benchmark

std::vector<BenchRow> run_bench(const std::vector<int>& sizes, const std::vector<RuleSet>& rules,
                                const std::vector<int>& batches, double seconds, const std::vector<engine::Exec>& execs) {
  if (!(seconds > 0.0)) throw UsageError("bench duration must be positive");
  std::vector<BenchRow> rows;
  for (int size : sizes)
    for (const auto& rule : rules)
      for (int batch : batches)
        for (auto exec : execs) {
          BenchRow row;
          row.rule = format_rule_string(rule);
          row.exec = exec == engine::Exec::serial ? "serial" : "openmp";
          row.result = engine::benchmark(size, size, rule, seconds, batch, exec);
          rows.push_back(row);
        }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "height,width,batch,rule,exec,updates,seconds,updates_per_second,cell_updates_per_second\n";
  for (const auto& r : rows) {
    out << r.result.height << "," << r.result.width << "," << r.result.batch << "," << r.rule << "," << r.exec << ","
        << r.result.updates << "," << r.result.seconds << "," << r.result.updates_per_second << ","
        << r.result.cell_updates_per_second << "\n";
  }
  return out.str();
}

std::string bench_table(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-11s %5s %-14s %-6s %14s %16s\n", "size", "batch", "rule", "exec", "updates/s",
                "cell-updates/s");
  out << line;
  for (const auto& r : rows) {
    const std::string size = std::to_string(r.result.height) + "x" + std::to_string(r.result.width);
    std::snprintf(line, sizeof line, "%-11s %5d %-14s %-6s %14.0f %16.3e\n", size.c_str(), r.result.batch,
                  r.rule.c_str(), r.exec.c_str(), r.result.updates_per_second, r.result.cell_updates_per_second);
    out << line;
  }
  return out.str();
}

}  // namespace lifegym
