// lifegym: benchmark, evolve, replay, export and serve from the command line.
#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <optional>

#include "lifegym/errors.hpp"
#include "lifegym/evo_service.hpp"
#include "lifegym/harness.hpp"

using namespace lifegym;

namespace {

service::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_bench(const std::vector<int>& sizes, const std::vector<std::string>& rule_text, const std::vector<int>& batches,
              double seconds, const std::string& exec, const std::string& csv_path) {
  std::vector<RuleSet> rules;
  for (const auto& r : rule_text) rules.push_back(parse_rule_string(r));
  std::vector<engine::Exec> execs;
  if (exec == "serial" || exec == "both") execs.push_back(engine::Exec::serial);
  if (exec == "openmp" || exec == "both") execs.push_back(engine::Exec::openmp);
  const auto rows = run_bench(sizes, rules, batches, seconds, execs);
  std::cout << bench_table(rows);
  if (!csv_path.empty()) write_text_file(csv_path, bench_csv(rows));
  return 0;
}

int cmd_evolve(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out,
               std::optional<int> generations, bool quiet) {
  auto cfg = load_run_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.out = out;
  if (generations) cfg.generations = *generations;
  cfg.validate();
  const auto result = evolve(cfg, [&](const GenerationStats& s, const EvolveResult&) {
    if (!quiet) {
      std::cout << "gen " << s.generation << "  best " << s.best << "  mean " << s.mean << "  best_ever " << s.best_ever
                << "  sigma " << s.sigma << "\n";
    }
    return true;
  });
  std::cout << "champion fitness " << result.champion_fitness << " (generation " << result.champion_generation << ")\n";
  if (!cfg.out.empty()) std::cout << "artifacts in " << cfg.out << "\n";
  return 0;
}

struct ReplayArgs {
  std::string config;
  std::string genome;
  std::string pattern;
  std::string rule;
  std::string wrappers;
  int steps = 0;
  int obs = 0;
  int act = 0;
  int stride = 1;
  std::string out;
};

int cmd_replay(const ReplayArgs& a) {
  if (a.genome.empty() == a.pattern.empty()) throw UsageError("replay needs exactly one of --genome or --pattern");
  RunConfig cfg;
  if (!a.config.empty()) cfg = load_run_config(a.config);
  if (!a.rule.empty()) cfg.env.rule = parse_rule_string(a.rule);
  if (!a.wrappers.empty()) cfg.wrappers = parse_wrapper_list(a.wrappers);
  if (a.steps > 0) cfg.steps = a.steps;
  cfg.episodes = 1;
  cfg.env.batch_n = 1;

  std::vector<double> params;
  if (!a.genome.empty()) {
    const auto agent = load_genome(a.genome);
    cfg.agent = agent->config();
    cfg.env.obs_h = cfg.agent.obs_h;
    cfg.env.obs_w = cfg.agent.obs_w;
    cfg.env.act_h = cfg.agent.act_h;
    cfg.env.act_w = cfg.agent.act_w;
    params = agent->get_params();
  } else {
    const auto pattern = crop(read_pattern_file(a.pattern));
    if (a.rule.empty() && a.config.empty() && pattern.rule) cfg.env.rule = *pattern.rule;
    if (a.obs > 0) cfg.env.obs_h = cfg.env.obs_w = a.obs;
    if (a.act > 0) cfg.env.act_h = cfg.env.act_w = a.act;
    cfg.agent = AgentConfig::for_env(AgentFamily::toggle, cfg.env);
    params = toggle_params_for(pattern, cfg.env.act_h, cfg.env.act_w);
  }
  cfg.validate();
  RolloutOptions opts;
  opts.record_frames = true;
  opts.frame_stride = a.stride;
  const auto trace = rollout_genome(cfg, params, opts);
  std::cout << "fitness " << trace.fitness << " over " << cfg.steps << " steps\n";
  if (!a.out.empty()) {
    std::filesystem::create_directories(a.out);
    write_replay(a.out, cfg, trace);
    std::cout << "wrote " << a.out << "/frames.rle, rewards.csv, summary.json\n";
  }
  return 0;
}

int cmd_export(const std::string& genome, const std::string& format, const std::string& rule, const std::string& out) {
  auto agent = load_genome(genome);
  const auto pattern = action_pattern(*agent, rule.empty() ? rules::kLife : parse_rule_string(rule));
  const auto text = format == "plaintext" ? to_plaintext(pattern, "champion") : to_rle(pattern);
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
  return 0;
}

int cmd_serve(const std::string& host, int port, const std::string& state_dir, int stride) {
  service::ManagerOptions opts;
  opts.state_dir = state_dir;
  opts.frame_stride = stride;
  service::SessionManager manager(opts);
  service::Server server(manager);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "serving on http://" << host << ":" << port << " (" << manager.ids().size() << " sessions restored)\n";
  const bool ok = server.listen(host, port);
  g_server = nullptr;
  if (!ok) {
    std::cerr << "lifegym: cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Life-like cellular automata as a reinforcement learning environment"};
  app.require_subcommand(1);

  auto* bench = app.add_subcommand("bench", "measure grid updates per second");
  std::vector<int> sizes{64};
  std::vector<std::string> bench_rules{"B3/S23"};
  std::vector<int> batches{1};
  double seconds = 1.0;
  std::string exec = "serial";
  std::string csv;
  bench->add_option("--size", sizes, "square grid side(s)");
  bench->add_option("--rule", bench_rules, "rule string(s)");
  bench->add_option("--batch", batches, "batch size(s)");
  bench->add_option("--seconds", seconds, "duration per configuration");
  bench->add_option("--exec", exec, "serial | openmp | both")->check(CLI::IsMember({"serial", "openmp", "both"}));
  bench->add_option("--csv", csv, "also write rows as CSV");

  auto* evo = app.add_subcommand("evolve", "run CMA-ES from a YAML or JSON config");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> generations;
  std::string out;
  bool quiet = false;
  evo->add_option("--config", config_path, "run config")->required()->check(CLI::ExistingFile);
  evo->add_option("--seed", seed, "override the run seed");
  evo->add_option("--generations", generations, "override the generation budget");
  evo->add_option("--out", out, "output directory");
  evo->add_flag("--quiet", quiet, "only print the result");

  auto* replay = app.add_subcommand("replay", "roll out a genome or pattern and write frames and rewards");
  ReplayArgs ra;
  replay->add_option("--config", ra.config, "run config supplying env and wrappers");
  replay->add_option("--genome", ra.genome, "genome base path (without .manifest/.bin)");
  replay->add_option("--pattern", ra.pattern, "RLE or plaintext pattern, placed by a Toggle agent");
  replay->add_option("--rule", ra.rule, "rule string");
  replay->add_option("--wrappers", ra.wrappers, "e.g. speed:1,rnd:0.5");
  replay->add_option("--steps", ra.steps, "episode length");
  replay->add_option("--obs", ra.obs, "grid side for pattern replay");
  replay->add_option("--act", ra.act, "action region side for pattern replay");
  replay->add_option("--stride", ra.stride, "frame stride")->check(CLI::PositiveNumber);
  replay->add_option("--out", ra.out, "output directory");

  auto* exp = app.add_subcommand("export", "write a genome's step-0 action as a pattern");
  std::string genome;
  std::string format = "rle";
  std::string export_rule;
  std::string export_out;
  exp->add_option("--genome", genome, "genome base path")->required();
  exp->add_option("--format", format, "rle | plaintext")->check(CLI::IsMember({"rle", "plaintext"}));
  exp->add_option("--rule", export_rule, "rule recorded in the RLE header");
  exp->add_option("--out", export_out, "output file (default stdout)");

  auto* serve = app.add_subcommand("serve", "run the interactive evolution server");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string state_dir = "sessions";
  int stride = 1;
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port");
  serve->add_option("--state-dir", state_dir, "session persistence directory");
  serve->add_option("--stride", stride, "frame stride of served clips")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*bench) return cmd_bench(sizes, bench_rules, batches, seconds, exec, csv);
    if (*evo) return cmd_evolve(config_path, seed, out, generations, quiet);
    if (*replay) return cmd_replay(ra);
    if (*exp) return cmd_export(genome, format, export_rule, export_out);
    if (*serve) return cmd_serve(host, port, state_dir, stride);
  } catch (const UsageError& e) {
    std::cerr << "lifegym: " << e.what() << "\n";
    return 2;
  } catch (const InvalidConfig& e) {
    std::cerr << "lifegym: invalid config: " << e.what() << "\n";
    return 2;
  } catch (const MalformedRule& e) {
    std::cerr << "lifegym: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "lifegym: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
