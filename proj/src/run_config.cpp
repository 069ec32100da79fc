#include "lifegym/run_config.hpp"

#include <yaml-cpp/yaml.h>

#include <set>

#include "lifegym/errors.hpp"
#include "lifegym/pattern_io.hpp"

namespace lifegym {

using nlohmann::json;

void RunConfig::validate() const {
  env.validate();
  agent.validate();
  if (steps < 1) throw InvalidConfig("steps must be >= 1");
  if (episodes < 1) throw InvalidConfig("episodes must be >= 1");
  if (generations < 0) throw InvalidConfig("generations must be >= 0");
  if (!(optimizer.sigma > 0.0)) throw InvalidConfig("optimizer.sigma must be positive");
  if (optimizer.init != "zeros" && optimizer.init != "random") throw InvalidConfig("optimizer.init must be zeros or random");
  if (optimizer.cma.lambda < 0 || optimizer.cma.lambda == 1) throw InvalidConfig("optimizer.lambda must be 0 (auto) or >= 2");
  if (agent.obs_h != env.obs_h || agent.obs_w != env.obs_w || agent.act_h != env.act_h || agent.act_w != env.act_w) {
    throw InvalidConfig("agent geometry must follow env");
  }
  for (const auto& w : wrappers) make_wrapper(w, env);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidConfig(where_ + " must be a mapping");
  }
  /// Rejects keys that no get()/sub() asked for.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw InvalidConfig("unknown key '" + key + "' in " + where_);
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw InvalidConfig(where_ + "." + key + ": " + e.what());
    }
  }
  bool has(const char* key) const { return j_.contains(key); }
  const json& sub(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json wrapper_to_json(const WrapperSpec& w) {
  json j{{"name", w.name}, {"weight", w.weight}};
  if (w.name == "speed") {
    j["ignore_action_region"] = w.speed.ignore_action_region;
  } else if (w.name == "corner") {
    j["square_h"] = w.corner.square_h;
    j["square_w"] = w.corner.square_w;
    j["band_radius"] = w.corner.band_radius;
    j["positive"] = w.corner.positive;
    j["negative"] = w.corner.negative;
  } else if (w.name == "rnd") {
    j["channels"] = w.rnd.channels;
    j["pool"] = w.rnd.pool;
    j["embed"] = w.rnd.embed;
    j["lr"] = w.rnd.lr;
    j["target_seed"] = w.rnd.target_seed;
    j["predictor_seed"] = w.rnd.predictor_seed;
    j["shared"] = w.rnd.shared;
  } else if (w.name == "ae") {
    j["channels"] = w.ae.channels;
    j["lr"] = w.ae.lr;
    j["seed"] = w.ae.seed;
    j["shared"] = w.ae.shared;
  }
  return j;
}

WrapperSpec wrapper_from_json(const json& j) {
  WrapperSpec w;
  Reader r(j, "wrapper");
  r.get("name", w.name);
  r.get("weight", w.weight);
  if (w.name == "speed") {
    r.get("ignore_action_region", w.speed.ignore_action_region);
  } else if (w.name == "corner") {
    r.get("square_h", w.corner.square_h);
    r.get("square_w", w.corner.square_w);
    r.get("band_radius", w.corner.band_radius);
    r.get("positive", w.corner.positive);
    r.get("negative", w.corner.negative);
  } else if (w.name == "rnd") {
    r.get("channels", w.rnd.channels);
    r.get("pool", w.rnd.pool);
    r.get("embed", w.rnd.embed);
    r.get("lr", w.rnd.lr);
    r.get("target_seed", w.rnd.target_seed);
    r.get("predictor_seed", w.rnd.predictor_seed);
    r.get("shared", w.rnd.shared);
  } else if (w.name == "ae") {
    r.get("channels", w.ae.channels);
    r.get("lr", w.ae.lr);
    r.get("seed", w.ae.seed);
    r.get("shared", w.ae.shared);
  } else {
    throw InvalidConfig("unknown reward wrapper '" + w.name + "'");
  }
  r.finish();
  return w;
}

}  // namespace

json to_json(const RunConfig& c) {
  json wrappers = json::array();
  for (const auto& w : c.wrappers) wrappers.push_back(wrapper_to_json(w));
  const auto& cma = c.optimizer.cma;
  return json{
      {"env",
       {{"obs_h", c.env.obs_h},
        {"obs_w", c.env.obs_w},
        {"act_h", c.env.act_h},
        {"act_w", c.env.act_w},
        {"rule", format_rule_string(c.env.rule)},
        {"batch", c.env.batch_n},
        {"episode_steps", c.env.episode_steps}}},
      {"agent",
       {{"family", to_string(c.agent.family)},
        {"hidden", c.agent.hidden},
        {"expand", c.agent.expand},
        {"iterations", c.agent.iterations},
        {"threshold", c.agent.threshold},
        {"w_max", c.agent.w_max}}},
      {"wrappers", wrappers},
      {"optimizer",
       {{"sigma", c.optimizer.sigma},
        {"init", c.optimizer.init},
        {"init_value", c.optimizer.init_value},
        {"lambda", cma.lambda},
        {"c_sigma", cma.c_sigma},
        {"d_sigma", cma.d_sigma},
        {"c_c", cma.c_c},
        {"c_1", cma.c_1},
        {"c_mu", cma.c_mu}}},
      {"steps", c.steps},
      {"episodes", c.episodes},
      {"generations", c.generations},
      {"seed", c.seed},
      {"out", c.out},
      {"persistent_novelty", c.persistent_novelty},
      {"target_fitness", c.target_fitness},
      {"stop_at_target", c.stop_at_target},
  };
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  {
    Reader top(j, "config");
    if (top.has("env")) {
      Reader r(top.sub("env"), "env");
      r.get("obs_h", c.env.obs_h);
      r.get("obs_w", c.env.obs_w);
      r.get("act_h", c.env.act_h);
      r.get("act_w", c.env.act_w);
      std::string rule = format_rule_string(c.env.rule);
      r.get("rule", rule);
      try {
        c.env.rule = parse_rule_string(rule);
      } catch (const MalformedRule& e) {
        throw InvalidConfig(std::string("env.rule: ") + e.what());
      }
      r.get("batch", c.env.batch_n);
      r.get("episode_steps", c.env.episode_steps);
      r.finish();
    }
    if (top.has("agent")) {
      Reader r(top.sub("agent"), "agent");
      std::string family = to_string(c.agent.family);
      r.get("family", family);
      c.agent.family = parse_agent_family(family);
      r.get("hidden", c.agent.hidden);
      r.get("expand", c.agent.expand);
      r.get("iterations", c.agent.iterations);
      r.get("threshold", c.agent.threshold);
      r.get("w_max", c.agent.w_max);
      r.finish();
    }
    if (top.has("wrappers")) {
      const auto& list = top.sub("wrappers");
      if (!list.is_array()) throw InvalidConfig("wrappers must be a list");
      for (const auto& w : list) c.wrappers.push_back(wrapper_from_json(w));
    }
    if (top.has("optimizer")) {
      Reader r(top.sub("optimizer"), "optimizer");
      r.get("sigma", c.optimizer.sigma);
      r.get("init", c.optimizer.init);
      r.get("init_value", c.optimizer.init_value);
      r.get("lambda", c.optimizer.cma.lambda);
      r.get("c_sigma", c.optimizer.cma.c_sigma);
      r.get("d_sigma", c.optimizer.cma.d_sigma);
      r.get("c_c", c.optimizer.cma.c_c);
      r.get("c_1", c.optimizer.cma.c_1);
      r.get("c_mu", c.optimizer.cma.c_mu);
      r.finish();
    }
    top.get("steps", c.steps);
    top.get("episodes", c.episodes);
    top.get("generations", c.generations);
    top.get("seed", c.seed);
    top.get("out", c.out);
    top.get("persistent_novelty", c.persistent_novelty);
    top.get("target_fitness", c.target_fitness);
    top.get("stop_at_target", c.stop_at_target);
    top.finish();
  }
  c.agent.obs_h = c.env.obs_h;
  c.agent.obs_w = c.env.obs_w;
  c.agent.act_h = c.env.act_h;
  c.agent.act_w = c.env.act_w;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// YAML

namespace {

json scalar_to_json(const YAML::Node& node) {
  const std::string& s = node.Scalar();
  if (node.Tag() == "!") return s;  // explicitly quoted
  if (s == "true" || s == "True" || s == "yes") return true;
  if (s == "false" || s == "False" || s == "no") return false;
  if (s == "null" || s == "~" || s.empty()) return nullptr;
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  return s;
}

json node_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      json out = json::array();
      for (const auto& item : node) out.push_back(node_to_json(item));
      return out;
    }
    case YAML::NodeType::Map: {
      json out = json::object();
      for (const auto& kv : node) out[kv.first.as<std::string>()] = node_to_json(kv.second);
      return out;
    }
  }
  return nullptr;
}

}  // namespace

json yaml_to_json(const std::string& text) {
  try {
    const auto root = YAML::Load(text);
    if (root.IsNull()) return json::object();
    return node_to_json(root);
  } catch (const YAML::Exception& e) {
    throw InvalidConfig(std::string("yaml: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  const auto ext = path.extension().string();
  if (ext == ".json") {
    try {
      return run_config_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
      throw InvalidConfig(std::string("json: ") + e.what());
    }
  }
  return run_config_from_json(yaml_to_json(text));
}

std::vector<WrapperSpec> parse_wrapper_list(const std::string& text) {
  std::vector<WrapperSpec> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    const auto item = text.substr(start, end - start);
    start = end + 1;
    if (item.empty()) continue;
    WrapperSpec w;
    const auto colon = item.find(':');
    w.name = item.substr(0, colon);
    if (colon != std::string::npos) {
      try {
        w.weight = std::stod(item.substr(colon + 1));
      } catch (const std::exception&) {
        throw InvalidConfig("bad wrapper weight in '" + item + "'");
      }
    }
    if (w.name != "speed" && w.name != "corner" && w.name != "rnd" && w.name != "ae") {
      throw InvalidConfig("unknown reward wrapper '" + w.name + "'");
    }
    out.push_back(w);
  }
  return out;
}

}  // namespace lifegym
