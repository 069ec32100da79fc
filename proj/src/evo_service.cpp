#include "lifegym/evo_service.hpp"

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/dataflow_exception.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <httplib.h>

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>

#include "lifegym/pattern_io.hpp"

namespace lifegym::service {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Frame encoding

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<const std::uint8_t*, 6, 8>>;
  std::string out(It(bytes.data()), It(bytes.data() + bytes.size()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  if (text.size() % 4 != 0) throw IoError("base64 length is not a multiple of 4");
  std::string body = text;
  std::size_t pad = 0;
  for (auto it = body.rbegin(); it != body.rend() && *it == '=' && pad < 2; ++it, ++pad) *it = 'A';
  try {
    std::vector<std::uint8_t> out(It(body.cbegin()), It(body.cend()));
    out.resize(out.size() - pad);
    return out;
  } catch (const dataflow_exception& e) {
    throw IoError(std::string("invalid base64: ") + e.what());
  }
}

std::string encode_frame(const GridBatch& grid, int b) {
  const int row_bytes = (grid.width() + 7) / 8;
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(row_bytes) * grid.height(), 0);
  for (int r = 0; r < grid.height(); ++r)
    for (int c = 0; c < grid.width(); ++c)
      if (grid.get(b, r, c)) bytes[static_cast<std::size_t>(r) * row_bytes + c / 8] |= std::uint8_t(0x80u >> (c % 8));
  return base64_encode(bytes);
}

GridBatch decode_frame(const std::string& data, int height, int width) {
  const auto bytes = base64_decode(data);
  const int row_bytes = (width + 7) / 8;
  if (bytes.size() != static_cast<std::size_t>(row_bytes) * height) {
    throw ShapeMismatch("frame holds " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(row_bytes * height));
  }
  GridBatch g(1, height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      if (bytes[static_cast<std::size_t>(r) * row_bytes + c / 8] & (0x80u >> (c % 8))) g.set(0, r, c, true);
  return g;
}

json RolloutClip::to_json() const {
  json comps = json::array();
  for (std::size_t i = 0; i < components.size(); ++i) comps.push_back({{"name", wrapper_names[i]}, {"rewards", components[i]}});
  return json{{"id", id},           {"width", width},   {"height", height},     {"stride", stride},
              {"steps", steps},     {"frames", frames}, {"rewards", rewards},   {"components", comps},
              {"fitness", fitness}, {"mobility", mobility.to_json()}};
}

std::string to_string(Status s) {
  switch (s) {
    case Status::awaiting_votes:
      return "awaiting_votes";
    case Status::advancing:
      return "advancing";
    case Status::closed:
      return "closed";
  }
  return "unknown";
}

namespace {

Status parse_status(const std::string& s) {
  if (s == "advancing" || s == "awaiting_votes") return Status::awaiting_votes;  // an interrupted advance is redone
  if (s == "closed") return Status::closed;
  throw IoError("unknown session status '" + s + "'");
}

RolloutClip make_clip(const RunConfig& cfg, const std::vector<double>& genome, int id, int stride) {
  RolloutOptions opts;
  opts.record_frames = true;
  opts.frame_stride = stride;
  const auto trace = rollout_genome(cfg, genome, opts);
  RolloutClip clip;
  clip.id = id;
  clip.width = cfg.env.obs_w;
  clip.height = cfg.env.obs_h;
  clip.stride = stride;
  clip.steps = trace.frame_steps;
  for (const auto& f : trace.frames) clip.frames.push_back(encode_frame(f));
  clip.rewards = trace.rewards;
  for (const auto& w : cfg.wrappers) clip.wrapper_names.push_back(w.name);
  clip.components = trace.components;
  clip.fitness = trace.fitness;
  auto agent = make_agent(cfg.agent);
  agent->set_params(genome);
  clip.mobility = detect_mobility(action_pattern(*agent, cfg.env.rule), cfg.env.rule, cfg.steps);
  return clip;
}

std::vector<RolloutClip> make_clips(const RunConfig& cfg, const std::vector<std::vector<double>>& candidates, int stride) {
  const int n = static_cast<int>(candidates.size());
  std::vector<RolloutClip> clips(candidates.size());
  std::vector<std::exception_ptr> errors(candidates.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      clips[static_cast<std::size_t>(i)] = make_clip(cfg, candidates[static_cast<std::size_t>(i)], i, stride);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return clips;
}

void write_atomic(const fs::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  write_text_file(tmp, text);
  fs::rename(tmp, path);
}

}  // namespace

// ---------------------------------------------------------------------------
// Sessions

struct SessionManager::Session {
  std::string id;
  RunConfig config;
  std::unique_ptr<CmaEs> es;  // state after the outstanding ask
  std::vector<std::vector<double>> candidates;
  std::vector<RolloutClip> clips;
  std::vector<std::vector<int>> ledger;
  Status status = Status::awaiting_votes;
  mutable std::mutex mutex;
};

namespace {

// Written before each ask so that a restart re-asks the same candidates.
void save_session(const fs::path& root, const std::string& id, const RunConfig& config, const CmaEs& es,
                  const std::vector<std::vector<int>>& ledger, Status status) {
  if (root.empty()) return;
  const auto dir = root / id;
  fs::create_directories(dir);
  if (!fs::exists(dir / "config.json")) write_atomic(dir / "config.json", to_json(config).dump(2) + "\n");
  const json state{{"id", id}, {"generation", es.generation()}, {"status", to_string(status)}, {"votes", ledger}};
  write_atomic(dir / "state.json", state.dump(2) + "\n");
  es.save(dir / "checkpoint");
}

}  // namespace

SessionManager::SessionManager(ManagerOptions options) : options_(std::move(options)) {
  if (options_.frame_stride < 1) throw InvalidConfig("frame stride must be >= 1");
  if (options_.state_dir.empty()) return;
  fs::create_directories(options_.state_dir);
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(options_.state_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "state.json")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) restore(d);
}

SessionManager::~SessionManager() = default;

void SessionManager::restore(const fs::path& dir) {
  auto s = std::make_shared<Session>();
  const auto state = json::parse(read_text_file(dir / "state.json"));
  s->id = state.at("id").get<std::string>();
  s->config = run_config_from_json(json::parse(read_text_file(dir / "config.json")));
  s->es = std::make_unique<CmaEs>(CmaEs::load(dir / "checkpoint"));
  s->ledger = state.at("votes").get<std::vector<std::vector<int>>>();
  s->ledger.resize(std::min<std::size_t>(s->ledger.size(), static_cast<std::size_t>(s->es->generation())));
  s->status = parse_status(state.at("status").get<std::string>());
  s->candidates = s->es->ask();
  s->clips = make_clips(s->config, s->candidates, options_.frame_stride);

  const auto digits = s->id.find_first_of("0123456789");
  if (digits != std::string::npos) {
    const long n = std::stol(s->id.substr(digits));
    if (n >= next_id_) next_id_ = n + 1;
  }
  std::unique_lock lock(map_mutex_);
  sessions_[s->id] = std::move(s);
}

std::string SessionManager::create(const RunConfig& config) {
  const int lambda = config.optimizer.cma.lambda;
  if (lambda < 2 || lambda > kMaxLambda) {
    throw InvalidConfig("session lambda must be between 2 and " + std::to_string(kMaxLambda) + ", got " +
                        std::to_string(lambda));
  }
  config.validate();
  auto s = std::make_shared<Session>();
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06ld", next_id_++);
  s->id = buf;
  s->config = config;
  s->config.out.clear();
  CmaOptions opts = config.optimizer.cma;
  opts.seed = config.seed;
  s->es = std::make_unique<CmaEs>(initial_mean(config), config.optimizer.sigma, opts);
  save_session(options_.state_dir, s->id, s->config, *s->es, s->ledger, s->status);
  s->candidates = s->es->ask();
  s->clips = make_clips(s->config, s->candidates, options_.frame_stride);
  std::unique_lock lock(map_mutex_);
  sessions_[s->id] = s;
  return s->id;
}

std::vector<double> SessionManager::ranking_fitness(const std::vector<int>& ranking, int lambda) {
  if (ranking.empty()) throw InvalidVote("ranking is empty");
  std::vector<double> fitness(static_cast<std::size_t>(lambda), -1.0);
  std::vector<bool> seen(static_cast<std::size_t>(lambda), false);
  const int k = static_cast<int>(ranking.size());
  for (int r = 0; r < k; ++r) {
    const int id = ranking[static_cast<std::size_t>(r)];
    if (id < 0 || id >= lambda) throw InvalidVote("unknown candidate " + std::to_string(id));
    if (seen[static_cast<std::size_t>(id)]) throw InvalidVote("candidate " + std::to_string(id) + " ranked twice");
    seen[static_cast<std::size_t>(id)] = true;
    fitness[static_cast<std::size_t>(id)] = k - r;
  }
  return fitness;
}

void SessionManager::vote(const std::string& id, const std::vector<int>& ranking) {
  const auto s = find(id);
  std::vector<std::vector<double>> candidates;
  std::vector<double> fitness;
  std::optional<CmaEs> es;
  std::vector<std::vector<int>> ledger;
  {
    std::lock_guard lock(s->mutex);
    if (s->status != Status::awaiting_votes) throw VoteConflict("session " + id + " is " + to_string(s->status));
    fitness = ranking_fitness(ranking, s->es->lambda());
    s->status = Status::advancing;
    candidates = s->candidates;
    es.emplace(*s->es);
    ledger = s->ledger;
  }
  try {
    es->tell(candidates, fitness);
    ledger.push_back(ranking);
    save_session(options_.state_dir, id, s->config, *es, ledger, Status::awaiting_votes);
    if (options_.on_advancing) options_.on_advancing(id);
    auto next = es->ask();
    auto clips = make_clips(s->config, next, options_.frame_stride);
    std::lock_guard lock(s->mutex);
    *s->es = std::move(*es);
    s->candidates = std::move(next);
    s->clips = std::move(clips);
    s->ledger = std::move(ledger);
    s->status = Status::awaiting_votes;
  } catch (...) {
    std::lock_guard lock(s->mutex);
    s->status = Status::awaiting_votes;
    throw;
  }
}

void SessionManager::close(const std::string& id) {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (s->status == Status::advancing) throw VoteConflict("session " + id + " is advancing");
  s->status = Status::closed;
  if (!options_.state_dir.empty()) {
    const json state{{"id", id}, {"generation", s->es->generation()}, {"status", "closed"}, {"votes", s->ledger}};
    write_atomic(options_.state_dir / id / "state.json", state.dump(2) + "\n");
  }
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("no session '" + id + "'");
  return it->second;
}

json SessionManager::summary(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  return json{{"id", s->id},
              {"generation", s->es->generation()},
              {"status", to_string(s->status)},
              {"lambda", s->es->lambda()},
              {"dimension", s->es->dimension()},
              {"sigma", s->es->sigma()},
              {"mean", s->es->mean()},
              {"votes", s->ledger},
              {"frame_stride", options_.frame_stride},
              {"config", to_json(s->config)}};
}

RolloutClip SessionManager::clip(const std::string& id, int candidate) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (candidate < 0 || candidate >= static_cast<int>(s->clips.size())) {
    throw NotFound("session " + id + " has no candidate " + std::to_string(candidate));
  }
  return s->clips[static_cast<std::size_t>(candidate)];
}

std::vector<RolloutClip> SessionManager::clips(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->clips;
}

std::vector<std::vector<double>> SessionManager::candidates(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->candidates;
}

std::vector<double> SessionManager::mean(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->es->mean();
}

long SessionManager::generation(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->es->generation();
}

Status SessionManager::status(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->status;
}

std::vector<std::string> SessionManager::ids() const {
  std::shared_lock lock(map_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& detail) {
  send_json(res, json{{"error", kind}, {"detail", detail}}, status);
}

template <typename F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    fn();
  } catch (const NotFound& e) {
    send_error(res, 404, "NotFound", e.what());
  } catch (const VoteConflict& e) {
    send_error(res, 409, "InvalidVote", e.what());
  } catch (const InvalidVote& e) {
    send_error(res, 400, "InvalidVote", e.what());
  } catch (const InvalidConfig& e) {
    send_error(res, 400, "InvalidConfig", e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, "BadRequest", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "InternalError", e.what());
  }
}

json generation_body(const SessionManager& m, const std::string& id) {
  json clips = json::array();
  for (const auto& c : m.clips(id)) clips.push_back(c.to_json());
  return json{{"id", id}, {"generation", m.generation(id)}, {"candidates", clips}};
}

}  // namespace

Server::Server(SessionManager& manager) : manager_(manager), http_(std::make_unique<httplib::Server>()) {
  auto& m = manager_;
  http_->Get("/healthz", [](const httplib::Request&, httplib::Response& res) { send_json(res, {{"status", "ok"}}); });

  http_->Post("/sessions", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = req.body.empty() ? json::object() : json::parse(req.body);
      const auto id = m.create(run_config_from_json(body));
      send_json(res, generation_body(m, id), 201);
    });
  });

  http_->Get("/sessions", [&m](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, {{"sessions", m.ids()}}); });
  });

  http_->Get(R"(/sessions/([^/]+))", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, m.summary(req.matches[1])); });
  });

  http_->Delete(R"(/sessions/([^/]+))", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      m.close(req.matches[1]);
      send_json(res, m.summary(req.matches[1]));
    });
  });

  http_->Get(R"(/sessions/([^/]+)/candidates/(\d+))", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string cid = req.matches[2];
      if (cid.size() > 6) throw NotFound("no candidate " + cid);
      send_json(res, m.clip(req.matches[1], std::stoi(cid)).to_json());
    });
  });

  http_->Post(R"(/sessions/([^/]+)/votes)", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      const auto body = json::parse(req.body);
      if (!body.is_object() || !body.contains("ranking") || body.size() != 1) {
        throw InvalidVote("body must be {\"ranking\": [candidate ids]}");
      }
      m.vote(id, body.at("ranking").get<std::vector<int>>());
      send_json(res, generation_body(m, id));
    });
  });
}

Server::~Server() { stop(); }

bool Server::listen(const std::string& host, int port) { return http_->listen(host, port); }
int Server::bind_any(const std::string& host) { return http_->bind_to_any_port(host); }
bool Server::listen_after_bind() { return http_->listen_after_bind(); }
void Server::wait_until_ready() const { http_->wait_until_ready(); }
void Server::stop() {
  if (http_) http_->stop();
}

}  // namespace lifegym::service
