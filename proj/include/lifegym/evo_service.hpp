#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "lifegym/cmaes.hpp"
#include "lifegym/errors.hpp"
#include "lifegym/grid.hpp"
#include "lifegym/harness.hpp"
#include "lifegym/run_config.hpp"

namespace httplib {
class Server;
}

namespace lifegym::service {

inline constexpr int kMaxLambda = 32;

/// A vote that arrived while the session was not awaiting votes.
class VoteConflict : public InvalidVote {
 public:
  using InvalidVote::InvalidVote;
};

/// Rows packed MSB-first (column 0 is bit 7 of the row's first byte), each
/// row padded to a whole byte, then base64.
std::string encode_frame(const GridBatch& grid, int b = 0);
/// Throws ShapeMismatch when the payload does not hold h x w cells, IoError on bad base64.
GridBatch decode_frame(const std::string& data, int height, int width);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

struct RolloutClip {
  int id = 0;
  int width = 0;
  int height = 0;
  int stride = 1;
  std::vector<int> steps;
  std::vector<std::string> frames;  // encode_frame of instance 0 after each recorded step
  std::vector<double> rewards;
  std::vector<std::string> wrapper_names;
  std::vector<std::vector<double>> components;
  double fitness = 0.0;
  MobilityReport mobility;

  nlohmann::json to_json() const;
};

enum class Status { awaiting_votes, advancing, closed };
std::string to_string(Status s);

struct ManagerOptions {
  std::filesystem::path state_dir;  // empty: nothing is persisted
  int frame_stride = 1;
  /// Called between tell and the next rollouts while a session is advancing.
  std::function<void(const std::string& id)> on_advancing;
};

/// Owns every session. Operations on one session are serialized; reads see
/// the last completed generation.
class SessionManager {
 public:
  explicit SessionManager(ManagerOptions options = {});
  ~SessionManager();

  /// Throws InvalidConfig (including lambda outside 1..32, or 1).
  std::string create(const RunConfig& config);

  /// Ranking is an ordered list of candidate ids, best first. Fitness is
  /// k - r for the candidate at 0-based position r of k, -1 if unranked.
  /// Throws NotFound / InvalidVote.
  void vote(const std::string& id, const std::vector<int>& ranking);
  void close(const std::string& id);

  nlohmann::json summary(const std::string& id) const;
  RolloutClip clip(const std::string& id, int candidate) const;
  std::vector<RolloutClip> clips(const std::string& id) const;
  std::vector<std::vector<double>> candidates(const std::string& id) const;
  std::vector<double> mean(const std::string& id) const;
  long generation(const std::string& id) const;
  Status status(const std::string& id) const;
  std::vector<std::string> ids() const;

  /// Ranking -> fitness as described for vote(). Throws InvalidVote.
  static std::vector<double> ranking_fitness(const std::vector<int>& ranking, int lambda);

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  void restore(const std::filesystem::path& dir);

  ManagerOptions options_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::atomic<long> next_id_{1};
};

/// HTTP front end. Routes:
///   POST /sessions                       body RunConfig -> {id, generation, candidates}
///   GET  /sessions                       -> {sessions: [id...]}
///   GET  /sessions/{id}                  -> summary
///   GET  /sessions/{id}/candidates/{cid} -> clip
///   POST /sessions/{id}/votes            body {ranking: [cid...]} -> {id, generation, candidates}
///   DELETE /sessions/{id}                -> summary (closed)
///   GET  /healthz                        -> {status: ok}
/// Errors are {error, detail} with 400 / 404 / 409 / 500.
class Server {
 public:
  explicit Server(SessionManager& manager);
  ~Server();

  /// Binds and serves until stop(). Returns false if the bind fails.
  bool listen(const std::string& host, int port);
  /// Binds to a free port and returns it; serve with listen_after_bind().
  int bind_any(const std::string& host);
  bool listen_after_bind();
  void wait_until_ready() const;
  void stop();

 private:
  SessionManager& manager_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace lifegym::service
