#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace commdyn {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds an ephemeral port
  std::vector<std::filesystem::path> corpus_paths;
  std::optional<std::filesystem::path> session_dir;
  std::optional<std::filesystem::path> ui_dir;
  std::string cors_origin = "*";
  std::size_t profile_cache_entries = 64;
};

/// Overrides fields from COMMDYN_HOST, COMMDYN_PORT, COMMDYN_CORPUS
/// (colon-separated paths), COMMDYN_SESSION_DIR and COMMDYN_UI_DIR.
ServerConfig apply_env(ServerConfig config);

/// JSON-over-HTTP service for corpora, profiles, episodes and labeling sessions.
///
///   GET  /api/health
///   GET  /api/pairs?min=N
///   GET  /api/pairs/{a}/{b}/profile?sigma&h&mu&grid_n&from&to&zoom_level
///   GET  /api/pairs/{a}/{b}/episodes?epsilon&epsilon_mode&min_duration&merge_gap&...
///   POST /api/sessions
///   GET  /api/sessions/{id}
///   PUT  /api/sessions/{id}/labels            {episode_ref, label}
///   PUT  /api/sessions/{id}/view_state        {...}
///   POST /api/sessions/{id}/models/{class}/train[?async=1]
///   GET  /api/sessions/{id}/models/{class}
///   GET  /api/sessions/{id}/models/{class}/status
///   GET  /api/sessions/{id}/models/{class}/predictions?min_confidence&polarity
///   GET  /api/sessions/{id}/models/{class}/uncertain?limit
///   POST /api/sessions/{id}/models/combined   {members, mode, name?}
///
/// Every corpus is loaded in the constructor; an unreadable path throws
/// Error(IoError) naming it.
class Server {
 public:
  explicit Server(ServerConfig config);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds the listening socket and returns the bound port.
  int bind();
  /// Serves until stop(); bind() is called first if needed.
  void listen();
  void stop();
  /// Blocks until listen() is accepting connections.
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace commdyn
