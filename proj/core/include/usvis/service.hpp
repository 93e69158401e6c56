#pragma once

#include <chrono>
#include <cstddef>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "usvis/bilateral.hpp"
#include "usvis/features.hpp"
#include "usvis/fusion.hpp"

namespace usvis {

/// Cached state for one uploaded volume. Everything except the last-used
/// params is immutable once the session is published.
class Session {
 public:
  Session(std::string id, Volume volume, Volume filtered, FeatureSet features);

  const std::string& id() const noexcept { return id_; }
  const Volume& volume() const noexcept { return volume_; }
  const Volume& filtered() const noexcept { return filtered_; }
  const FeatureSet& features() const noexcept { return features_; }
  std::chrono::system_clock::time_point created() const noexcept { return created_; }

  std::optional<FusionParams> last_params() const;
  void set_last_params(FusionParams params);

  /// Fused volume for params; the most recent result is reused while params
  /// stay the same.
  std::shared_ptr<const FusedVolume> fused(const FusionParams& params);

 private:
  std::string id_;
  Volume volume_;
  Volume filtered_;
  FeatureSet features_;
  std::chrono::system_clock::time_point created_;
  mutable std::mutex params_mutex_;
  std::optional<FusionParams> last_params_;
  std::mutex fused_mutex_;
  std::string fused_key_;
  std::shared_ptr<const FusedVolume> fused_;
};

/// In-memory LRU of sessions.
class SessionStore {
 public:
  explicit SessionStore(std::size_t capacity);

  std::string next_id();
  void insert(std::shared_ptr<Session> session);
  /// Marks the session most recently used.
  std::shared_ptr<Session> find(const std::string& id);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::size_t capacity_;
  std::uint64_t counter_ = 0;
  std::list<std::string> order_;  // front = most recent
  std::unordered_map<std::string, std::pair<std::shared_ptr<Session>, std::list<std::string>::iterator>>
      sessions_;
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8787;  // 0 picks a free port
  std::size_t max_sessions = 4;
  std::size_t max_upload_bytes = std::size_t{512} << 20;
  BilateralParams bilateral;
  FeatureConfig features;
};

/// HTTP front end:
///   POST /api/v1/volumes               VVOL body or multipart PNG frames -> 201 {"id"}
///   GET  /api/v1/volumes/{id}/meta     -> {dims, spacing, features, params}
///   POST /api/v1/volumes/{id}/render   {params, rotation, mode, size} -> image/png
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket and returns the port. Throws IoError.
  int bind();
  /// Serves until stop(). Binds first if needed.
  void run();
  void stop();

  SessionStore& sessions() noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace usvis
