#pragma once

#include "segsum/modelclient.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace segsum {

/// Canonical JSON describing a request: model id, turns (images by SHA-256)
/// and decode params. The cache key is its SHA-256.
nlohmann::ordered_json canonical_request(const Endpoint& endpoint, const CompletionRequest& request);
std::string cache_key(const Endpoint& endpoint, const CompletionRequest& request);

struct CacheEntry {
    std::string key;
    nlohmann::ordered_json request;
    Completion completion;
    std::string timestamp;
};

/// One JSON file per entry named <key>.json. Writes go to a temporary file
/// that is renamed into place.
class ResponseCache {
  public:
    explicit ResponseCache(std::filesystem::path dir);

    /// nullopt on a miss; a corrupt entry logs a warning and counts as a miss.
    [[nodiscard]] std::optional<CacheEntry> get(const std::string& key) const;
    void put(const CacheEntry& entry) const;
    [[nodiscard]] std::filesystem::path path_for(const std::string& key) const;

  private:
    std::filesystem::path dir_;
};

} // namespace segsum
