#include "segsum/cache.hpp"

#include "segsum/digest.hpp"

#include <fmt/format.h>

#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace segsum {

using ordered_json = nlohmann::ordered_json;

ordered_json canonical_request(const Endpoint& endpoint, const CompletionRequest& request) {
    ordered_json j;
    j["model_id"] = endpoint.model_id;
    ordered_json turns = ordered_json::array();
    for (const auto& t : request.turns) {
        ordered_json jt;
        jt["role"] = std::string(to_string(t.role));
        jt["text"] = t.text;
        if (t.image_png) {
            jt["image_sha256"] = sha256_hex(*t.image_png);
        }
        turns.push_back(std::move(jt));
    }
    j["turns"] = std::move(turns);
    ordered_json decode;
    decode["max_new_tokens"] = request.decode.max_new_tokens;
    decode["num_beams"] = request.decode.num_beams;
    decode["deterministic"] = request.decode.deterministic;
    if (!request.decode.deterministic) {
        decode["temperature"] = request.decode.temperature;
    }
    j["decode"] = std::move(decode);
    return j;
}

std::string cache_key(const Endpoint& endpoint, const CompletionRequest& request) {
    return sha256_hex(canonical_request(endpoint, request).dump());
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
    return dir_ / (key + ".json");
}

std::optional<CacheEntry> ResponseCache::get(const std::string& key) const {
    const auto path = path_for(key);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    const std::string body{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    try {
        const auto j = ordered_json::parse(body);
        if (j.at("key").get<std::string>() != key) {
            throw std::runtime_error("key mismatch");
        }
        CacheEntry e;
        e.key = key;
        e.request = j.at("request");
        e.completion.text = j.at("response").at("text").get<std::string>();
        const auto& usage = j.at("response").at("usage");
        e.completion.usage.prompt_tokens = usage.value("prompt_tokens", 0);
        e.completion.usage.completion_tokens = usage.value("completion_tokens", 0);
        e.completion.usage.transmitted_params = usage.value("transmitted_params", std::vector<std::string>{});
        e.completion.usage.ignored_params = usage.value("ignored_params", std::vector<std::string>{});
        e.timestamp = j.value("timestamp", "");
        return e;
    } catch (const std::exception& ex) {
        fmt::print(stderr, "warning: ignoring corrupt cache entry {}: {}\n", path.string(), ex.what());
        return std::nullopt;
    }
}

void ResponseCache::put(const CacheEntry& entry) const {
    std::filesystem::create_directories(dir_);
    ordered_json j;
    j["key"] = entry.key;
    j["request"] = entry.request;
    ordered_json usage;
    usage["prompt_tokens"] = entry.completion.usage.prompt_tokens;
    usage["completion_tokens"] = entry.completion.usage.completion_tokens;
    usage["transmitted_params"] = entry.completion.usage.transmitted_params;
    usage["ignored_params"] = entry.completion.usage.ignored_params;
    j["response"] = {{"text", entry.completion.text}, {"usage", usage}};
    j["timestamp"] = entry.timestamp;

    const auto final_path = path_for(entry.key);
    std::ostringstream tmp_name;
    tmp_name << entry.key << ".tmp." << ::getpid() << '.' << std::hash<std::thread::id>{}(std::this_thread::get_id());
    const auto tmp_path = dir_ / tmp_name.str();
    {
        std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw RuntimeError("cannot write cache entry: " + tmp_path.string());
        }
        out << j.dump(2) << '\n';
        if (!out.flush()) {
            throw RuntimeError("cannot write cache entry: " + tmp_path.string());
        }
    }
    std::filesystem::rename(tmp_path, final_path);
}

} // namespace segsum
