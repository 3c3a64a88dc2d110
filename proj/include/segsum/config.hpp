#pragma once

#include "segsum/cluster.hpp"
#include "segsum/modelclient.hpp"
#include "segsum/segment.hpp"
#include "segsum/summarize.hpp"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace segsum {

/// A configured endpoint plus what is needed to describe it in provenance.
struct EndpointSpec {
    /// "openai" or "mock".
    std::string kind;
    Endpoint endpoint;
    /// Mock scripts as (pattern, response template) pairs.
    std::vector<std::pair<std::string, std::string>> script;
};

/// Everything a CLI invocation needs, loaded from one JSON file and then
/// overridden by flags.
struct AppConfig {
    std::optional<std::filesystem::path> manifest;
    MethodTag method = MethodTag::seg_sum;
    std::filesystem::path output_dir = "out";
    std::optional<std::filesystem::path> cache_dir;
    std::optional<std::filesystem::path> prompts_dir;
    int workers = 1;
    std::uint64_t seed = 0;
    SegmenterConfig segmenter;
    KMeansConfig kmeans;
    DecodeParams decode;
    std::optional<EndpointSpec> vision;
    std::optional<EndpointSpec> text;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Process environment lookup.
std::optional<std::string> process_env(const std::string& name);

/// Replaces every ${NAME} with the variable's value. Unset variables are a
/// ValidationError; "$$" is a literal dollar sign.
std::string interpolate_env(std::string_view text, const EnvLookup& env = process_env);

/// Parses a config document; relative paths resolve against base_dir.
AppConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                       const EnvLookup& env = process_env);
AppConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env);

/// Applies --seed: the clustering seed and the remote segmenter seed.
void apply_seed(AppConfig& config, std::uint64_t seed);

/// Everything that influences outputs, in a fixed key order. Credential
/// variable names, output/cache locations and the worker count are left out.
nlohmann::ordered_json canonical_config(const AppConfig& config);
std::string config_digest(const AppConfig& config);

/// Throws ValidationError for out-of-range settings or missing paths.
void validate(const AppConfig& config);

} // namespace segsum
