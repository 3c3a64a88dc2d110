#include "segsum/config.hpp"

#include "segsum/digest.hpp"
#include "segsum/error.hpp"

#include <fmt/format.h>

#include <fstream>
#include <set>

namespace segsum {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str()); v != nullptr) {
        return std::string(v);
    }
    return std::nullopt;
}

std::string interpolate_env(std::string_view text, const EnvLookup& env) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '$') {
            out.push_back(text[i++]);
            continue;
        }
        if (i + 1 < text.size() && text[i + 1] == '$') {
            out.push_back('$');
            i += 2;
            continue;
        }
        if (i + 1 < text.size() && text[i + 1] == '{') {
            const auto close = text.find('}', i + 2);
            if (close == std::string_view::npos) {
                throw ValidationError(fmt::format("unterminated ${{...}} in \"{}\"", text));
            }
            const std::string name(text.substr(i + 2, close - i - 2));
            if (name.empty()) {
                throw ValidationError("empty variable name in ${}");
            }
            const auto value = env(name);
            if (!value) {
                throw ValidationError(fmt::format("environment variable {} is not set", name));
            }
            out += *value;
            i = close + 1;
            continue;
        }
        out.push_back(text[i++]);
    }
    return out;
}

namespace {

void interpolate_tree(json& node, const EnvLookup& env) {
    if (node.is_string()) {
        node = interpolate_env(node.get<std::string>(), env);
    } else if (node.is_structured()) {
        for (auto& child : node) {
            interpolate_tree(child, env);
        }
    }
}

void check_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) {
        throw ValidationError(fmt::format("{}: expected an object", where));
    }
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const auto a : allowed) {
            ok = ok || key == a;
        }
        if (!ok) {
            throw ValidationError(fmt::format("{}: unknown key \"{}\"", where, key));
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out, std::string_view where) {
    if (!obj.contains(key)) {
        return;
    }
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(fmt::format("{}.{}: wrong type", where, key));
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

SegmenterBackend parse_backend(const std::string& s) {
    if (s == "grid") {
        return SegmenterBackend::grid;
    }
    if (s == "gutter") {
        return SegmenterBackend::gutter;
    }
    if (s == "remote") {
        return SegmenterBackend::remote;
    }
    throw ValidationError(fmt::format("segmenter.backend: unknown backend \"{}\"", s));
}

std::string_view backend_name(SegmenterBackend b) {
    switch (b) {
    case SegmenterBackend::grid:
        return "grid";
    case SegmenterBackend::gutter:
        return "gutter";
    case SegmenterBackend::remote:
        return "remote";
    }
    return "gutter";
}

EndpointSpec parse_endpoint(const json& obj, std::string_view role) {
    const std::string where = fmt::format("endpoints.{}", role);
    check_keys(obj, where,
               {"kind", "name", "base_url", "model_id", "auth_env", "max_concurrency", "requests_per_minute",
                "size_limited", "supports_images", "accepts_num_beams", "platform_defaults", "timeout_s", "script"});
    EndpointSpec spec;
    spec.kind = "openai";
    read(obj, "kind", spec.kind, where);
    Endpoint& e = spec.endpoint;
    read(obj, "model_id", e.model_id, where);
    if (e.model_id.empty()) {
        throw ValidationError(where + ".model_id is required");
    }
    if (spec.kind == "mock") {
        if (!obj.contains("script") || !obj.at("script").is_array()) {
            throw ValidationError(where + ".script must be a list of {pattern, response}");
        }
        std::vector<MockBackend::Rule> rules;
        for (const auto& rule : obj.at("script")) {
            check_keys(rule, where + ".script[]", {"pattern", "response"});
            std::string pattern;
            std::string response;
            read(rule, "pattern", pattern, where);
            read(rule, "response", response, where);
            spec.script.emplace_back(pattern, response);
            rules.push_back({pattern, response});
        }
        bool images = true;
        read(obj, "supports_images", images, where);
        e = mock_backend(std::move(rules), e.model_id, nullptr, images);
    } else if (spec.kind != "openai") {
        throw ValidationError(fmt::format("{}.kind: expected openai or mock, got \"{}\"", where, spec.kind));
    } else {
        read(obj, "base_url", e.base_url, where);
        if (e.base_url.empty()) {
            throw ValidationError(where + ".base_url is required");
        }
        read(obj, "auth_env", e.auth_ref, where);
        read(obj, "supports_images", e.supports_images, where);
        read(obj, "accepts_num_beams", e.accepts_num_beams, where);
        e.name.clear();
    }
    read(obj, "name", e.name, where);
    read(obj, "max_concurrency", e.max_concurrency, where);
    read(obj, "requests_per_minute", e.requests_per_minute, where);
    read(obj, "size_limited", e.size_limited, where);
    read(obj, "platform_defaults", e.platform_defaults, where);
    read(obj, "timeout_s", e.timeout_s, where);
    if (e.name.empty()) {
        e.name = std::string(role) + ":" + e.model_id;
    }
    if (e.max_concurrency < 1) {
        throw ValidationError(where + ".max_concurrency must be >= 1");
    }
    if (e.requests_per_minute < 0 || e.timeout_s < 1) {
        throw ValidationError(where + ": requests_per_minute must be >= 0 and timeout_s >= 1");
    }
    return spec;
}

ordered_json endpoint_json(const EndpointSpec& spec) {
    const Endpoint& e = spec.endpoint;
    ordered_json j;
    j["kind"] = spec.kind;
    j["model_id"] = e.model_id;
    if (spec.kind == "openai") {
        j["base_url"] = e.base_url;
    }
    j["size_limited"] = e.size_limited;
    j["supports_images"] = e.supports_images;
    j["accepts_num_beams"] = e.accepts_num_beams;
    j["platform_defaults"] = e.platform_defaults;
    if (spec.kind == "mock") {
        ordered_json script = ordered_json::array();
        for (const auto& [pattern, response] : spec.script) {
            ordered_json r;
            r["pattern"] = pattern;
            r["response"] = response;
            script.push_back(r);
        }
        j["script"] = script;
    }
    return j;
}

} // namespace

AppConfig parse_config(const json& input, const fs::path& base_dir, const EnvLookup& env) {
    json doc = input;
    interpolate_tree(doc, env);
    check_keys(doc, "config",
               {"manifest", "method", "output_dir", "cache_dir", "prompts_dir", "workers", "seed", "segmenter",
                "kmeans", "decode", "endpoints"});
    AppConfig c;
    if (doc.contains("manifest")) {
        c.manifest = resolve(base_dir, doc.at("manifest").get<std::string>());
    }
    if (doc.contains("method")) {
        const auto m = parse_method(doc.at("method").get<std::string>());
        if (!m) {
            throw ValidationError(fmt::format("config.method: unknown method \"{}\"", doc.at("method").dump()));
        }
        c.method = *m;
    }
    if (doc.contains("output_dir")) {
        c.output_dir = resolve(base_dir, doc.at("output_dir").get<std::string>());
    }
    if (doc.contains("cache_dir")) {
        c.cache_dir = resolve(base_dir, doc.at("cache_dir").get<std::string>());
    }
    if (doc.contains("prompts_dir")) {
        c.prompts_dir = resolve(base_dir, doc.at("prompts_dir").get<std::string>());
    }
    read(doc, "workers", c.workers, "config");
    if (doc.contains("seed")) {
        std::uint64_t seed = 0;
        read(doc, "seed", seed, "config");
        apply_seed(c, seed);
    }

    if (doc.contains("segmenter")) {
        const auto& s = doc.at("segmenter");
        check_keys(s, "segmenter",
                   {"backend", "grid_rows", "grid_cols", "min_area_frac", "ink_threshold", "min_gutter_px",
                    "remote_url", "max_masks", "points_per_side", "seed", "timeout_s"});
        auto& sc = c.segmenter;
        if (s.contains("backend")) {
            sc.backend = parse_backend(s.at("backend").get<std::string>());
        }
        read(s, "grid_rows", sc.grid_rows, "segmenter");
        read(s, "grid_cols", sc.grid_cols, "segmenter");
        read(s, "min_area_frac", sc.min_area_frac, "segmenter");
        read(s, "ink_threshold", sc.ink_threshold, "segmenter");
        read(s, "min_gutter_px", sc.min_gutter_px, "segmenter");
        read(s, "remote_url", sc.remote_url, "segmenter");
        read(s, "max_masks", sc.remote_max_masks, "segmenter");
        read(s, "points_per_side", sc.remote_points_per_side, "segmenter");
        read(s, "seed", sc.remote_seed, "segmenter");
        read(s, "timeout_s", sc.remote_timeout_s, "segmenter");
    }
    if (doc.contains("kmeans")) {
        const auto& k = doc.at("kmeans");
        check_keys(k, "kmeans", {"k", "seed", "max_iter", "tol", "init", "restarts"});
        read(k, "k", c.kmeans.k, "kmeans");
        read(k, "seed", c.kmeans.seed, "kmeans");
        read(k, "max_iter", c.kmeans.max_iter, "kmeans");
        read(k, "tol", c.kmeans.tol, "kmeans");
        read(k, "restarts", c.kmeans.restarts, "kmeans");
        if (k.contains("init")) {
            const auto init = k.at("init").get<std::string>();
            if (init == "kmeanspp") {
                c.kmeans.init = KMeansInit::kmeanspp_seeded;
            } else if (init == "farthest_point") {
                c.kmeans.init = KMeansInit::farthest_point;
            } else {
                throw ValidationError(fmt::format("kmeans.init: expected kmeanspp or farthest_point, got \"{}\"", init));
            }
        }
    }
    if (doc.contains("decode")) {
        const auto& d = doc.at("decode");
        check_keys(d, "decode", {"max_new_tokens", "num_beams", "deterministic", "temperature"});
        read(d, "max_new_tokens", c.decode.max_new_tokens, "decode");
        read(d, "num_beams", c.decode.num_beams, "decode");
        read(d, "deterministic", c.decode.deterministic, "decode");
        read(d, "temperature", c.decode.temperature, "decode");
    }
    if (doc.contains("endpoints")) {
        const auto& e = doc.at("endpoints");
        check_keys(e, "endpoints", {"vision", "text"});
        if (e.contains("vision")) {
            c.vision = parse_endpoint(e.at("vision"), "vision");
        }
        if (e.contains("text")) {
            c.text = parse_endpoint(e.at("text"), "text");
        }
    }
    return c;
}

AppConfig load_config(const fs::path& path, const EnvLookup& env) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError(fmt::format("cannot read config {}", path.string()));
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
    }
    try {
        return parse_config(doc, path.parent_path(), env);
    } catch (const json::exception& e) {
        throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void apply_seed(AppConfig& config, std::uint64_t seed) {
    config.seed = seed;
    config.kmeans.seed = seed;
    config.segmenter.remote_seed = static_cast<int>(seed & 0x7fffffff);
}

ordered_json canonical_config(const AppConfig& c) {
    ordered_json j;
    j["method"] = to_string(c.method);
    j["seed"] = c.seed;
    ordered_json s;
    s["backend"] = backend_name(c.segmenter.backend);
    s["grid_rows"] = c.segmenter.grid_rows;
    s["grid_cols"] = c.segmenter.grid_cols;
    s["min_area_frac"] = c.segmenter.min_area_frac;
    s["ink_threshold"] = c.segmenter.ink_threshold;
    s["min_gutter_px"] = c.segmenter.min_gutter_px;
    if (c.segmenter.backend == SegmenterBackend::remote) {
        s["remote_url"] = c.segmenter.remote_url;
        s["max_masks"] = c.segmenter.remote_max_masks;
        s["points_per_side"] = c.segmenter.remote_points_per_side;
        s["seed"] = c.segmenter.remote_seed;
    }
    j["segmenter"] = s;
    ordered_json k;
    k["k"] = c.kmeans.k;
    k["seed"] = c.kmeans.seed;
    k["max_iter"] = c.kmeans.max_iter;
    k["tol"] = c.kmeans.tol;
    k["init"] = c.kmeans.init == KMeansInit::kmeanspp_seeded ? "kmeanspp" : "farthest_point";
    k["restarts"] = c.kmeans.restarts;
    j["kmeans"] = k;
    ordered_json d;
    d["max_new_tokens"] = c.decode.max_new_tokens;
    d["num_beams"] = c.decode.num_beams;
    d["deterministic"] = c.decode.deterministic;
    if (!c.decode.deterministic) {
        d["temperature"] = c.decode.temperature;
    }
    j["decode"] = d;
    ordered_json e = ordered_json::object();
    if (c.vision) {
        e["vision"] = endpoint_json(*c.vision);
    }
    if (c.text) {
        e["text"] = endpoint_json(*c.text);
    }
    j["endpoints"] = e;
    return j;
}

std::string config_digest(const AppConfig& config) { return sha256_hex(canonical_config(config).dump()); }

void validate(const AppConfig& config) {
    if (config.manifest && !fs::is_regular_file(*config.manifest)) {
        throw ValidationError(fmt::format("manifest {} does not exist", config.manifest->string()));
    }
    if (config.prompts_dir && !fs::is_directory(*config.prompts_dir)) {
        throw ValidationError(fmt::format("prompts_dir {} does not exist", config.prompts_dir->string()));
    }
    if (config.workers < 1) {
        throw ValidationError("workers must be >= 1");
    }
    validate(config.segmenter);
    validate(config.kmeans);
    CompletionRequest probe;
    probe.turns.push_back({Role::user, "probe", std::nullopt});
    probe.decode = config.decode;
    validate(probe);
}

} // namespace segsum
