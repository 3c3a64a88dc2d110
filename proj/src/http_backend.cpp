#include "segsum/digest.hpp"
#include "segsum/http_util.hpp"
#include "segsum/modelclient.hpp"

#include "httplib.h"

#include <fmt/format.h>

#include <cstdlib>

namespace segsum {

nlohmann::json OpenAIChatBackend::build_payload(const Endpoint& endpoint, const CompletionRequest& request,
                                                Usage& usage) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& t : request.turns) {
        nlohmann::json msg;
        msg["role"] = std::string(to_string(t.role));
        if (t.image_png) {
            nlohmann::json content = nlohmann::json::array();
            content.push_back({{"type", "text"}, {"text", t.text}});
            content.push_back({{"type", "image_url"},
                               {"image_url", {{"url", "data:image/png;base64," + base64_encode(*t.image_png)}}}});
            msg["content"] = std::move(content);
        } else {
            msg["content"] = t.text;
        }
        messages.push_back(std::move(msg));
    }

    nlohmann::json payload;
    payload["model"] = endpoint.model_id;
    payload["messages"] = std::move(messages);
    payload["max_tokens"] = request.decode.max_new_tokens;
    usage.transmitted_params = {"max_new_tokens"};
    usage.ignored_params.clear();
    if (endpoint.platform_defaults) {
        usage.ignored_params.push_back(request.decode.deterministic ? "deterministic" : "temperature");
        usage.ignored_params.push_back("num_beams");
        return payload;
    }
    if (request.decode.deterministic) {
        payload["temperature"] = 0.0;
        usage.transmitted_params.push_back("deterministic");
    } else {
        payload["temperature"] = request.decode.temperature;
        usage.transmitted_params.push_back("temperature");
    }
    if (endpoint.accepts_num_beams) {
        payload["num_beams"] = request.decode.num_beams;
        usage.transmitted_params.push_back("num_beams");
    } else {
        usage.ignored_params.push_back("num_beams");
    }
    return payload;
}

Completion OpenAIChatBackend::parse_response(std::string_view body) {
    using K = ModelError::Kind;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ModelError(K::schema, std::string("completion response is not JSON: ") + e.what());
    }
    try {
        const auto& message = j.at("choices").at(0).at("message");
        const auto& content = message.at("content");
        Completion out;
        if (content.is_string()) {
            out.text = content.get<std::string>();
        } else if (content.is_array()) {
            for (const auto& part : content) {
                if (part.value("type", "") == "text") {
                    out.text += part.at("text").get<std::string>();
                }
            }
        } else {
            throw ModelError(K::schema, "message content is neither text nor parts");
        }
        if (j.contains("usage") && j["usage"].is_object()) {
            out.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
            out.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(K::schema, std::string("unexpected completion response: ") + e.what());
    }
}

Completion OpenAIChatBackend::complete(const Endpoint& endpoint, const CompletionRequest& request) {
    using K = ModelError::Kind;
    httplib::Headers headers;
    if (!endpoint.auth_ref.empty()) {
        const char* key = std::getenv(endpoint.auth_ref.c_str());
        if (key == nullptr || *key == '\0') {
            throw ModelError(K::auth, fmt::format("credential variable {} is not set", endpoint.auth_ref));
        }
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    Usage usage;
    const auto payload = build_payload(endpoint, request, usage);

    SplitUrl url;
    try {
        url = split_url(endpoint.base_url);
    } catch (const ValidationError& e) {
        throw ModelError(K::transport, e.what());
    }
    std::string path = url.path;
    if (path.empty() || path.back() != '/') {
        path.push_back('/');
    }
    path += "chat/completions";

    httplib::Client client(url.origin);
    client.set_connection_timeout(10);
    client.set_read_timeout(endpoint.timeout_s);
    client.set_write_timeout(endpoint.timeout_s);
    auto res = client.Post(path, headers, payload.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
            throw ModelError(K::timeout, "request timed out: " + httplib::to_string(err));
        }
        throw ModelError(K::transport, "request failed: " + httplib::to_string(err));
    }
    if (res->status == 401 || res->status == 403) {
        throw ModelError(K::auth, fmt::format("HTTP {} from {}", res->status, endpoint.base_url));
    }
    if (res->status == 429) {
        throw ModelError(K::rate_limited, fmt::format("HTTP 429 from {}", endpoint.base_url));
    }
    if (res->status == 408 || res->status == 504) {
        throw ModelError(K::timeout, fmt::format("HTTP {} from {}", res->status, endpoint.base_url));
    }
    if (res->status >= 500) {
        throw ModelError(K::transport, fmt::format("HTTP {} from {}", res->status, endpoint.base_url));
    }
    if (res->status != 200) {
        throw ModelError(K::schema, fmt::format("HTTP {} from {}: {}", res->status, endpoint.base_url,
                                                res->body.substr(0, 200)));
    }
    auto out = parse_response(res->body);
    out.usage.transmitted_params = usage.transmitted_params;
    out.usage.ignored_params = usage.ignored_params;
    return out;
}

} // namespace segsum
