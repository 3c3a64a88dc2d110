#pragma once

#include "segsum/error.hpp"

#include "json.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace segsum {

enum class Role { system, user, assistant };
std::string_view to_string(Role r);

struct Turn {
    Role role = Role::user;
    std::string text;
    /// PNG bytes, at most one image per turn.
    std::optional<std::vector<std::uint8_t>> image_png;
};

struct DecodeParams {
    int max_new_tokens = 768;
    int num_beams = 4;
    bool deterministic = true;
    /// Only transmitted when deterministic is false.
    double temperature = 0.7;
};

struct CompletionRequest {
    std::vector<Turn> turns;
    DecodeParams decode;

    [[nodiscard]] bool has_image() const;
    /// Text of the last user turn (empty if none).
    [[nodiscard]] const std::string& last_user_text() const;
};

/// Throws ValidationError unless there is at least one user turn and decode
/// params are in range.
void validate(const CompletionRequest& request);

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
    /// Decode parameter names sent to the endpoint / withheld from it.
    std::vector<std::string> transmitted_params;
    std::vector<std::string> ignored_params;
};

struct Completion {
    std::string text;
    Usage usage;
};

class ModelError : public RuntimeError {
  public:
    enum class Kind { auth, rate_limited, schema, timeout, transport, capability, unscripted };
    ModelError(Kind kind, const std::string& what) : RuntimeError(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] bool retryable() const noexcept {
        return kind_ == Kind::transport || kind_ == Kind::timeout || kind_ == Kind::rate_limited;
    }

  private:
    Kind kind_;
};

std::string_view to_string(ModelError::Kind k);

struct Endpoint;

/// Something that answers chat-completion requests.
class ChatBackend {
  public:
    virtual ~ChatBackend() = default;
    virtual Completion complete(const Endpoint& endpoint, const CompletionRequest& request) = 0;
    /// False for in-process backends (mocks); used to count network calls.
    [[nodiscard]] virtual bool is_remote() const { return true; }
};

struct Endpoint {
    std::string name;
    std::string base_url;
    std::string model_id;
    /// Name of the environment variable holding the API key; empty = no auth.
    std::string auth_ref;
    int max_concurrency = 1;
    /// 0 disables rate limiting.
    int requests_per_minute = 0;
    /// Images sent here are first downscaled to a width of at most 2048 px.
    bool size_limited = false;
    bool supports_images = true;
    /// Transmit num_beams (self-hosted servers); hosted APIs ignore beams.
    bool accepts_num_beams = false;
    /// Leave sampling settings at the platform defaults (only max tokens sent).
    bool platform_defaults = false;
    int timeout_s = 300;
    /// Null selects the OpenAI-compatible HTTP backend.
    std::shared_ptr<ChatBackend> backend;
};

inline constexpr int kSizeLimitedMaxWidth = 2048;

/// OpenAI-compatible /chat/completions over HTTP(S).
class OpenAIChatBackend : public ChatBackend {
  public:
    Completion complete(const Endpoint& endpoint, const CompletionRequest& request) override;

    /// Request body as sent on the wire; `usage` receives transmitted/ignored
    /// parameter names.
    static nlohmann::json build_payload(const Endpoint& endpoint, const CompletionRequest& request, Usage& usage);
    /// Extracts choices[0].message.content; throws ModelError(schema).
    static Completion parse_response(std::string_view body);
};

/// Scripted in-process backend. Rules are glob patterns (`*`, `?`) matched
/// against the last user turn's full text.
class MockBackend : public ChatBackend {
  public:
    using Responder = std::function<std::string(const CompletionRequest&)>;
    struct Rule {
        std::string pattern;
        /// Template text or callback. Templates expand {prompt} (last user
        /// text), {image_digest8} (first 8 hex digits of the attached
        /// image's SHA-256) and {call_index}.
        std::variant<std::string, Responder> response;
    };

    explicit MockBackend(std::vector<Rule> rules, std::chrono::milliseconds delay = std::chrono::milliseconds(0));

    Completion complete(const Endpoint& endpoint, const CompletionRequest& request) override;
    [[nodiscard]] bool is_remote() const override { return false; }

    [[nodiscard]] std::vector<CompletionRequest> call_log() const;
    [[nodiscard]] std::size_t call_count() const;
    [[nodiscard]] int max_in_flight() const noexcept { return max_in_flight_.load(); }
    void clear_log();

  private:
    std::vector<Rule> rules_;
    std::chrono::milliseconds delay_;
    mutable std::mutex mutex_;
    std::vector<CompletionRequest> log_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
};

bool glob_match(std::string_view pattern, std::string_view text);

/// Endpoint backed by a MockBackend; `backend_out` (if given) receives the
/// backend for call-log assertions.
Endpoint mock_backend(std::vector<MockBackend::Rule> script, std::string model_id = "mock",
                      std::shared_ptr<MockBackend>* backend_out = nullptr, bool supports_images = true);

struct RetryPolicy {
    /// Delays before each retry; the number of entries is the retry count.
    std::vector<std::chrono::milliseconds> backoff{std::chrono::seconds(1), std::chrono::seconds(4),
                                                   std::chrono::seconds(16)};
};

struct CachedCompletion {
    Completion completion;
    bool cache_hit = false;
};

/// Thread-safe front door for all model calls: capability checks, per-endpoint
/// concurrency bound and token-bucket rate limit, retries with backoff, and
/// the on-disk response cache.
class ModelClient {
  public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit ModelClient(RetryPolicy retry = {}, Sleeper sleeper = {});
    ~ModelClient();
    ModelClient(const ModelClient&) = delete;
    ModelClient& operator=(const ModelClient&) = delete;

    Completion complete(const Endpoint& endpoint, const CompletionRequest& request);
    CachedCompletion cached_complete(const Endpoint& endpoint, const CompletionRequest& request,
                                     const std::filesystem::path& cache_dir);

    /// Backend invocations (including retries) that left the process.
    [[nodiscard]] std::uint64_t remote_calls() const noexcept { return remote_calls_.load(); }
    [[nodiscard]] std::uint64_t backend_calls() const noexcept { return backend_calls_.load(); }

  private:
    struct EndpointState;
    EndpointState& state_for(const Endpoint& endpoint);

    RetryPolicy retry_;
    Sleeper sleeper_;
    std::mutex states_mutex_;
    std::map<std::string, std::unique_ptr<EndpointState>> states_;
    std::atomic<std::uint64_t> remote_calls_{0};
    std::atomic<std::uint64_t> backend_calls_{0};
};

} // namespace segsum
