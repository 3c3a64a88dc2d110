#include "segsum/modelclient.hpp"

#include "segsum/cache.hpp"
#include "segsum/digest.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <ctime>
#include <thread>

namespace segsum {

std::string_view to_string(Role r) {
    switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "?";
}

std::string_view to_string(ModelError::Kind k) {
    using K = ModelError::Kind;
    switch (k) {
    case K::auth: return "auth";
    case K::rate_limited: return "rate_limited";
    case K::schema: return "schema";
    case K::timeout: return "timeout";
    case K::transport: return "transport";
    case K::capability: return "capability";
    case K::unscripted: return "unscripted";
    }
    return "?";
}

bool CompletionRequest::has_image() const {
    return std::any_of(turns.begin(), turns.end(), [](const Turn& t) { return t.image_png.has_value(); });
}

const std::string& CompletionRequest::last_user_text() const {
    static const std::string empty;
    for (auto it = turns.rbegin(); it != turns.rend(); ++it) {
        if (it->role == Role::user) {
            return it->text;
        }
    }
    return empty;
}

void validate(const CompletionRequest& request) {
    if (std::none_of(request.turns.begin(), request.turns.end(), [](const Turn& t) { return t.role == Role::user; })) {
        throw ValidationError("completion request needs at least one user turn");
    }
    if (request.decode.max_new_tokens < 1) {
        throw ValidationError("max_new_tokens must be >= 1");
    }
    if (request.decode.num_beams < 1) {
        throw ValidationError("num_beams must be >= 1");
    }
}

bool glob_match(std::string_view pattern, std::string_view text) {
    std::size_t p = 0;
    std::size_t t = 0;
    std::size_t star = std::string_view::npos;
    std::size_t resume = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            resume = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++resume;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') {
        ++p;
    }
    return p == pattern.size();
}

MockBackend::MockBackend(std::vector<Rule> rules, std::chrono::milliseconds delay)
    : rules_(std::move(rules)), delay_(delay) {}

Completion MockBackend::complete(const Endpoint&, const CompletionRequest& request) {
    const int now = ++in_flight_;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    struct Leave {
        std::atomic<int>& counter;
        ~Leave() { --counter; }
    } leave{in_flight_};

    std::size_t call_index = 0;
    {
        std::lock_guard lock(mutex_);
        call_index = log_.size();
        log_.push_back(request);
    }
    if (delay_.count() > 0) {
        std::this_thread::sleep_for(delay_);
    }

    const std::string& prompt = request.last_user_text();
    const Rule* match = nullptr;
    for (const auto& rule : rules_) {
        if (glob_match(rule.pattern, prompt)) {
            if (match != nullptr) {
                throw ValidationError(fmt::format("mock script is ambiguous: '{}' and '{}' both match",
                                                  match->pattern, rule.pattern));
            }
            match = &rule;
        }
    }
    if (match == nullptr) {
        throw ModelError(ModelError::Kind::unscripted,
                         fmt::format("unscripted request: '{}'", prompt.substr(0, std::min<std::size_t>(prompt.size(), 80))));
    }

    Completion out;
    if (const auto* responder = std::get_if<Responder>(&match->response)) {
        out.text = (*responder)(request);
    } else {
        std::string text = std::get<std::string>(match->response);
        auto expand = [&text](std::string_view key, const std::string& value) {
            std::size_t pos = 0;
            while ((pos = text.find(key, pos)) != std::string::npos) {
                text.replace(pos, key.size(), value);
                pos += value.size();
            }
        };
        std::string digest8;
        for (auto it = request.turns.rbegin(); it != request.turns.rend(); ++it) {
            if (it->image_png) {
                digest8 = sha256_hex(*it->image_png).substr(0, 8);
                break;
            }
        }
        expand("{image_digest8}", digest8);
        expand("{call_index}", std::to_string(call_index));
        expand("{prompt}", prompt);
        out.text = std::move(text);
    }
    out.usage.completion_tokens = static_cast<int>(out.text.size() / 4);
    out.usage.transmitted_params = {"max_new_tokens", "num_beams"};
    return out;
}

std::vector<CompletionRequest> MockBackend::call_log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

std::size_t MockBackend::call_count() const {
    std::lock_guard lock(mutex_);
    return log_.size();
}

void MockBackend::clear_log() {
    std::lock_guard lock(mutex_);
    log_.clear();
}

Endpoint mock_backend(std::vector<MockBackend::Rule> script, std::string model_id,
                      std::shared_ptr<MockBackend>* backend_out, bool supports_images) {
    auto backend = std::make_shared<MockBackend>(std::move(script));
    if (backend_out != nullptr) {
        *backend_out = backend;
    }
    Endpoint e;
    e.name = "mock:" + model_id;
    e.base_url = "mock://";
    e.model_id = std::move(model_id);
    e.max_concurrency = 4;
    e.supports_images = supports_images;
    e.accepts_num_beams = true;
    e.backend = std::move(backend);
    return e;
}

namespace {

class Semaphore {
  public:
    explicit Semaphore(int count) : count_(count) {}
    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return count_ > 0; });
        --count_;
    }
    void release() {
        {
            std::lock_guard lock(mutex_);
            ++count_;
        }
        cv_.notify_one();
    }

  private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int count_;
};

class TokenBucket {
  public:
    explicit TokenBucket(int per_minute)
        : per_minute_(per_minute), tokens_(per_minute), last_(std::chrono::steady_clock::now()) {}

    /// Returns how long to wait before a token is available (zero if one was taken).
    std::chrono::milliseconds try_take() {
        if (per_minute_ <= 0) {
            return std::chrono::milliseconds(0);
        }
        std::lock_guard lock(mutex_);
        const auto now = std::chrono::steady_clock::now();
        const double elapsed_ms = std::chrono::duration<double, std::milli>(now - last_).count();
        last_ = now;
        tokens_ = std::min<double>(per_minute_, tokens_ + elapsed_ms * per_minute_ / 60000.0);
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return std::chrono::milliseconds(0);
        }
        const double need_ms = (1.0 - tokens_) * 60000.0 / per_minute_;
        return std::chrono::milliseconds(static_cast<long long>(need_ms) + 1);
    }

  private:
    int per_minute_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mutex_;
};

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

struct ModelClient::EndpointState {
    explicit EndpointState(const Endpoint& e) : slots(std::max(1, e.max_concurrency)), bucket(e.requests_per_minute) {}
    Semaphore slots;
    TokenBucket bucket;
};

ModelClient::ModelClient(RetryPolicy retry, Sleeper sleeper) : retry_(std::move(retry)), sleeper_(std::move(sleeper)) {
    if (!sleeper_) {
        sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
}

ModelClient::~ModelClient() = default;

ModelClient::EndpointState& ModelClient::state_for(const Endpoint& endpoint) {
    const std::string key = endpoint.name.empty() ? endpoint.base_url + "|" + endpoint.model_id : endpoint.name;
    std::lock_guard lock(states_mutex_);
    auto& slot = states_[key];
    if (!slot) {
        slot = std::make_unique<EndpointState>(endpoint);
    }
    return *slot;
}

Completion ModelClient::complete(const Endpoint& endpoint, const CompletionRequest& request) {
    validate(request);
    if (endpoint.max_concurrency < 1) {
        throw ValidationError("endpoint max_concurrency must be >= 1");
    }
    if (request.has_image() && !endpoint.supports_images) {
        throw ModelError(ModelError::Kind::capability,
                         fmt::format("endpoint '{}' does not accept images", endpoint.name));
    }
    static const auto http_backend = std::make_shared<OpenAIChatBackend>();
    ChatBackend& backend = endpoint.backend ? *endpoint.backend : *http_backend;

    auto& state = state_for(endpoint);
    state.slots.acquire();
    struct Release {
        Semaphore& s;
        ~Release() { s.release(); }
    } release{state.slots};

    for (std::size_t attempt = 0;; ++attempt) {
        for (auto wait = state.bucket.try_take(); wait.count() > 0; wait = state.bucket.try_take()) {
            sleeper_(wait);
        }
        try {
            ++backend_calls_;
            if (backend.is_remote()) {
                ++remote_calls_;
            }
            return backend.complete(endpoint, request);
        } catch (const ModelError& e) {
            if (!e.retryable() || attempt >= retry_.backoff.size()) {
                throw;
            }
            sleeper_(retry_.backoff[attempt]);
        }
    }
}

CachedCompletion ModelClient::cached_complete(const Endpoint& endpoint, const CompletionRequest& request,
                                              const std::filesystem::path& cache_dir) {
    validate(request);
    const ResponseCache cache(cache_dir);
    const std::string key = cache_key(endpoint, request);
    if (auto hit = cache.get(key)) {
        return {std::move(hit->completion), true};
    }
    CachedCompletion out{complete(endpoint, request), false};
    cache.put({key, canonical_request(endpoint, request), out.completion, utc_timestamp()});
    return out;
}

} // namespace segsum
