#include "doctest.h"

#include "segsum/cache.hpp"
#include "segsum/digest.hpp"
#include "segsum/error.hpp"
#include "segsum/modelclient.hpp"
#include "support.hpp"

#include "httplib.h"

#include <cstdlib>
#include <thread>

using namespace segsum;
using namespace std::chrono_literals;
using segsum::testing::TempDir;

namespace {

CompletionRequest text_request(std::string text) {
    CompletionRequest r;
    r.turns.push_back({Role::user, std::move(text), std::nullopt});
    return r;
}

CompletionRequest image_request(std::string text, std::vector<std::uint8_t> png) {
    CompletionRequest r;
    r.turns.push_back({Role::user, std::move(text), std::move(png)});
    return r;
}

struct RecordingSleeper {
    std::shared_ptr<std::vector<std::chrono::milliseconds>> waits = std::make_shared<std::vector<std::chrono::milliseconds>>();
    ModelClient::Sleeper fn() {
        auto w = waits;
        return [w](std::chrono::milliseconds d) { w->push_back(d); };
    }
};

// OpenAI-compatible stub: records the last request and replies with a fixed
// status and body.
class FakeChatServer {
  public:
    FakeChatServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mutex_);
            ++hits_;
            last_body_ = req.body;
            last_auth_ = req.get_header_value("Authorization");
            const auto& [status, body] = replies_.empty() ? fallback_ : replies_.front();
            res.status = status;
            res.set_content(body, "application/json");
            if (!replies_.empty()) {
                replies_.erase(replies_.begin());
            }
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeChatServer() {
        server_.stop();
        thread_.join();
    }
    void reply(int status, std::string body) {
        std::lock_guard lock(mutex_);
        replies_.emplace_back(status, std::move(body));
    }
    [[nodiscard]] std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
    nlohmann::json last_payload() {
        std::lock_guard lock(mutex_);
        return nlohmann::json::parse(last_body_);
    }
    std::string last_auth() {
        std::lock_guard lock(mutex_);
        return last_auth_;
    }
    int hits() {
        std::lock_guard lock(mutex_);
        return hits_;
    }

  private:
    httplib::Server server_;
    std::mutex mutex_;
    std::vector<std::pair<int, std::string>> replies_;
    std::pair<int, std::string> fallback_{200, R"({"choices":[{"message":{"role":"assistant","content":"fine"}}]})"};
    std::string last_body_;
    std::string last_auth_;
    int hits_ = 0;
    int port_ = 0;
    std::thread thread_;
};

const char* kOk = R"({"choices":[{"message":{"role":"assistant","content":"hello there"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}})";

} // namespace

TEST_CASE("glob matching") {
    CHECK(glob_match("*", ""));
    CHECK(glob_match("abc", "abc"));
    CHECK_FALSE(glob_match("abc", "abcd"));
    CHECK(glob_match("a*c", "abbbc"));
    CHECK(glob_match("a?c", "abc"));
    CHECK_FALSE(glob_match("a?c", "ac"));
    CHECK(glob_match("*tables*", "Describe all the text, tables, figures"));
    CHECK(glob_match("Line one*", "Line one\nLine two"));
    CHECK_FALSE(glob_match("x*y", "xzzz"));
}

TEST_CASE("mock backend expands templates and logs calls") {
    std::shared_ptr<MockBackend> mock;
    const auto ep = mock_backend({{"describe*", std::string("[{call_index}] {image_digest8} <{prompt}>")}}, "m1", &mock);
    ModelClient client;
    const std::vector<std::uint8_t> png{1, 2, 3};
    const auto a = client.complete(ep, image_request("describe this", png));
    CHECK(a.text == "[0] " + sha256_hex(png).substr(0, 8) + " <describe this>");
    const auto b = client.complete(ep, text_request("describe that"));
    CHECK(b.text == "[1]  <describe that>");
    CHECK(mock->call_count() == 2);
    CHECK(mock->call_log()[0].has_image());
    CHECK(client.backend_calls() == 2);
    CHECK(client.remote_calls() == 0);
}

TEST_CASE("mock backend callbacks, ambiguity and unscripted prompts") {
    const auto ep = mock_backend({{"a*", MockBackend::Responder([](const CompletionRequest& r) {
                                       return "len=" + std::to_string(r.last_user_text().size());
                                   })},
                                  {"ab*", std::string("second")}});
    ModelClient client;
    CHECK(client.complete(ep, text_request("axe")).text == "len=3");
    CHECK_THROWS_AS(client.complete(ep, text_request("abc")), ValidationError);
    try {
        client.complete(ep, text_request("zzz"));
        FAIL("expected unscripted");
    } catch (const ModelError& e) {
        CHECK(e.kind() == ModelError::Kind::unscripted);
    }
}

TEST_CASE("images are refused by text-only endpoints") {
    const auto ep = mock_backend({{"*", std::string("x")}}, "text-only", nullptr, false);
    ModelClient client;
    try {
        client.complete(ep, image_request("look", {1}));
        FAIL("expected capability error");
    } catch (const ModelError& e) {
        CHECK(e.kind() == ModelError::Kind::capability);
    }
    CHECK(client.backend_calls() == 0);
    CHECK(client.complete(ep, text_request("read")).text == "x");
}

TEST_CASE("request validation") {
    CompletionRequest empty;
    CHECK_THROWS_AS(validate(empty), ValidationError);
    auto r = text_request("x");
    r.decode.max_new_tokens = 0;
    CHECK_THROWS_AS(validate(r), ValidationError);
    r = text_request("x");
    r.decode.num_beams = 0;
    CHECK_THROWS_AS(validate(r), ValidationError);
}

TEST_CASE("transient failures are retried with 1/4/16 s backoff") {
    int calls = 0;
    const auto ep = mock_backend({{"*", MockBackend::Responder([&calls](const CompletionRequest&) -> std::string {
                                       if (++calls < 3) {
                                           throw ModelError(ModelError::Kind::transport, "flaky");
                                       }
                                       return "ok";
                                   })}});
    RecordingSleeper sleeper;
    ModelClient client(RetryPolicy{}, sleeper.fn());
    CHECK(client.complete(ep, text_request("x")).text == "ok");
    CHECK(calls == 3);
    CHECK(*sleeper.waits == std::vector<std::chrono::milliseconds>{1000ms, 4000ms});
}

TEST_CASE("retries give up after the last backoff step") {
    int calls = 0;
    const auto ep = mock_backend({{"*", MockBackend::Responder([&calls](const CompletionRequest&) -> std::string {
                                       ++calls;
                                       throw ModelError(ModelError::Kind::rate_limited, "slow down");
                                   })}});
    RecordingSleeper sleeper;
    ModelClient client(RetryPolicy{}, sleeper.fn());
    CHECK_THROWS_AS(client.complete(ep, text_request("x")), ModelError);
    CHECK(calls == 4);
    CHECK(*sleeper.waits == std::vector<std::chrono::milliseconds>{1000ms, 4000ms, 16000ms});
}

TEST_CASE("non-retryable errors fail immediately") {
    for (const auto kind : {ModelError::Kind::auth, ModelError::Kind::schema}) {
        int calls = 0;
        const auto ep = mock_backend({{"*", MockBackend::Responder([&calls, kind](const CompletionRequest&) -> std::string {
                                           ++calls;
                                           throw ModelError(kind, "no");
                                       })}});
        RecordingSleeper sleeper;
        ModelClient client(RetryPolicy{}, sleeper.fn());
        CHECK_THROWS_AS(client.complete(ep, text_request("x")), ModelError);
        CHECK(calls == 1);
        CHECK(sleeper.waits->empty());
    }
}

TEST_CASE("per-endpoint concurrency bound") {
    auto mock = std::make_shared<MockBackend>(std::vector<MockBackend::Rule>{{"*", std::string("ok")}}, 20ms);
    auto ep = mock_backend({}, "slow");
    ep.backend = mock;
    ep.max_concurrency = 2;
    ModelClient client;
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&] { client.complete(ep, text_request("x")); });
    }
    for (auto& t : threads) {
        t.join();
    }
    CHECK(mock->call_count() == 8);
    CHECK(mock->max_in_flight() <= 2);
    CHECK(mock->max_in_flight() >= 1);
}

TEST_CASE("token bucket delays calls beyond the per-minute budget") {
    auto ep = mock_backend({{"*", std::string("ok")}}, "limited");
    ep.requests_per_minute = 120;
    std::vector<std::chrono::milliseconds> waits;
    ModelClient client(RetryPolicy{}, [&waits](std::chrono::milliseconds d) {
        waits.push_back(d);
        std::this_thread::sleep_for(d);
    });
    for (int i = 0; i < 121; ++i) {
        client.complete(ep, text_request("x"));
    }
    REQUIRE_FALSE(waits.empty());
    CHECK(waits.front() > 300ms);
    CHECK(waits.front() <= 501ms);
}

TEST_CASE("cache keys depend on model, text, image and decode settings") {
    const auto ep = mock_backend({{"*", std::string("x")}}, "m");
    auto other = ep;
    other.model_id = "m2";
    const auto base = image_request("p", {1, 2});
    auto text = base;
    text.turns[0].text = "q";
    auto image = base;
    image.turns[0].image_png = std::vector<std::uint8_t>{1, 3};
    auto decode = base;
    decode.decode.max_new_tokens = 100;
    const auto k = cache_key(ep, base);
    CHECK(k.size() == 64);
    CHECK(k == cache_key(ep, base));
    CHECK(k != cache_key(other, base));
    CHECK(k != cache_key(ep, text));
    CHECK(k != cache_key(ep, image));
    CHECK(k != cache_key(ep, decode));
    // Temperature only matters once sampling is on.
    auto temp = base;
    temp.decode.temperature = 0.1;
    CHECK(k == cache_key(ep, temp));
    temp.decode.deterministic = false;
    CHECK(k != cache_key(ep, temp));
    const auto canon = canonical_request(ep, base);
    CHECK(canon["turns"][0]["image_sha256"] == sha256_hex(std::vector<std::uint8_t>{1, 2}));
    CHECK_FALSE(canon["decode"].contains("temperature"));
}

TEST_CASE("cached completions hit on the second call") {
    TempDir dir;
    std::shared_ptr<MockBackend> mock;
    const auto ep = mock_backend({{"*", std::string("answer {call_index}")}}, "m", &mock);
    ModelClient client;
    const auto req = text_request("question");
    const auto first = client.cached_complete(ep, req, dir.path());
    CHECK_FALSE(first.cache_hit);
    CHECK(first.completion.text == "answer 0");
    const auto second = client.cached_complete(ep, req, dir.path());
    CHECK(second.cache_hit);
    CHECK(second.completion.text == "answer 0");
    CHECK(mock->call_count() == 1);

    const ResponseCache cache(dir.path());
    const auto path = cache.path_for(cache_key(ep, req));
    REQUIRE(std::filesystem::exists(path));
    const auto entry = nlohmann::json::parse(segsum::testing::read_text(path));
    CHECK(entry["key"] == cache_key(ep, req));
    CHECK(entry["response"]["text"] == "answer 0");
    CHECK(entry.contains("timestamp"));

    // A corrupt entry is a miss and gets rewritten.
    segsum::testing::write_text(path, "{truncated");
    const auto third = client.cached_complete(ep, req, dir.path());
    CHECK_FALSE(third.cache_hit);
    CHECK(third.completion.text == "answer 1");
    CHECK(client.cached_complete(ep, req, dir.path()).cache_hit);
}

TEST_CASE("payload follows the chat-completions shape") {
    Endpoint ep;
    ep.model_id = "vision-x";
    const auto req = image_request("describe", {9, 9, 9});
    Usage usage;
    const auto p = OpenAIChatBackend::build_payload(ep, req, usage);
    CHECK(p["model"] == "vision-x");
    CHECK(p["max_tokens"] == 768);
    CHECK(p["temperature"] == 0.0);
    CHECK_FALSE(p.contains("num_beams"));
    const auto& content = p["messages"][0]["content"];
    CHECK(content[0]["text"] == "describe");
    CHECK(content[1]["image_url"]["url"] == "data:image/png;base64," + base64_encode(std::vector<std::uint8_t>{9, 9, 9}));
    CHECK(usage.ignored_params == std::vector<std::string>{"num_beams"});

    ep.accepts_num_beams = true;
    auto sampled = text_request("t");
    sampled.decode.deterministic = false;
    const auto q = OpenAIChatBackend::build_payload(ep, sampled, usage);
    CHECK(q["num_beams"] == 4);
    CHECK(q["temperature"] == 0.7);
    CHECK(q["messages"][0]["content"] == "t");

    ep.platform_defaults = true;
    const auto r = OpenAIChatBackend::build_payload(ep, sampled, usage);
    CHECK_FALSE(r.contains("temperature"));
    CHECK_FALSE(r.contains("num_beams"));
    CHECK(r.contains("max_tokens"));
    CHECK(usage.transmitted_params == std::vector<std::string>{"max_new_tokens"});
    CHECK(usage.ignored_params == std::vector<std::string>{"temperature", "num_beams"});
}

TEST_CASE("response parsing") {
    const auto c = OpenAIChatBackend::parse_response(kOk);
    CHECK(c.text == "hello there");
    CHECK(c.usage.prompt_tokens == 12);
    CHECK(OpenAIChatBackend::parse_response(
              R"({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]})")
              .text == "ab");
    for (const char* bad : {"nope", R"({"choices":[]})", R"({"choices":[{"message":{"content":5}}]})"}) {
        try {
            OpenAIChatBackend::parse_response(bad);
            FAIL("expected schema error");
        } catch (const ModelError& e) {
            CHECK(e.kind() == ModelError::Kind::schema);
        }
    }
}

TEST_CASE("HTTP backend against a local server") {
    FakeChatServer server;
    Endpoint ep;
    ep.name = "local";
    ep.base_url = server.base_url();
    ep.model_id = "local-model";
    ep.auth_ref = "SEGSUM_TEST_KEY";
    ::setenv("SEGSUM_TEST_KEY", "sekrit", 1);
    RecordingSleeper sleeper;
    ModelClient client(RetryPolicy{}, sleeper.fn());

    server.reply(200, kOk);
    const auto c = client.complete(ep, image_request("describe", {1, 2, 3}));
    CHECK(c.text == "hello there");
    CHECK(server.last_auth() == "Bearer sekrit");
    CHECK(server.last_payload()["model"] == "local-model");
    CHECK(c.usage.transmitted_params == std::vector<std::string>{"max_new_tokens", "deterministic"});
    CHECK(client.remote_calls() == 1);

    // 429 then 503 are retried; the third reply succeeds.
    server.reply(429, "{}");
    server.reply(503, "{}");
    server.reply(200, kOk);
    CHECK(client.complete(ep, text_request("again")).text == "hello there");
    CHECK(*sleeper.waits == std::vector<std::chrono::milliseconds>{1000ms, 4000ms});

    auto expect_kind = [&](int status, ModelError::Kind kind) {
        server.reply(status, "{}");
        try {
            ModelClient once(RetryPolicy{{}}, sleeper.fn());
            once.complete(ep, text_request("x"));
            FAIL("expected an error");
        } catch (const ModelError& e) {
            CHECK(e.kind() == kind);
        }
    };
    expect_kind(401, ModelError::Kind::auth);
    expect_kind(403, ModelError::Kind::auth);
    expect_kind(429, ModelError::Kind::rate_limited);
    expect_kind(504, ModelError::Kind::timeout);
    expect_kind(500, ModelError::Kind::transport);
    expect_kind(400, ModelError::Kind::schema);

    ::unsetenv("SEGSUM_TEST_KEY");
    try {
        client.complete(ep, text_request("x"));
        FAIL("expected an auth error");
    } catch (const ModelError& e) {
        CHECK(e.kind() == ModelError::Kind::auth);
    }
}

TEST_CASE("unreachable endpoint is a transport error") {
    Endpoint ep;
    ep.base_url = "http://127.0.0.1:1/v1";
    ep.model_id = "m";
    ModelClient client(RetryPolicy{{}});
    try {
        client.complete(ep, text_request("x"));
        FAIL("expected transport error");
    } catch (const ModelError& e) {
        CHECK(e.kind() == ModelError::Kind::transport);
    }
}
