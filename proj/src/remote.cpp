#include "cpg/remote.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cpg/errors.hpp"
#include "cpg/util.hpp"

using nlohmann::json;

namespace cpg {

void RateLimiter::configure(double requests_per_second) {
    std::lock_guard<std::mutex> lock(mutex_);
    rps_ = requests_per_second;
    capacity_ = requests_per_second > 1.0 ? requests_per_second : 1.0;
    tokens_ = capacity_;
    last_ns_ = 0;
}

void RateLimiter::acquire() {
    using clock = std::chrono::steady_clock;
    for (;;) {
        double wait_s = 0.0;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            if (rps_ <= 0.0) return;
            const long long now =
                std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now().time_since_epoch())
                    .count();
            if (last_ns_ != 0) {
                tokens_ += static_cast<double>(now - last_ns_) * 1e-9 * rps_;
                if (tokens_ > capacity_) tokens_ = capacity_;
            }
            last_ns_ = now;
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            wait_s = (1.0 - tokens_) / rps_;
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
    }
}

RateLimiter& global_rate_limiter() {
    static RateLimiter limiter;
    return limiter;
}

namespace {

// Split a URL into the scheme://host[:port] base and the request path.
std::pair<std::string, std::string> split_url(const std::string& url) {
    const size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint URL must include a scheme: " + url);
    }
    const size_t path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

ChatClient::ChatClient(RemoteConfig config) : config_(std::move(config)) {
    auto [base, path] = split_url(config_.endpoint);
    base_url_ = std::move(base);
    path_ = std::move(path);
}

ChatReply ChatClient::complete(const std::vector<ChatMessage>& messages) const {
    global_rate_limiter().acquire();

    json body;
    body["model"] = config_.model;
    body["temperature"] = config_.temperature;
    json jmessages = json::array();
    for (const auto& m : messages) jmessages.push_back({{"role", m.role}, {"content", m.content}});
    body["messages"] = std::move(jmessages);
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (const char* key = std::getenv("GUIDANCE_API_KEY")) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::string last_error = "no attempt made";
    bool last_was_timeout = false;

    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        httplib::Client cli(base_url_);
        const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
        cli.set_connection_timeout(timeout);
        cli.set_read_timeout(timeout);
        cli.set_write_timeout(timeout);

        const auto t0 = std::chrono::steady_clock::now();
        httplib::Result res = cli.Post(path_, headers, payload, "application/json");
        const double latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();

        if (!res) {
            last_was_timeout = res.error() == httplib::Error::ConnectionTimeout ||
                               res.error() == httplib::Error::Read ||
                               res.error() == httplib::Error::Write;
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_was_timeout = false;
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw OracleError(OracleError::Kind::Transport,
                              "endpoint returned HTTP " + std::to_string(res->status));
        }

        json reply;
        try {
            reply = json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw OracleError(OracleError::Kind::Transport,
                              std::string("malformed completion response: ") + e.what());
        }
        try {
            ChatReply out;
            out.content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
            out.latency_ms = latency_ms;
            return out;
        } catch (const json::exception&) {
            throw OracleError(OracleError::Kind::Transport,
                              "completion response lacks choices[0].message.content");
        }
    }

    throw OracleError(last_was_timeout ? OracleError::Kind::Timeout : OracleError::Kind::Transport,
                      "remote request failed after " + std::to_string(config_.max_retries + 1) +
                          " attempts: " + last_error);
}

namespace {

const char* kSystemPrompt =
    "You answer questions about one clinical note. Answer strictly yes or no, using only "
    "information stated in the note. If a finding is not mentioned, answer no.";

const char* kStrictSystemPrompt = "Reply with exactly one word: yes or no.";

}  // namespace

RemoteOracle::RemoteOracle(RemoteConfig config, std::string vignette_text)
    : client_(std::move(config)), vignette_text_(std::move(vignette_text)) {}

Answer RemoteOracle::answer(const Question& q) {
    const std::string user = "Clinical note:\n" + vignette_text_ + "\n\nQuestion: " + q.text +
                             "\nAnswer yes or no.";

    ChatReply reply = client_.complete({{"system", kSystemPrompt}, {"user", user}});
    ReplyParse parsed = parse_reply(reply.content);
    int retries = 0;
    double latency = reply.latency_ms;

    if (parsed == ReplyParse::Unparseable) {
        // One stricter retry; more would change the evaluation semantics.
        reply = client_.complete({{"system", kStrictSystemPrompt}, {"user", user}});
        parsed = parse_reply(reply.content);
        retries = 1;
        latency += reply.latency_ms;
        if (parsed == ReplyParse::Unparseable) {
            throw OracleError(OracleError::Kind::UnparseableReply,
                              "reply not parseable as yes/no after retry: '" + reply.content + "'");
        }
    }

    Answer a;
    a.value = parsed == ReplyParse::Yes ? Verdict::Yes : Verdict::No;
    a.raw = reply.content;
    a.latency_ms = latency;
    a.retries = retries;
    return a;
}

std::string RemoteOracle::descriptor() const {
    const RemoteConfig& c = client_.config();
    char buf[160];
    std::snprintf(buf, sizeof buf, "remote(model=%s,temperature=%.2f,prompt=%s)",
                  c.model.c_str(), c.temperature, kYesNoPromptVersion);
    const uint64_t h = fnv1a64(c.endpoint + "|" + c.model + "|" + std::to_string(c.temperature));
    return std::string(buf) + "#" + to_hex(h).substr(8);
}

}  // namespace cpg
