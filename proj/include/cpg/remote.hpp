#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "cpg/oracle.hpp"

namespace cpg {

inline constexpr const char* kYesNoPromptVersion = "yesno-prompt/v1";

struct RemoteConfig {
    std::string endpoint;  // chat-completions URL, e.g. http://host:port/v1/chat/completions
    std::string model = "gpt-4o";
    double temperature = 0.2;
    int timeout_ms = 30000;
    int max_retries = 2;               // transport-level retries
    double requests_per_second = 0.0;  // 0 = unlimited; enforced process-wide
};

/// Process-wide token bucket shared by every remote oracle instance.
class RateLimiter {
public:
    void configure(double requests_per_second);
    void acquire();

private:
    std::mutex mutex_;
    double rps_ = 0.0;
    double tokens_ = 1.0;
    double capacity_ = 1.0;
    long long last_ns_ = 0;
};

RateLimiter& global_rate_limiter();

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatReply {
    std::string content;
    double latency_ms = 0.0;
};

/// Minimal chat-completions client. POSTs {model, temperature, messages} and
/// reads the first choice's message content. Credential, when present, comes
/// from the GUIDANCE_API_KEY environment variable.
class ChatClient {
public:
    explicit ChatClient(RemoteConfig config);
    ChatReply complete(const std::vector<ChatMessage>& messages) const;

    const RemoteConfig& config() const { return config_; }

private:
    RemoteConfig config_;
    std::string base_url_;
    std::string path_;
};

/// Yes/no oracle over a remote model: two-message prompt (system rule plus
/// note and question), reply normalized by parse_reply, one stricter retry
/// on an unparseable reply, then a hard failure. Timeouts and transport
/// errors surface as distinct OracleError kinds; nothing defaults silently.
class RemoteOracle : public Oracle {
public:
    RemoteOracle(RemoteConfig config, std::string vignette_text);

    Answer answer(const Question& q) override;
    std::string descriptor() const override;

private:
    ChatClient client_;
    std::string vignette_text_;
};

}  // namespace cpg
