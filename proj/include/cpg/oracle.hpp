#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpg/rng.hpp"

namespace cpg {

/// One yes/no query issued at a decision node. criterion_index is set only
/// for questions originating from a multi-criteria node.
struct Question {
    std::string feature_id;
    std::string text;
    std::string node_id;
    std::optional<int> criterion_index;
};

enum class Verdict { Yes, No };

inline const char* to_string(Verdict v) { return v == Verdict::Yes ? "yes" : "no"; }

/// A binary reply. There is no "unknown": a backend that cannot answer must
/// raise OracleError instead.
struct Answer {
    Verdict value = Verdict::No;
    std::optional<std::string> raw;     // verbatim backend reply, when one exists
    std::optional<double> latency_ms;   // remote backends only
    int retries = 0;                    // parse retries consumed for this answer
};

inline Answer make_answer(Verdict v, std::optional<std::string> raw = std::nullopt) {
    Answer a;
    a.value = v;
    a.raw = std::move(raw);
    return a;
}

/// The answerer the engine queries at each decision point. One instance per
/// traversal; instances bind whatever context they need (gold features,
/// vignette text, terminal streams) at construction.
class Oracle {
public:
    virtual ~Oracle() = default;
    virtual Answer answer(const Question& q) = 0;

    /// Stable identification string: backend, parameters, and prompt
    /// template version where applicable. Recorded in every trace.
    virtual std::string descriptor() const = 0;
};

enum class AbsentFeaturePolicy { No, Error };

/// Answers from a fixed feature assignment. Features absent from the map are
/// answered "no" under the default policy, or raise AbsentFeature under the
/// strict one.
class ScriptedOracle : public Oracle {
public:
    ScriptedOracle(std::map<std::string, bool> features,
                   AbsentFeaturePolicy policy = AbsentFeaturePolicy::No)
        : features_(std::move(features)), policy_(policy) {}

    Answer answer(const Question& q) override;
    std::string descriptor() const override;

private:
    std::map<std::string, bool> features_;
    AbsentFeaturePolicy policy_;
};

struct NoiseParams {
    double p_no_to_yes = 0.0;
    double p_yes_to_no = 0.0;
    uint64_t seed = 0;
};

/// Seeded stochastic wrapper flipping answers with asymmetric probabilities.
/// Exactly one RNG draw per call, in call order, so identical seeds and
/// question sequences reproduce identical flip sequences.
class NoisyOracle : public Oracle {
public:
    NoisyOracle(std::unique_ptr<Oracle> inner, NoiseParams params)
        : inner_(std::move(inner)), params_(params), rng_(params.seed) {}

    Answer answer(const Question& q) override;
    std::string descriptor() const override;

private:
    std::unique_ptr<Oracle> inner_;
    NoiseParams params_;
    Rng rng_;
};

/// Terminal Q&A: echoes the question, reads 'y' or 'n' (case-insensitive),
/// reprompts on anything else.
class InteractiveOracle : public Oracle {
public:
    InteractiveOracle(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

    Answer answer(const Question& q) override;
    std::string descriptor() const override { return "interactive"; }

private:
    std::istream& in_;
    std::ostream& out_;
};

/// Replays a recorded answer sequence; used to reconstruct a traversal from
/// its trace. Raises Interrupted when the recording is exhausted.
class ReplayOracle : public Oracle {
public:
    explicit ReplayOracle(std::vector<Answer> answers, std::string descriptor = "replay")
        : answers_(std::move(answers)), descriptor_(std::move(descriptor)) {}

    Answer answer(const Question& q) override;
    std::string descriptor() const override { return descriptor_; }

private:
    std::vector<Answer> answers_;
    size_t next_ = 0;
    std::string descriptor_;
};

enum class ReplyParse { Yes, No, Unparseable };

/// Case-insensitive scan for the first standalone word token equal to "yes"
/// or "no"; that token decides. Total and order-deterministic.
ReplyParse parse_reply(std::string_view raw);

}  // namespace cpg
