#include "cpg/oracle.hpp"

#include <cctype>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "cpg/errors.hpp"
#include "cpg/util.hpp"

namespace cpg {

Answer ScriptedOracle::answer(const Question& q) {
    auto it = features_.find(q.feature_id);
    if (it == features_.end()) {
        if (policy_ == AbsentFeaturePolicy::Error) {
            throw OracleError(OracleError::Kind::AbsentFeature,
                              "feature '" + q.feature_id + "' absent from assignment");
        }
        return make_answer(Verdict::No);
    }
    return make_answer(it->second ? Verdict::Yes : Verdict::No);
}

std::string ScriptedOracle::descriptor() const {
    return policy_ == AbsentFeaturePolicy::No ? "scripted(policy=no)" : "scripted(policy=error)";
}

Answer NoisyOracle::answer(const Question& q) {
    Answer a = inner_->answer(q);
    const double u = rng_.next_double();  // exactly one draw per call
    if (a.value == Verdict::No && u < params_.p_no_to_yes) {
        a.value = Verdict::Yes;
    } else if (a.value == Verdict::Yes && u < params_.p_yes_to_no) {
        a.value = Verdict::No;
    }
    return a;
}

std::string NoisyOracle::descriptor() const {
    std::ostringstream os;
    char buf[64];
    std::snprintf(buf, sizeof buf, "noisy(p_no_to_yes=%.4f,p_yes_to_no=%.4f,seed=%llu)",
                  params_.p_no_to_yes, params_.p_yes_to_no,
                  static_cast<unsigned long long>(params_.seed));
    os << buf << " over " << inner_->descriptor();
    return os.str();
}

Answer InteractiveOracle::answer(const Question& q) {
    std::string line;
    for (;;) {
        out_ << q.text << " [y/n] " << std::flush;
        if (!std::getline(in_, line)) {
            throw OracleError(OracleError::Kind::Interrupted, "input stream closed");
        }
        const std::string t = to_lower(trim(line));
        if (t == "y") return make_answer(Verdict::Yes, line);
        if (t == "n") return make_answer(Verdict::No, line);
        out_ << "please answer y or n\n";
    }
}

Answer ReplayOracle::answer(const Question&) {
    if (next_ >= answers_.size()) {
        throw OracleError(OracleError::Kind::Interrupted, "replay recording exhausted");
    }
    return answers_[next_++];
}

ReplyParse parse_reply(std::string_view raw) {
    size_t i = 0;
    const size_t n = raw.size();
    while (i < n) {
        while (i < n && !std::isalpha(static_cast<unsigned char>(raw[i]))) ++i;
        size_t start = i;
        while (i < n && std::isalpha(static_cast<unsigned char>(raw[i]))) ++i;
        if (i > start) {
            const std::string token = to_lower(raw.substr(start, i - start));
            if (token == "yes") return ReplyParse::Yes;
            if (token == "no") return ReplyParse::No;
        }
    }
    return ReplyParse::Unparseable;
}

}  // namespace cpg
