#include "cpg/engine.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cpg/errors.hpp"

using nlohmann::json;

namespace cpg {

std::string to_string(BranchTaken b) {
    switch (b) {
        case BranchTaken::Yes: return "yes";
        case BranchTaken::No: return "no";
        case BranchTaken::Met: return "met";
        case BranchTaken::NotMet: return "not_met";
    }
    return "?";
}

namespace {

BranchTaken branch_from_string(const std::string& s) {
    if (s == "yes") return BranchTaken::Yes;
    if (s == "no") return BranchTaken::No;
    if (s == "met") return BranchTaken::Met;
    if (s == "not_met") return BranchTaken::NotMet;
    throw EngineError("unknown branch '" + s + "' in trace");
}

json target_to_json(const Target& t) {
    json j = json::object();
    switch (t.kind) {
        case Target::Kind::NodeRef: j["node"] = t.id; break;
        case Target::Kind::ActionRef: j["action"] = t.id; break;
        case Target::Kind::End: j["end"] = true; break;
        case Target::Kind::Continue: j["continue"] = true; break;
    }
    return j;
}

Target target_from_json(const json& j) {
    if (j.contains("node")) return Target::node(j.at("node").get<std::string>());
    if (j.contains("action")) return Target::action(j.at("action").get<std::string>());
    if (j.contains("continue")) return Target::continue_marker();
    return Target::end();
}

}  // namespace

std::vector<Answer> Trace::recorded_answers() const {
    std::vector<Answer> out;
    for (const auto& s : steps) out.insert(out.end(), s.answers.begin(), s.answers.end());
    return out;
}

Trace traverse(const GuidanceTree& tree, Oracle& oracle, const std::string& vignette_id,
               int max_steps) {
    Trace trace;
    trace.tree_domain = tree.domain;
    trace.vignette_id = vignette_id;
    trace.oracle_descriptor = oracle.descriptor();

    if (max_steps <= 0) max_steps = static_cast<int>(tree.nodes.size());

    auto it = tree.nodes.find(tree.root);
    if (it == tree.nodes.end()) throw EngineError("root node '" + tree.root + "' not found");

    const Node* node = &it->second;
    for (;;) {
        if (trace.step_count >= max_steps) {
            throw EngineError("step limit " + std::to_string(max_steps) +
                              " exceeded at node '" + node->id + "'");
        }

        Step step;
        step.index = trace.step_count;
        step.node_id = node->id;
        step.node_kind = node->kind;

        try {
            if (node->kind == NodeKind::Simple) {
                Question q{node->feature, node->question, node->id, std::nullopt};
                step.answers.push_back(oracle.answer(q));
                step.questions.push_back(std::move(q));
            } else {
                // Every criterion is asked, independently, in listed order;
                // the yes-count is compared to the threshold afterwards.
                for (size_t i = 0; i < node->criteria.size(); ++i) {
                    Question q{node->criteria[i].feature, node->criteria[i].question, node->id,
                               static_cast<int>(i)};
                    step.answers.push_back(oracle.answer(q));
                    step.questions.push_back(std::move(q));
                }
            }
        } catch (const OracleError& e) {
            trace.aborted = true;
            trace.abort_reason = e.what();
            if (!step.questions.empty()) {
                // Keep whatever was asked before the failure, branchless.
                step.answers.resize(step.questions.size(), Answer{});
            }
            return trace;
        }

        bool positive;
        if (node->kind == NodeKind::Simple) {
            positive = step.answers[0].value == Verdict::Yes;
            step.branch = positive ? BranchTaken::Yes : BranchTaken::No;
        } else {
            int yes = 0;
            for (const auto& a : step.answers)
                if (a.value == Verdict::Yes) ++yes;
            positive = yes >= node->threshold;
            step.branch = positive ? BranchTaken::Met : BranchTaken::NotMet;
        }

        const Target& t = positive ? node->positive : node->negative;
        step.target = t;
        trace.query_count += static_cast<int>(step.questions.size());
        trace.steps.push_back(std::move(step));
        ++trace.step_count;

        switch (t.kind) {
            case Target::Kind::ActionRef: {
                auto ait = tree.actions.find(t.id);
                if (ait == tree.actions.end())
                    throw EngineError("target action '" + t.id + "' not found");
                trace.outcome = Outcome{t.id, ait->second.referral};
                return trace;
            }
            case Target::Kind::End:
                trace.outcome = Outcome{std::nullopt, false};
                return trace;
            case Target::Kind::NodeRef: {
                auto nit = tree.nodes.find(t.id);
                if (nit == tree.nodes.end())
                    throw EngineError("target node '" + t.id + "' not found");
                node = &nit->second;
                break;
            }
            case Target::Kind::Continue:
                throw EngineError("continue-marker reached during traversal");
        }
    }
}

Trace gold_trace(const GuidanceTree& tree, const std::map<std::string, bool>& gold_features,
                 const std::string& vignette_id) {
    ScriptedOracle oracle(gold_features, AbsentFeaturePolicy::No);
    Trace t = traverse(tree, oracle, vignette_id);
    t.oracle_descriptor = "gold";
    return t;
}

int traversal_difference(const Trace& predicted, const Trace& gold) {
    if (predicted.vignette_id != gold.vignette_id || predicted.tree_domain != gold.tree_domain) {
        throw EngineError("traces describe different vignettes: '" + predicted.vignette_id +
                          "' vs '" + gold.vignette_id + "'");
    }
    return predicted.step_count - gold.step_count;
}

std::string trace_to_jsonl(const Trace& trace) {
    json j;
    j["vignette_id"] = trace.vignette_id;
    j["tree_domain"] = trace.tree_domain;
    j["oracle_descriptor"] = trace.oracle_descriptor;

    json steps = json::array();
    for (const auto& s : trace.steps) {
        json js;
        js["index"] = s.index;
        js["node_id"] = s.node_id;
        js["kind"] = s.node_kind == NodeKind::Simple ? "simple" : "multi";
        json qs = json::array();
        for (const auto& q : s.questions) {
            json jq;
            jq["feature_id"] = q.feature_id;
            jq["text"] = q.text;
            if (q.criterion_index) jq["criterion_index"] = *q.criterion_index;
            qs.push_back(std::move(jq));
        }
        js["questions"] = std::move(qs);
        json as = json::array();
        for (const auto& a : s.answers) {
            json ja;
            ja["value"] = to_string(a.value);
            if (a.raw) ja["raw"] = *a.raw;
            if (a.latency_ms) ja["latency_ms"] = *a.latency_ms;
            if (a.retries > 0) ja["retries"] = a.retries;
            as.push_back(std::move(ja));
        }
        js["answers"] = std::move(as);
        js["branch"] = to_string(s.branch);
        js["target"] = target_to_json(s.target);
        steps.push_back(std::move(js));
    }
    j["steps"] = std::move(steps);

    if (trace.outcome) {
        json jo;
        if (trace.outcome->action_id) {
            jo["action"] = *trace.outcome->action_id;
        } else {
            jo["no_action"] = true;
        }
        jo["referral"] = trace.outcome->referral;
        j["outcome"] = std::move(jo);
    } else {
        j["outcome"] = nullptr;
    }
    j["step_count"] = trace.step_count;
    j["query_count"] = trace.query_count;
    j["aborted"] = trace.aborted;
    if (trace.aborted) j["abort_reason"] = trace.abort_reason;

    return j.dump();
}

Trace trace_from_jsonl(const std::string& line) {
    json j = json::parse(line);
    Trace t;
    t.vignette_id = j.at("vignette_id").get<std::string>();
    t.tree_domain = j.at("tree_domain").get<std::string>();
    t.oracle_descriptor = j.at("oracle_descriptor").get<std::string>();
    for (const auto& js : j.at("steps")) {
        Step s;
        s.index = js.at("index").get<int>();
        s.node_id = js.at("node_id").get<std::string>();
        s.node_kind = js.at("kind").get<std::string>() == "multi" ? NodeKind::Multi : NodeKind::Simple;
        for (const auto& jq : js.at("questions")) {
            Question q;
            q.feature_id = jq.at("feature_id").get<std::string>();
            q.text = jq.at("text").get<std::string>();
            q.node_id = s.node_id;
            if (jq.contains("criterion_index")) q.criterion_index = jq.at("criterion_index").get<int>();
            s.questions.push_back(std::move(q));
        }
        for (const auto& ja : js.at("answers")) {
            Answer a;
            a.value = ja.at("value").get<std::string>() == "yes" ? Verdict::Yes : Verdict::No;
            if (ja.contains("raw")) a.raw = ja.at("raw").get<std::string>();
            if (ja.contains("latency_ms")) a.latency_ms = ja.at("latency_ms").get<double>();
            if (ja.contains("retries")) a.retries = ja.at("retries").get<int>();
            s.answers.push_back(std::move(a));
        }
        s.branch = branch_from_string(js.at("branch").get<std::string>());
        s.target = target_from_json(js.at("target"));
        t.steps.push_back(std::move(s));
    }
    if (j.contains("outcome") && !j.at("outcome").is_null()) {
        const json& jo = j.at("outcome");
        Outcome o;
        if (jo.contains("action")) o.action_id = jo.at("action").get<std::string>();
        o.referral = jo.at("referral").get<bool>();
        t.outcome = o;
    }
    t.step_count = j.at("step_count").get<int>();
    t.query_count = j.value("query_count", 0);
    t.aborted = j.at("aborted").get<bool>();
    if (j.contains("abort_reason")) t.abort_reason = j.at("abort_reason").get<std::string>();
    return t;
}

void save_traces(const std::vector<Trace>& traces, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write trace file: " + path);
    for (const auto& t : traces) out << trace_to_jsonl(t) << "\n";
}

std::vector<Trace> load_traces(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open trace file: " + path);
    std::vector<Trace> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(trace_from_jsonl(line));
    }
    return out;
}

}  // namespace cpg
