#pragma once

// Shared test utilities: tiny tree builders, fixed-behavior oracles, a
// random valid-tree generator for fuzzing, and an independent brute-force
// metrics implementation used as the oracle for macro averaging.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "cpg/engine.hpp"
#include "cpg/oracle.hpp"
#include "cpg/rng.hpp"
#include "cpg/tree.hpp"

namespace cpg::test {

inline Node simple_node(std::string id, std::string feature, Target yes, Target no) {
    Node n;
    n.id = std::move(id);
    n.kind = NodeKind::Simple;
    n.feature = std::move(feature);
    n.question = "Does the patient have " + n.feature + "?";
    n.positive = std::move(yes);
    n.negative = std::move(no);
    return n;
}

inline Node multi_node(std::string id, std::vector<std::string> features, int threshold,
                       Target met, Target not_met) {
    Node n;
    n.id = std::move(id);
    n.kind = NodeKind::Multi;
    for (auto& f : features) {
        n.criteria.push_back({f, "Does the patient have " + f + "?"});
    }
    n.threshold = threshold;
    n.positive = std::move(met);
    n.negative = std::move(not_met);
    return n;
}

inline ActionDef action(std::string id, bool referral = true) {
    ActionDef a;
    a.id = id;
    a.label = "Pathway " + id;
    a.referral = referral;
    return a;
}

inline GuidanceTree make_tree(std::string domain, std::string root, std::vector<Node> nodes,
                              std::vector<ActionDef> actions) {
    GuidanceTree t;
    t.domain = std::move(domain);
    t.root = std::move(root);
    for (auto& n : nodes) t.nodes.emplace(n.id, std::move(n));
    for (auto& a : actions) t.actions.emplace(a.id, std::move(a));
    return t;
}

/// Chain of `n` simple nodes: node i fires action a{i} on yes, continues on
/// no; the last no-branch ends the pathway.
inline GuidanceTree spine_tree(int n) {
    std::vector<Node> nodes;
    std::vector<ActionDef> actions;
    for (int i = 1; i <= n; ++i) {
        const std::string id = "n" + std::to_string(i);
        const std::string aid = "a" + std::to_string(i);
        const Target next = i < n ? Target::node("n" + std::to_string(i + 1)) : Target::end();
        nodes.push_back(simple_node(id, "f" + std::to_string(i), Target::action(aid), next));
        actions.push_back(action(aid));
    }
    return make_tree("spine", "n1", std::move(nodes), std::move(actions));
}

class AlwaysYesOracle : public Oracle {
public:
    Answer answer(const Question&) override { return make_answer(Verdict::Yes); }
    std::string descriptor() const override { return "always-yes"; }
};

class RandomOracle : public Oracle {
public:
    explicit RandomOracle(uint64_t seed) : rng_(seed) {}
    Answer answer(const Question&) override {
        return make_answer(rng_.bernoulli(0.5) ? Verdict::Yes : Verdict::No);
    }
    std::string descriptor() const override { return "random"; }

private:
    Rng rng_;
};

/// Random valid tree: nodes n0..n{k-1} with forward-only node targets
/// (acyclic by construction), a negative spine guaranteeing reachability,
/// and at least one action target.
inline GuidanceTree random_valid_tree(Rng& rng) {
    const int k = static_cast<int>(rng.uniform_int(1, 12));
    GuidanceTree t;
    t.domain = "fuzz";
    t.root = "n0";

    int action_counter = 0;
    auto random_action = [&]() {
        // Reuse an existing action sometimes to exercise DAG sharing.
        if (action_counter > 0 && rng.bernoulli(0.3)) {
            return Target::action("a" + std::to_string(rng.uniform_int(0, action_counter - 1)));
        }
        const std::string id = "a" + std::to_string(action_counter++);
        ActionDef a;
        a.id = id;
        a.label = "Pathway " + id;
        a.referral = rng.bernoulli(0.7);
        t.actions.emplace(id, std::move(a));
        return Target::action(id);
    };

    auto forward_target = [&](int i) {
        // Positive branch: action, end, or a jump strictly forward.
        const double u = rng.next_double();
        if (u < 0.55 || i == k - 1) return random_action();
        if (u < 0.7) return Target::end();
        return Target::node("n" + std::to_string(rng.uniform_int(i + 1, k - 1)));
    };

    int feature_counter = 0;
    for (int i = 0; i < k; ++i) {
        const std::string id = "n" + std::to_string(i);
        const Target negative =
            i < k - 1 ? Target::node("n" + std::to_string(i + 1))
                      : (rng.bernoulli(0.5) ? Target::end() : random_action());
        if (rng.bernoulli(0.3)) {
            const int criteria = static_cast<int>(rng.uniform_int(1, 4));
            std::vector<std::string> feats;
            for (int c = 0; c < criteria; ++c)
                feats.push_back("f" + std::to_string(feature_counter++));
            const int threshold = static_cast<int>(rng.uniform_int(1, criteria));
            t.nodes.emplace(id, multi_node(id, feats, threshold, forward_target(i), negative));
        } else {
            t.nodes.emplace(id, simple_node(id, "f" + std::to_string(feature_counter++),
                                            forward_target(i), negative));
        }
    }
    return t;
}

/// Independent per-class tally used as the test oracle for macro metrics:
/// straight loops over (gold, predicted) label pairs, long double arithmetic.
struct BruteForceMacro {
    double macro_precision = 0;
    double macro_recall = 0;
    double macro_f1 = 0;
    std::map<std::string, double> f1_by_class;
};

inline BruteForceMacro brute_force_macro(const std::vector<std::string>& golds,
                                         const std::vector<std::string>& preds) {
    std::set<std::string> classes(golds.begin(), golds.end());
    classes.insert(preds.begin(), preds.end());

    BruteForceMacro out;
    long double sp = 0, sr = 0, sf = 0;
    for (const auto& cls : classes) {
        long tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < golds.size(); ++i) {
            const bool g = golds[i] == cls;
            const bool p = preds[i] == cls;
            if (p && g) ++tp;
            if (p && !g) ++fp;
            if (!p && g) ++fn;
        }
        const long double precision = (tp + fp) > 0 ? static_cast<long double>(tp) / (tp + fp) : 0;
        const long double recall = (tp + fn) > 0 ? static_cast<long double>(tp) / (tp + fn) : 0;
        const long double f1 =
            (precision + recall) > 0 ? 2 * precision * recall / (precision + recall) : 0;
        sp += precision;
        sr += recall;
        sf += f1;
        out.f1_by_class[cls] = static_cast<double>(f1);
    }
    const long double n = static_cast<long double>(classes.size());
    if (n > 0) {
        out.macro_precision = static_cast<double>(sp / n);
        out.macro_recall = static_cast<double>(sr / n);
        out.macro_f1 = static_cast<double>(sf / n);
    }
    return out;
}

}  // namespace cpg::test
