#include "cpg/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cpg/engine.hpp"
#include "cpg/errors.hpp"
#include "cpg/tree_io.hpp"
#include "cpg/util.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace cpg {

std::string to_string(Category c) {
    switch (c) {
        case Category::Single: return "single";
        case Category::Multi: return "multi";
        case Category::Contrastive: return "contrastive";
        case Category::Exclusion: return "exclusion";
    }
    return "?";
}

std::string to_string(LengthCondition c) {
    switch (c) {
        case LengthCondition::Unconstrained: return "unconstrained";
        case LengthCondition::Short: return "short";
        case LengthCondition::Medium: return "medium";
        case LengthCondition::Long: return "long";
    }
    return "?";
}

Category category_from_string(const std::string& s) {
    if (s == "single") return Category::Single;
    if (s == "multi") return Category::Multi;
    if (s == "contrastive") return Category::Contrastive;
    if (s == "exclusion") return Category::Exclusion;
    throw CorpusError("unknown category '" + s + "'");
}

LengthCondition length_from_string(const std::string& s) {
    if (s == "unconstrained") return LengthCondition::Unconstrained;
    if (s == "short") return LengthCondition::Short;
    if (s == "medium") return LengthCondition::Medium;
    if (s == "long") return LengthCondition::Long;
    throw CorpusError("unknown length condition '" + s + "'");
}

std::map<Category, int> CorpusManifest::category_counts() const {
    std::map<Category, int> out;
    for (const auto& v : vignettes) ++out[v.category];
    return out;
}

int CorpusManifest::referral_count() const {
    int n = 0;
    for (const auto& v : vignettes)
        if (v.gold_referral) ++n;
    return n;
}

int CorpusManifest::non_referral_count() const {
    return static_cast<int>(vignettes.size()) - referral_count();
}

// ---------------------------------------------------------------------------
// Category predicates

namespace {

bool trace_fires(const Trace& t) {
    return std::any_of(t.steps.begin(), t.steps.end(), [](const Step& s) {
        return s.branch == BranchTaken::Yes || s.branch == BranchTaken::Met;
    });
}

int count_positive(const Vignette& v) {
    int n = 0;
    for (const auto& [_, val] : v.features)
        if (val) ++n;
    return n;
}

int count_negative(const Vignette& v) {
    int n = 0;
    for (const auto& [_, val] : v.features)
        if (!val) ++n;
    return n;
}

GuidanceTree with_priorities(const GuidanceTree& tree) {
    for (const auto& [_, a] : tree.actions)
        if (!a.priority) return assign_priorities(tree);
    return tree;
}

// Outcome of the single-feature assignment {f: true}.
std::optional<std::string> individual_action(const GuidanceTree& tree, const std::string& f) {
    Trace t = gold_trace(tree, {{f, true}}, "probe");
    return t.outcome ? t.outcome->action_id : std::nullopt;
}

}  // namespace

bool matches_category(const GuidanceTree& tree, const Vignette& v, Category c) {
    const int pos = count_positive(v);
    const int neg = count_negative(v);
    const Trace t = gold_trace(tree, v.features, v.id);
    const bool fires = trace_fires(t);
    const bool referral = t.outcome && t.outcome->referral;

    switch (c) {
        case Category::Single:
            return pos == 1 && neg == 0 && fires;
        case Category::Multi: {
            if (pos < 2 || neg != 0 || !fires) return false;
            const GuidanceTree pt = with_priorities(tree);
            std::vector<std::string> actions;
            for (const auto& [f, val] : v.features) {
                if (!val) continue;
                auto a = individual_action(pt, f);
                if (!a) return false;  // every positive must fire its own pathway
                actions.push_back(*a);
            }
            std::set<std::string> distinct(actions.begin(), actions.end());
            if (distinct.size() != actions.size()) return false;
            // The outcome must be the most urgent of the individual actions.
            const std::string* best = nullptr;
            int best_priority = 0;
            for (const auto& a : actions) {
                const int p = pt.actions.at(a).priority.value_or(0);
                if (!best || p < best_priority) {
                    best = &a;
                    best_priority = p;
                }
            }
            return t.outcome && t.outcome->action_id && best && *t.outcome->action_id == *best;
        }
        case Category::Contrastive:
            return pos >= 1 && neg >= 1 && fires;
        case Category::Exclusion:
            // No firing feature: positives, if any, fall below every
            // threshold. The outcome must not be a referral.
            return !fires && (!t.outcome || !t.outcome->action_id || !referral);
    }
    return false;
}

std::vector<VignetteViolation> validate_vignette(const GuidanceTree& tree, const Vignette& v) {
    std::vector<VignetteViolation> out;

    for (const auto& [f, _] : v.features) {
        if (!has_feature(tree, f)) {
            out.push_back({"UNKNOWN_FEATURE", "feature '" + f + "' not present in tree"});
        }
    }
    if (!out.empty()) return out;  // gold recomputation would be meaningless

    const int wc = word_count(v.text);
    if (wc != v.word_count) {
        out.push_back({"WORD_COUNT", "stored word_count " + std::to_string(v.word_count) +
                                         " != recomputed " + std::to_string(wc)});
    }
    if (!v.text.empty()) {
        bool in_band = true;
        switch (v.length_condition) {
            case LengthCondition::Short: in_band = wc <= 100; break;
            case LengthCondition::Medium: in_band = wc > 100 && wc < 200; break;
            case LengthCondition::Long: in_band = wc >= 200; break;
            case LengthCondition::Unconstrained: break;
        }
        if (!in_band) {
            out.push_back({"LENGTH_BOUNDS", "word count " + std::to_string(wc) +
                                                " outside the '" +
                                                to_string(v.length_condition) + "' band"});
        }
    }

    const Trace t = gold_trace(tree, v.features, v.id);
    const std::optional<std::string> action = t.outcome ? t.outcome->action_id : std::nullopt;
    if (action != v.gold_action) {
        out.push_back({"GOLD_MISMATCH",
                       "gold_action '" + v.gold_action.value_or("(none)") +
                           "' but traversal reaches '" + action.value_or("(none)") + "'"});
    }
    const bool referral = t.outcome && t.outcome->referral;
    if (referral != v.gold_referral) {
        out.push_back({"REFERRAL_FLAG", std::string("gold_referral ") +
                                            (v.gold_referral ? "true" : "false") +
                                            " disagrees with the reached action"});
    }
    if (!v.gold_action && v.gold_referral) {
        out.push_back({"REFERRAL_FLAG", "gold_action is none but gold_referral is true"});
    }
    if (t.step_count != v.gold_path_length) {
        out.push_back({"GOLD_MISMATCH", "gold_path_length " + std::to_string(v.gold_path_length) +
                                            " != traversal steps " + std::to_string(t.step_count)});
    }

    if (!matches_category(tree, v, v.category)) {
        out.push_back({"CATEGORY_CONTRACT",
                       "vignette does not satisfy the '" + to_string(v.category) + "' contract"});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Spec generation

namespace {

struct FeatureProfile {
    std::string feature;
    bool fires = false;
    std::optional<std::string> action;
};

bool compatible(const GenPlan& plan, const std::vector<std::string>& positives) {
    for (const auto& group : plan.exclusive_groups) {
        int hits = 0;
        for (const auto& f : positives)
            if (std::find(group.begin(), group.end(), f) != group.end()) ++hits;
        if (hits > 1) return false;
    }
    return true;
}

Vignette make_spec(const GuidanceTree& tree, const std::string& domain, Category cat, int index,
                   LengthCondition length, std::map<std::string, bool> features) {
    Vignette v;
    char num[16];
    std::snprintf(num, sizeof num, "%03d", index + 1);
    v.id = domain + "-" + to_string(cat) + "-" + num;
    v.domain = domain;
    v.category = cat;
    v.length_condition = length;
    v.features = std::move(features);
    const Trace t = gold_trace(tree, v.features, v.id);
    v.gold_action = t.outcome ? t.outcome->action_id : std::nullopt;
    v.gold_referral = t.outcome && t.outcome->referral;
    v.gold_path_length = t.step_count;
    return v;
}

// All size-n index combinations in lexicographic order, capped.
void combinations(int n, int k, size_t cap, std::vector<std::vector<int>>& out) {
    std::vector<int> combo(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) combo[static_cast<size_t>(i)] = i;
    if (k > n) return;
    for (;;) {
        out.push_back(combo);
        if (out.size() >= cap) return;
        int i = k - 1;
        while (i >= 0 && combo[static_cast<size_t>(i)] == n - k + i) --i;
        if (i < 0) return;
        ++combo[static_cast<size_t>(i)];
        for (int j = i + 1; j < k; ++j)
            combo[static_cast<size_t>(j)] = combo[static_cast<size_t>(j - 1)] + 1;
    }
}

}  // namespace

GenResult generate_specs(const GuidanceTree& tree_in, const GenPlan& plan) {
    GenResult result;
    const GuidanceTree tree = with_priorities(tree_in);
    const std::vector<std::string> forder = feature_order(tree);
    const std::vector<std::string> norder = preorder_nodes(tree);

    std::vector<FeatureProfile> profiles;
    for (const auto& f : forder) {
        FeatureProfile p;
        p.feature = f;
        const Trace t = gold_trace(tree, {{f, true}}, "probe");
        p.fires = trace_fires(t);
        p.action = t.outcome ? t.outcome->action_id : std::nullopt;
        profiles.push_back(std::move(p));
    }

    std::vector<FeatureProfile> firing;
    for (const auto& p : profiles)
        if (p.fires && p.action) firing.push_back(p);

    auto length_for = [&](int i) {
        return plan.lengths.empty() ? LengthCondition::Unconstrained
                                    : plan.lengths[static_cast<size_t>(i) % plan.lengths.size()];
    };
    auto want = [&](Category c) {
        auto it = plan.counts.find(c);
        return it == plan.counts.end() ? 0 : it->second;
    };

    // Single: one firing feature, nothing else mentioned.
    if (const int n = want(Category::Single); n > 0) {
        if (firing.empty()) {
            result.infeasible.push_back(
                {Category::Single, "no feature triggers an action on its own"});
        } else {
            for (int i = 0; i < n; ++i) {
                const auto& p = firing[static_cast<size_t>(i) % firing.size()];
                result.specs.push_back(make_spec(tree, plan.domain, Category::Single, i,
                                                 length_for(i), {{p.feature, true}}));
            }
        }
    }

    // Multi: distinct-action firing features that may coexist; the combined
    // traversal must land on the most urgent of the individual actions.
    if (const int n = want(Category::Multi); n > 0) {
        std::vector<std::map<std::string, bool>> pool;
        std::vector<std::vector<int>> combos;
        combinations(static_cast<int>(firing.size()), plan.multi_positives, 512, combos);
        for (const auto& combo : combos) {
            std::vector<std::string> feats;
            std::set<std::string> actions;
            for (int ix : combo) {
                feats.push_back(firing[static_cast<size_t>(ix)].feature);
                actions.insert(*firing[static_cast<size_t>(ix)].action);
            }
            if (actions.size() != feats.size()) continue;  // pairwise distinct pathways
            if (!compatible(plan, feats)) continue;
            std::map<std::string, bool> assignment;
            for (const auto& f : feats) assignment[f] = true;
            // Combined outcome must equal the most urgent individual action.
            int best_priority = 0;
            std::string best;
            for (int ix : combo) {
                const auto& a = *firing[static_cast<size_t>(ix)].action;
                const int p = tree.actions.at(a).priority.value_or(0);
                if (best.empty() || p < best_priority) {
                    best = a;
                    best_priority = p;
                }
            }
            const Trace t = gold_trace(tree, assignment, "probe");
            if (!t.outcome || !t.outcome->action_id || *t.outcome->action_id != best) continue;
            pool.push_back(std::move(assignment));
        }
        if (pool.empty()) {
            result.infeasible.push_back(
                {Category::Multi,
                 "no two action-triggering features can logically coexist on this tree"});
        } else {
            for (int i = 0; i < n; ++i) {
                result.specs.push_back(make_spec(tree, plan.domain, Category::Multi, i,
                                                 length_for(i),
                                                 pool[static_cast<size_t>(i) % pool.size()]));
            }
        }
    }

    // Contrastive: a firing positive plus an explicitly denied similar
    // feature. Candidates come from multi-node siblings first, then the
    // configured confusion pairs.
    if (const int n = want(Category::Contrastive); n > 0) {
        std::vector<std::map<std::string, bool>> pool;

        // Threshold-completions of multi nodes with one sibling denied:
        // the held-out criterion is the natural contrast.
        for (const auto& nid : norder) {
            const Node& node = tree.nodes.at(nid);
            if (node.kind != NodeKind::Multi) continue;
            const int k = static_cast<int>(node.criteria.size());
            if (k - 1 < node.threshold) continue;  // nothing left to deny
            for (int denied = 0; denied < k; ++denied) {
                std::map<std::string, bool> assignment;
                std::vector<std::string> positives;
                int taken = 0;
                for (int i = 0; i < k && taken < node.threshold; ++i) {
                    if (i == denied) continue;
                    assignment[node.criteria[static_cast<size_t>(i)].feature] = true;
                    positives.push_back(node.criteria[static_cast<size_t>(i)].feature);
                    ++taken;
                }
                assignment[node.criteria[static_cast<size_t>(denied)].feature] = false;
                if (!compatible(plan, positives)) continue;
                const Trace t = gold_trace(tree, assignment, "probe");
                if (!trace_fires(t)) continue;
                pool.push_back(std::move(assignment));
            }
        }

        // Single-feature siblings within threshold-1 multi nodes.
        for (const auto& nid : norder) {
            const Node& node = tree.nodes.at(nid);
            if (node.kind != NodeKind::Multi || node.threshold != 1) continue;
            for (size_t i = 0; i < node.criteria.size(); ++i) {
                for (size_t j = 0; j < node.criteria.size(); ++j) {
                    if (i == j) continue;
                    std::map<std::string, bool> assignment{{node.criteria[i].feature, true},
                                                           {node.criteria[j].feature, false}};
                    const Trace t = gold_trace(tree, assignment, "probe");
                    if (!trace_fires(t)) continue;
                    pool.push_back(std::move(assignment));
                }
            }
        }

        // Configured confusion pairs, either orientation with a firing positive.
        for (const auto& [a, b] : plan.confusion_pairs) {
            for (const auto& [pos, negf] : {std::pair{a, b}, std::pair{b, a}}) {
                auto it = std::find_if(firing.begin(), firing.end(),
                                       [&](const FeatureProfile& p) { return p.feature == pos; });
                if (it == firing.end()) continue;
                if (!has_feature(tree, negf)) continue;
                pool.push_back({{pos, true}, {negf, false}});
            }
        }

        if (pool.empty()) {
            result.infeasible.push_back(
                {Category::Contrastive,
                 "no firing feature has a multi-node sibling or configured confusion pair"});
        } else {
            for (int i = 0; i < n; ++i) {
                result.specs.push_back(make_spec(tree, plan.domain, Category::Contrastive, i,
                                                 length_for(i),
                                                 pool[static_cast<size_t>(i) % pool.size()]));
            }
        }
    }

    // Exclusion: nothing fires. All-negative variants rotate the denied
    // features; near-misses leave a multi node one criterion short.
    if (const int n = want(Category::Exclusion); n > 0) {
        const Trace spine = gold_trace(tree, {}, "probe");
        const bool all_negative_ok =
            !trace_fires(spine) && (!spine.outcome || !spine.outcome->action_id ||
                                    !spine.outcome->referral);

        std::vector<std::map<std::string, bool>> near_misses;
        for (const auto& nid : norder) {
            const Node& node = tree.nodes.at(nid);
            if (node.kind != NodeKind::Multi || node.threshold < 2) continue;
            std::map<std::string, bool> assignment;
            std::vector<std::string> positives;
            for (int i = 0; i < static_cast<int>(node.criteria.size()); ++i) {
                const bool positive = i < node.threshold - 1;
                assignment[node.criteria[static_cast<size_t>(i)].feature] = positive;
                if (positive) positives.push_back(node.criteria[static_cast<size_t>(i)].feature);
            }
            if (!compatible(plan, positives)) continue;
            const Trace t = gold_trace(tree, assignment, "probe");
            if (trace_fires(t)) continue;
            if (t.outcome && t.outcome->action_id && t.outcome->referral) continue;
            near_misses.push_back(std::move(assignment));
        }

        if (!all_negative_ok && near_misses.empty()) {
            std::string reason = "every sub-threshold assignment reaches a referral action";
            if (spine.outcome && spine.outcome->action_id) {
                reason = "the all-negative traversal reaches referral action '" +
                         *spine.outcome->action_id + "'";
            }
            result.infeasible.push_back({Category::Exclusion, reason});
        } else {
            const size_t F = forder.size();
            int emitted = 0;
            for (int i = 0; emitted < n; ++i) {
                std::map<std::string, bool> assignment;
                const bool use_near_miss =
                    !near_misses.empty() && (i % 2 == 1 || !all_negative_ok);
                if (use_near_miss) {
                    assignment = near_misses[static_cast<size_t>(i / 2) % near_misses.size()];
                } else {
                    // Deny two rotating features; nothing is affirmed.
                    assignment[forder[(2 * static_cast<size_t>(i)) % F]] = false;
                    assignment[forder[(2 * static_cast<size_t>(i) + 1) % F]] = false;
                }
                result.specs.push_back(make_spec(tree, plan.domain, Category::Exclusion, emitted,
                                                 length_for(emitted), std::move(assignment)));
                ++emitted;
            }
        }
    }

    return result;
}

// ---------------------------------------------------------------------------
// Text synthesis

const std::vector<std::string>& banned_phrases() {
    static const std::vector<std::string> phrases = {
        "refer", "recommend", "management plan", "should be managed",
        "treatment plan", "prescrib", "advise", "specialist opinion",
    };
    return phrases;
}

namespace {

std::string substitute(std::string text, const std::string& key, const std::string& value) {
    for (size_t at = text.find(key); at != std::string::npos; at = text.find(key, at)) {
        text.replace(at, key.size(), value);
        at += value.size();
    }
    return text;
}

}  // namespace

std::string synthesize_text(const Vignette& spec, const TemplateSet& templates,
                            LengthCondition length, uint64_t seed) {
    Rng rng(seed);

    int age_lo = templates.age_min;
    int age_hi = templates.age_max;
    std::optional<std::string> forced_sex;
    for (const auto& [f, val] : spec.features) {
        if (!val) continue;
        auto it = templates.age_when_true.find(f);
        if (it != templates.age_when_true.end()) {
            age_lo = std::max(age_lo, it->second.first);
            age_hi = std::min(age_hi, it->second.second);
        }
        auto sit = templates.sex_when_true.find(f);
        if (sit != templates.sex_when_true.end()) {
            if (forced_sex && *forced_sex != sit->second) {
                throw CorpusError("sex constraints conflict for vignette '" + spec.id + "'");
            }
            forced_sex = sit->second;
        }
    }
    if (age_lo > age_hi) {
        throw CorpusError("age constraints unsatisfiable for vignette '" + spec.id + "'");
    }
    const int age = static_cast<int>(rng.uniform_int(age_lo, age_hi));
    const std::string sex =
        forced_sex ? *forced_sex
                   : templates.sexes[static_cast<size_t>(rng.uniform_int(
                         0, static_cast<int64_t>(templates.sexes.size()) - 1))];
    if (templates.intro.empty()) throw CorpusError("template set has no intro sentences");
    std::string intro = templates.intro[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(templates.intro.size()) - 1))];
    intro = substitute(intro, "{age}", std::to_string(age));
    intro = substitute(intro, "{sex}", sex);

    std::vector<std::string> sentences{intro};
    for (const auto& [f, val] : spec.features) {
        if (!val) continue;
        auto it = templates.affirm.find(f);
        if (it == templates.affirm.end())
            throw CorpusError("missing affirmation template for feature '" + f + "'");
        sentences.push_back(it->second);
    }
    for (const auto& [f, val] : spec.features) {
        if (val) continue;
        auto it = templates.deny.find(f);
        if (it == templates.deny.end())
            throw CorpusError("missing denial template for feature '" + f + "'");
        sentences.push_back(it->second);
    }

    auto join = [](const std::vector<std::string>& parts) {
        std::string out;
        for (const auto& p : parts) {
            if (!out.empty()) out += " ";
            out += p;
        }
        return out;
    };

    std::string text = join(sentences);
    int wc = word_count(text);

    if (templates.filler.empty()) throw CorpusError("template set has no filler sentences");
    size_t fill_at = static_cast<size_t>(rng.next_u64() % templates.filler.size());
    auto add_filler = [&]() {
        sentences.push_back(templates.filler[fill_at % templates.filler.size()]);
        ++fill_at;
        text = join(sentences);
        wc = word_count(text);
    };

    switch (length) {
        case LengthCondition::Short:
            if (wc > 100)
                throw CorpusError("length infeasible: base narrative exceeds 100 words for '" +
                                  spec.id + "'");
            while (wc < 55) {
                const int next_wc =
                    wc + word_count(templates.filler[fill_at % templates.filler.size()]);
                if (next_wc > 100) break;
                add_filler();
            }
            break;
        case LengthCondition::Medium:
            if (wc >= 200)
                throw CorpusError("length infeasible: base narrative reaches 200 words for '" +
                                  spec.id + "'");
            while (wc <= 100) add_filler();
            if (wc >= 200)
                throw CorpusError("length infeasible: padding overshot the medium band for '" +
                                  spec.id + "'");
            break;
        case LengthCondition::Long:
            while (wc < 200) add_filler();
            break;
        case LengthCondition::Unconstrained: {
            const int extra = static_cast<int>(rng.uniform_int(1, 3));
            for (int i = 0; i < extra; ++i) add_filler();
            break;
        }
    }

    const std::string lower = to_lower(text);
    for (const auto& banned : banned_phrases()) {
        if (lower.find(banned) != std::string::npos) {
            throw CorpusError("banned phrase '" + banned + "' in synthesized text for '" +
                              spec.id + "'");
        }
    }
    return text;
}

std::string emit_generation_prompt(const GuidanceTree& tree, const Vignette& spec) {
    // Question text doubles as the human-readable finding description.
    auto describe = [&](const std::string& f) -> std::string {
        for (const auto& [_, n] : tree.nodes) {
            if (n.kind == NodeKind::Simple && n.feature == f) return n.question;
            for (const auto& c : n.criteria)
                if (c.feature == f) return c.question;
        }
        return f;
    };

    std::ostringstream os;
    os << "[vignette-prompt/v1]\n";
    os << "You are writing a synthetic primary care clinical note for evaluating a decision\n"
          "support system. Domain: " << spec.domain << ".\n\n";
    os << "Write a realistic clinical note with patient demographics, symptom history,\n"
          "examination findings, and relevant past history.\n\n";

    bool any_pos = false, any_neg = false;
    for (const auto& [_, val] : spec.features) (val ? any_pos : any_neg) = true;

    if (any_pos) {
        os << "The note must clearly establish that the answer to each of these is YES:\n";
        for (const auto& [f, val] : spec.features)
            if (val) os << "  - " << describe(f) << "\n";
        os << "\n";
    }
    if (any_neg) {
        os << "The note must explicitly deny each of these (use clear negation such as\n"
              "\"denies\" or \"no evidence of\"):\n";
        for (const auto& [f, val] : spec.features)
            if (!val) os << "  - " << describe(f) << "\n";
        os << "\n";
    }

    switch (spec.category) {
        case Category::Single:
            os << "Category guidance: present exactly one clear positive finding; do not\n"
                  "suggest any other condition listed in the guideline.\n";
            break;
        case Category::Multi:
            os << "Category guidance: both positive findings must be unambiguous and\n"
                  "clinically plausible in the same patient.\n";
            break;
        case Category::Contrastive:
            os << "Category guidance: the positive finding and the denied finding are\n"
                  "clinically similar; the note must make the distinction explicit.\n";
            break;
        case Category::Exclusion:
            os << "Category guidance: no listed condition of interest may be present; the\n"
                  "note should read as a reassuring presentation.\n";
            break;
    }
    os << "\n";

    switch (spec.length_condition) {
        case LengthCondition::Short: os << "Length: at most 100 words.\n"; break;
        case LengthCondition::Medium: os << "Length: between 100 and 200 words.\n"; break;
        case LengthCondition::Long: os << "Length: at least 200 words.\n"; break;
        case LengthCondition::Unconstrained: os << "Length: no constraint.\n"; break;
    }

    os << "\nDo not include any management recommendations, referral suggestions, or\n"
          "treatment plans in the note. Output only the note text.\n";
    return os.str();
}

Answer KeywordOracle::answer(const Question& q) {
    auto ait = templates_.affirm.find(q.feature_id);
    if (ait != templates_.affirm.end() && text_.find(ait->second) != std::string::npos) {
        return make_answer(Verdict::Yes);
    }
    auto dit = templates_.deny.find(q.feature_id);
    if (dit != templates_.deny.end() && text_.find(dit->second) != std::string::npos) {
        return make_answer(Verdict::No);
    }
    if (policy_ == AbsentFeaturePolicy::Error) {
        throw OracleError(OracleError::Kind::AbsentFeature,
                          "no template sentence for '" + q.feature_id + "' found in text");
    }
    return make_answer(Verdict::No);
}

// ---------------------------------------------------------------------------
// Files

GenPlan load_plan_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open plan file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw CorpusError("malformed plan file " + path + ": " + e.what());
    }
    if (j.value("format", "") != "cpg-plan/1")
        throw CorpusError("plan file " + path + " is not cpg-plan/1");
    GenPlan plan;
    plan.domain = j.at("domain").get<std::string>();
    plan.seed = j.at("seed").get<uint64_t>();
    for (const auto& [k, v] : j.at("counts").items())
        plan.counts[category_from_string(k)] = v.get<int>();
    if (j.contains("lengths")) {
        plan.lengths.clear();
        for (const auto& s : j.at("lengths")) plan.lengths.push_back(length_from_string(s));
    }
    plan.multi_positives = j.value("multi_positives", 2);
    if (j.contains("exclusive_groups")) {
        for (const auto& g : j.at("exclusive_groups"))
            plan.exclusive_groups.push_back(g.get<std::vector<std::string>>());
    }
    if (j.contains("confusion_pairs")) {
        for (const auto& p : j.at("confusion_pairs")) {
            if (!p.is_array() || p.size() != 2)
                throw CorpusError("confusion_pairs entries must be two-element arrays");
            plan.confusion_pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
        }
    }
    return plan;
}

TemplateSet load_templates_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open template file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw CorpusError("malformed template file " + path + ": " + e.what());
    }
    if (j.value("format", "") != "cpg-templates/1")
        throw CorpusError("template file " + path + " is not cpg-templates/1");
    TemplateSet t;
    t.domain = j.at("domain").get<std::string>();
    t.intro = j.at("intro").get<std::vector<std::string>>();
    if (j.contains("age_range")) {
        t.age_min = j.at("age_range").at(0).get<int>();
        t.age_max = j.at("age_range").at(1).get<int>();
    }
    if (j.contains("sexes")) t.sexes = j.at("sexes").get<std::vector<std::string>>();
    for (const auto& [k, v] : j.at("affirm").items()) t.affirm[k] = v.get<std::string>();
    for (const auto& [k, v] : j.at("deny").items()) t.deny[k] = v.get<std::string>();
    t.filler = j.at("filler").get<std::vector<std::string>>();
    if (j.contains("age_when_true")) {
        for (const auto& [k, v] : j.at("age_when_true").items())
            t.age_when_true[k] = {v.at(0).get<int>(), v.at(1).get<int>()};
    }
    if (j.contains("sex_when_true")) {
        for (const auto& [k, v] : j.at("sex_when_true").items())
            t.sex_when_true[k] = v.get<std::string>();
    }
    return t;
}

namespace {

json vignette_to_json(const Vignette& v) {
    json j;
    j["id"] = v.id;
    j["domain"] = v.domain;
    j["category"] = to_string(v.category);
    j["length_condition"] = to_string(v.length_condition);
    j["text"] = v.text;
    j["word_count"] = v.word_count;
    j["features"] = v.features;
    if (v.gold_action) {
        j["gold_action"] = *v.gold_action;
    } else {
        j["gold_action"] = nullptr;
    }
    j["gold_referral"] = v.gold_referral;
    j["gold_path_length"] = v.gold_path_length;
    return j;
}

Vignette vignette_from_json(const json& j) {
    Vignette v;
    v.id = j.at("id").get<std::string>();
    v.domain = j.at("domain").get<std::string>();
    v.category = category_from_string(j.at("category").get<std::string>());
    v.length_condition = length_from_string(j.at("length_condition").get<std::string>());
    v.text = j.at("text").get<std::string>();
    v.word_count = j.at("word_count").get<int>();
    for (const auto& [k, val] : j.at("features").items()) v.features[k] = val.get<bool>();
    if (!j.at("gold_action").is_null()) v.gold_action = j.at("gold_action").get<std::string>();
    v.gold_referral = j.at("gold_referral").get<bool>();
    v.gold_path_length = j.at("gold_path_length").get<int>();
    return v;
}

}  // namespace

CorpusManifest load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw CorpusError("corpus file is empty: " + path);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw CorpusError("malformed corpus header: " + std::string(e.what()));
    }
    if (header.value("format", "") != "cpg-corpus/1")
        throw CorpusError("corpus file " + path + " is not cpg-corpus/1");

    CorpusManifest m;
    m.domain = header.at("domain").get<std::string>();
    m.tree_ref = header.at("tree").get<std::string>();
    m.tree_hash = header.at("tree_hash").get<std::string>();

    fs::path tree_path(m.tree_ref);
    if (tree_path.is_relative()) tree_path = fs::path(path).parent_path() / tree_path;
    GuidanceTree loaded = load_tree_file(tree_path.string());
    if (tree_hash(loaded) != m.tree_hash) {
        throw CorpusError("tree content hash mismatch: corpus was generated against a different '" +
                          m.tree_ref + "'");
    }
    const ValidationReport report = validate_tree(loaded);
    if (!report.ok()) throw CorpusError("referenced tree is invalid:\n" + report.summary());
    auto tree = std::make_shared<GuidanceTree>(assign_priorities(loaded));
    m.tree = tree;

    size_t line_no = 1;
    std::vector<std::string> problems;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw CorpusError("malformed vignette record at line " + std::to_string(line_no) +
                              ": " + e.what());
        }
        Vignette v = vignette_from_json(j);
        for (const auto& viol : validate_vignette(*tree, v)) {
            problems.push_back("SchemaViolation(" + v.id + ", " + viol.code + "): " + viol.message);
        }
        m.vignettes.push_back(std::move(v));
    }

    // Header tallies must match the records.
    if (header.contains("category_counts")) {
        const auto counts = m.category_counts();
        for (const auto& [k, v] : header.at("category_counts").items()) {
            const Category c = category_from_string(k);
            const int have = counts.count(c) ? counts.at(c) : 0;
            if (have != v.get<int>()) {
                problems.push_back("SchemaViolation(header, COUNTS): category '" + k + "' is " +
                                   std::to_string(have) + ", header says " +
                                   std::to_string(v.get<int>()));
            }
        }
    }
    if (header.contains("referral_counts")) {
        const json& rc = header.at("referral_counts");
        if (rc.value("referral", m.referral_count()) != m.referral_count() ||
            rc.value("non_referral", m.non_referral_count()) != m.non_referral_count()) {
            problems.push_back("SchemaViolation(header, COUNTS): referral tallies disagree");
        }
    }

    if (!problems.empty()) {
        std::string msg = "corpus validation failed (" + std::to_string(problems.size()) +
                          " problems):";
        for (size_t i = 0; i < problems.size() && i < 20; ++i) msg += "\n  " + problems[i];
        if (problems.size() > 20) msg += "\n  ...";
        throw CorpusError(msg);
    }
    return m;
}

void save_corpus(const std::string& path, const std::string& domain,
                 const std::vector<Vignette>& vignettes, const std::string& tree_ref,
                 const GuidanceTree& tree_as_loaded) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus file: " + path);

    std::map<std::string, int> cat_counts;
    int referral = 0;
    for (const auto& v : vignettes) {
        ++cat_counts[to_string(v.category)];
        if (v.gold_referral) ++referral;
    }

    json header;
    header["format"] = "cpg-corpus/1";
    header["domain"] = domain;
    header["tree"] = tree_ref;
    header["tree_hash"] = tree_hash(tree_as_loaded);
    header["category_counts"] = cat_counts;
    header["referral_counts"] = {{"referral", referral},
                                 {"non_referral", static_cast<int>(vignettes.size()) - referral}};
    out << header.dump() << "\n";
    for (const auto& v : vignettes) out << vignette_to_json(v).dump() << "\n";
}

CorpusStats corpus_stats(const CorpusManifest& manifest) {
    CorpusStats s;
    s.domain = manifest.domain;
    s.n_vignettes = static_cast<int>(manifest.vignettes.size());
    if (s.n_vignettes > 0) {
        double total = 0;
        for (const auto& v : manifest.vignettes) total += v.word_count;
        s.avg_word_count = total / s.n_vignettes;
    }
    s.n_actions = manifest.tree ? static_cast<int>(manifest.tree->actions.size()) : 0;
    s.per_category = manifest.category_counts();
    s.referral = manifest.referral_count();
    s.non_referral = manifest.non_referral_count();
    return s;
}

namespace {

std::string fmt1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

const std::vector<std::pair<Category, std::string>>& category_rows() {
    static const std::vector<std::pair<Category, std::string>> rows = {
        {Category::Single, "Single-criteria"},
        {Category::Contrastive, "Contrastive-criteria"},
        {Category::Multi, "Multi-criteria"},
        {Category::Exclusion, "Exclusion-criteria"},
    };
    return rows;
}

}  // namespace

std::string render_stats_markdown(const std::vector<CorpusStats>& stats) {
    std::ostringstream os;
    os << "| |";
    for (const auto& s : stats) os << " " << s.domain << " |";
    os << "\n|---|";
    for (size_t i = 0; i < stats.size(); ++i) os << "---|";
    os << "\n";

    auto row = [&](const std::string& label, auto getter) {
        os << "| " << label << " |";
        for (const auto& s : stats) os << " " << getter(s) << " |";
        os << "\n";
    };
    row("#Vignettes", [](const CorpusStats& s) { return std::to_string(s.n_vignettes); });
    row("Avg. Word Count", [](const CorpusStats& s) {
        return s.avg_word_count ? fmt1(*s.avg_word_count) : std::string("NA");
    });
    row("#Actions", [](const CorpusStats& s) { return std::to_string(s.n_actions); });
    for (const auto& [cat, label] : category_rows()) {
        row(label, [cat = cat](const CorpusStats& s) {
            auto it = s.per_category.find(cat);
            return (it == s.per_category.end() || it->second == 0) ? std::string("NA")
                                                                   : std::to_string(it->second);
        });
    }
    row("Referral", [](const CorpusStats& s) {
        return s.referral == 0 ? std::string("NA") : std::to_string(s.referral);
    });
    row("Non-Referral", [](const CorpusStats& s) {
        return s.non_referral == 0 ? std::string("NA") : std::to_string(s.non_referral);
    });
    return os.str();
}

std::string render_stats_csv(const std::vector<CorpusStats>& stats) {
    std::ostringstream os;
    os << "metric";
    for (const auto& s : stats) os << "," << s.domain;
    os << "\n";
    auto row = [&](const std::string& label, auto getter) {
        os << label;
        for (const auto& s : stats) os << "," << getter(s);
        os << "\n";
    };
    row("vignettes", [](const CorpusStats& s) { return std::to_string(s.n_vignettes); });
    row("avg_word_count", [](const CorpusStats& s) {
        return s.avg_word_count ? fmt1(*s.avg_word_count) : std::string("NA");
    });
    row("actions", [](const CorpusStats& s) { return std::to_string(s.n_actions); });
    for (const auto& [cat, label] : category_rows()) {
        row(to_string(cat), [cat = cat](const CorpusStats& s) {
            auto it = s.per_category.find(cat);
            return (it == s.per_category.end() || it->second == 0) ? std::string("NA")
                                                                   : std::to_string(it->second);
        });
    }
    row("referral", [](const CorpusStats& s) {
        return s.referral == 0 ? std::string("NA") : std::to_string(s.referral);
    });
    row("non_referral", [](const CorpusStats& s) {
        return s.non_referral == 0 ? std::string("NA") : std::to_string(s.non_referral);
    });
    return os.str();
}

}  // namespace cpg
