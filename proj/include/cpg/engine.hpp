#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cpg/oracle.hpp"
#include "cpg/tree.hpp"

namespace cpg {

enum class BranchTaken { Yes, No, Met, NotMet };

std::string to_string(BranchTaken b);

/// One node visit: every question asked there, every answer received, the
/// branch decision, and the target followed.
struct Step {
    int index = 0;
    std::string node_id;
    NodeKind node_kind = NodeKind::Simple;
    std::vector<Question> questions;
    std::vector<Answer> answers;  // parallel to questions
    BranchTaken branch = BranchTaken::No;
    Target target;
};

/// Final decision: a specific action, or no action (pathway ended).
struct Outcome {
    std::optional<std::string> action_id;  // empty = no action
    bool referral = false;

    bool is_action() const { return action_id.has_value(); }
    bool operator==(const Outcome&) const = default;
};

/// Complete audit record of one traversal, sufficient to replay it.
struct Trace {
    std::string tree_domain;
    std::string vignette_id;
    std::string oracle_descriptor;
    std::vector<Step> steps;
    std::optional<Outcome> outcome;  // unset when aborted
    int step_count = 0;              // == |steps|
    int query_count = 0;             // total questions asked (cost reporting)
    bool aborted = false;
    std::string abort_reason;

    std::vector<Answer> recorded_answers() const;
};

/// Walk the tree from the root, querying the oracle at each node. Simple
/// nodes ask one question; Multi nodes ask every criterion (no
/// short-circuiting) and compare the yes-count to the threshold. Oracle
/// failures abort the traversal; the partial trace is retained and marked.
/// max_steps of 0 means |nodes|, which suffices on any acyclic tree.
Trace traverse(const GuidanceTree& tree, Oracle& oracle, const std::string& vignette_id,
               int max_steps = 0);

/// The guideline-defined optimal path: the traversal induced by a perfect
/// oracle over the gold feature assignment.
Trace gold_trace(const GuidanceTree& tree, const std::map<std::string, bool>& gold_features,
                 const std::string& vignette_id);

/// predicted.step_count - gold.step_count. Negative means the predicted
/// traversal terminated earlier than the optimal path.
/// Throws EngineError when the traces describe different vignettes or trees.
int traversal_difference(const Trace& predicted, const Trace& gold);

// Trace persistence: one JSON object per line.
std::string trace_to_jsonl(const Trace& trace);
Trace trace_from_jsonl(const std::string& line);
void save_traces(const std::vector<Trace>& traces, const std::string& path);
std::vector<Trace> load_traces(const std::string& path);

}  // namespace cpg
