#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cpg {

/// A terminal recommendation. `referral` marks specialty referral or
/// escalation; non-referral actions are routine management.
struct ActionDef {
    std::string id;
    std::string label;
    bool referral = false;
    std::optional<int> priority;  // 0 = most urgent; unique once assigned

    bool operator==(const ActionDef&) const = default;
};

/// Where a branch goes: another node, an action, or the end of the pathway.
/// `Continue` is a builder-internal marker for subtree fragments whose
/// negative exit chains into the next fragment; it never appears in a
/// complete tree.
struct Target {
    enum class Kind { NodeRef, ActionRef, End, Continue };

    Kind kind = Kind::End;
    std::string id;

    static Target node(std::string node_id) { return {Kind::NodeRef, std::move(node_id)}; }
    static Target action(std::string action_id) { return {Kind::ActionRef, std::move(action_id)}; }
    static Target end() { return {Kind::End, {}}; }
    static Target continue_marker() { return {Kind::Continue, {}}; }

    bool operator==(const Target&) const = default;
};

enum class NodeKind { Simple, Multi };

struct Criterion {
    std::string feature;
    std::string question;

    bool operator==(const Criterion&) const = default;
};

/// A decision node. Simple nodes ask one yes/no question; Multi nodes ask
/// every criterion and compare the yes-count against a threshold.
/// `positive` is the yes / met branch, `negative` the no / not-met branch.
struct Node {
    std::string id;
    NodeKind kind = NodeKind::Simple;

    // Simple
    std::string feature;
    std::string question;

    // Multi
    std::vector<Criterion> criteria;
    int threshold = 0;

    Target positive;
    Target negative;

    bool operator==(const Node&) const = default;
};

/// The executable decision graph for one guideline. Immutable after
/// validation; safe to share across concurrent traversals.
struct GuidanceTree {
    std::string schema_version = "1";
    std::string domain;
    std::string root;
    std::map<std::string, Node> nodes;
    std::map<std::string, ActionDef> actions;

    bool operator==(const GuidanceTree&) const = default;
};

enum class ValidationCode {
    DanglingRef,
    Cycle,
    Unreachable,
    BadThreshold,
    NoActionReachable,
    DuplicateCriterion,
    DuplicateQuestionText,
};

std::string to_string(ValidationCode code);

struct ValidationIssue {
    ValidationCode code;
    std::string node_id;  // empty when the issue is tree-level
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> errors;
    std::vector<ValidationIssue> warnings;

    bool ok() const { return errors.empty(); }
    bool has_error(ValidationCode code) const;
    std::string summary() const;
};

/// Referential and graph checks: dangling references, cycles over node→node
/// edges, unreachable nodes, threshold bounds, and action reachability.
/// Always returns a report; never throws.
ValidationReport validate_tree(const GuidanceTree& tree);

/// Derive missing action priorities from a depth-first preorder walk that
/// explores the positive branch before the negative branch. Explicit
/// priorities are preserved. Throws TreeError if explicit priorities clash.
GuidanceTree assign_priorities(const GuidanceTree& tree);

/// Node ids in preorder, positive branch first. Nodes unreachable from root
/// are omitted.
std::vector<std::string> preorder_nodes(const GuidanceTree& tree);

/// Feature ids in first-occurrence preorder (Simple feature, then criteria
/// in listed order).
std::vector<std::string> feature_order(const GuidanceTree& tree);

/// True if the tree mentions the feature on any node or criterion.
bool has_feature(const GuidanceTree& tree, const std::string& feature_id);

}  // namespace cpg
