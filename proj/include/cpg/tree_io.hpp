#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpg/tree.hpp"

namespace cpg {

struct ParseIssue {
    std::string path;  // dotted path to the offending element, e.g. "nodes.n1.threshold"
    std::string message;
};

struct TreeParseResult {
    std::optional<GuidanceTree> tree;
    std::vector<ParseIssue> issues;

    bool ok() const { return tree.has_value() && issues.empty(); }
};

/// Parse a UTF-8 guidance-tree document. Field-level checks only (types,
/// required fields, unknown kinds, duplicate keys); referential and graph
/// checks belong to validate_tree.
TreeParseResult parse_tree(std::string_view text);

/// Canonical serialization: keys lexicographically sorted, compact, trailing
/// newline. Byte-deterministic; parse_tree(serialize_tree(t)) == t.
/// Throws TreeError if the tree contains builder continue-markers.
std::string serialize_tree(const GuidanceTree& tree);

/// fnv1a64 of the canonical serialization, as 16 hex digits.
std::string tree_hash(const GuidanceTree& tree);

GuidanceTree load_tree_file(const std::string& path);
void save_tree_file(const GuidanceTree& tree, const std::string& path);

}  // namespace cpg
