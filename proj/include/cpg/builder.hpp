#pragma once

#include <string>
#include <vector>

#include "cpg/tree.hpp"
#include "cpg/tree_io.hpp"

namespace cpg {

inline constexpr const char* kTreePromptVersion = "tree-prompt/v1";

/// A contiguous slice of the guideline text. Segments never overlap, stay in
/// order, and concatenate back to the exact input (spans include trailing
/// separators).
struct Segment {
    int index = 0;
    std::string text;
    size_t span_begin = 0;  // byte offsets into the source document
    size_t span_end = 0;
    int token_estimate = 0;
};

/// Split at heading and blank-line boundaries, greedily packing whole
/// paragraphs under the budget. Never splits inside a paragraph; a single
/// paragraph over budget raises BuilderError.
std::vector<Segment> segment_guideline(const std::string& text, int budget);

/// Render the versioned instruction template: the tree document schema with
/// one example of each node kind, followed by the segment text.
std::string emit_tree_prompt(const Segment& segment);

/// A tree fragment from one segment. Negative exits that should chain into
/// later guideline content are marked with continue-targets; everything else
/// resolves inside the fragment.
struct Subtree {
    GuidanceTree fragment;
    int segment_index = 0;

    int continue_marker_count() const;
};

struct ModelTreeResult {
    std::optional<Subtree> subtree;
    std::vector<std::string> issues;  // parse or validation problems, already segment-attributed

    bool ok() const { return subtree.has_value() && issues.empty(); }
};

/// Interpret a raw model reply: strip code fences and surrounding prose,
/// parse the tree document, reclassify dangling negative node references as
/// continue-markers, and run fragment-level validation.
ModelTreeResult parse_model_tree(const std::string& reply, int segment_index);

/// Chain composition without end-capping: continue-markers in fragment i are
/// rewired to fragment i+1's root; markers in the final fragment survive.
/// Identical actions (same normalized label and referral flag) are
/// deduplicated; id collisions are resolved by segment-index prefixing.
Subtree merge_chain(const std::vector<Subtree>& subtrees);

/// Full merge: chain, cap remaining markers with end-targets, and validate.
/// Throws BuilderError if the merged tree fails validation; a partially
/// merged tree is never returned.
GuidanceTree merge_subtrees(const std::vector<Subtree>& subtrees);

}  // namespace cpg
