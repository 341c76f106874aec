#include "cpg/builder.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "cpg/errors.hpp"
#include "cpg/util.hpp"

namespace cpg {

namespace {

bool is_blank(std::string_view line) {
    return trim(line).empty();
}

bool is_heading(std::string_view line) {
    const std::string t = trim(line);
    return !t.empty() && t[0] == '#';
}

struct Paragraph {
    size_t begin = 0;  // first byte
    size_t end = 0;    // one past the last byte, including trailing separators
    std::string body;  // text without trailing separators, for estimates
};

// Paragraphs are runs of non-blank lines; a heading line always starts a new
// paragraph. Each paragraph's span absorbs the blank lines that follow it so
// the spans tile the document exactly.
std::vector<Paragraph> split_paragraphs(const std::string& text) {
    std::vector<Paragraph> out;
    size_t pos = 0;
    const size_t n = text.size();

    auto line_end = [&](size_t at) {
        const size_t nl = text.find('\n', at);
        return nl == std::string::npos ? n : nl + 1;
    };

    while (pos < n) {
        // Skip leading blank lines into the previous paragraph's span.
        size_t start = pos;
        while (start < n) {
            const size_t le = line_end(start);
            if (!is_blank(std::string_view(text).substr(start, le - start))) break;
            start = le;
        }
        if (start >= n) {
            if (!out.empty()) out.back().end = n;
            break;
        }
        if (start > pos && !out.empty()) out.back().end = start;
        if (out.empty() && start > pos) {
            // Leading blank lines before the first paragraph: attach them to it.
            start = pos < start ? pos : start;
            // Re-scan: the first paragraph begins at pos but its body starts later.
        }

        Paragraph p;
        p.begin = out.empty() ? pos : start;
        size_t cursor = start;
        bool first_line = true;
        size_t body_begin = start;
        size_t body_end = start;
        while (cursor < n) {
            const size_t le = line_end(cursor);
            const std::string_view line = std::string_view(text).substr(cursor, le - cursor);
            if (is_blank(line)) break;
            if (!first_line && is_heading(line)) break;
            body_end = le;
            cursor = le;
            first_line = false;
        }
        p.end = body_end;
        p.body = text.substr(body_begin, body_end - body_begin);
        out.push_back(std::move(p));
        pos = body_end;
    }
    if (!out.empty()) out.back().end = n;
    return out;
}

}  // namespace

std::vector<Segment> segment_guideline(const std::string& text, int budget) {
    if (trim(text).empty()) throw BuilderError("guideline text is empty");
    if (budget <= 0) throw BuilderError("segment budget must be positive");

    const std::vector<Paragraph> paragraphs = split_paragraphs(text);

    std::vector<Segment> segments;
    size_t seg_begin = 0;
    int seg_tokens = 0;
    bool open = false;

    auto flush = [&](size_t end) {
        Segment s;
        s.index = static_cast<int>(segments.size());
        s.span_begin = seg_begin;
        s.span_end = end;
        s.text = text.substr(seg_begin, end - seg_begin);
        s.token_estimate = seg_tokens;
        segments.push_back(std::move(s));
        open = false;
        seg_tokens = 0;
    };

    size_t prev_end = 0;
    for (const auto& p : paragraphs) {
        const int tokens = word_count(p.body);
        if (tokens > budget) {
            throw BuilderError("paragraph exceeds segment budget (" + std::to_string(tokens) +
                               " > " + std::to_string(budget) + ") at bytes [" +
                               std::to_string(p.begin) + "," + std::to_string(p.end) + ")");
        }
        if (open && seg_tokens + tokens > budget) flush(prev_end);
        if (!open) {
            seg_begin = open ? seg_begin : (segments.empty() ? 0 : prev_end);
            if (segments.empty()) seg_begin = p.begin == paragraphs.front().begin ? 0 : seg_begin;
            open = true;
        }
        seg_tokens += tokens;
        prev_end = p.end;
    }
    if (open) flush(prev_end);

    // The spans must tile the document exactly.
    if (!segments.empty()) {
        segments.front().span_begin = 0;
        segments.front().text = text.substr(0, segments.front().span_end);
        segments.back().span_end = text.size();
        segments.back().text =
            text.substr(segments.back().span_begin, text.size() - segments.back().span_begin);
    }
    return segments;
}

std::string emit_tree_prompt(const Segment& segment) {
    static const std::string schema_block = R"(Document schema (JSON, schema_version "1"):
  top-level keys: schema_version, domain, root, nodes, actions
  nodes: object keyed by node id
    simple node: {"kind":"simple","feature":"<feature-id>","question":"<yes/no question>",
                  "on_yes":<target>,"on_no":<target>}
    multi node:  {"kind":"multi","criteria":[{"feature":"<id>","question":"<text>"},...],
                  "threshold":<minimum criteria met>,"on_met":<target>,"on_not_met":<target>}
  targets: {"node":"<node-id>"} or {"action":"<action-id>"} or {"end":true}
  actions: object keyed by action id: {"label":"<text>","referral":<bool>}

Example simple node:
  "check_thunderclap": {"kind":"simple","feature":"thunderclap",
    "question":"Did the headache reach peak intensity within one minute?",
    "on_yes":{"action":"emergency"},"on_no":{"node":"continue"}}

Example multi node:
  "check_migraine": {"kind":"multi","criteria":[
      {"feature":"unilateral","question":"Is the pain unilateral?"},
      {"feature":"nausea","question":"Is there nausea or vomiting?"},
      {"feature":"photophobia","question":"Is there sensitivity to light?"}],
    "threshold":2,"on_met":{"action":"migraine_pathway"},"on_not_met":{"node":"continue"}})";

    // A misconfigured (empty) schema block must fail loudly before any
    // prompt is produced.
    static const bool schema_ok = [] {
        if (trim(schema_block).empty()) throw BuilderError("tree prompt schema block is empty");
        return true;
    }();
    (void)schema_ok;

    std::ostringstream os;
    os << "[" << kTreePromptVersion << "]\n";
    os << "You convert clinical guideline text into an executable decision tree encoded as\n"
          "a JSON document. Extract every decision point, in the order the guideline\n"
          "presents them, as nodes whose questions are answerable yes/no from a clinical\n"
          "note.\n\n";
    os << schema_block << "\n\n";
    os << "For a negative exit that should continue into guideline content outside this\n"
          "segment, use a node target whose id does not occur in your output (for example\n"
          "{\"node\":\"continue\"}). Use {\"end\":true} only when the guideline itself ends\n"
          "the pathway. Output only the JSON document.\n\n";
    os << "--- guideline segment " << segment.index << " ---\n";
    os << segment.text;
    if (segment.text.empty() || segment.text.back() != '\n') os << "\n";
    return os.str();
}

int Subtree::continue_marker_count() const {
    int n = 0;
    for (const auto& [_, node] : fragment.nodes) {
        if (node.positive.kind == Target::Kind::Continue) ++n;
        if (node.negative.kind == Target::Kind::Continue) ++n;
    }
    return n;
}

namespace {

// Pull the JSON document out of a chat-style reply: as-is, inside a code
// fence, or between the outermost braces.
std::string extract_json(const std::string& reply) {
    const std::string t = trim(reply);
    if (!t.empty() && t.front() == '{') return t;

    const size_t fence = t.find("```");
    if (fence != std::string::npos) {
        size_t body = t.find('\n', fence);
        if (body != std::string::npos) {
            ++body;
            const size_t close = t.find("```", body);
            if (close != std::string::npos) {
                const std::string inner = trim(t.substr(body, close - body));
                if (!inner.empty() && inner.front() == '{') return inner;
            }
        }
    }

    const size_t open = t.find('{');
    const size_t close = t.rfind('}');
    if (open != std::string::npos && close != std::string::npos && close > open) {
        return t.substr(open, close - open + 1);
    }
    return {};
}

}  // namespace

ModelTreeResult parse_model_tree(const std::string& reply, int segment_index) {
    ModelTreeResult result;
    const std::string prefix = "segment " + std::to_string(segment_index) + ": ";

    const std::string doc = extract_json(reply);
    if (doc.empty()) {
        result.issues.push_back(prefix + "unparseable reply: no JSON document found");
        return result;
    }

    TreeParseResult parsed = parse_tree(doc);
    if (!parsed.tree) {
        for (const auto& i : parsed.issues) {
            result.issues.push_back(prefix + (i.path.empty() ? "" : i.path + ": ") + i.message);
        }
        if (result.issues.empty()) result.issues.push_back(prefix + "unparseable reply");
        return result;
    }

    Subtree sub;
    sub.segment_index = segment_index;
    sub.fragment = std::move(*parsed.tree);

    // A negative exit naming a node the fragment does not define is the
    // model's way of chaining into later guideline content.
    for (auto& [_, node] : sub.fragment.nodes) {
        if (node.negative.kind == Target::Kind::NodeRef &&
            !sub.fragment.nodes.count(node.negative.id)) {
            node.negative = Target::continue_marker();
        }
    }

    // Fragment validation: markers are legal here, so cap them temporarily.
    GuidanceTree capped = sub.fragment;
    for (auto& [_, node] : capped.nodes) {
        if (node.negative.kind == Target::Kind::Continue) node.negative = Target::end();
        if (node.positive.kind == Target::Kind::Continue) node.positive = Target::end();
    }
    const ValidationReport report = validate_tree(capped);
    for (const auto& e : report.errors) {
        if (e.code == ValidationCode::NoActionReachable) continue;  // fragments may route only
        result.issues.push_back(prefix + to_string(e.code) +
                                (e.node_id.empty() ? "" : " [" + e.node_id + "]") + ": " +
                                e.message);
    }
    if (result.issues.empty()) result.subtree = std::move(sub);
    return result;
}

Subtree merge_chain(const std::vector<Subtree>& subtrees) {
    if (subtrees.empty()) throw BuilderError("merge requires at least one subtree");
    if (subtrees.size() == 1) return subtrees.front();

    Subtree merged;
    merged.segment_index = subtrees.front().segment_index;
    merged.fragment.schema_version = "1";
    merged.fragment.domain = subtrees.front().fragment.domain;

    // Action deduplication key: normalized label plus referral flag. The
    // first occurrence keeps its id and definition.
    std::map<std::pair<std::string, bool>, std::string> action_by_key;

    std::vector<std::string> roots;                // renamed root of each fragment
    std::map<std::string, size_t> owner;           // merged node id -> fragment position

    for (size_t pos = 0; pos < subtrees.size(); ++pos) {
        const Subtree& sub = subtrees[pos];
        const std::string prefix = "s" + std::to_string(sub.segment_index) + ".";
        std::map<std::string, std::string> action_rename;
        std::map<std::string, std::string> node_rename;

        for (const auto& [id, action] : sub.fragment.actions) {
            const std::pair<std::string, bool> key{to_lower(trim(action.label)), action.referral};
            auto it = action_by_key.find(key);
            if (it != action_by_key.end()) {
                action_rename[id] = it->second;  // duplicate definition collapses
                continue;
            }
            std::string new_id = id;
            if (merged.fragment.actions.count(new_id)) new_id = prefix + id;
            if (merged.fragment.actions.count(new_id)) {
                throw BuilderError("action id collision not resolvable: " + new_id);
            }
            action_rename[id] = new_id;
            ActionDef def = action;
            def.id = new_id;
            action_by_key.emplace(key, new_id);
            merged.fragment.actions.emplace(new_id, std::move(def));
        }

        std::set<std::string> claimed;
        for (const auto& [id, _] : sub.fragment.nodes) {
            std::string new_id = id;
            if (merged.fragment.nodes.count(new_id) || claimed.count(new_id)) new_id = prefix + id;
            if (merged.fragment.nodes.count(new_id) || !claimed.insert(new_id).second) {
                throw BuilderError("node id collision not resolvable: " + new_id);
            }
            node_rename[id] = new_id;
        }

        auto rewrite = [&](Target t) {
            if (t.kind == Target::Kind::NodeRef) {
                auto it = node_rename.find(t.id);
                if (it != node_rename.end()) t.id = it->second;
            } else if (t.kind == Target::Kind::ActionRef) {
                auto it = action_rename.find(t.id);
                if (it != action_rename.end()) t.id = it->second;
            }
            return t;
        };

        for (const auto& [id, node] : sub.fragment.nodes) {
            Node n = node;
            n.id = node_rename.at(id);
            n.positive = rewrite(n.positive);
            n.negative = rewrite(n.negative);
            owner[n.id] = pos;
            merged.fragment.nodes.emplace(n.id, std::move(n));
        }
        roots.push_back(node_rename.count(sub.fragment.root) ? node_rename.at(sub.fragment.root)
                                                             : sub.fragment.root);
        if (merged.fragment.domain.empty()) merged.fragment.domain = sub.fragment.domain;
    }

    merged.fragment.root = roots.front();

    // Markers in fragment i chain to fragment i+1's root; the final
    // fragment keeps its markers.
    for (auto& [id, node] : merged.fragment.nodes) {
        const size_t pos = owner.at(id);
        if (pos + 1 >= roots.size()) continue;
        const Target chained = Target::node(roots[pos + 1]);
        if (node.positive.kind == Target::Kind::Continue) node.positive = chained;
        if (node.negative.kind == Target::Kind::Continue) node.negative = chained;
    }

    return merged;
}

GuidanceTree merge_subtrees(const std::vector<Subtree>& subtrees) {
    Subtree chained = merge_chain(subtrees);
    GuidanceTree tree = std::move(chained.fragment);
    for (auto& [_, node] : tree.nodes) {
        if (node.positive.kind == Target::Kind::Continue) node.positive = Target::end();
        if (node.negative.kind == Target::Kind::Continue) node.negative = Target::end();
    }

    const ValidationReport report = validate_tree(tree);
    if (!report.ok()) {
        throw BuilderError("merged tree failed validation:\n" + report.summary());
    }
    return tree;
}

}  // namespace cpg
