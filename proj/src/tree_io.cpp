#include "cpg/tree_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cpg/errors.hpp"
#include "cpg/util.hpp"

using nlohmann::json;

namespace cpg {

namespace {

// nlohmann's object storage silently keeps the last value for a repeated
// key, so duplicates are caught with a callback pass that tracks the key
// path of every object.
void scan_duplicate_keys(std::string_view text, std::vector<ParseIssue>& issues) {
    struct Frame {
        bool is_object = false;
        std::set<std::string> keys;
        std::string pending_key;
        size_t array_index = 0;
        std::string label;  // path segment of this container
    };
    std::vector<Frame> stack;

    auto current_path = [&](const std::string& leaf) {
        std::string path;
        for (const auto& f : stack) {
            if (!f.label.empty()) {
                if (!path.empty()) path += ".";
                path += f.label;
            }
        }
        if (!path.empty()) path += ".";
        return path + leaf;
    };

    auto enter_label = [&]() -> std::string {
        if (stack.empty()) return "";
        Frame& parent = stack.back();
        if (parent.is_object) return parent.pending_key;
        return std::to_string(parent.array_index);
    };

    json::parser_callback_t cb = [&](int /*depth*/, json::parse_event_t event, json& parsed) {
        switch (event) {
            case json::parse_event_t::object_start: {
                Frame f;
                f.is_object = true;
                f.label = enter_label();
                stack.push_back(std::move(f));
                break;
            }
            case json::parse_event_t::array_start: {
                Frame f;
                f.is_object = false;
                f.label = enter_label();
                stack.push_back(std::move(f));
                break;
            }
            case json::parse_event_t::key: {
                const std::string key = parsed.get<std::string>();
                if (!stack.empty()) {
                    if (!stack.back().keys.insert(key).second) {
                        issues.push_back({current_path(key), "duplicate key"});
                    }
                    stack.back().pending_key = key;
                }
                break;
            }
            case json::parse_event_t::object_end:
            case json::parse_event_t::array_end: {
                stack.pop_back();
                if (!stack.empty() && !stack.back().is_object) ++stack.back().array_index;
                break;
            }
            case json::parse_event_t::value: {
                if (!stack.empty() && !stack.back().is_object) ++stack.back().array_index;
                break;
            }
        }
        return true;
    };

    try {
        (void)json::parse(text, cb);
    } catch (const json::parse_error&) {
        // Malformed input is reported by the primary parse.
    }
}

struct FieldReader {
    const json& j;
    std::string path;
    std::vector<ParseIssue>& issues;

    bool require_object() const {
        if (!j.is_object()) {
            issues.push_back({path, "expected an object"});
            return false;
        }
        return true;
    }

    const json* field(const char* name, bool required = true) const {
        auto it = j.find(name);
        if (it == j.end()) {
            if (required) issues.push_back({path + "." + name, "missing required field"});
            return nullptr;
        }
        return &*it;
    }

    std::string str(const char* name, bool required = true) const {
        const json* f = field(name, required);
        if (!f) return {};
        if (!f->is_string()) {
            issues.push_back({path + "." + name, "expected a string"});
            return {};
        }
        return f->get<std::string>();
    }

    std::optional<int> integer(const char* name, bool required = true) const {
        const json* f = field(name, required);
        if (!f) return std::nullopt;
        if (!f->is_number_integer()) {
            issues.push_back({path + "." + name, "expected an integer"});
            return std::nullopt;
        }
        return f->get<int>();
    }

    std::optional<bool> boolean(const char* name, bool required = true) const {
        const json* f = field(name, required);
        if (!f) return std::nullopt;
        if (!f->is_boolean()) {
            issues.push_back({path + "." + name, "expected a boolean"});
            return std::nullopt;
        }
        return f->get<bool>();
    }
};

Target parse_target(const json& j, const std::string& path, std::vector<ParseIssue>& issues) {
    if (!j.is_object()) {
        issues.push_back({path, "expected a target object"});
        return Target::end();
    }
    int recognized = 0;
    Target out = Target::end();
    if (auto it = j.find("node"); it != j.end()) {
        ++recognized;
        if (!it->is_string()) {
            issues.push_back({path + ".node", "expected a string"});
        } else {
            out = Target::node(it->get<std::string>());
        }
    }
    if (auto it = j.find("action"); it != j.end()) {
        ++recognized;
        if (!it->is_string()) {
            issues.push_back({path + ".action", "expected a string"});
        } else {
            out = Target::action(it->get<std::string>());
        }
    }
    if (auto it = j.find("end"); it != j.end()) {
        ++recognized;
        if (!it->is_boolean() || !it->get<bool>()) {
            issues.push_back({path + ".end", "expected the literal true"});
        } else {
            out = Target::end();
        }
    }
    if (recognized != 1) {
        issues.push_back({path, "target must have exactly one of: node, action, end"});
    }
    return out;
}

Node parse_node(const std::string& id, const json& j, const std::string& path,
                std::vector<ParseIssue>& issues) {
    Node node;
    node.id = id;
    FieldReader r{j, path, issues};
    if (!r.require_object()) return node;

    const std::string kind = r.str("kind");
    if (kind == "simple") {
        node.kind = NodeKind::Simple;
        node.feature = r.str("feature");
        node.question = r.str("question");
        if (const json* t = r.field("on_yes")) node.positive = parse_target(*t, path + ".on_yes", issues);
        if (const json* t = r.field("on_no")) node.negative = parse_target(*t, path + ".on_no", issues);
    } else if (kind == "multi") {
        node.kind = NodeKind::Multi;
        if (const json* c = r.field("criteria")) {
            if (!c->is_array()) {
                issues.push_back({path + ".criteria", "expected an array"});
            } else {
                for (size_t i = 0; i < c->size(); ++i) {
                    const std::string cpath = path + ".criteria." + std::to_string(i);
                    FieldReader cr{(*c)[i], cpath, issues};
                    if (!cr.require_object()) continue;
                    Criterion crit;
                    crit.feature = cr.str("feature");
                    crit.question = cr.str("question");
                    node.criteria.push_back(std::move(crit));
                }
            }
        }
        if (auto t = r.integer("threshold")) node.threshold = *t;
        if (const json* t = r.field("on_met")) node.positive = parse_target(*t, path + ".on_met", issues);
        if (const json* t = r.field("on_not_met"))
            node.negative = parse_target(*t, path + ".on_not_met", issues);
    } else if (!kind.empty()) {
        issues.push_back({path + ".kind", "unknown kind '" + kind + "'"});
    }
    return node;
}

json target_to_json(const Target& t) {
    json j = json::object();
    switch (t.kind) {
        case Target::Kind::NodeRef: j["node"] = t.id; break;
        case Target::Kind::ActionRef: j["action"] = t.id; break;
        case Target::Kind::End: j["end"] = true; break;
        case Target::Kind::Continue:
            throw TreeError("cannot serialize a tree containing continue-markers");
    }
    return j;
}

}  // namespace

TreeParseResult parse_tree(std::string_view text) {
    TreeParseResult result;

    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        result.issues.push_back({"", std::string("malformed document: ") + e.what()});
        return result;
    }

    scan_duplicate_keys(text, result.issues);

    GuidanceTree tree;
    FieldReader r{doc, "", result.issues};
    if (!doc.is_object()) {
        result.issues.push_back({"", "document root must be an object"});
        return result;
    }

    tree.schema_version = r.str("schema_version");
    if (!tree.schema_version.empty() && tree.schema_version != "1") {
        result.issues.push_back({"schema_version",
                                 "unsupported schema_version '" + tree.schema_version + "'"});
    }
    tree.domain = r.str("domain");
    tree.root = r.str("root");

    if (const json* nodes = r.field("nodes")) {
        if (!nodes->is_object()) {
            result.issues.push_back({"nodes", "expected an object"});
        } else {
            for (auto it = nodes->begin(); it != nodes->end(); ++it) {
                tree.nodes.emplace(it.key(),
                                   parse_node(it.key(), it.value(), "nodes." + it.key(),
                                              result.issues));
            }
        }
    }

    if (const json* actions = r.field("actions")) {
        if (!actions->is_object()) {
            result.issues.push_back({"actions", "expected an object"});
        } else {
            for (auto it = actions->begin(); it != actions->end(); ++it) {
                const std::string path = "actions." + it.key();
                FieldReader ar{it.value(), path, result.issues};
                if (!ar.require_object()) continue;
                ActionDef a;
                a.id = it.key();
                a.label = ar.str("label");
                if (auto ref = ar.boolean("referral")) a.referral = *ref;
                if (it.value().contains("priority")) {
                    if (auto p = ar.integer("priority")) {
                        if (*p < 0) {
                            result.issues.push_back({path + ".priority", "must be non-negative"});
                        } else {
                            a.priority = *p;
                        }
                    }
                }
                tree.actions.emplace(a.id, std::move(a));
            }
        }
    }

    if (result.issues.empty()) result.tree = std::move(tree);
    return result;
}

std::string serialize_tree(const GuidanceTree& tree) {
    json doc;
    doc["schema_version"] = tree.schema_version;
    doc["domain"] = tree.domain;
    doc["root"] = tree.root;

    json nodes = json::object();
    for (const auto& [id, n] : tree.nodes) {
        json jn;
        if (n.kind == NodeKind::Simple) {
            jn["kind"] = "simple";
            jn["feature"] = n.feature;
            jn["question"] = n.question;
            jn["on_yes"] = target_to_json(n.positive);
            jn["on_no"] = target_to_json(n.negative);
        } else {
            jn["kind"] = "multi";
            json criteria = json::array();
            for (const auto& c : n.criteria) {
                criteria.push_back({{"feature", c.feature}, {"question", c.question}});
            }
            jn["criteria"] = std::move(criteria);
            jn["threshold"] = n.threshold;
            jn["on_met"] = target_to_json(n.positive);
            jn["on_not_met"] = target_to_json(n.negative);
        }
        nodes[id] = std::move(jn);
    }
    doc["nodes"] = std::move(nodes);

    json actions = json::object();
    for (const auto& [id, a] : tree.actions) {
        json ja;
        ja["label"] = a.label;
        ja["referral"] = a.referral;
        if (a.priority) ja["priority"] = *a.priority;
        actions[id] = std::move(ja);
    }
    doc["actions"] = std::move(actions);

    return doc.dump() + "\n";
}

std::string tree_hash(const GuidanceTree& tree) {
    return to_hex(fnv1a64(serialize_tree(tree)));
}

GuidanceTree load_tree_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open tree file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    TreeParseResult result = parse_tree(buf.str());
    if (!result.ok()) {
        std::string msg = "tree parse failed: " + path;
        for (const auto& i : result.issues) msg += "\n  " + i.path + ": " + i.message;
        throw TreeError(msg);
    }
    return std::move(*result.tree);
}

void save_tree_file(const GuidanceTree& tree, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write tree file: " + path);
    out << serialize_tree(tree);
}

}  // namespace cpg
