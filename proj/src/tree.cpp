#include "cpg/tree.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "cpg/errors.hpp"
#include "cpg/util.hpp"

namespace cpg {

std::string to_string(ValidationCode code) {
    switch (code) {
        case ValidationCode::DanglingRef: return "DANGLING_REF";
        case ValidationCode::Cycle: return "CYCLE";
        case ValidationCode::Unreachable: return "UNREACHABLE";
        case ValidationCode::BadThreshold: return "BAD_THRESHOLD";
        case ValidationCode::NoActionReachable: return "NO_ACTION_REACHABLE";
        case ValidationCode::DuplicateCriterion: return "DUPLICATE_CRITERION";
        case ValidationCode::DuplicateQuestionText: return "DUPLICATE_QUESTION_TEXT";
    }
    return "UNKNOWN";
}

bool ValidationReport::has_error(ValidationCode code) const {
    return std::any_of(errors.begin(), errors.end(),
                       [code](const ValidationIssue& e) { return e.code == code; });
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    for (const auto& e : errors) {
        os << "error " << to_string(e.code);
        if (!e.node_id.empty()) os << " [" << e.node_id << "]";
        os << ": " << e.message << "\n";
    }
    for (const auto& w : warnings) {
        os << "warning " << to_string(w.code);
        if (!w.node_id.empty()) os << " [" << w.node_id << "]";
        os << ": " << w.message << "\n";
    }
    return os.str();
}

namespace {

void check_target(const GuidanceTree& tree, const std::string& node_id, const Target& t,
                  const char* slot, ValidationReport& report) {
    switch (t.kind) {
        case Target::Kind::NodeRef:
            if (!tree.nodes.count(t.id)) {
                report.errors.push_back({ValidationCode::DanglingRef, node_id,
                                         std::string(slot) + " references missing node '" + t.id + "'"});
            }
            break;
        case Target::Kind::ActionRef:
            if (!tree.actions.count(t.id)) {
                report.errors.push_back({ValidationCode::DanglingRef, node_id,
                                         std::string(slot) + " references missing action '" + t.id + "'"});
            }
            break;
        case Target::Kind::End:
            break;
        case Target::Kind::Continue:
            report.errors.push_back({ValidationCode::DanglingRef, node_id,
                                     std::string(slot) + " is an unresolved continue-marker"});
            break;
    }
}

// Iterative DFS cycle detection over node->node edges. Reports one cycle per
// back edge found, listing the node ids along it.
void find_cycles(const GuidanceTree& tree, ValidationReport& report) {
    enum class Color { White, Grey, Black };
    std::map<std::string, Color> color;
    for (const auto& [id, _] : tree.nodes) color[id] = Color::White;

    std::vector<std::string> stack;
    std::set<std::string> reported;

    auto node_targets = [&](const std::string& id) {
        std::vector<std::string> out;
        const Node& n = tree.nodes.at(id);
        if (n.positive.kind == Target::Kind::NodeRef && tree.nodes.count(n.positive.id))
            out.push_back(n.positive.id);
        if (n.negative.kind == Target::Kind::NodeRef && tree.nodes.count(n.negative.id))
            out.push_back(n.negative.id);
        return out;
    };

    // Recursive helper via explicit lambda recursion (trees are shallow in
    // practice but be safe with an explicit stack of frames).
    struct Frame {
        std::string id;
        std::vector<std::string> targets;
        size_t next = 0;
    };

    for (const auto& [start_id, _] : tree.nodes) {
        if (color[start_id] != Color::White) continue;
        std::vector<Frame> frames;
        frames.push_back({start_id, node_targets(start_id), 0});
        color[start_id] = Color::Grey;
        stack.push_back(start_id);

        while (!frames.empty()) {
            Frame& f = frames.back();
            if (f.next < f.targets.size()) {
                const std::string next_id = f.targets[f.next++];
                if (color[next_id] == Color::Grey) {
                    // Back edge: reconstruct the cycle from the grey stack.
                    auto it = std::find(stack.begin(), stack.end(), next_id);
                    std::vector<std::string> cycle(it, stack.end());
                    std::string key;
                    std::vector<std::string> sorted = cycle;
                    std::sort(sorted.begin(), sorted.end());
                    for (const auto& s : sorted) key += s + ",";
                    if (reported.insert(key).second) {
                        std::string msg = "cycle: ";
                        for (size_t i = 0; i < cycle.size(); ++i) {
                            msg += cycle[i];
                            msg += " -> ";
                        }
                        msg += next_id;
                        report.errors.push_back({ValidationCode::Cycle, next_id, msg});
                    }
                } else if (color[next_id] == Color::White) {
                    color[next_id] = Color::Grey;
                    stack.push_back(next_id);
                    frames.push_back({next_id, node_targets(next_id), 0});
                }
            } else {
                color[f.id] = Color::Black;
                stack.pop_back();
                frames.pop_back();
            }
        }
    }
}

std::set<std::string> reachable_nodes(const GuidanceTree& tree) {
    std::set<std::string> seen;
    if (!tree.nodes.count(tree.root)) return seen;
    std::vector<std::string> todo{tree.root};
    seen.insert(tree.root);
    while (!todo.empty()) {
        const std::string id = todo.back();
        todo.pop_back();
        const Node& n = tree.nodes.at(id);
        for (const Target* t : {&n.positive, &n.negative}) {
            if (t->kind == Target::Kind::NodeRef && tree.nodes.count(t->id) &&
                seen.insert(t->id).second) {
                todo.push_back(t->id);
            }
        }
    }
    return seen;
}

}  // namespace

ValidationReport validate_tree(const GuidanceTree& tree) {
    ValidationReport report;

    if (!tree.nodes.count(tree.root)) {
        report.errors.push_back({ValidationCode::DanglingRef, "",
                                 "root references missing node '" + tree.root + "'"});
    }

    for (const auto& [id, node] : tree.nodes) {
        const char* pos_slot = node.kind == NodeKind::Simple ? "on_yes" : "on_met";
        const char* neg_slot = node.kind == NodeKind::Simple ? "on_no" : "on_not_met";
        check_target(tree, id, node.positive, pos_slot, report);
        check_target(tree, id, node.negative, neg_slot, report);

        if (node.kind == NodeKind::Multi) {
            const int n = static_cast<int>(node.criteria.size());
            if (node.threshold < 1 || node.threshold > n) {
                report.errors.push_back(
                    {ValidationCode::BadThreshold, id,
                     "threshold " + std::to_string(node.threshold) + " outside 1.." +
                         std::to_string(n)});
            }
            std::set<std::string> feats;
            for (const auto& c : node.criteria) {
                if (!feats.insert(c.feature).second) {
                    report.errors.push_back({ValidationCode::DuplicateCriterion, id,
                                             "criterion feature '" + c.feature +
                                                 "' appears more than once"});
                }
            }
        }
    }

    find_cycles(tree, report);

    const std::set<std::string> reachable = reachable_nodes(tree);
    for (const auto& [id, _] : tree.nodes) {
        if (!reachable.count(id)) {
            report.errors.push_back(
                {ValidationCode::Unreachable, id, "node is not reachable from root"});
        }
    }

    bool action_reachable = false;
    for (const auto& id : reachable) {
        const Node& n = tree.nodes.at(id);
        if (n.positive.kind == Target::Kind::ActionRef || n.negative.kind == Target::Kind::ActionRef)
            action_reachable = true;
    }
    if (!action_reachable) {
        report.errors.push_back({ValidationCode::NoActionReachable, "",
                                 "no action target is reachable from root"});
    }

    // Duplicated question text is a smell (two decision points the oracle
    // cannot tell apart), not an error.
    std::map<std::string, std::string> question_sites;
    auto note_question = [&](const std::string& q, const std::string& site) {
        const std::string key = to_lower(trim(q));
        if (key.empty()) return;
        auto [it, fresh] = question_sites.emplace(key, site);
        if (!fresh) {
            report.warnings.push_back({ValidationCode::DuplicateQuestionText, site,
                                       "question text also used at " + it->second});
        }
    };
    for (const auto& [id, node] : tree.nodes) {
        if (node.kind == NodeKind::Simple) {
            note_question(node.question, id);
        } else {
            for (size_t i = 0; i < node.criteria.size(); ++i)
                note_question(node.criteria[i].question, id + "#" + std::to_string(i));
        }
    }

    return report;
}

std::vector<std::string> preorder_nodes(const GuidanceTree& tree) {
    std::vector<std::string> order;
    std::set<std::string> seen;
    std::vector<std::string> todo;
    if (tree.nodes.count(tree.root)) todo.push_back(tree.root);
    while (!todo.empty()) {
        const std::string id = todo.back();
        todo.pop_back();
        if (!seen.insert(id).second) continue;
        order.push_back(id);
        const Node& n = tree.nodes.at(id);
        // LIFO stack: push negative first so positive is explored first.
        if (n.negative.kind == Target::Kind::NodeRef && tree.nodes.count(n.negative.id))
            todo.push_back(n.negative.id);
        if (n.positive.kind == Target::Kind::NodeRef && tree.nodes.count(n.positive.id))
            todo.push_back(n.positive.id);
    }
    return order;
}

std::vector<std::string> feature_order(const GuidanceTree& tree) {
    std::vector<std::string> order;
    std::set<std::string> seen;
    for (const auto& id : preorder_nodes(tree)) {
        const Node& n = tree.nodes.at(id);
        if (n.kind == NodeKind::Simple) {
            if (seen.insert(n.feature).second) order.push_back(n.feature);
        } else {
            for (const auto& c : n.criteria)
                if (seen.insert(c.feature).second) order.push_back(c.feature);
        }
    }
    return order;
}

bool has_feature(const GuidanceTree& tree, const std::string& feature_id) {
    for (const auto& [_, n] : tree.nodes) {
        if (n.kind == NodeKind::Simple) {
            if (n.feature == feature_id) return true;
        } else {
            for (const auto& c : n.criteria)
                if (c.feature == feature_id) return true;
        }
    }
    return false;
}

GuidanceTree assign_priorities(const GuidanceTree& tree) {
    std::set<int> used;
    for (const auto& [id, a] : tree.actions) {
        if (!a.priority) continue;
        if (!used.insert(*a.priority).second) {
            throw TreeError("explicit priority " + std::to_string(*a.priority) +
                            " assigned to more than one action (including '" + id + "')");
        }
    }

    // First-occurrence order of action targets along the positive-first
    // preorder walk, then any unreferenced actions in id order.
    std::vector<std::string> action_order;
    std::set<std::string> seen;
    std::vector<std::string> todo;
    if (tree.nodes.count(tree.root)) todo.push_back(tree.root);
    std::set<std::string> visited;
    auto touch = [&](const Target& t) {
        if (t.kind == Target::Kind::ActionRef && tree.actions.count(t.id) && seen.insert(t.id).second)
            action_order.push_back(t.id);
    };
    // Explicit DFS, positive branch fully explored before negative.
    struct Frame {
        std::string id;
        int stage = 0;  // 0: touch positive, 1: touch negative, 2: done
    };
    std::vector<Frame> frames;
    if (tree.nodes.count(tree.root)) {
        frames.push_back({tree.root, 0});
        visited.insert(tree.root);
    }
    while (!frames.empty()) {
        Frame& f = frames.back();
        const Node& n = tree.nodes.at(f.id);
        if (f.stage == 0) {
            f.stage = 1;
            touch(n.positive);
            if (n.positive.kind == Target::Kind::NodeRef && tree.nodes.count(n.positive.id) &&
                visited.insert(n.positive.id).second) {
                frames.push_back({n.positive.id, 0});
            }
        } else if (f.stage == 1) {
            f.stage = 2;
            touch(n.negative);
            if (n.negative.kind == Target::Kind::NodeRef && tree.nodes.count(n.negative.id) &&
                visited.insert(n.negative.id).second) {
                frames.push_back({n.negative.id, 0});
            }
        } else {
            frames.pop_back();
        }
    }
    for (const auto& [id, _] : tree.actions) {
        if (seen.insert(id).second) action_order.push_back(id);
    }

    GuidanceTree out = tree;
    int next = 0;
    for (const auto& id : action_order) {
        ActionDef& a = out.actions.at(id);
        if (a.priority) continue;
        while (used.count(next)) ++next;
        a.priority = next;
        used.insert(next);
    }
    return out;
}

}  // namespace cpg
