#include "cpg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cpg/errors.hpp"

using nlohmann::json;

namespace cpg {

Prf prf(const ConfusionCounts& c) {
    Prf out;
    const long pd = c.tp + c.fp;
    const long rd = c.tp + c.fn;
    out.precision = pd > 0 ? static_cast<double>(c.tp) / static_cast<double>(pd) : 0.0;
    out.recall = rd > 0 ? static_cast<double>(c.tp) / static_cast<double>(rd) : 0.0;
    const double sum = out.precision + out.recall;
    out.f1 = sum > 0 ? 2.0 * out.precision * out.recall / sum : 0.0;
    return out;
}

ConfusionCounts binary_confusion(const Predictions& predictions,
                                 const std::map<std::string, bool>& gold_referral) {
    ConfusionCounts c;
    for (const auto& [id, gold] : gold_referral) {
        auto it = predictions.find(id);
        if (it == predictions.end()) throw EvalError("missing prediction for vignette '" + id + "'");
        const bool pred = it->second.referral;
        if (pred && gold) ++c.tp;
        else if (pred && !gold) ++c.fp;
        else if (!pred && gold) ++c.fn;
        else ++c.tn;
    }
    return c;
}

MacroResult macro_metrics(const Predictions& predictions,
                          const std::map<std::string, std::optional<std::string>>& gold_actions) {
    auto class_of = [](const std::optional<std::string>& a) {
        return a ? *a : kNoActionClass;
    };

    std::set<std::string> classes;
    for (const auto& [id, gold] : gold_actions) {
        if (!predictions.count(id)) throw EvalError("missing prediction for vignette '" + id + "'");
        classes.insert(class_of(gold));
        classes.insert(class_of(predictions.at(id).action_id));
    }

    MacroResult out;
    for (const auto& cls : classes) {
        ConfusionCounts c;
        long support = 0;
        for (const auto& [id, gold] : gold_actions) {
            const std::string g = class_of(gold);
            const std::string p = class_of(predictions.at(id).action_id);
            if (g == cls) ++support;
            if (p == cls && g == cls) ++c.tp;
            else if (p == cls && g != cls) ++c.fp;
            else if (p != cls && g == cls) ++c.fn;
            else ++c.tn;
        }
        const Prf m = prf(c);
        out.per_class.push_back({cls, m.precision, m.recall, m.f1, support});
    }

    if (!out.per_class.empty()) {
        for (const auto& cm : out.per_class) {
            out.macro_precision += cm.precision;
            out.macro_recall += cm.recall;
            out.macro_f1 += cm.f1;
        }
        const double n = static_cast<double>(out.per_class.size());
        out.macro_precision /= n;
        out.macro_recall /= n;
        out.macro_f1 /= n;
    }
    return out;
}

namespace {

const std::vector<std::pair<Category, std::string>>& category_order() {
    static const std::vector<std::pair<Category, std::string>> order = {
        {Category::Single, "single"},
        {Category::Contrastive, "contrastive"},
        {Category::Multi, "multi"},
        {Category::Exclusion, "exclusion"},
    };
    return order;
}

const std::vector<std::pair<LengthCondition, std::string>>& length_order() {
    static const std::vector<std::pair<LengthCondition, std::string>> order = {
        {LengthCondition::Unconstrained, "unconstrained"},
        {LengthCondition::Short, "short"},
        {LengthCondition::Medium, "medium"},
        {LengthCondition::Long, "long"},
    };
    return order;
}

template <typename Selector>
StratumMetrics stratum_for(const Predictions& predictions, const CorpusManifest& manifest,
                           const std::string& name, Selector in_stratum, bool with_words) {
    StratumMetrics s;
    s.stratum = name;
    Predictions preds;
    std::map<std::string, std::optional<std::string>> golds;
    double words = 0;
    for (const auto& v : manifest.vignettes) {
        if (!in_stratum(v)) continue;
        auto it = predictions.find(v.id);
        if (it == predictions.end()) continue;  // unscored (aborted)
        preds.emplace(v.id, it->second);
        golds.emplace(v.id, v.gold_action);
        words += v.word_count;
        ++s.n;
    }
    if (s.n > 0) {
        s.metrics = macro_metrics(preds, golds);
        if (with_words) s.mean_word_count = words / s.n;
    }
    return s;
}

}  // namespace

std::vector<StratumMetrics> stratify_by_category(const Predictions& predictions,
                                                 const CorpusManifest& manifest) {
    std::vector<StratumMetrics> out;
    for (const auto& [cat, name] : category_order()) {
        out.push_back(stratum_for(
            predictions, manifest, name,
            [cat = cat](const Vignette& v) { return v.category == cat; }, false));
    }
    return out;
}

std::vector<StratumMetrics> stratify_by_length(const Predictions& predictions,
                                               const CorpusManifest& manifest) {
    std::vector<StratumMetrics> out;
    for (const auto& [len, name] : length_order()) {
        out.push_back(stratum_for(
            predictions, manifest, name,
            [len = len](const Vignette& v) { return v.length_condition == len; }, true));
    }
    return out;
}

namespace {

double quantile(const std::vector<int>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return static_cast<double>(sorted[lo]) * (1.0 - frac) + static_cast<double>(sorted[hi]) * frac;
}

}  // namespace

TraversalDistribution traversal_distribution(const std::vector<Trace>& predicted,
                                             const std::vector<Trace>& gold) {
    std::map<std::string, const Trace*> gold_by_id;
    for (const auto& g : gold) gold_by_id[g.vignette_id] = &g;

    TraversalDistribution dist;
    std::map<int, std::vector<int>> by_gold_steps;
    for (const auto& p : predicted) {
        auto it = gold_by_id.find(p.vignette_id);
        if (it == gold_by_id.end())
            throw EvalError("no gold trace for vignette '" + p.vignette_id + "'");
        const int diff = traversal_difference(p, *it->second);
        dist.rows.push_back({p.vignette_id, it->second->step_count, diff});
        by_gold_steps[it->second->step_count].push_back(diff);
    }

    for (auto& [steps, diffs] : by_gold_steps) {
        std::sort(diffs.begin(), diffs.end());
        TraversalGroup g;
        g.gold_steps = steps;
        g.n = static_cast<int>(diffs.size());
        double sum = 0;
        for (int d : diffs) sum += d;
        g.mean = sum / g.n;
        g.min = diffs.front();
        g.max = diffs.back();
        g.q1 = quantile(diffs, 0.25);
        g.median = quantile(diffs, 0.5);
        g.q3 = quantile(diffs, 0.75);
        dist.groups.push_back(g);
    }
    return dist;
}

RunReport evaluate_run(const CorpusManifest& manifest, const std::vector<Trace>& traces) {
    RunReport report;

    std::map<std::string, const Trace*> by_id;
    for (const auto& t : traces) {
        by_id[t.vignette_id] = &t;
        if (!report.oracle_descriptor.empty() && report.oracle_descriptor != t.oracle_descriptor)
            report.oracle_descriptor = "mixed";
        else if (report.oracle_descriptor.empty())
            report.oracle_descriptor = t.oracle_descriptor;
    }

    Predictions preds;
    std::map<std::string, bool> gold_referral;
    std::map<std::string, std::optional<std::string>> gold_actions;
    std::vector<Trace> scored, golds;

    for (const auto& v : manifest.vignettes) {
        auto it = by_id.find(v.id);
        if (it == by_id.end())
            throw EvalError("no trace for vignette '" + v.id + "'");
        const Trace& t = *it->second;
        if (t.aborted || !t.outcome) {
            ++report.n_aborted;
            continue;
        }
        preds.emplace(v.id, *t.outcome);
        gold_referral.emplace(v.id, v.gold_referral);
        gold_actions.emplace(v.id, v.gold_action);
        scored.push_back(t);
        golds.push_back(gold_trace(*manifest.tree, v.features, v.id));
        ++report.n_scored;
    }

    report.binary = binary_confusion(preds, gold_referral);
    report.binary_prf = prf(report.binary);
    report.multiclass = macro_metrics(preds, gold_actions);
    report.by_category = stratify_by_category(preds, manifest);
    report.by_length = stratify_by_length(preds, manifest);
    report.traversal = traversal_distribution(scored, golds);
    return report;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string fmt(double v, int decimals) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

json stratum_to_json(const StratumMetrics& s) {
    json j;
    j["stratum"] = s.stratum;
    j["n"] = s.n;
    if (s.metrics) {
        j["macro_precision"] = s.metrics->macro_precision;
        j["macro_recall"] = s.metrics->macro_recall;
        j["macro_f1"] = s.metrics->macro_f1;
    }
    if (s.mean_word_count) j["mean_word_count"] = *s.mean_word_count;
    return j;
}

}  // namespace

std::string report_to_json(const RunReport& report) {
    json j;
    j["n_scored"] = report.n_scored;
    j["n_aborted"] = report.n_aborted;
    j["oracle_descriptor"] = report.oracle_descriptor;
    j["binary"] = {
        {"tp", report.binary.tp},         {"fp", report.binary.fp},
        {"fn", report.binary.fn},         {"tn", report.binary.tn},
        {"precision", report.binary_prf.precision},
        {"recall", report.binary_prf.recall},
        {"f1", report.binary_prf.f1},
    };
    json per_class = json::array();
    for (const auto& c : report.multiclass.per_class) {
        per_class.push_back({{"class", c.class_id},
                             {"precision", c.precision},
                             {"recall", c.recall},
                             {"f1", c.f1},
                             {"support", c.support}});
    }
    j["multiclass"] = {
        {"macro_precision", report.multiclass.macro_precision},
        {"macro_recall", report.multiclass.macro_recall},
        {"macro_f1", report.multiclass.macro_f1},
        {"per_class", std::move(per_class)},
    };
    json by_cat = json::array();
    for (const auto& s : report.by_category) by_cat.push_back(stratum_to_json(s));
    j["by_category"] = std::move(by_cat);
    json by_len = json::array();
    for (const auto& s : report.by_length) by_len.push_back(stratum_to_json(s));
    j["by_length"] = std::move(by_len);

    json groups = json::array();
    for (const auto& g : report.traversal.groups) {
        groups.push_back({{"gold_steps", g.gold_steps},
                          {"n", g.n},
                          {"mean", g.mean},
                          {"min", g.min},
                          {"q1", g.q1},
                          {"median", g.median},
                          {"q3", g.q3},
                          {"max", g.max}});
    }
    j["traversal"] = {{"groups", std::move(groups)}};
    j["metadata"] = {
        {"zero_division", "0/0 defined as 0 for precision, recall, and F1"},
        {"stddev", "sample standard deviation (divisor n-1)"},
    };
    return j.dump() + "\n";
}

std::string render_report_markdown(const RunReport& report) {
    std::ostringstream os;
    os << "# Run report\n\n";
    os << "- scored: " << report.n_scored << "\n";
    os << "- aborted: " << report.n_aborted << "\n";
    os << "- oracle: " << report.oracle_descriptor << "\n\n";

    os << "| Task | Precision | Recall | F1 |\n|---|---|---|---|\n";
    os << "| Binary referral | " << fmt(report.binary_prf.precision, 2) << " | "
       << fmt(report.binary_prf.recall, 2) << " | " << fmt(report.binary_prf.f1, 2) << " |\n";
    os << "| Multi-class (macro) | " << fmt(report.multiclass.macro_precision, 2) << " | "
       << fmt(report.multiclass.macro_recall, 2) << " | " << fmt(report.multiclass.macro_f1, 2)
       << " |\n\n";

    os << "Binary counts: tp=" << report.binary.tp << " fp=" << report.binary.fp
       << " fn=" << report.binary.fn << " tn=" << report.binary.tn << "\n\n";

    os << "## By vignette category (macro F1)\n\n| Category | n | Macro F1 |\n|---|---|---|\n";
    for (const auto& s : report.by_category) {
        os << "| " << s.stratum << " | " << s.n << " | "
           << (s.metrics ? fmt(s.metrics->macro_f1, 2) : std::string("NA")) << " |\n";
    }
    os << "\n## By length condition\n\n"
          "| Condition | n | Precision | Recall | F1 | Mean words |\n|---|---|---|---|---|---|\n";
    for (const auto& s : report.by_length) {
        os << "| " << s.stratum << " | " << s.n << " | ";
        if (s.metrics) {
            os << fmt(s.metrics->macro_precision, 2) << " | " << fmt(s.metrics->macro_recall, 2)
               << " | " << fmt(s.metrics->macro_f1, 2) << " | ";
        } else {
            os << "NA | NA | NA | ";
        }
        os << (s.mean_word_count ? fmt(*s.mean_word_count, 0) : std::string("NA")) << " |\n";
    }

    os << "\n## Traversal difference by gold path length\n\n"
          "| Gold steps | n | Mean | Min | Q1 | Median | Q3 | Max |\n"
          "|---|---|---|---|---|---|---|---|\n";
    for (const auto& g : report.traversal.groups) {
        os << "| " << g.gold_steps << " | " << g.n << " | " << fmt(g.mean, 2) << " | " << g.min
           << " | " << fmt(g.q1, 2) << " | " << fmt(g.median, 2) << " | " << fmt(g.q3, 2) << " | "
           << g.max << " |\n";
    }
    os << "\nConventions: 0/0 is reported as 0 for precision, recall, and F1.\n";
    return os.str();
}

MetricVector flatten_metrics(const RunReport& report) {
    MetricVector v;
    v.entries.emplace_back("binary.precision", report.binary_prf.precision);
    v.entries.emplace_back("binary.recall", report.binary_prf.recall);
    v.entries.emplace_back("binary.f1", report.binary_prf.f1);
    v.entries.emplace_back("multiclass.macro_precision", report.multiclass.macro_precision);
    v.entries.emplace_back("multiclass.macro_recall", report.multiclass.macro_recall);
    v.entries.emplace_back("multiclass.macro_f1", report.multiclass.macro_f1);
    for (const auto& s : report.by_category) {
        if (!s.metrics) continue;
        v.entries.emplace_back("category." + s.stratum + ".macro_f1", s.metrics->macro_f1);
    }
    for (const auto& s : report.by_length) {
        if (!s.metrics) continue;
        v.entries.emplace_back("length." + s.stratum + ".macro_precision",
                               s.metrics->macro_precision);
        v.entries.emplace_back("length." + s.stratum + ".macro_recall", s.metrics->macro_recall);
        v.entries.emplace_back("length." + s.stratum + ".macro_f1", s.metrics->macro_f1);
    }
    return v;
}

std::string render_report_csv(const RunReport& report) {
    std::ostringstream os;
    os << "metric,value\n";
    os << "n_scored," << report.n_scored << "\n";
    os << "n_aborted," << report.n_aborted << "\n";
    os << "binary.tp," << report.binary.tp << "\n";
    os << "binary.fp," << report.binary.fp << "\n";
    os << "binary.fn," << report.binary.fn << "\n";
    os << "binary.tn," << report.binary.tn << "\n";
    for (const auto& [name, value] : flatten_metrics(report).entries) {
        os << name << "," << fmt(value, 4) << "\n";
    }
    return os.str();
}

std::string render_traversal_csv(const TraversalDistribution& dist) {
    std::ostringstream os;
    os << "gold_steps,vignette_id,difference\n";
    for (const auto& r : dist.rows) {
        os << r.gold_steps << "," << r.vignette_id << "," << r.difference << "\n";
    }
    return os.str();
}

AggregateReport aggregate_runs(const std::vector<MetricVector>& runs) {
    if (runs.empty()) throw EvalError("aggregate_runs needs at least one run");
    const auto& shape = runs.front().entries;
    for (const auto& r : runs) {
        if (r.entries.size() != shape.size())
            throw EvalError("metric shape mismatch across runs");
        for (size_t i = 0; i < shape.size(); ++i) {
            if (r.entries[i].first != shape[i].first)
                throw EvalError("metric shape mismatch across runs at '" + shape[i].first + "'");
        }
    }

    AggregateReport agg;
    agg.run_count = static_cast<int>(runs.size());
    for (size_t i = 0; i < shape.size(); ++i) {
        AggregateEntry e;
        e.name = shape[i].first;
        double sum = 0;
        for (const auto& r : runs) sum += r.entries[i].second;
        e.mean = sum / agg.run_count;
        if (agg.run_count > 1) {
            double ss = 0;
            for (const auto& r : runs) {
                const double d = r.entries[i].second - e.mean;
                ss += d * d;
            }
            e.stddev = std::sqrt(ss / (agg.run_count - 1));
        }
        agg.entries.push_back(std::move(e));
    }
    return agg;
}

std::string format_pm(double mean, double stddev) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", mean, stddev);
    return buf;
}

std::string aggregate_to_json(const AggregateReport& agg) {
    json j;
    j["run_count"] = agg.run_count;
    json metrics = json::array();
    for (const auto& e : agg.entries) {
        metrics.push_back({{"name", e.name},
                           {"mean", e.mean},
                           {"std", e.stddev},
                           {"rendered", format_pm(e.mean, e.stddev)}});
    }
    j["metrics"] = std::move(metrics);
    j["metadata"] = {
        {"stddev", "sample standard deviation (divisor n-1); 0.00 when run_count is 1"},
        {"single_run", agg.run_count == 1},
    };
    return j.dump() + "\n";
}

std::string render_aggregate_markdown(const AggregateReport& agg) {
    std::ostringstream os;
    os << "# Aggregate over " << agg.run_count << " run" << (agg.run_count == 1 ? "" : "s")
       << "\n\n";
    if (agg.run_count == 1) os << "Single run: standard deviation is reported as 0.00.\n\n";
    os << "| Metric | Mean ± SD |\n|---|---|\n";
    for (const auto& e : agg.entries) {
        os << "| " << e.name << " | " << format_pm(e.mean, e.stddev) << " |\n";
    }
    os << "\nStandard deviation is the sample standard deviation (divisor n-1).\n";
    return os.str();
}

std::string render_aggregate_csv(const AggregateReport& agg) {
    std::ostringstream os;
    os << "metric,mean,std\n";
    for (const auto& e : agg.entries) {
        os << e.name << "," << fmt(e.mean, 4) << "," << fmt(e.stddev, 4) << "\n";
    }
    return os.str();
}

}  // namespace cpg
