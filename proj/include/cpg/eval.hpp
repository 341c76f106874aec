#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cpg/corpus.hpp"
#include "cpg/engine.hpp"

namespace cpg {

/// Class id used for the "pathway ended with no action" outcome in the
/// multi-class task.
inline const std::string kNoActionClass = "(none)";

struct ConfusionCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long tn = 0;

    long total() const { return tp + fp + fn + tn; }
    bool operator==(const ConfusionCounts&) const = default;
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R); every 0/0 is defined as 0.
Prf prf(const ConfusionCounts& c);

using Predictions = std::map<std::string, Outcome>;  // vignette id -> outcome

/// Binary referral task. TP: referral predicted for a gold referral.
/// FN: missed referral. FP: unnecessary referral. TN: correct non-referral.
/// Throws EvalError when a gold vignette has no prediction.
ConfusionCounts binary_confusion(const Predictions& predictions,
                                 const std::map<std::string, bool>& gold_referral);

struct ClassMetrics {
    std::string class_id;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long support = 0;
};

struct MacroResult {
    std::vector<ClassMetrics> per_class;  // sorted by class id
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;  // mean of per-class F1s, not F1 of the means
};

/// One-vs-rest counts per action class with unweighted macro averaging.
/// The class set is exactly the classes appearing in the golds or the
/// predictions of the evaluated slice.
MacroResult macro_metrics(const Predictions& predictions,
                          const std::map<std::string, std::optional<std::string>>& gold_actions);

struct StratumMetrics {
    std::string stratum;
    int n = 0;
    std::optional<MacroResult> metrics;     // empty stratum -> NA
    std::optional<double> mean_word_count;  // length strata only
};

std::vector<StratumMetrics> stratify_by_category(const Predictions& predictions,
                                                 const CorpusManifest& manifest);
std::vector<StratumMetrics> stratify_by_length(const Predictions& predictions,
                                               const CorpusManifest& manifest);

// ---------------------------------------------------------------------------
// Traversal-length analysis

struct TraversalRow {
    std::string vignette_id;
    int gold_steps = 0;
    int difference = 0;  // predicted - gold
};

struct TraversalGroup {
    int gold_steps = 0;
    int n = 0;
    double mean = 0.0;
    int min = 0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    int max = 0;
};

struct TraversalDistribution {
    std::vector<TraversalRow> rows;      // per-vignette, for external plotting
    std::vector<TraversalGroup> groups;  // grouped by gold step count
};

/// Pair predicted and gold traces by vignette id and group the step
/// differences by the gold path length.
TraversalDistribution traversal_distribution(const std::vector<Trace>& predicted,
                                             const std::vector<Trace>& gold);

// ---------------------------------------------------------------------------
// Run reports

struct RunReport {
    int n_scored = 0;
    int n_aborted = 0;
    std::string oracle_descriptor;
    ConfusionCounts binary;
    Prf binary_prf;
    MacroResult multiclass;
    std::vector<StratumMetrics> by_category;
    std::vector<StratumMetrics> by_length;
    TraversalDistribution traversal;
};

/// Compute the full per-run report from stored traces. Pure function of
/// (manifest, traces): gold traces are recomputed from gold features, so the
/// same inputs always produce the identical report. Aborted traversals are
/// excluded from every metric and counted separately.
RunReport evaluate_run(const CorpusManifest& manifest, const std::vector<Trace>& traces);

std::string report_to_json(const RunReport& report);
std::string render_report_markdown(const RunReport& report);
std::string render_report_csv(const RunReport& report);
std::string render_traversal_csv(const TraversalDistribution& dist);

// ---------------------------------------------------------------------------
// Multi-run aggregation

struct MetricVector {
    std::vector<std::pair<std::string, double>> entries;
};

MetricVector flatten_metrics(const RunReport& report);

struct AggregateEntry {
    std::string name;
    double mean = 0.0;
    double stddev = 0.0;  // sample (n-1); 0 when run_count == 1
};

struct AggregateReport {
    int run_count = 0;
    std::vector<AggregateEntry> entries;
};

/// Per-metric mean and sample standard deviation across runs. All runs must
/// share the same metric shape; throws EvalError otherwise.
AggregateReport aggregate_runs(const std::vector<MetricVector>& runs);

/// "0.90 ± 0.00" at two decimals.
std::string format_pm(double mean, double stddev);

std::string aggregate_to_json(const AggregateReport& agg);
std::string render_aggregate_markdown(const AggregateReport& agg);
std::string render_aggregate_csv(const AggregateReport& agg);

}  // namespace cpg
