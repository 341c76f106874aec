#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cpg/corpus.hpp"
#include "cpg/eval.hpp"
#include "cpg/remote.hpp"

namespace cpg {

enum class Backend { Scripted, Noisy, Interactive, Remote };

Backend backend_from_string(const std::string& s);

struct OracleConfig {
    Backend backend = Backend::Scripted;
    AbsentFeaturePolicy absent_feature_policy = AbsentFeaturePolicy::No;
    NoiseParams noise;  // seed is derived per run and vignette
    RemoteConfig remote;
};

struct RunConfig {
    std::string tree_path;
    std::string corpus_path;
    std::string out_dir;
    OracleConfig oracle;
    uint64_t base_seed = 1;
    int runs = 5;
    int jobs = 1;
    std::optional<std::string> only_vignette;  // restrict to one vignette (interactive mode)
};

struct RunSummary {
    std::vector<RunReport> reports;
    int total_aborted = 0;
};

/// Per-vignette oracle construction. The noise seed is derived from the run
/// seed and the vignette id, so results do not depend on scheduling order.
std::unique_ptr<Oracle> make_oracle(const OracleConfig& config, const Vignette& v,
                                    uint64_t run_seed);

uint64_t derive_vignette_seed(uint64_t run_seed, const std::string& vignette_id);

/// Execute `runs` independent passes over the corpus (run seed = base_seed +
/// run index), writing per-run trace and report files plus the aggregate.
/// Trace files are byte-deterministic for local backends regardless of
/// --jobs.
RunSummary run_all(const RunConfig& config);

/// Recompute reports from stored trace files (run_*.traces.jsonl under
/// traces_dir); no oracle is consulted. Writes the same report files as
/// run_all, byte-identical for identical traces.
RunSummary eval_stored_traces(const std::string& corpus_path, const std::string& traces_dir,
                              const std::string& out_dir);

/// One traversal of a single vignette; used by the interactive mode and
/// trace inspection.
Trace run_single(const CorpusManifest& manifest, const Vignette& v, Oracle& oracle);

std::string render_trace_text(const Trace& trace);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace cpg
