#include "cpg/runner.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "cpg/errors.hpp"
#include "cpg/tree_io.hpp"
#include "cpg/util.hpp"

namespace fs = std::filesystem;

namespace cpg {

Backend backend_from_string(const std::string& s) {
    if (s == "scripted") return Backend::Scripted;
    if (s == "noisy") return Backend::Noisy;
    if (s == "interactive") return Backend::Interactive;
    if (s == "remote") return Backend::Remote;
    throw ConfigError("unknown oracle backend '" + s + "'");
}

uint64_t derive_vignette_seed(uint64_t run_seed, const std::string& vignette_id) {
    return fnv1a64(vignette_id, 0xcbf29ce484222325ull ^ run_seed);
}

std::unique_ptr<Oracle> make_oracle(const OracleConfig& config, const Vignette& v,
                                    uint64_t run_seed) {
    switch (config.backend) {
        case Backend::Scripted:
            return std::make_unique<ScriptedOracle>(v.features, config.absent_feature_policy);
        case Backend::Noisy: {
            NoiseParams params = config.noise;
            params.seed = derive_vignette_seed(run_seed, v.id);
            return std::make_unique<NoisyOracle>(
                std::make_unique<ScriptedOracle>(v.features, config.absent_feature_policy), params);
        }
        case Backend::Interactive:
            return std::make_unique<InteractiveOracle>(std::cin, std::cout);
        case Backend::Remote:
            return std::make_unique<RemoteOracle>(config.remote, v.text);
    }
    throw ConfigError("unhandled oracle backend");
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

namespace {

std::vector<Trace> run_one_pass(const CorpusManifest& manifest,
                                const std::vector<const Vignette*>& vignettes,
                                const OracleConfig& oracle_config, uint64_t run_seed, int jobs) {
    std::vector<Trace> traces(vignettes.size());

    auto work = [&](size_t i) {
        const Vignette& v = *vignettes[i];
        auto oracle = make_oracle(oracle_config, v, run_seed);
        Trace t = traverse(*manifest.tree, *oracle, v.id);
        traces[i] = std::move(t);
    };

    if (jobs <= 1 || oracle_config.backend == Backend::Interactive) {
        for (size_t i = 0; i < vignettes.size(); ++i) work(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        const int n_threads = std::min<int>(jobs, static_cast<int>(vignettes.size()));
        pool.reserve(static_cast<size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) {
            pool.emplace_back([&] {
                for (;;) {
                    const size_t i = next.fetch_add(1);
                    if (i >= vignettes.size()) return;
                    work(i);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    return traces;
}

void write_report_files(const std::string& out_dir, int run_index, const RunReport& report) {
    const std::string prefix = out_dir + "/run_" + std::to_string(run_index);
    write_file(prefix + ".report.json", report_to_json(report));
    write_file(prefix + ".report.md", render_report_markdown(report));
    write_file(prefix + ".report.csv", render_report_csv(report));
    write_file(prefix + ".traversal.csv", render_traversal_csv(report.traversal));
}

void write_run_files(const std::string& out_dir, int run_index, const std::vector<Trace>& traces,
                     const RunReport& report) {
    save_traces(traces, out_dir + "/run_" + std::to_string(run_index) + ".traces.jsonl");
    write_report_files(out_dir, run_index, report);
}

void write_aggregate_files(const std::string& out_dir, const std::vector<RunReport>& reports) {
    std::vector<MetricVector> vectors;
    vectors.reserve(reports.size());
    for (const auto& r : reports) vectors.push_back(flatten_metrics(r));
    const AggregateReport agg = aggregate_runs(vectors);
    write_file(out_dir + "/aggregate.report.json", aggregate_to_json(agg));
    write_file(out_dir + "/aggregate.report.md", render_aggregate_markdown(agg));
    write_file(out_dir + "/aggregate.report.csv", render_aggregate_csv(agg));
}

}  // namespace

RunSummary run_all(const RunConfig& config) {
    if (config.runs < 1) throw ConfigError("runs must be >= 1");

    CorpusManifest manifest = load_corpus(config.corpus_path);
    if (!config.tree_path.empty()) {
        // Cross-check an explicitly given tree against the corpus reference.
        const GuidanceTree given = load_tree_file(config.tree_path);
        if (tree_hash(given) != manifest.tree_hash) {
            throw ConfigError("--tree does not match the tree the corpus was generated against");
        }
    }

    std::vector<const Vignette*> vignettes;
    for (const auto& v : manifest.vignettes) {
        if (config.only_vignette && v.id != *config.only_vignette) continue;
        vignettes.push_back(&v);
    }
    if (vignettes.empty()) throw ConfigError("no vignettes selected");
    if (config.oracle.backend == Backend::Interactive && vignettes.size() != 1) {
        throw ConfigError("the interactive oracle is restricted to a single vignette; "
                          "use --vignette to pick one");
    }

    fs::create_directories(config.out_dir);
    global_rate_limiter().configure(config.oracle.remote.requests_per_second);

    // Narrow manifest for reporting when a single vignette is selected.
    CorpusManifest scope = manifest;
    if (config.only_vignette) {
        scope.vignettes.clear();
        for (const auto* v : vignettes) scope.vignettes.push_back(*v);
    }

    RunSummary summary;
    for (int r = 1; r <= config.runs; ++r) {
        const uint64_t run_seed = config.base_seed + static_cast<uint64_t>(r);
        std::vector<Trace> traces =
            run_one_pass(scope, vignettes, config.oracle, run_seed, config.jobs);
        RunReport report = evaluate_run(scope, traces);
        summary.total_aborted += report.n_aborted;
        write_run_files(config.out_dir, r, traces, report);
        summary.reports.push_back(std::move(report));
    }
    write_aggregate_files(config.out_dir, summary.reports);
    return summary;
}

RunSummary eval_stored_traces(const std::string& corpus_path, const std::string& traces_dir,
                              const std::string& out_dir) {
    CorpusManifest manifest = load_corpus(corpus_path);

    std::vector<std::pair<int, std::string>> files;
    for (const auto& entry : fs::directory_iterator(traces_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("run_", 0) != 0) continue;
        const size_t dot = name.find(".traces.jsonl");
        if (dot == std::string::npos || dot + 13 != name.size()) continue;
        files.emplace_back(std::stoi(name.substr(4, dot - 4)), entry.path().string());
    }
    if (files.empty()) throw IoError("no run_*.traces.jsonl files under " + traces_dir);
    std::sort(files.begin(), files.end());

    fs::create_directories(out_dir);

    RunSummary summary;
    for (const auto& [run_index, path] : files) {
        const std::vector<Trace> traces = load_traces(path);

        // Restrict the manifest to the vignettes the traces cover (a stored
        // run may have been a single-vignette session).
        CorpusManifest scope = manifest;
        if (traces.size() != manifest.vignettes.size()) {
            std::set<std::string> ids;
            for (const auto& t : traces) ids.insert(t.vignette_id);
            scope.vignettes.clear();
            for (const auto& v : manifest.vignettes)
                if (ids.count(v.id)) scope.vignettes.push_back(v);
        }

        RunReport report = evaluate_run(scope, traces);
        summary.total_aborted += report.n_aborted;
        write_report_files(out_dir, run_index, report);
        summary.reports.push_back(std::move(report));
    }
    write_aggregate_files(out_dir, summary.reports);
    return summary;
}

Trace run_single(const CorpusManifest& manifest, const Vignette& v, Oracle& oracle) {
    return traverse(*manifest.tree, oracle, v.id);
}

std::string render_trace_text(const Trace& trace) {
    std::ostringstream os;
    os << "vignette " << trace.vignette_id << " (" << trace.tree_domain << ")\n";
    os << "oracle: " << trace.oracle_descriptor << "\n";
    for (const auto& s : trace.steps) {
        os << "step " << s.index + 1 << ": node " << s.node_id << " ["
           << (s.node_kind == NodeKind::Simple ? "simple" : "multi") << "]\n";
        for (size_t i = 0; i < s.questions.size(); ++i) {
            os << "    Q: " << s.questions[i].text << "\n";
            os << "    A: " << to_string(s.answers[i].value);
            if (s.answers[i].retries > 0) os << " (retries: " << s.answers[i].retries << ")";
            os << "\n";
        }
        os << "    branch: " << to_string(s.branch) << " -> ";
        switch (s.target.kind) {
            case Target::Kind::NodeRef: os << "node " << s.target.id; break;
            case Target::Kind::ActionRef: os << "action " << s.target.id; break;
            case Target::Kind::End: os << "end of pathway"; break;
            case Target::Kind::Continue: os << "(continue marker)"; break;
        }
        os << "\n";
    }
    if (trace.aborted) {
        os << "ABORTED: " << trace.abort_reason << "\n";
    } else if (trace.outcome) {
        if (trace.outcome->action_id) {
            os << "outcome: action " << *trace.outcome->action_id
               << (trace.outcome->referral ? " (referral)" : " (non-referral)") << "\n";
        } else {
            os << "outcome: no action\n";
        }
    }
    os << "steps: " << trace.step_count << ", queries: " << trace.query_count << "\n";
    return os.str();
}

}  // namespace cpg
