// Command-line entry point: tree validation, corpus generation, traversal
// runs, evaluation, trace inspection, and the guideline-to-tree pipeline.
//
// Exit codes: 0 ok, 1 validation failure, 2 IO/config error, 3 aborted
// traversals.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpg/builder.hpp"
#include "cpg/corpus.hpp"
#include "cpg/errors.hpp"
#include "cpg/eval.hpp"
#include "cpg/remote.hpp"
#include "cpg/runner.hpp"
#include "cpg/tree_io.hpp"
#include "cpg/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitAborted = 3;

int cmd_validate(const std::string& tree_path, bool as_json) {
    std::ifstream in(tree_path, std::ios::binary);
    if (!in) {
        std::cerr << "cannot open tree file: " << tree_path << "\n";
        return kExitIo;
    }
    std::ostringstream buf;
    buf << in.rdbuf();

    cpg::TreeParseResult parsed = cpg::parse_tree(buf.str());
    if (!parsed.tree) {
        if (as_json) {
            json j;
            j["ok"] = false;
            json issues = json::array();
            for (const auto& i : parsed.issues)
                issues.push_back({{"path", i.path}, {"message", i.message}});
            j["parse_issues"] = std::move(issues);
            std::cout << j.dump() << "\n";
        } else {
            for (const auto& i : parsed.issues)
                std::cout << "parse error at " << (i.path.empty() ? "(document)" : i.path) << ": "
                          << i.message << "\n";
        }
        return kExitValidation;
    }

    const cpg::ValidationReport report = cpg::validate_tree(*parsed.tree);
    if (as_json) {
        json j;
        j["ok"] = report.ok();
        json errors = json::array();
        for (const auto& e : report.errors)
            errors.push_back({{"code", cpg::to_string(e.code)},
                              {"node_id", e.node_id},
                              {"message", e.message}});
        j["errors"] = std::move(errors);
        json warnings = json::array();
        for (const auto& w : report.warnings)
            warnings.push_back({{"code", cpg::to_string(w.code)},
                                {"node_id", w.node_id},
                                {"message", w.message}});
        j["warnings"] = std::move(warnings);
        std::cout << j.dump() << "\n";
    } else {
        std::cout << (report.ok() ? "ok" : "invalid") << "\n" << report.summary();
    }
    return report.ok() ? kExitOk : kExitValidation;
}

int cmd_run(const cpg::RunConfig& config) {
    const cpg::RunSummary summary = cpg::run_all(config);
    std::cout << "runs: " << summary.reports.size() << ", aborted traversals: "
              << summary.total_aborted << "\n";
    std::cout << "outputs under " << config.out_dir << "\n";
    return summary.total_aborted > 0 ? kExitAborted : kExitOk;
}

int cmd_eval(const std::string& corpus, const std::string& traces_dir, const std::string& out) {
    const cpg::RunSummary summary = cpg::eval_stored_traces(corpus, traces_dir, out);
    std::cout << "re-evaluated " << summary.reports.size() << " run(s), aborted traversals: "
              << summary.total_aborted << "\n";
    return summary.total_aborted > 0 ? kExitAborted : kExitOk;
}

int cmd_stats(const std::vector<std::string>& corpora, bool as_json, const std::string& csv_out) {
    std::vector<cpg::CorpusStats> stats;
    for (const auto& path : corpora) stats.push_back(cpg::corpus_stats(cpg::load_corpus(path)));
    if (as_json) {
        json j = json::array();
        for (const auto& s : stats) {
            json cats;
            for (const auto& [c, n] : s.per_category) cats[cpg::to_string(c)] = n;
            json e;
            e["domain"] = s.domain;
            e["vignettes"] = s.n_vignettes;
            if (s.avg_word_count) e["avg_word_count"] = *s.avg_word_count;
            e["actions"] = s.n_actions;
            e["categories"] = std::move(cats);
            e["referral"] = s.referral;
            e["non_referral"] = s.non_referral;
            j.push_back(std::move(e));
        }
        std::cout << j.dump() << "\n";
    } else {
        std::cout << cpg::render_stats_markdown(stats);
    }
    if (!csv_out.empty()) cpg::write_file(csv_out, cpg::render_stats_csv(stats));
    return kExitOk;
}

int cmd_trace(const std::string& traces_path, const std::string& vignette_id) {
    for (const auto& t : cpg::load_traces(traces_path)) {
        if (t.vignette_id == vignette_id) {
            std::cout << cpg::render_trace_text(t);
            return kExitOk;
        }
    }
    std::cerr << "no trace for vignette '" << vignette_id << "' in " << traces_path << "\n";
    return kExitIo;
}

int cmd_gen_corpus(const std::string& tree_path, const std::string& plan_path,
                   const std::string& templates_path, const std::string& out_path,
                   const std::string& tree_ref, const std::string& prompts_dir) {
    const cpg::GuidanceTree loaded = cpg::load_tree_file(tree_path);
    const cpg::ValidationReport report = cpg::validate_tree(loaded);
    if (!report.ok()) {
        std::cerr << "tree is invalid:\n" << report.summary();
        return kExitValidation;
    }
    const cpg::GuidanceTree tree = cpg::assign_priorities(loaded);
    const cpg::GenPlan plan = cpg::load_plan_file(plan_path);

    cpg::GenResult gen = cpg::generate_specs(tree, plan);
    for (const auto& inf : gen.infeasible) {
        std::cout << "NA: category '" << cpg::to_string(inf.category)
                  << "' is infeasible on this tree: " << inf.reason << "\n";
    }

    if (!templates_path.empty()) {
        const cpg::TemplateSet templates = cpg::load_templates_file(templates_path);
        for (auto& spec : gen.specs) {
            const uint64_t seed = cpg::fnv1a64(spec.id, plan.seed ^ 0x9e3779b97f4a7c15ull);
            spec.text = cpg::synthesize_text(spec, templates, spec.length_condition, seed);
            spec.word_count = cpg::word_count(spec.text);
        }
    }

    if (!prompts_dir.empty()) {
        fs::create_directories(prompts_dir);
        for (const auto& spec : gen.specs) {
            cpg::write_file(prompts_dir + "/" + spec.id + ".prompt.txt",
                            cpg::emit_generation_prompt(tree, spec));
        }
    }

    const std::string ref = tree_ref.empty() ? tree_path : tree_ref;
    cpg::save_corpus(out_path, plan.domain, gen.specs, ref, loaded);
    std::cout << "wrote " << gen.specs.size() << " vignettes to " << out_path << "\n";

    // Self-check: everything written must load and validate.
    cpg::load_corpus(out_path);
    return kExitOk;
}

int cmd_build_tree(const std::string& guideline_path, int budget, bool offline,
                   const std::string& replies_dir, const std::string& out_dir,
                   const std::string& domain, const cpg::RemoteConfig& remote) {
    const std::string text = cpg::read_file(guideline_path);
    const std::vector<cpg::Segment> segments = cpg::segment_guideline(text, budget);
    fs::create_directories(out_dir);

    std::vector<cpg::Subtree> subtrees;
    std::vector<std::string> problems;
    for (const auto& seg : segments) {
        const std::string prompt = cpg::emit_tree_prompt(seg);
        cpg::write_file(out_dir + "/segment_" + std::to_string(seg.index) + ".prompt.txt", prompt);

        std::string reply;
        if (offline) {
            const std::string reply_path =
                replies_dir + "/reply_" + std::to_string(seg.index) + ".txt";
            reply = cpg::read_file(reply_path);
        } else {
            cpg::ChatClient client(remote);
            reply = client.complete({{"user", prompt}}).content;
        }
        cpg::write_file(out_dir + "/segment_" + std::to_string(seg.index) + ".reply.txt", reply);

        cpg::ModelTreeResult parsed = cpg::parse_model_tree(reply, seg.index);
        if (!parsed.subtree) {
            for (const auto& i : parsed.issues) problems.push_back(i);
            continue;
        }
        subtrees.push_back(std::move(*parsed.subtree));
    }

    json lint;
    lint["prompt_template"] = cpg::kTreePromptVersion;
    lint["segments"] = segments.size();
    lint["problems"] = problems;

    if (!problems.empty() || subtrees.size() != segments.size()) {
        lint["ok"] = false;
        cpg::write_file(out_dir + "/lint_report.json", lint.dump() + "\n");
        for (const auto& p : problems) std::cerr << p << "\n";
        return kExitValidation;
    }

    try {
        cpg::GuidanceTree merged = cpg::merge_subtrees(subtrees);
        if (!domain.empty()) merged.domain = domain;
        merged = cpg::assign_priorities(merged);
        cpg::save_tree_file(merged, out_dir + "/merged_tree.json");
        lint["ok"] = true;
        lint["merged_tree"] = "merged_tree.json";
        lint["nodes"] = merged.nodes.size();
        lint["actions"] = merged.actions.size();
        cpg::write_file(out_dir + "/lint_report.json", lint.dump() + "\n");
    } catch (const cpg::BuilderError& e) {
        lint["ok"] = false;
        lint["merge_error"] = e.what();
        cpg::write_file(out_dir + "/lint_report.json", lint.dump() + "\n");
        std::cerr << e.what() << "\n";
        return kExitValidation;
    }
    std::cout << "merged tree written to " << out_dir << "/merged_tree.json\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Guideline decision-tree toolkit: validate trees, generate vignette corpora, "
                 "run oracle traversals, and evaluate decision quality"};
    app.require_subcommand(1);

    // validate
    std::string tree_path;
    bool as_json = false;
    auto* validate = app.add_subcommand("validate", "Validate a guidance-tree document");
    validate->add_option("--tree", tree_path, "Tree document")->required();
    validate->add_flag("--json", as_json, "Machine-readable report");

    // run
    cpg::RunConfig run_config;
    std::string oracle_name = "scripted";
    std::string vignette_filter;
    auto* run = app.add_subcommand("run", "Traverse every corpus vignette against an oracle");
    run->add_option("--tree", run_config.tree_path, "Tree document (cross-checked against corpus)");
    run->add_option("--corpus", run_config.corpus_path, "Corpus JSONL")->required();
    run->add_option("--oracle", oracle_name, "scripted|noisy|interactive|remote")
        ->default_val("scripted");
    run->add_option("--seed", run_config.base_seed, "Base seed; run r uses base_seed + r")
        ->default_val(1);
    run->add_option("--runs", run_config.runs, "Independent runs")->default_val(5);
    run->add_option("--jobs", run_config.jobs, "Concurrent traversals")->default_val(1);
    run->add_option("--out", run_config.out_dir, "Output directory")->required();
    run->add_option("--vignette", vignette_filter, "Restrict to one vignette id");
    run->add_option("--p-no-to-yes", run_config.oracle.noise.p_no_to_yes,
                    "Noisy backend: probability a no flips to yes")->default_val(0.0);
    run->add_option("--p-yes-to-no", run_config.oracle.noise.p_yes_to_no,
                    "Noisy backend: probability a yes flips to no")->default_val(0.0);
    run->add_option("--endpoint", run_config.oracle.remote.endpoint,
                    "Remote backend: chat-completions URL");
    run->add_option("--model", run_config.oracle.remote.model, "Remote backend: model name")
        ->default_val("gpt-4o");
    run->add_option("--temperature", run_config.oracle.remote.temperature,
                    "Remote backend: sampling temperature")->default_val(0.2);
    run->add_option("--timeout-ms", run_config.oracle.remote.timeout_ms,
                    "Remote backend: request timeout")->default_val(30000);
    run->add_option("--rps", run_config.oracle.remote.requests_per_second,
                    "Remote backend: process-wide requests-per-second cap")->default_val(0.0);
    bool strict_features = false;
    run->add_flag("--strict-features", strict_features,
                  "Scripted backend: error on unmentioned features instead of answering no");

    // eval
    std::string eval_corpus, eval_traces, eval_out;
    auto* eval = app.add_subcommand("eval", "Recompute reports from stored traces (replay)");
    eval->add_option("--corpus", eval_corpus, "Corpus JSONL")->required();
    eval->add_option("--traces", eval_traces, "Directory with run_*.traces.jsonl")->required();
    eval->add_option("--out", eval_out, "Output directory")->required();

    // stats
    std::vector<std::string> stats_corpora;
    bool stats_json = false;
    std::string stats_csv;
    auto* stats = app.add_subcommand("stats", "Corpus overview table");
    stats->add_option("corpus", stats_corpora, "Corpus JSONL files")->required();
    stats->add_flag("--json", stats_json, "Machine-readable output");
    stats->add_option("--csv", stats_csv, "Also write a CSV table to this path");

    // trace
    std::string trace_file, trace_vignette;
    auto* trace = app.add_subcommand("trace", "Pretty-print one vignette's audit trail");
    trace->add_option("--traces", trace_file, "Trace JSONL file")->required();
    trace->add_option("--vignette", trace_vignette, "Vignette id")->required();

    // gen-corpus
    std::string gen_tree, gen_plan, gen_templates, gen_out, gen_tree_ref, gen_prompts;
    auto* gen = app.add_subcommand("gen-corpus", "Generate a vignette corpus from a tree and plan");
    gen->add_option("--tree", gen_tree, "Tree document")->required();
    gen->add_option("--plan", gen_plan, "Generation plan (cpg-plan/1)")->required();
    gen->add_option("--templates", gen_templates,
                    "Sentence templates (cpg-templates/1); omit to leave texts empty");
    gen->add_option("--out", gen_out, "Output corpus JSONL")->required();
    gen->add_option("--tree-ref", gen_tree_ref,
                    "Tree path to record in the corpus header (defaults to --tree)");
    gen->add_option("--prompts-dir", gen_prompts,
                    "Also emit one text-generation prompt file per vignette");

    // build-tree
    std::string bt_guideline, bt_replies, bt_out, bt_domain;
    int bt_budget = 160;
    bool bt_offline = false;
    cpg::RemoteConfig bt_remote;
    auto* build = app.add_subcommand("build-tree",
                                     "Segment a guideline, emit prompts, parse replies, merge");
    build->add_option("--guideline", bt_guideline, "Guideline text file")->required();
    build->add_option("--budget", bt_budget, "Token-estimate budget per segment")->default_val(160);
    build->add_flag("--offline", bt_offline, "Consume pre-recorded replies instead of calling a model");
    build->add_option("--replies", bt_replies, "Directory with reply_<i>.txt files (offline mode)");
    build->add_option("--out", bt_out, "Output directory")->required();
    build->add_option("--domain", bt_domain, "Domain label for the merged tree");
    build->add_option("--endpoint", bt_remote.endpoint, "Chat-completions URL (online mode)");
    build->add_option("--model", bt_remote.model, "Model name (online mode)")->default_val("gpt-4o");
    build->add_option("--temperature", bt_remote.temperature, "Sampling temperature")
        ->default_val(0.2);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) return cmd_validate(tree_path, as_json);
        if (*run) {
            run_config.oracle.backend = cpg::backend_from_string(oracle_name);
            run_config.oracle.absent_feature_policy = strict_features
                                                          ? cpg::AbsentFeaturePolicy::Error
                                                          : cpg::AbsentFeaturePolicy::No;
            if (!vignette_filter.empty()) run_config.only_vignette = vignette_filter;
            if (run_config.oracle.backend == cpg::Backend::Remote &&
                run_config.oracle.remote.endpoint.empty()) {
                throw cpg::ConfigError("--endpoint is required for the remote oracle");
            }
            if (run_config.oracle.backend == cpg::Backend::Interactive) run_config.runs = 1;
            return cmd_run(run_config);
        }
        if (*eval) return cmd_eval(eval_corpus, eval_traces, eval_out);
        if (*stats) return cmd_stats(stats_corpora, stats_json, stats_csv);
        if (*trace) return cmd_trace(trace_file, trace_vignette);
        if (*gen) return cmd_gen_corpus(gen_tree, gen_plan, gen_templates, gen_out, gen_tree_ref,
                                        gen_prompts);
        if (*build) {
            if (!bt_offline && bt_remote.endpoint.empty()) {
                throw cpg::ConfigError("--endpoint is required unless --offline is given");
            }
            return cmd_build_tree(bt_guideline, bt_budget, bt_offline, bt_replies, bt_out,
                                  bt_domain, bt_remote);
        }
    } catch (const cpg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitIo;
    } catch (const cpg::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const cpg::TreeError& e) {
        std::cerr << "tree error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const cpg::CorpusError& e) {
        std::cerr << "corpus error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const cpg::BuilderError& e) {
        std::cerr << "builder error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const cpg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}
