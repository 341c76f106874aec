#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cpg/oracle.hpp"
#include "cpg/tree.hpp"

namespace cpg {

enum class Category { Single, Multi, Contrastive, Exclusion };
enum class LengthCondition { Unconstrained, Short, Medium, Long };

std::string to_string(Category c);
std::string to_string(LengthCondition c);
Category category_from_string(const std::string& s);
LengthCondition length_from_string(const std::string& s);

/// A synthetic patient note plus its gold labels. `features` is the gold
/// assignment: true = affirmed in the note, false = explicitly denied,
/// absent = not mentioned.
struct Vignette {
    std::string id;
    std::string domain;
    Category category = Category::Single;
    LengthCondition length_condition = LengthCondition::Unconstrained;
    std::string text;
    int word_count = 0;
    std::map<std::string, bool> features;
    std::optional<std::string> gold_action;  // empty = pathway ends with no action
    bool gold_referral = false;
    int gold_path_length = 0;
};

struct CorpusManifest {
    std::string domain;
    std::string tree_ref;   // tree path as recorded in the header
    std::string tree_hash;  // content hash of the canonical tree bytes
    std::shared_ptr<const GuidanceTree> tree;  // prepared: validated, priorities assigned
    std::vector<Vignette> vignettes;

    std::map<Category, int> category_counts() const;
    int referral_count() const;
    int non_referral_count() const;
};

struct VignetteViolation {
    std::string code;  // e.g. CATEGORY_CONTRACT, GOLD_MISMATCH
    std::string message;
};

/// Re-derive everything derivable and compare against the stored labels:
/// gold action / referral / path length against a fresh gold trace, the word
/// count, the length band, and the category contract. Empty result = ok.
std::vector<VignetteViolation> validate_vignette(const GuidanceTree& tree, const Vignette& v);

/// Category membership predicates, used both by validate_vignette and the
/// partition property test. Exactly one holds for any well-formed vignette.
bool matches_category(const GuidanceTree& tree, const Vignette& v, Category c);

// ---------------------------------------------------------------------------
// Generation

struct GenPlan {
    std::string domain;
    uint64_t seed = 0;
    std::map<Category, int> counts;
    std::vector<LengthCondition> lengths = {LengthCondition::Unconstrained};  // cycled per category
    int multi_positives = 2;
    // Feature sets that cannot be simultaneously positive (e.g. disjoint lab
    // bands of one measurement).
    std::vector<std::vector<std::string>> exclusive_groups;
    // Clinically confusable pairs used for contrastive specs when the
    // positive feature has no multi-node siblings.
    std::vector<std::pair<std::string, std::string>> confusion_pairs;
};

GenPlan load_plan_file(const std::string& path);

struct Infeasibility {
    Category category = Category::Single;
    std::string reason;
};

struct GenResult {
    std::vector<Vignette> specs;  // text empty; features and gold labels filled
    std::vector<Infeasibility> infeasible;
};

/// Produce vignette specs per the plan. Deterministic under the plan seed.
/// Categories whose candidate pool is empty are reported infeasible instead
/// of being forced.
GenResult generate_specs(const GuidanceTree& tree, const GenPlan& plan);

// ---------------------------------------------------------------------------
// Deterministic text synthesis

struct TemplateSet {
    std::string domain;
    std::vector<std::string> intro;  // placeholders {age} and {sex}
    int age_min = 25;
    int age_max = 85;
    std::vector<std::string> sexes = {"female", "male"};
    std::map<std::string, std::string> affirm;  // feature -> affirmation sentence
    std::map<std::string, std::string> deny;    // feature -> denial sentence
    std::vector<std::string> filler;
    // Demographic coherence: a positive feature may constrain the stated age
    // or sex (a late-onset feature implies an older patient, and so on).
    std::map<std::string, std::pair<int, int>> age_when_true;
    std::map<std::string, std::string> sex_when_true;
};

TemplateSet load_templates_file(const std::string& path);

/// Phrases that would leak a management decision into the note; texts are
/// rejected if any appears.
const std::vector<std::string>& banned_phrases();

/// Assemble a narrative for the spec: one affirmation sentence per positive
/// feature, one denial per explicitly-false feature, neutral filler to land
/// inside the length band. Throws CorpusError on a missing template, an
/// unsatisfiable length, or a banned phrase.
std::string synthesize_text(const Vignette& spec, const TemplateSet& templates,
                            LengthCondition length, uint64_t seed);

/// Render a self-contained prompt asking an external text model to write the
/// vignette: positive and negated features, category guidance, realism and
/// length constraints, and the no-management-recommendation rule.
std::string emit_generation_prompt(const GuidanceTree& tree, const Vignette& spec);

/// Maps template sentences found in a vignette text back to feature truth
/// values; the independent read-back path for synthesized notes.
class KeywordOracle : public Oracle {
public:
    KeywordOracle(std::string text, const TemplateSet& templates,
                  AbsentFeaturePolicy policy = AbsentFeaturePolicy::No)
        : text_(std::move(text)), templates_(templates), policy_(policy) {}

    Answer answer(const Question& q) override;
    std::string descriptor() const override { return "keyword"; }

private:
    std::string text_;
    const TemplateSet& templates_;
    AbsentFeaturePolicy policy_;
};

// ---------------------------------------------------------------------------
// Persistence and statistics

/// Corpus file: JSONL, header line {format:"cpg-corpus/1", domain, tree,
/// tree_hash, ...} followed by one vignette record per line.
CorpusManifest load_corpus(const std::string& path);
void save_corpus(const std::string& path, const std::string& domain,
                 const std::vector<Vignette>& vignettes, const std::string& tree_ref,
                 const GuidanceTree& tree_as_loaded);

struct CorpusStats {
    std::string domain;
    int n_vignettes = 0;
    std::optional<double> avg_word_count;
    int n_actions = 0;
    std::map<Category, int> per_category;
    int referral = 0;
    int non_referral = 0;
};

CorpusStats corpus_stats(const CorpusManifest& manifest);
std::string render_stats_markdown(const std::vector<CorpusStats>& stats);
std::string render_stats_csv(const std::vector<CorpusStats>& stats);

}  // namespace cpg
