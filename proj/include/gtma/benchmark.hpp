#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gtma/encoder.hpp"
#include "gtma/grpo.hpp"

namespace gtma {

enum class ConceptKind { Seen, Ood };

struct ConceptSpec {
    int id = 0;
    Vec64 prototype;                          // unit norm, joint space
    std::optional<std::size_t> token_index;   // present for seen concepts
    std::string display_name;

    bool is_seen() const noexcept { return token_index.has_value(); }
};

enum class Split { Support, Test };

struct Instance {
    int id = 0;
    PatchFeatures patches;
    int concept_id = 0;
    Split split = Split::Test;
};

// Synthetic dataset layout. Seen concepts get an exactly-aligned vocabulary
// token; OOD concepts get none. Patches are noisy copies of the concept
// prototype; a fraction are "background" patches with attenuated signal plus
// a shared per-instance clutter direction scaled by sigma. The clutter tilts
// the plain patch mean while attention can discount it, which is what anchor
// purification exploits. At sigma = 0 every patch is an exact multiple of
// the prototype.
struct BenchmarkSpec {
    std::size_t num_seen = 10;
    std::size_t num_ood = 10;
    std::size_t images_per_class = 20;
    std::size_t patches_per_image = 16;
    double noise_sigma = 0.1;
    std::size_t d_e = 64;
    std::size_t d_tok = 64;
    std::size_t d_k = 64;
    EncoderMode encoder_mode = EncoderMode::MeanPoolIdentity;
    std::vector<std::size_t> shots = {1, 2, 4, 8, 16};
    std::size_t support_per_class = 16;
    std::size_t num_distractors = 8;
    // Concept prototypes sit around a shared random center: larger spread
    // means more separable classes. Distractor tokens encode pseudo-concepts
    // drawn around the same center with their own spread.
    double prototype_spread = 0.9;
    double distractor_spread = 0.3;
    double background_fraction = 0.25;
    double background_scale = 0.2;
    // Magnitude of the shared background clutter direction, in units of
    // noise_sigma.
    double background_clutter = 12.0;
    // Effective score multiplier of the purification attention.
    double attention_gain = 4.0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct GeneratedBenchmark {
    BenchmarkSpec spec;
    VocabularyTable vocab;
    TextEncoderParams encoder;
    AttentionParams attention;
    Template prompt;
    std::vector<ConceptSpec> concepts;   // seen concepts first, then OOD
    std::vector<Instance> instances;     // concept-major order

    std::size_t placeholder_token() const;  // lowest-index distractor
};

struct PerClassCount {
    int concept_id = 0;
    std::string display_name;
    std::size_t correct = 0;
    std::size_t total = 0;
};

struct EvalReport {
    std::optional<double> seen_accuracy;
    std::optional<double> ood_accuracy;
    double open_accuracy = 0.0;
    std::size_t seen_total = 0;
    std::size_t ood_total = 0;
    std::vector<PerClassCount> per_class;
    std::uint64_t seed = 0;
};

enum class AblationVariant {
    Full,
    NoPseudoWordOpt,
    NoAnchorRefinement,
    NoAdaptiveLr,
    NoSemanticReg,
};

std::string variant_name(AblationVariant v);
AblationVariant variant_from_name(const std::string& name);
std::vector<AblationVariant> all_variants();

enum class AggregationMode { MeanPseudoWord, GrpoOnMeanAnchor };

std::string aggregation_name(AggregationMode m);
AggregationMode aggregation_from_name(const std::string& name);

// Deterministic dataset construction. Seen-token embeddings are solved
// analytically so that encoding the prompt with that token reproduces the
// concept prototype direction; requires an invertible encoder mode.
GeneratedBenchmark generate_benchmark(const BenchmarkSpec& spec);

// Per-concept text embeddings without pseudo-word synthesis: seen concepts
// via their own token, every OOD concept via one shared placeholder token.
std::vector<Vec64> baseline_text_embeddings(const GeneratedBenchmark& bench);

// Instance anchor under the variant's anchor policy.
VisualAnchor instance_anchor(const GeneratedBenchmark& bench,
                             const Instance& instance, AblationVariant variant);

// Optimized pseudo-word per support instance, keyed by OOD concept id, in
// support order. The variant adjusts the optimizer (skip optimization, fixed
// step size, no regularization) and the anchor policy.
std::map<int, std::vector<Vec64>> instance_pseudo_words(
    const GeneratedBenchmark& bench, const GrpoConfig& config,
    AblationVariant variant);

// Class text embedding from the first `shots` support pseudo-words.
Vec64 class_embedding_from_pseudo_words(const GeneratedBenchmark& bench,
                                        const std::vector<Vec64>& pseudo_words,
                                        std::size_t shots);

// Full per-concept embedding set: seen concepts use baseline tokens, OOD
// concepts use synthesized pseudo-words from `shots` support instances.
std::vector<Vec64> gtma_embeddings(const GeneratedBenchmark& bench,
                                   const GrpoConfig& config,
                                   AblationVariant variant, std::size_t shots,
                                   AggregationMode aggregation);

// Classify every test instance by cosine against the per-concept embeddings.
EvalReport evaluate(const GeneratedBenchmark& bench,
                    const std::vector<Vec64>& class_embeddings,
                    AblationVariant variant);

struct PipelineOutcome {
    EvalReport baseline;
    EvalReport gtma;
};

// Generate the dataset for `seed` and evaluate baseline and GTMA embeddings.
PipelineOutcome run_pipeline(const BenchmarkSpec& spec, const GrpoConfig& config,
                             AblationVariant variant, std::size_t shots,
                             AggregationMode aggregation, std::uint64_t seed);

struct MetricAggregate {
    double mean = 0.0;
    double stddev = 0.0;   // sample standard deviation
    double ci95_lo = 0.0;
    double ci95_hi = 0.0;
};

MetricAggregate aggregate_metric(const std::vector<double>& values);

struct AblationRow {
    AblationVariant variant = AblationVariant::Full;
    MetricAggregate seen;
    MetricAggregate ood;
    MetricAggregate open;
    double drop_open = 0.0;  // Full mean open accuracy minus this variant's
    std::vector<double> open_per_seed;
};

struct AblationTable {
    std::vector<AblationRow> rows;
    std::vector<std::uint64_t> seeds;
    std::size_t shots = 0;
    MetricAggregate baseline_ood;
    MetricAggregate baseline_seen;
};

// Run every variant over every seed with shared per-seed datasets.
AblationTable run_ablation(const BenchmarkSpec& spec, const GrpoConfig& config,
                           const std::vector<AblationVariant>& variants,
                           const std::vector<std::uint64_t>& seeds,
                           std::size_t shots, AggregationMode aggregation);

}  // namespace gtma
