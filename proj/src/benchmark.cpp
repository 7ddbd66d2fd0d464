#include "gtma/benchmark.hpp"

#include <algorithm>
#include <cmath>

#include "gtma/rng.hpp"

namespace gtma {

namespace {

constexpr std::size_t kContextTokens = 4;
constexpr double kSeparabilityCap = 0.8;

bool is_allowed_shot(std::size_t s) {
    return s == 1 || s == 2 || s == 4 || s == 8 || s == 16;
}

// Token-space preimage of a joint-space direction under the encoder map.
Vec64 invert_mode(const TextEncoderParams& params, const Vec64& joint) {
    switch (params.mode()) {
        case EncoderMode::MeanPoolIdentity:
            return joint;
        case EncoderMode::MeanPoolProjected:
            // Projection rows are orthonormal, so W^T is a right inverse.
            return matvec_transposed(*params.projection(), joint);
        case EncoderMode::OneHiddenMlp:
            break;
    }
    throw ConfigError("generate_benchmark: encoder mode not invertible");
}

GrpoConfig variant_config(const GrpoConfig& base, AblationVariant variant) {
    GrpoConfig c = base;
    switch (variant) {
        case AblationVariant::Full:
        case AblationVariant::NoAnchorRefinement:
            break;
        case AblationVariant::NoPseudoWordOpt:
            c.iterations = 0;
            break;
        case AblationVariant::NoAdaptiveLr:
            c.adaptive = false;
            break;
        case AblationVariant::NoSemanticReg:
            c.lambda = 0.0;
            break;
    }
    return c;
}

}  // namespace

void BenchmarkSpec::validate() const {
    if (num_seen < 1) throw ConfigError("benchmark: num_seen must be >= 1");
    if (num_ood < 1) throw ConfigError("benchmark: num_ood must be >= 1");
    if (images_per_class < 1) {
        throw ConfigError("benchmark: images_per_class must be >= 1");
    }
    if (patches_per_image < 1) {
        throw ConfigError("benchmark: patches_per_image must be >= 1");
    }
    if (!(noise_sigma >= 0.0)) {
        throw ConfigError("benchmark: noise_sigma must be >= 0");
    }
    if (d_e < 2 || d_tok < 1 || d_k < 1) {
        throw ConfigError("benchmark: dims too small");
    }
    if (shots.empty()) throw ConfigError("benchmark: shots list is empty");
    for (std::size_t s : shots) {
        if (!is_allowed_shot(s)) {
            throw ConfigError("benchmark: shots must be drawn from {1,2,4,8,16}");
        }
    }
    const std::size_t max_shot = *std::max_element(shots.begin(), shots.end());
    if (support_per_class < max_shot) {
        throw ConfigError("benchmark: support_per_class below largest shot count");
    }
    if (support_per_class >= images_per_class) {
        throw ConfigError(
            "benchmark: support_per_class must leave at least one test image");
    }
    if (num_distractors < 1) {
        throw ConfigError("benchmark: num_distractors must be >= 1");
    }
    if (!(prototype_spread > 0.0)) {
        throw ConfigError("benchmark: prototype_spread must be > 0");
    }
    if (!(distractor_spread >= 0.0)) {
        throw ConfigError("benchmark: distractor_spread must be >= 0");
    }
    if (!(background_fraction >= 0.0 && background_fraction < 1.0)) {
        throw ConfigError("benchmark: background_fraction must lie in [0, 1)");
    }
    if (!(background_scale > 0.0 && background_scale <= 1.0)) {
        throw ConfigError("benchmark: background_scale must lie in (0, 1]");
    }
    if (!(background_clutter >= 0.0)) {
        throw ConfigError("benchmark: background_clutter must be >= 0");
    }
    if (!(attention_gain > 0.0)) {
        throw ConfigError("benchmark: attention_gain must be > 0");
    }
    switch (encoder_mode) {
        case EncoderMode::MeanPoolIdentity:
            if (d_tok != d_e) {
                throw ConfigError(
                    "benchmark: mean_pool_identity requires d_tok == d_e");
            }
            break;
        case EncoderMode::MeanPoolProjected:
            if (d_e > d_tok) {
                throw ConfigError(
                    "benchmark: mean_pool_projected requires d_e <= d_tok");
            }
            break;
        case EncoderMode::OneHiddenMlp:
            throw ConfigError(
                "benchmark: generation requires an invertible encoder mode "
                "(mean_pool_identity or mean_pool_projected)");
    }
}

std::size_t GeneratedBenchmark::placeholder_token() const {
    return kContextTokens + spec.num_seen;
}

std::string variant_name(AblationVariant v) {
    switch (v) {
        case AblationVariant::Full:
            return "full";
        case AblationVariant::NoPseudoWordOpt:
            return "no_pseudo_word_opt";
        case AblationVariant::NoAnchorRefinement:
            return "no_anchor_refinement";
        case AblationVariant::NoAdaptiveLr:
            return "no_adaptive_lr";
        case AblationVariant::NoSemanticReg:
            return "no_semantic_reg";
    }
    throw ConfigError("unknown ablation variant");
}

AblationVariant variant_from_name(const std::string& name) {
    for (AblationVariant v : all_variants()) {
        if (variant_name(v) == name) return v;
    }
    throw ConfigError("unknown ablation variant '" + name + "'");
}

std::vector<AblationVariant> all_variants() {
    return {AblationVariant::Full, AblationVariant::NoPseudoWordOpt,
            AblationVariant::NoAnchorRefinement, AblationVariant::NoAdaptiveLr,
            AblationVariant::NoSemanticReg};
}

std::string aggregation_name(AggregationMode m) {
    switch (m) {
        case AggregationMode::MeanPseudoWord:
            return "mean_pseudo_word";
        case AggregationMode::GrpoOnMeanAnchor:
            return "grpo_on_mean_anchor";
    }
    throw ConfigError("unknown aggregation mode");
}

AggregationMode aggregation_from_name(const std::string& name) {
    if (name == "mean_pseudo_word") return AggregationMode::MeanPseudoWord;
    if (name == "grpo_on_mean_anchor") return AggregationMode::GrpoOnMeanAnchor;
    throw ConfigError("unknown aggregation mode '" + name + "'");
}

GeneratedBenchmark generate_benchmark(const BenchmarkSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    const Vec64 center = rng.unit_vec(spec.d_e);

    // Prototypes by rejection sampling under the pairwise-cosine cap.
    const std::size_t num_concepts = spec.num_seen + spec.num_ood;
    std::vector<Vec64> prototypes;
    prototypes.reserve(num_concepts);
    std::size_t attempts = 0;
    const std::size_t max_attempts = 1000 * num_concepts;
    while (prototypes.size() < num_concepts) {
        if (++attempts > max_attempts) {
            throw GenerationFailureError(
                "generate_benchmark: could not place separable prototypes; "
                "dims too small for the class count");
        }
        const Vec64 candidate = l2_normalize(
            add(center, scale(rng.unit_vec(spec.d_e), spec.prototype_spread)));
        bool ok = true;
        for (const Vec64& p : prototypes) {
            if (cosine_sim(candidate, p) >= kSeparabilityCap) {
                ok = false;
                break;
            }
        }
        if (ok) prototypes.push_back(candidate);
    }

    TextEncoderParams encoder =
        spec.encoder_mode == EncoderMode::MeanPoolIdentity
            ? TextEncoderParams::mean_pool_identity(spec.d_e)
            : TextEncoderParams::mean_pool_projected(
                  rng.orthonormal(spec.d_e, spec.d_tok));

    // Prompt analog of "a photo of a [z]": four context tokens plus the slot.
    std::vector<std::size_t> prompt_ids(kContextTokens + 1, 0);
    for (std::size_t i = 0; i < kContextTokens; ++i) prompt_ids[i] = i;
    const Template prompt(prompt_ids, kContextTokens);
    const double prompt_len = static_cast<double>(prompt.length());

    std::vector<Vec64> vocab_rows;
    std::vector<std::string> vocab_names;
    vocab_rows.reserve(kContextTokens + spec.num_seen + spec.num_distractors);
    const double token_sd = 1.0 / std::sqrt(static_cast<double>(spec.d_tok));
    for (std::size_t i = 0; i < kContextTokens; ++i) {
        vocab_rows.push_back(rng.normal_vec(spec.d_tok, token_sd));
        vocab_names.push_back("ctx_" + std::to_string(i));
    }
    Vec64 context_sum = Vec64::zeros(spec.d_tok);
    for (std::size_t i = 0; i < kContextTokens; ++i) {
        context_sum = add(context_sum, vocab_rows[i]);
    }

    // Seen tokens solved so that encoding the prompt reproduces the
    // prototype direction exactly: token = L * inv(prototype) - sum(context).
    for (std::size_t c = 0; c < spec.num_seen; ++c) {
        const Vec64 target = invert_mode(encoder, prototypes[c]);
        vocab_rows.push_back(sub(scale(target, prompt_len), context_sum));
        vocab_names.push_back("seen_" + std::to_string(c));
    }

    // Distractors encode pseudo-concepts around the shared center; none is
    // aligned with any single concept.
    for (std::size_t k = 0; k < spec.num_distractors; ++k) {
        const Vec64 pseudo = l2_normalize(add(
            center, scale(rng.unit_vec(spec.d_e), spec.distractor_spread)));
        const Vec64 target = invert_mode(encoder, pseudo);
        vocab_rows.push_back(sub(scale(target, prompt_len), context_sum));
        vocab_names.push_back("dist_" + std::to_string(k));
    }
    VocabularyTable vocab(Mat64::from_rows(vocab_rows), std::move(vocab_names));

    // Shared orthogonal query/key projection: scores reduce to
    // attention_gain * (global_context . patch) when d_k == d_e.
    const Mat64 q = rng.orthonormal(spec.d_k, spec.d_e);
    const double attn_scale = std::sqrt(
        spec.attention_gain * std::sqrt(static_cast<double>(spec.d_k)));
    std::vector<double> w(q.values());
    for (double& x : w) x *= attn_scale;
    const Mat64 wq(spec.d_k, spec.d_e, w);
    AttentionParams attention(wq, wq);

    std::vector<ConceptSpec> concepts;
    concepts.reserve(num_concepts);
    for (std::size_t c = 0; c < num_concepts; ++c) {
        std::optional<std::size_t> token_index;
        std::string display_name;
        if (c < spec.num_seen) {
            token_index = kContextTokens + c;
            display_name = "seen_" + std::to_string(c);
        } else {
            display_name = "ood_" + std::to_string(c - spec.num_seen);
        }
        concepts.push_back(ConceptSpec{static_cast<int>(c), prototypes[c],
                                       token_index, std::move(display_name)});
    }

    // Patches: mostly noisy prototype copies, plus a background fraction with
    // attenuated signal and a shared clutter direction per instance. Both
    // deviations scale with sigma, so at sigma = 0 anchors are exact.
    const std::size_t bg_count = static_cast<std::size_t>(std::llround(
        spec.background_fraction * static_cast<double>(spec.patches_per_image)));
    std::vector<Instance> instances;
    instances.reserve(num_concepts * spec.images_per_class);
    int next_id = 0;
    for (const ConceptSpec& cls : concepts) {
        for (std::size_t img = 0; img < spec.images_per_class; ++img) {
            const Vec64 clutter = scale(
                rng.unit_vec(spec.d_e),
                spec.noise_sigma * spec.background_clutter);
            std::vector<Vec64> patch_rows;
            patch_rows.reserve(spec.patches_per_image);
            for (std::size_t i = 0; i < spec.patches_per_image; ++i) {
                const bool background = i >= spec.patches_per_image - bg_count;
                Vec64 patch = background
                                  ? add(scale(cls.prototype,
                                              spec.background_scale),
                                        clutter)
                                  : cls.prototype;
                if (spec.noise_sigma > 0.0) {
                    patch = add(patch,
                                rng.normal_vec(spec.d_e, spec.noise_sigma));
                }
                patch_rows.push_back(std::move(patch));
            }
            const bool support =
                !cls.is_seen() && img < spec.support_per_class;
            instances.push_back(Instance{
                next_id++, PatchFeatures(Mat64::from_rows(patch_rows)),
                cls.id, support ? Split::Support : Split::Test});
        }
    }

    return GeneratedBenchmark{spec,
                              std::move(vocab),
                              std::move(encoder),
                              std::move(attention),
                              prompt,
                              std::move(concepts),
                              std::move(instances)};
}

std::vector<Vec64> baseline_text_embeddings(const GeneratedBenchmark& bench) {
    const Vec64 placeholder =
        encode_text(bench.encoder, bench.vocab, bench.prompt,
                    bench.vocab.row(bench.placeholder_token()));
    std::vector<Vec64> embeddings;
    embeddings.reserve(bench.concepts.size());
    for (const ConceptSpec& cls : bench.concepts) {
        if (cls.is_seen()) {
            embeddings.push_back(encode_text(bench.encoder, bench.vocab,
                                             bench.prompt,
                                             bench.vocab.row(*cls.token_index)));
        } else {
            embeddings.push_back(placeholder);
        }
    }
    return embeddings;
}

VisualAnchor instance_anchor(const GeneratedBenchmark& bench,
                             const Instance& instance,
                             AblationVariant variant) {
    if (variant == AblationVariant::NoAnchorRefinement) {
        return raw_anchor(instance.patches);
    }
    return refine_anchor(instance.patches, bench.attention);
}

std::map<int, std::vector<Vec64>> instance_pseudo_words(
    const GeneratedBenchmark& bench, const GrpoConfig& config,
    AblationVariant variant) {
    const GrpoConfig cfg = variant_config(config, variant);
    std::map<int, std::vector<Vec64>> result;
    for (const ConceptSpec& cls : bench.concepts) {
        if (cls.is_seen()) continue;
        result.emplace(cls.id, std::vector<Vec64>{});
    }
    for (const Instance& instance : bench.instances) {
        if (instance.split != Split::Support) continue;
        const VisualAnchor anchor = instance_anchor(bench, instance, variant);
        Trajectory traj = grpo_run(anchor, bench.encoder, bench.vocab,
                                   bench.prompt, cfg);
        result.at(instance.concept_id).push_back(std::move(traj.z_star));
    }
    return result;
}

Vec64 class_embedding_from_pseudo_words(const GeneratedBenchmark& bench,
                                        const std::vector<Vec64>& pseudo_words,
                                        std::size_t shots) {
    if (shots < 1 || shots > pseudo_words.size()) {
        throw ConfigError("class embedding: shot count outside support size");
    }
    Vec64 mean = Vec64::zeros(bench.vocab.token_dim());
    for (std::size_t i = 0; i < shots; ++i) {
        mean = add(mean, pseudo_words[i]);
    }
    mean = scale(mean, 1.0 / static_cast<double>(shots));
    return encode_text(bench.encoder, bench.vocab, bench.prompt, mean);
}

std::vector<Vec64> gtma_embeddings(const GeneratedBenchmark& bench,
                                   const GrpoConfig& config,
                                   AblationVariant variant, std::size_t shots,
                                   AggregationMode aggregation) {
    std::vector<Vec64> embeddings = baseline_text_embeddings(bench);
    if (aggregation == AggregationMode::MeanPseudoWord) {
        const auto pseudo_words = instance_pseudo_words(bench, config, variant);
        for (const ConceptSpec& cls : bench.concepts) {
            if (cls.is_seen()) continue;
            embeddings[static_cast<std::size_t>(cls.id)] =
                class_embedding_from_pseudo_words(
                    bench, pseudo_words.at(cls.id), shots);
        }
        return embeddings;
    }
    // GrpoOnMeanAnchor: one optimization on the normalized mean of the
    // support anchors per class.
    const GrpoConfig cfg = variant_config(config, variant);
    for (const ConceptSpec& cls : bench.concepts) {
        if (cls.is_seen()) continue;
        Vec64 mean = Vec64::zeros(bench.spec.d_e);
        std::size_t used = 0;
        for (const Instance& instance : bench.instances) {
            if (instance.concept_id != cls.id ||
                instance.split != Split::Support) {
                continue;
            }
            if (used == shots) break;
            mean = add(mean,
                       instance_anchor(bench, instance, variant).direction());
            ++used;
        }
        if (used != shots) {
            throw ConfigError("class embedding: shot count outside support size");
        }
        const VisualAnchor class_anchor(l2_normalize(mean), true);
        Trajectory traj = grpo_run(class_anchor, bench.encoder, bench.vocab,
                                   bench.prompt, cfg);
        embeddings[static_cast<std::size_t>(cls.id)] =
            encode_text(bench.encoder, bench.vocab, bench.prompt, traj.z_star);
    }
    return embeddings;
}

EvalReport evaluate(const GeneratedBenchmark& bench,
                    const std::vector<Vec64>& class_embeddings,
                    AblationVariant variant) {
    if (class_embeddings.size() != bench.concepts.size()) {
        throw DimMismatchError("evaluate: one embedding per concept required");
    }
    EvalReport report;
    report.seed = bench.spec.seed;
    report.per_class.reserve(bench.concepts.size());
    for (const ConceptSpec& cls : bench.concepts) {
        report.per_class.push_back(
            PerClassCount{cls.id, cls.display_name, 0, 0});
    }

    std::size_t seen_correct = 0;
    std::size_t ood_correct = 0;
    for (const Instance& instance : bench.instances) {
        if (instance.split != Split::Test) continue;
        const VisualAnchor anchor = instance_anchor(bench, instance, variant);
        std::size_t best = 0;
        double best_score = -2.0;
        for (std::size_t c = 0; c < class_embeddings.size(); ++c) {
            const double s =
                cosine_sim(anchor.direction(), class_embeddings[c]);
            if (s > best_score) {  // ties keep the lowest concept id
                best_score = s;
                best = c;
            }
        }
        auto& tally = report.per_class[static_cast<std::size_t>(
            instance.concept_id)];
        tally.total += 1;
        const bool correct = static_cast<int>(best) == instance.concept_id;
        if (correct) tally.correct += 1;
        if (bench.concepts[static_cast<std::size_t>(instance.concept_id)]
                .is_seen()) {
            report.seen_total += 1;
            if (correct) seen_correct += 1;
        } else {
            report.ood_total += 1;
            if (correct) ood_correct += 1;
        }
    }
    if (report.seen_total > 0) {
        report.seen_accuracy = static_cast<double>(seen_correct) /
                               static_cast<double>(report.seen_total);
    }
    if (report.ood_total > 0) {
        report.ood_accuracy = static_cast<double>(ood_correct) /
                              static_cast<double>(report.ood_total);
    }
    const std::size_t total = report.seen_total + report.ood_total;
    report.open_accuracy =
        total == 0 ? 0.0
                   : static_cast<double>(seen_correct + ood_correct) /
                         static_cast<double>(total);
    return report;
}

PipelineOutcome run_pipeline(const BenchmarkSpec& spec, const GrpoConfig& config,
                             AblationVariant variant, std::size_t shots,
                             AggregationMode aggregation, std::uint64_t seed) {
    BenchmarkSpec seeded = spec;
    seeded.seed = seed;
    const GeneratedBenchmark bench = generate_benchmark(seeded);
    EvalReport baseline = evaluate(bench, baseline_text_embeddings(bench),
                                   AblationVariant::Full);
    EvalReport gtma = evaluate(
        bench, gtma_embeddings(bench, config, variant, shots, aggregation),
        variant);
    return PipelineOutcome{std::move(baseline), std::move(gtma)};
}

MetricAggregate aggregate_metric(const std::vector<double>& values) {
    MetricAggregate agg;
    if (values.empty()) return agg;
    const double n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    agg.mean = sum / n;
    double ss = 0.0;
    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
    agg.stddev = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    const double half = 1.96 * agg.stddev / std::sqrt(n);
    agg.ci95_lo = agg.mean - half;
    agg.ci95_hi = agg.mean + half;
    return agg;
}

AblationTable run_ablation(const BenchmarkSpec& spec, const GrpoConfig& config,
                           const std::vector<AblationVariant>& variants,
                           const std::vector<std::uint64_t>& seeds,
                           std::size_t shots, AggregationMode aggregation) {
    if (variants.size() < 2) {
        throw ConfigError("ablation: at least two variants required");
    }
    if (std::find(variants.begin(), variants.end(), AblationVariant::Full) ==
        variants.end()) {
        throw ConfigError("ablation: the full variant is the reference row");
    }
    for (std::size_t i = 0; i < variants.size(); ++i) {
        for (std::size_t j = i + 1; j < variants.size(); ++j) {
            if (variants[i] == variants[j]) {
                throw ConfigError("ablation: duplicate variant '" +
                                  variant_name(variants[i]) + "'");
            }
        }
    }
    if (seeds.empty()) throw ConfigError("ablation: seed list is empty");

    std::map<AblationVariant, std::vector<double>> seen_acc;
    std::map<AblationVariant, std::vector<double>> ood_acc;
    std::map<AblationVariant, std::vector<double>> open_acc;
    std::vector<double> baseline_ood;
    std::vector<double> baseline_seen;

    for (std::uint64_t seed : seeds) {
        BenchmarkSpec seeded = spec;
        seeded.seed = seed;
        const GeneratedBenchmark bench = generate_benchmark(seeded);
        const EvalReport baseline = evaluate(
            bench, baseline_text_embeddings(bench), AblationVariant::Full);
        baseline_ood.push_back(baseline.ood_accuracy.value_or(0.0));
        baseline_seen.push_back(baseline.seen_accuracy.value_or(0.0));
        for (AblationVariant variant : variants) {
            const EvalReport report = evaluate(
                bench,
                gtma_embeddings(bench, config, variant, shots, aggregation),
                variant);
            seen_acc[variant].push_back(report.seen_accuracy.value_or(0.0));
            ood_acc[variant].push_back(report.ood_accuracy.value_or(0.0));
            open_acc[variant].push_back(report.open_accuracy);
        }
    }

    const double full_open_mean =
        aggregate_metric(open_acc.at(AblationVariant::Full)).mean;
    AblationTable table;
    table.seeds = seeds;
    table.shots = shots;
    table.baseline_ood = aggregate_metric(baseline_ood);
    table.baseline_seen = aggregate_metric(baseline_seen);
    for (AblationVariant variant : variants) {
        AblationRow row;
        row.variant = variant;
        row.seen = aggregate_metric(seen_acc.at(variant));
        row.ood = aggregate_metric(ood_acc.at(variant));
        row.open = aggregate_metric(open_acc.at(variant));
        row.drop_open = full_open_mean - row.open.mean;
        row.open_per_seed = open_acc.at(variant);
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace gtma
