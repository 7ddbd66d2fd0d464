#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gtma/encoder.hpp"
#include "gtma/numeric.hpp"

namespace gtma {

// Continuous pseudo-word vector living in token-embedding space.
using PseudoWordEmbedding = Vec64;

// Projection of a point onto the vocabulary manifold.
struct ProjectionMode {
    enum class Kind { HardNearest, SoftKnn };

    Kind kind = Kind::HardNearest;
    std::size_t k = 1;           // SoftKnn only
    double temperature = 1.0;    // SoftKnn only

    static ProjectionMode hard_nearest();
    static ProjectionMode soft_knn(std::size_t k, double temperature);
};

// Pseudo-word initialization strategy.
struct InitMode {
    enum class Kind { Mlp, NearestVocab, LinearMap, Identity };

    Kind kind = Kind::NearestVocab;
    std::uint64_t seed = 0;  // Mlp and LinearMap only

    static InitMode mlp(std::uint64_t seed);
    static InitMode nearest_vocab();
    static InitMode linear_map(std::uint64_t seed);
    static InitMode identity();
};

struct GrpoConfig {
    double eta0 = 0.0;        // initial learning rate, > 0
    double lambda = 0.0;      // regularization weight, >= 0
    double beta = 0.0;        // sigmoid sharpness, > 0
    double gamma = 0.0;       // gradient-similarity threshold, [-1, 1]
    std::size_t iterations = 0;
    ProjectionMode projection = ProjectionMode::hard_nearest();
    InitMode init = InitMode::nearest_vocab();
    // Disabled only by the no-adaptive-learning-rate ablation; then every
    // step uses eta0 directly.
    bool adaptive = true;

    void validate() const;
};

// One optimization step as observed before the update is applied.
struct StepRecord {
    std::size_t t = 0;
    double score = 0.0;      // S_t
    double grad_norm = 0.0;  // ||g_t||
    double rho = 0.0;        // cosine of consecutive gradients
    double eta = 0.0;        // step size used
    double reg_norm = 0.0;   // ||grad R(z_t)||
};

struct Trajectory {
    std::vector<StepRecord> steps;
    PseudoWordEmbedding z_init;
    PseudoWordEmbedding z_star;
};

// Projection of z onto the vocabulary rows: the nearest row under Euclidean
// distance (ties to the lowest index), or a softmax(-d^2/temperature)
// weighted average of the k nearest rows.
Vec64 project_to_vocab(const Vec64& z, const VocabularyTable& vocab,
                       const ProjectionMode& mode);

// z - Proj(z); the projection is treated as locally constant.
Vec64 regularization_gradient(const Vec64& z, const VocabularyTable& vocab,
                              const ProjectionMode& mode);

// Cosine similarity of consecutive gradients, 0 when either is degenerate.
double grad_similarity(const Vec64& grad, const Vec64& grad_prev);

// eta0 * sigmoid(beta * (rho - gamma)), strictly inside (0, eta0).
double adaptive_step(double rho, const GrpoConfig& config);

// Initial pseudo-word from the visual anchor.
PseudoWordEmbedding init_pseudo_word(const VisualAnchor& anchor,
                                     const VocabularyTable& vocab,
                                     const TextEncoderParams& params,
                                     const InitMode& mode);

// Full optimization loop: per step, score, analytic gradient, regularization
// gradient, gradient similarity versus the previous gradient, adaptive step,
// ascent update. Throws NonFiniteError when the iterate diverges.
Trajectory grpo_run(const VisualAnchor& anchor, const TextEncoderParams& params,
                    const VocabularyTable& vocab, const Template& tmpl,
                    const GrpoConfig& config);

struct ObjectiveValue {
    double score = 0.0;        // S
    double regularizer = 0.0;  // R = 0.5 ||z - Proj(z)||^2
    double combined = 0.0;     // S - lambda * R
};

ObjectiveValue objective_value(const Vec64& z, const VisualAnchor& anchor,
                               const TextEncoderParams& params,
                               const VocabularyTable& vocab,
                               const Template& tmpl, const GrpoConfig& config);

}  // namespace gtma
