#include "gtma/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gtma/rng.hpp"

namespace gtma {

namespace {

constexpr double kDivergenceNormBound = 1e6;

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double squared_distance_to_row(const Vec64& z, const Mat64& rows,
                               std::size_t r) {
    double s = 0.0;
    for (std::size_t c = 0; c < rows.cols(); ++c) {
        const double d = z[c] - rows.at(r, c);
        s += d * d;
    }
    return s;
}

}  // namespace

ProjectionMode ProjectionMode::hard_nearest() { return ProjectionMode{}; }

ProjectionMode ProjectionMode::soft_knn(std::size_t k, double temperature) {
    ProjectionMode m;
    m.kind = Kind::SoftKnn;
    m.k = k;
    m.temperature = temperature;
    return m;
}

InitMode InitMode::mlp(std::uint64_t seed) { return {Kind::Mlp, seed}; }
InitMode InitMode::nearest_vocab() { return {Kind::NearestVocab, 0}; }
InitMode InitMode::linear_map(std::uint64_t seed) {
    return {Kind::LinearMap, seed};
}
InitMode InitMode::identity() { return {Kind::Identity, 0}; }

void GrpoConfig::validate() const {
    if (!(eta0 > 0.0)) throw ConfigError("grpo: eta0 must be > 0");
    if (!(lambda >= 0.0)) throw ConfigError("grpo: lambda must be >= 0");
    if (!(beta > 0.0)) throw ConfigError("grpo: beta must be > 0");
    if (!(gamma >= -1.0 && gamma <= 1.0)) {
        throw ConfigError("grpo: gamma must lie in [-1, 1]");
    }
    if (projection.kind == ProjectionMode::Kind::SoftKnn) {
        if (projection.k < 1) throw ConfigError("grpo: soft-knn k must be >= 1");
        if (!(projection.temperature > 0.0)) {
            throw ConfigError("grpo: soft-knn temperature must be > 0");
        }
    }
}

Vec64 project_to_vocab(const Vec64& z, const VocabularyTable& vocab,
                       const ProjectionMode& mode) {
    if (z.dim() != vocab.token_dim()) {
        throw DimMismatchError("project_to_vocab: dim vs vocabulary");
    }
    const Mat64& rows = vocab.embeddings();
    if (mode.kind == ProjectionMode::Kind::HardNearest) {
        std::size_t best = 0;
        double best_d = squared_distance_to_row(z, rows, 0);
        for (std::size_t r = 1; r < rows.rows(); ++r) {
            const double d = squared_distance_to_row(z, rows, r);
            if (d < best_d) {  // strict: ties keep the lowest index
                best_d = d;
                best = r;
            }
        }
        return rows.row(best);
    }
    if (mode.k > vocab.size()) {
        throw ConfigError("project_to_vocab: soft-knn k exceeds vocabulary");
    }
    std::vector<std::size_t> order(vocab.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> dists(vocab.size());
    for (std::size_t r = 0; r < vocab.size(); ++r) {
        dists[r] = squared_distance_to_row(z, rows, r);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                         return dists[a] < dists[b];
                     });
    std::vector<double> scores(mode.k);
    for (std::size_t i = 0; i < mode.k; ++i) {
        scores[i] = -dists[order[i]] / mode.temperature;
    }
    const Vec64 weights = softmax(Vec64(std::move(scores)));
    std::vector<double> out(z.dim(), 0.0);
    for (std::size_t i = 0; i < mode.k; ++i) {
        const double w = weights[i];
        for (std::size_t c = 0; c < z.dim(); ++c) {
            out[c] += w * rows.at(order[i], c);
        }
    }
    return Vec64(std::move(out));
}

Vec64 regularization_gradient(const Vec64& z, const VocabularyTable& vocab,
                              const ProjectionMode& mode) {
    return sub(z, project_to_vocab(z, vocab, mode));
}

double grad_similarity(const Vec64& grad, const Vec64& grad_prev) {
    if (grad.dim() != grad_prev.dim()) {
        throw DimMismatchError("grad_similarity: dims differ");
    }
    if (norm(grad) <= kNormEpsilon || norm(grad_prev) <= kNormEpsilon) {
        return 0.0;
    }
    return cosine_sim(grad, grad_prev);
}

double adaptive_step(double rho, const GrpoConfig& config) {
    double eta = config.eta0 * stable_sigmoid(config.beta * (rho - config.gamma));
    // Keep the open-interval contract even where the sigmoid rounds to 0 or 1.
    if (eta >= config.eta0) eta = std::nextafter(config.eta0, 0.0);
    if (eta <= 0.0) eta = std::nextafter(0.0, config.eta0);
    return eta;
}

PseudoWordEmbedding init_pseudo_word(const VisualAnchor& anchor,
                                     const VocabularyTable& vocab,
                                     const TextEncoderParams& params,
                                     const InitMode& mode) {
    const Vec64& c = anchor.direction();
    switch (mode.kind) {
        case InitMode::Kind::Mlp: {
            // Frozen seeded layer: tanh(W c), W ~ N(0, 1/d_e).
            Rng rng(mode.seed);
            const Mat64 w = rng.normal_mat(
                params.token_dim(), c.dim(),
                1.0 / std::sqrt(static_cast<double>(c.dim())));
            const Vec64 pre = matvec(w, c);
            std::vector<double> out(pre.dim());
            for (std::size_t i = 0; i < pre.dim(); ++i) {
                out[i] = std::tanh(pre[i]);
            }
            return Vec64(std::move(out));
        }
        case InitMode::Kind::NearestVocab: {
            const Template slot = Template::slot_only();
            std::size_t best = 0;
            double best_sim = -2.0;
            for (std::size_t r = 0; r < vocab.size(); ++r) {
                const double s =
                    cosine_sim(c, encode_text(params, vocab, slot, vocab.row(r)));
                if (s > best_sim) {  // ties keep the lowest index
                    best_sim = s;
                    best = r;
                }
            }
            return vocab.row(best);
        }
        case InitMode::Kind::LinearMap: {
            Rng rng(mode.seed);
            const Mat64 q = rng.orthonormal(params.token_dim(), c.dim());
            return matvec(q, c);
        }
        case InitMode::Kind::Identity: {
            if (params.token_dim() != c.dim()) {
                throw ConfigError(
                    "init_pseudo_word: identity init needs d_tok == d_e");
            }
            return c;
        }
    }
    throw ConfigError("init_pseudo_word: unknown init mode");
}

Trajectory grpo_run(const VisualAnchor& anchor, const TextEncoderParams& params,
                    const VocabularyTable& vocab, const Template& tmpl,
                    const GrpoConfig& config) {
    config.validate();
    Vec64 z = init_pseudo_word(anchor, vocab, params, config.init);
    const Vec64 z_init = z;
    Vec64 grad_prev = Vec64::zeros(z.dim());

    std::vector<StepRecord> steps;
    steps.reserve(config.iterations);
    for (std::size_t t = 0; t < config.iterations; ++t) {
        const double score = alignment_score(anchor, params, vocab, tmpl, z);
        const Vec64 grad = alignment_gradient(anchor, params, vocab, tmpl, z);
        const Vec64 reg = regularization_gradient(z, vocab, config.projection);
        const double rho = grad_similarity(grad, grad_prev);
        const double eta = config.adaptive ? adaptive_step(rho, config)
                                           : config.eta0;

        std::vector<double> next(z.dim());
        double next_norm_sq = 0.0;
        for (std::size_t i = 0; i < z.dim(); ++i) {
            next[i] = z[i] + eta * (grad[i] - config.lambda * reg[i]);
            next_norm_sq += next[i] * next[i];
        }
        if (!std::isfinite(next_norm_sq) ||
            next_norm_sq > kDivergenceNormBound * kDivergenceNormBound) {
            throw NonFiniteError("grpo_run: diverged at step " +
                                 std::to_string(t));
        }
        steps.push_back({t, score, norm(grad), rho, eta, norm(reg)});
        z = Vec64(std::move(next));
        grad_prev = grad;
    }
    return Trajectory{std::move(steps), z_init, z};
}

ObjectiveValue objective_value(const Vec64& z, const VisualAnchor& anchor,
                               const TextEncoderParams& params,
                               const VocabularyTable& vocab,
                               const Template& tmpl, const GrpoConfig& config) {
    const double score = alignment_score(anchor, params, vocab, tmpl, z);
    const Vec64 residual = regularization_gradient(z, vocab, config.projection);
    const double reg = 0.5 * dot(residual, residual);
    return {score, reg, score - config.lambda * reg};
}

}  // namespace gtma
