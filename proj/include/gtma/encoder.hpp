#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gtma/numeric.hpp"

namespace gtma {

// Table of known word embeddings; rows are the regularization manifold.
class VocabularyTable {
public:
    VocabularyTable(Mat64 embeddings, std::vector<std::string> token_names);

    std::size_t size() const noexcept { return embeddings_.rows(); }
    std::size_t token_dim() const noexcept { return embeddings_.cols(); }
    const Mat64& embeddings() const noexcept { return embeddings_; }
    Vec64 row(std::size_t i) const { return embeddings_.row(i); }
    const std::vector<std::string>& token_names() const noexcept {
        return token_names_;
    }

private:
    Mat64 embeddings_;
    std::vector<std::string> token_names_;
};

// Token-id sequence with exactly one pseudo-word slot. The id stored at the
// slot position is ignored.
class Template {
public:
    Template(std::vector<std::size_t> token_ids, std::size_t slot_position);

    static Template slot_only();

    std::size_t length() const noexcept { return token_ids_.size(); }
    std::size_t slot_position() const noexcept { return slot_position_; }
    const std::vector<std::size_t>& token_ids() const noexcept {
        return token_ids_;
    }
    void validate_against(std::size_t vocab_size) const;

private:
    std::vector<std::size_t> token_ids_;
    std::size_t slot_position_;
};

enum class EncoderMode { MeanPoolIdentity, MeanPoolProjected, OneHiddenMlp };

std::string encoder_mode_name(EncoderMode mode);
EncoderMode encoder_mode_from_name(const std::string& name);

// Toy differentiable text encoder: gather token embeddings, mean-pool over
// the sequence, map to joint space, L2-normalize. The map is the identity,
// a fixed linear projection, or a one-hidden-layer tanh MLP.
class TextEncoderParams {
public:
    static TextEncoderParams mean_pool_identity(std::size_t dim);
    static TextEncoderParams mean_pool_projected(Mat64 projection);
    static TextEncoderParams one_hidden_mlp(Mat64 w1, Mat64 w2);

    EncoderMode mode() const noexcept { return mode_; }
    std::size_t token_dim() const noexcept { return token_dim_; }
    std::size_t joint_dim() const noexcept { return joint_dim_; }

    // Present for MeanPoolProjected only.
    const std::optional<Mat64>& projection() const noexcept {
        return projection_;
    }
    // Present for OneHiddenMlp only.
    const std::optional<Mat64>& hidden_w1() const noexcept { return hidden_w1_; }
    const std::optional<Mat64>& hidden_w2() const noexcept { return hidden_w2_; }

private:
    TextEncoderParams() = default;

    EncoderMode mode_ = EncoderMode::MeanPoolIdentity;
    std::size_t token_dim_ = 0;
    std::size_t joint_dim_ = 0;
    std::optional<Mat64> projection_;
    std::optional<Mat64> hidden_w1_;
    std::optional<Mat64> hidden_w2_;
};

// Patch feature matrix F (M x d_e), one row per patch.
class PatchFeatures {
public:
    explicit PatchFeatures(Mat64 features) : features_(std::move(features)) {}

    std::size_t count() const noexcept { return features_.rows(); }
    std::size_t dim() const noexcept { return features_.cols(); }
    const Mat64& matrix() const noexcept { return features_; }
    Vec64 patch(std::size_t i) const { return features_.row(i); }

private:
    Mat64 features_;
};

// Query/key projections for anchor purification.
class AttentionParams {
public:
    AttentionParams(Mat64 w_q, Mat64 w_k);

    std::size_t key_dim() const noexcept { return w_q_.rows(); }
    std::size_t feature_dim() const noexcept { return w_q_.cols(); }
    const Mat64& w_q() const noexcept { return w_q_; }
    const Mat64& w_k() const noexcept { return w_k_; }

private:
    Mat64 w_q_;
    Mat64 w_k_;
};

// Unit-norm joint-space embedding of an image, optionally purified by
// attention over its patches.
class VisualAnchor {
public:
    VisualAnchor(Vec64 direction, bool purified);

    const Vec64& direction() const noexcept { return direction_; }
    bool purified() const noexcept { return purified_; }

private:
    Vec64 direction_;
    bool purified_;
};

// T(P(z)): token gather with the slot replaced by z, mean pool, mode map,
// L2 normalization. Output is unit norm in joint space.
Vec64 encode_text(const TextEncoderParams& params, const VocabularyTable& vocab,
                  const Template& tmpl, const Vec64& pseudo_word);

// Cosine similarity between the anchor and the encoded template.
double alignment_score(const VisualAnchor& anchor,
                       const TextEncoderParams& params,
                       const VocabularyTable& vocab, const Template& tmpl,
                       const Vec64& pseudo_word);

// Closed-form gradient of alignment_score with respect to the pseudo-word,
// chained through mean pooling, the mode map, and cosine normalization.
Vec64 alignment_gradient(const VisualAnchor& anchor,
                         const TextEncoderParams& params,
                         const VocabularyTable& vocab, const Template& tmpl,
                         const Vec64& pseudo_word);

// Arithmetic mean of patch rows.
Vec64 global_context(const PatchFeatures& patches);

// Attention weights of the purification step (softmax over scaled scores of
// the global context query against projected patch keys).
Vec64 attention_weights(const PatchFeatures& patches,
                        const AttentionParams& attn);

// Purified anchor: normalized attention-weighted combination of patches.
VisualAnchor refine_anchor(const PatchFeatures& patches,
                           const AttentionParams& attn);

// Unrefined anchor: normalized mean of patches.
VisualAnchor raw_anchor(const PatchFeatures& patches);

}  // namespace gtma
