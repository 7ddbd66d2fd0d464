#include "gtma/encoder.hpp"

#include <cmath>
#include <unordered_set>

namespace gtma {

namespace {

// Mean pooling of the template's token rows with z in the slot.
Vec64 pooled_tokens(const VocabularyTable& vocab, const Template& tmpl,
                    const Vec64& pseudo_word) {
    if (pseudo_word.dim() != vocab.token_dim()) {
        throw DimMismatchError("encode_text: pseudo-word dim vs token dim");
    }
    tmpl.validate_against(vocab.size());
    std::vector<double> pool(pseudo_word.values());
    const auto& ids = tmpl.token_ids();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i == tmpl.slot_position()) continue;
        for (std::size_t c = 0; c < pool.size(); ++c) {
            pool[c] += vocab.embeddings().at(ids[i], c);
        }
    }
    const double inv_len = 1.0 / static_cast<double>(ids.size());
    for (double& x : pool) x *= inv_len;
    return Vec64(std::move(pool));
}

// Joint-space image of the pooled vector before normalization.
Vec64 apply_mode(const TextEncoderParams& params, const Vec64& pool) {
    switch (params.mode()) {
        case EncoderMode::MeanPoolIdentity:
            return pool;
        case EncoderMode::MeanPoolProjected:
            return matvec(*params.projection(), pool);
        case EncoderMode::OneHiddenMlp: {
            Vec64 hidden = matvec(*params.hidden_w1(), pool);
            std::vector<double> activated(hidden.dim());
            for (std::size_t i = 0; i < hidden.dim(); ++i) {
                activated[i] = std::tanh(hidden[i]);
            }
            return matvec(*params.hidden_w2(), Vec64(std::move(activated)));
        }
    }
    throw ConfigError("encode_text: unknown encoder mode");
}

// J^T v for the mode map evaluated at the pooled vector.
Vec64 mode_jacobian_transposed(const TextEncoderParams& params,
                               const Vec64& pool, const Vec64& v) {
    switch (params.mode()) {
        case EncoderMode::MeanPoolIdentity:
            return v;
        case EncoderMode::MeanPoolProjected:
            return matvec_transposed(*params.projection(), v);
        case EncoderMode::OneHiddenMlp: {
            const Vec64 hidden = matvec(*params.hidden_w1(), pool);
            Vec64 back = matvec_transposed(*params.hidden_w2(), v);
            std::vector<double> gated(back.dim());
            for (std::size_t i = 0; i < back.dim(); ++i) {
                const double t = std::tanh(hidden[i]);
                gated[i] = (1.0 - t * t) * back[i];
            }
            return matvec_transposed(*params.hidden_w1(),
                                     Vec64(std::move(gated)));
        }
    }
    throw ConfigError("alignment_gradient: unknown encoder mode");
}

}  // namespace

VocabularyTable::VocabularyTable(Mat64 embeddings,
                                 std::vector<std::string> token_names)
    : embeddings_(std::move(embeddings)), token_names_(std::move(token_names)) {
    if (embeddings_.rows() < 2) {
        throw ConfigError("VocabularyTable: needs at least 2 tokens");
    }
    if (token_names_.size() != embeddings_.rows()) {
        throw DimMismatchError("VocabularyTable: name count vs row count");
    }
    std::unordered_set<std::string> seen;
    for (const auto& name : token_names_) {
        if (!seen.insert(name).second) {
            throw ConfigError("VocabularyTable: duplicate token name '" + name +
                              "'");
        }
    }
}

Template::Template(std::vector<std::size_t> token_ids,
                   std::size_t slot_position)
    : token_ids_(std::move(token_ids)), slot_position_(slot_position) {
    if (token_ids_.empty()) {
        throw ConfigError("Template: length must be >= 1");
    }
    if (slot_position_ >= token_ids_.size()) {
        throw ConfigError("Template: slot position out of range");
    }
}

Template Template::slot_only() { return Template({0}, 0); }

void Template::validate_against(std::size_t vocab_size) const {
    for (std::size_t i = 0; i < token_ids_.size(); ++i) {
        if (i == slot_position_) continue;
        if (token_ids_[i] >= vocab_size) {
            throw ConfigError("Template: token id " +
                              std::to_string(token_ids_[i]) +
                              " outside vocabulary");
        }
    }
}

std::string encoder_mode_name(EncoderMode mode) {
    switch (mode) {
        case EncoderMode::MeanPoolIdentity:
            return "mean_pool_identity";
        case EncoderMode::MeanPoolProjected:
            return "mean_pool_projected";
        case EncoderMode::OneHiddenMlp:
            return "one_hidden_mlp";
    }
    throw ConfigError("unknown encoder mode");
}

EncoderMode encoder_mode_from_name(const std::string& name) {
    if (name == "mean_pool_identity") return EncoderMode::MeanPoolIdentity;
    if (name == "mean_pool_projected") return EncoderMode::MeanPoolProjected;
    if (name == "one_hidden_mlp") return EncoderMode::OneHiddenMlp;
    throw ConfigError("unknown encoder mode '" + name + "'");
}

TextEncoderParams TextEncoderParams::mean_pool_identity(std::size_t dim) {
    if (dim == 0) throw ConfigError("encoder: dim must be >= 1");
    TextEncoderParams p;
    p.mode_ = EncoderMode::MeanPoolIdentity;
    p.token_dim_ = dim;
    p.joint_dim_ = dim;
    return p;
}

TextEncoderParams TextEncoderParams::mean_pool_projected(Mat64 projection) {
    TextEncoderParams p;
    p.mode_ = EncoderMode::MeanPoolProjected;
    p.token_dim_ = projection.cols();
    p.joint_dim_ = projection.rows();
    p.projection_ = std::move(projection);
    return p;
}

TextEncoderParams TextEncoderParams::one_hidden_mlp(Mat64 w1, Mat64 w2) {
    if (w2.cols() != w1.rows()) {
        throw DimMismatchError("encoder MLP: w2 cols must equal w1 rows");
    }
    TextEncoderParams p;
    p.mode_ = EncoderMode::OneHiddenMlp;
    p.token_dim_ = w1.cols();
    p.joint_dim_ = w2.rows();
    p.hidden_w1_ = std::move(w1);
    p.hidden_w2_ = std::move(w2);
    return p;
}

AttentionParams::AttentionParams(Mat64 w_q, Mat64 w_k)
    : w_q_(std::move(w_q)), w_k_(std::move(w_k)) {
    if (w_q_.rows() != w_k_.rows() || w_q_.cols() != w_k_.cols()) {
        throw DimMismatchError("AttentionParams: W_q and W_k shapes differ");
    }
}

VisualAnchor::VisualAnchor(Vec64 direction, bool purified)
    : direction_(std::move(direction)), purified_(purified) {
    if (std::abs(norm(direction_) - 1.0) > 1e-10) {
        throw ConfigError("VisualAnchor: direction must be unit norm");
    }
}

Vec64 encode_text(const TextEncoderParams& params, const VocabularyTable& vocab,
                  const Template& tmpl, const Vec64& pseudo_word) {
    if (vocab.token_dim() != params.token_dim()) {
        throw DimMismatchError("encode_text: vocab token dim vs encoder");
    }
    const Vec64 pool = pooled_tokens(vocab, tmpl, pseudo_word);
    return l2_normalize(apply_mode(params, pool));
}

double alignment_score(const VisualAnchor& anchor,
                       const TextEncoderParams& params,
                       const VocabularyTable& vocab, const Template& tmpl,
                       const Vec64& pseudo_word) {
    return cosine_sim(anchor.direction(),
                      encode_text(params, vocab, tmpl, pseudo_word));
}

Vec64 alignment_gradient(const VisualAnchor& anchor,
                         const TextEncoderParams& params,
                         const VocabularyTable& vocab, const Template& tmpl,
                         const Vec64& pseudo_word) {
    if (vocab.token_dim() != params.token_dim()) {
        throw DimMismatchError("alignment_gradient: vocab token dim vs encoder");
    }
    const Vec64 pool = pooled_tokens(vocab, tmpl, pseudo_word);
    const Vec64 joint = apply_mode(params, pool);
    const double joint_norm = norm(joint);
    if (joint_norm <= kNormEpsilon) {
        throw ZeroVectorError("alignment_gradient: encoded vector vanished");
    }
    const Vec64& c = anchor.direction();
    if (c.dim() != joint.dim()) {
        throw DimMismatchError("alignment_gradient: anchor dim vs joint dim");
    }
    const double anchor_norm = norm(c);
    // d/du of cos(c, u): c/(|c||u|) - (c.u) u/(|c||u|^3)
    const double inv = 1.0 / (anchor_norm * joint_norm);
    const double along = dot(c, joint) / (anchor_norm * joint_norm * joint_norm *
                                          joint_norm);
    std::vector<double> dS_du(joint.dim());
    for (std::size_t i = 0; i < joint.dim(); ++i) {
        dS_du[i] = c[i] * inv - joint[i] * along;
    }
    const Vec64 back =
        mode_jacobian_transposed(params, pool, Vec64(std::move(dS_du)));
    return scale(back, 1.0 / static_cast<double>(tmpl.length()));
}

Vec64 global_context(const PatchFeatures& patches) {
    std::vector<double> mean(patches.dim(), 0.0);
    for (std::size_t i = 0; i < patches.count(); ++i) {
        for (std::size_t c = 0; c < patches.dim(); ++c) {
            mean[c] += patches.matrix().at(i, c);
        }
    }
    const double inv = 1.0 / static_cast<double>(patches.count());
    for (double& x : mean) x *= inv;
    return Vec64(std::move(mean));
}

Vec64 attention_weights(const PatchFeatures& patches,
                        const AttentionParams& attn) {
    if (attn.feature_dim() != patches.dim()) {
        throw DimMismatchError("attention_weights: patch dim vs W shapes");
    }
    const Vec64 query = matvec(attn.w_q(), global_context(patches));
    const double inv_sqrt_dk =
        1.0 / std::sqrt(static_cast<double>(attn.key_dim()));
    std::vector<double> scores(patches.count());
    for (std::size_t i = 0; i < patches.count(); ++i) {
        const Vec64 key = matvec(attn.w_k(), patches.patch(i));
        scores[i] = dot(query, key) * inv_sqrt_dk;
    }
    return softmax(Vec64(std::move(scores)));
}

VisualAnchor refine_anchor(const PatchFeatures& patches,
                           const AttentionParams& attn) {
    const Vec64 weights = attention_weights(patches, attn);
    std::vector<double> combined(patches.dim(), 0.0);
    for (std::size_t i = 0; i < patches.count(); ++i) {
        const double w = weights[i];
        for (std::size_t c = 0; c < patches.dim(); ++c) {
            combined[c] += w * patches.matrix().at(i, c);
        }
    }
    return VisualAnchor(l2_normalize(Vec64(std::move(combined))), true);
}

VisualAnchor raw_anchor(const PatchFeatures& patches) {
    return VisualAnchor(l2_normalize(global_context(patches)), false);
}

}  // namespace gtma
