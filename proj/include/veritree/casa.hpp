#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "veritree/autodiff.hpp"

namespace veritree {

/// Model dimensions and switches. Desk-scale defaults; the full-scale
/// configuration (d=768, h=120, 6 heads, 4 blocks) is representable.
struct CasaConfig {
    std::size_t d = 32;       // token embedding width
    std::size_t h = 16;       // LSTM hidden units per direction
    std::size_t l = 128;      // max sequence length
    std::size_t heads = 4;    // attention heads j
    std::size_t blocks = 2;   // stacked attention blocks per branch
    std::size_t classes = 2;
    std::size_t ffn_hidden = 0;  // 0 selects 2h

    double attn_dropout = 0.2;   // on attention weights
    double dense_dropout = 0.2;  // on the FFN hidden layer
    bool dropout_is_keep_prob = false;  // reinterpret the two rates as keep-probabilities

    enum class ScaleMode { head_width, embed_dim };
    ScaleMode scale_mode = ScaleMode::head_width;  // divisor under the sqrt in attention

    enum class EncoderKind { bilstm, bigru };
    EncoderKind encoder = EncoderKind::bilstm;  // bigru is a config hook, not implemented

    std::size_t rep_width() const { return 2 * h; }
    std::size_t head_width() const { return 2 * h / heads; }  // D
    std::size_t ffn_width() const { return ffn_hidden == 0 ? 2 * h : ffn_hidden; }
    double drop_probability(double configured) const;

    void validate() const;

    std::string to_json() const;
    static CasaConfig from_json(const std::string& text);
};

/// One BiLSTM direction: packed gate weights in [i, f, g, o] order.
struct LstmDirectionParams {
    ad::Tensor w_x;  // d x 4h
    ad::Tensor w_h;  // h x 4h
    ad::Tensor b;    // 1 x 4h
};

struct EncoderParams {
    LstmDirectionParams fwd;
    LstmDirectionParams bwd;
};

struct HeadParams {
    ad::Tensor w_q, w_k, w_v;  // 2h x D
};

struct AttentionBlockParams {
    std::vector<HeadParams> heads;
    ad::Tensor w_o;                          // 2h x 2h
    ad::Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // 2h x f, 1 x f, f x 2h, 1 x 2h
};

struct ClassifierParams {
    ad::Tensor w_p;  // 8h x classes
    ad::Tensor b_p;  // 1 x classes
};

struct ForwardOptions {
    bool training = false;
    Rng* rng = nullptr;  // consulted only when training with nonzero dropout
};

/// Head-averaged final-block attention weights of both branches, recorded
/// for explanation reports. Each vector has one entry per key position.
struct AttentionTrace {
    std::vector<double> claim_weights;
    std::vector<double> evidence_weights;
};

/// BiLSTM over the real positions of an embedded sequence; rows are
/// [forward ; backward] states and pad rows are exactly zero. Output l x 2h.
ad::Tensor encode(const ad::Tensor& seq, const ad::Mask& mask, const EncoderParams& params,
                  const CasaConfig& cfg);

/// softmax(Q K^T / sqrt(divisor)) V with masked key positions excluded.
/// Throws DataError when every key position is masked. When weights_out is
/// non-null it receives the m x l attention distribution.
ad::Tensor scaled_dot_attention(const ad::Tensor& q, const ad::Tensor& k, const ad::Tensor& v,
                                const ad::Mask* key_mask, double divisor,
                                ad::Tensor* weights_out = nullptr);

/// Per-head projected attention, concatenated and projected by W^o.
/// When weights_avg_out is non-null it receives the head-averaged weights
/// for the first query row.
ad::Tensor multi_head(const ad::Tensor& q, const ad::Tensor& k, const ad::Tensor& v,
                      const AttentionBlockParams& params, const ad::Mask* key_mask,
                      const CasaConfig& cfg, const ForwardOptions& opts,
                      std::vector<double>* weights_avg_out = nullptr);

/// FFN(x) = relu(x W1 + b1) W2 + b2, with dense dropout on the hidden layer.
ad::Tensor feed_forward(const ad::Tensor& x, const AttentionBlockParams& params,
                        const CasaConfig& cfg, const ForwardOptions& opts);

struct CoAttendResult {
    ad::Tensor claim_vec;     // C, 1 x 2h
    ad::Tensor evidence_vec;  // E, 1 x 2h
};

/// Branch 1 seeds Q with the masked max-pool of R_e and re-attends it over
/// K = V = R_c for `blocks` blocks (FFN after each), producing C. Branch 2
/// repeats with Q0 = C over K = V = R_e, producing E.
CoAttendResult co_attend(const ad::Tensor& r_evidence, const ad::Mask& evidence_mask,
                         const ad::Tensor& r_claim, const ad::Mask& claim_mask,
                         const std::vector<AttentionBlockParams>& claim_branch,
                         const std::vector<AttentionBlockParams>& evidence_branch,
                         const CasaConfig& cfg, const ForwardOptions& opts,
                         AttentionTrace* trace = nullptr);

/// EC = [E ; |E - C| ; E ⊙ C ; C]  (1 x 8h), then softmax(EC W_p + b_p).
ad::Tensor fuse_and_classify(const ad::Tensor& evidence_vec, const ad::Tensor& claim_vec,
                             const ClassifierParams& params, const CasaConfig& cfg);

/// Cross-entropy -sum(y log p) with the probability floor of ad::log.
ad::Tensor cross_entropy(const ad::Tensor& probs, const std::vector<double>& one_hot);
ad::Tensor cross_entropy(const ad::Tensor& probs, std::size_t true_class);

/// The full co-attention verifier; owns parameters and the dropout stream.
class CasaModel {
public:
    CasaModel(CasaConfig cfg, std::uint64_t seed);

    CasaModel(const CasaModel&) = delete;
    CasaModel& operator=(const CasaModel&) = delete;
    CasaModel(CasaModel&&) = default;
    CasaModel& operator=(CasaModel&&) = default;

    const CasaConfig& config() const { return cfg_; }
    std::vector<ad::Parameter>& parameters() { return params_; }
    const std::vector<ad::Parameter>& parameters() const { return params_; }

    /// Probabilities (1 x classes) for one claim/evidence pair.
    ad::Tensor forward(const ad::Tensor& claim_emb, const ad::Mask& claim_mask,
                       const ad::Tensor& evidence_emb, const ad::Mask& evidence_mask,
                       bool training, AttentionTrace* trace = nullptr);

    void zero_grads();

    /// Weight snapshot/restore for early stopping.
    std::vector<std::vector<double>> snapshot_weights() const;
    void restore_weights(const std::vector<std::vector<double>>& snapshot);

    void save(const std::string& base_path, const std::string& extra_json) const;
    static CasaModel load(const std::string& base_path, std::string* extra_json_out = nullptr);

    const EncoderParams& claim_encoder() const { return enc_claim_; }
    const EncoderParams& evidence_encoder() const { return enc_evidence_; }
    const std::vector<AttentionBlockParams>& claim_branch() const { return claim_branch_; }
    const std::vector<AttentionBlockParams>& evidence_branch() const { return evidence_branch_; }
    const ClassifierParams& classifier() const { return classifier_; }

private:
    CasaConfig cfg_;
    Rng rng_;
    EncoderParams enc_claim_, enc_evidence_;
    std::vector<AttentionBlockParams> claim_branch_, evidence_branch_;
    ClassifierParams classifier_;
    std::vector<ad::Parameter> params_;

    void register_params();
    ad::Tensor make_param(const std::string& name, std::size_t rows, std::size_t cols,
                          double init_scale);
};

}  // namespace veritree
