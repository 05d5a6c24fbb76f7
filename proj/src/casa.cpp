#include "veritree/casa.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "veritree/errors.hpp"

namespace veritree {

using ad::Mask;
using ad::Tensor;
using nlohmann::json;

double CasaConfig::drop_probability(double configured) const {
    const double p = dropout_is_keep_prob ? 1.0 - configured : configured;
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("dropout rate " + std::to_string(configured) +
                          " maps to drop probability outside [0, 1)");
    return p;
}

void CasaConfig::validate() const {
    if (d == 0 || h == 0 || l == 0 || heads == 0 || blocks == 0)
        throw ConfigError("model dimensions must be positive");
    if (classes != 2) throw ConfigError("classifier supports exactly 2 classes");
    if ((2 * h) % heads != 0)
        throw ConfigError("2h = " + std::to_string(2 * h) + " must be divisible by heads = " +
                          std::to_string(heads));
    drop_probability(attn_dropout);
    drop_probability(dense_dropout);
}

std::string CasaConfig::to_json() const {
    json j{{"d", d},
           {"h", h},
           {"l", l},
           {"heads", heads},
           {"blocks", blocks},
           {"classes", classes},
           {"ffn_hidden", ffn_hidden},
           {"attn_dropout", attn_dropout},
           {"dense_dropout", dense_dropout},
           {"dropout_is_keep_prob", dropout_is_keep_prob},
           {"scale_mode", scale_mode == ScaleMode::head_width ? "head_width" : "embed_dim"},
           {"encoder", encoder == EncoderKind::bilstm ? "bilstm" : "bigru"}};
    return j.dump();
}

CasaConfig CasaConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("model config: ") + e.what());
    }
    CasaConfig cfg;
    cfg.d = j.value("d", cfg.d);
    cfg.h = j.value("h", cfg.h);
    cfg.l = j.value("l", cfg.l);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.blocks = j.value("blocks", cfg.blocks);
    cfg.classes = j.value("classes", cfg.classes);
    cfg.ffn_hidden = j.value("ffn_hidden", cfg.ffn_hidden);
    cfg.attn_dropout = j.value("attn_dropout", cfg.attn_dropout);
    cfg.dense_dropout = j.value("dense_dropout", cfg.dense_dropout);
    cfg.dropout_is_keep_prob = j.value("dropout_is_keep_prob", cfg.dropout_is_keep_prob);
    const std::string sm = j.value("scale_mode", "head_width");
    if (sm == "head_width")
        cfg.scale_mode = ScaleMode::head_width;
    else if (sm == "embed_dim")
        cfg.scale_mode = ScaleMode::embed_dim;
    else
        throw ConfigError("unknown scale_mode '" + sm + "'");
    const std::string enc = j.value("encoder", "bilstm");
    if (enc == "bilstm")
        cfg.encoder = EncoderKind::bilstm;
    else if (enc == "bigru")
        cfg.encoder = EncoderKind::bigru;
    else
        throw ConfigError("unknown encoder '" + enc + "'");
    cfg.validate();
    return cfg;
}

namespace {

struct LstmState {
    Tensor h;
    Tensor c;
};

LstmState lstm_step(const Tensor& x, const LstmState& prev, const LstmDirectionParams& p,
                    std::size_t hidden) {
    // Packed gates in [i, f, g, o] order.
    Tensor z = ad::add(ad::add(ad::matmul(x, p.w_x), ad::matmul(prev.h, p.w_h)), p.b);
    auto gates = ad::split(z, 1, {hidden, hidden, hidden, hidden});
    Tensor i_gate = ad::sigmoid(gates[0]);
    Tensor f_gate = ad::sigmoid(gates[1]);
    Tensor g_gate = ad::tanh(gates[2]);
    Tensor o_gate = ad::sigmoid(gates[3]);
    LstmState next;
    next.c = ad::add(ad::mul(f_gate, prev.c), ad::mul(i_gate, g_gate));
    next.h = ad::mul(o_gate, ad::tanh(next.c));
    return next;
}

}  // namespace

ad::Tensor encode(const Tensor& seq, const Mask& mask, const EncoderParams& params,
                  const CasaConfig& cfg) {
    if (cfg.encoder == CasaConfig::EncoderKind::bigru)
        throw ConfigError("encoder 'bigru' is a config hook only; use 'bilstm'");
    const std::size_t l = seq.rows();
    if (seq.cols() != cfg.d)
        throw ShapeError("encode: input width " + std::to_string(seq.cols()) +
                         " does not match d = " + std::to_string(cfg.d));
    if (mask.size() != l)
        throw ShapeError("encode: mask length " + std::to_string(mask.size()) +
                         " does not match sequence length " + std::to_string(l));

    std::vector<std::size_t> real;
    for (std::size_t i = 0; i < l; ++i)
        if (mask[i]) real.push_back(i);

    std::vector<Tensor> fwd(l), bwd(l);
    LstmState state{Tensor::zeros({1, cfg.h}), Tensor::zeros({1, cfg.h})};
    for (std::size_t idx : real) {
        state = lstm_step(ad::row_slice(seq, idx), state, params.fwd, cfg.h);
        fwd[idx] = state.h;
    }
    state = LstmState{Tensor::zeros({1, cfg.h}), Tensor::zeros({1, cfg.h})};
    for (auto it = real.rbegin(); it != real.rend(); ++it) {
        state = lstm_step(ad::row_slice(seq, *it), state, params.bwd, cfg.h);
        bwd[*it] = state.h;
    }

    std::vector<Tensor> rows;
    rows.reserve(l);
    for (std::size_t i = 0; i < l; ++i) {
        if (mask[i])
            rows.push_back(ad::concat({fwd[i], bwd[i]}, 1));
        else
            rows.push_back(Tensor::zeros({1, cfg.rep_width()}));  // pads stay exactly zero
    }
    return ad::concat(rows, 0);
}

ad::Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                const Mask* key_mask, double divisor, Tensor* weights_out) {
    if (divisor <= 0.0) throw ConfigError("attention scaling divisor must be positive");
    if (q.cols() != k.cols())
        throw ShapeError("scaled_dot_attention: query width " + std::to_string(q.cols()) +
                         " does not match key width " + std::to_string(k.cols()));
    if (k.rows() != v.rows())
        throw ShapeError("scaled_dot_attention: key count " + std::to_string(k.rows()) +
                         " does not match value count " + std::to_string(v.rows()));
    Tensor scores = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(divisor));
    Tensor attn = ad::softmax_masked(scores, key_mask);
    if (weights_out) *weights_out = attn;
    return ad::matmul(attn, v);
}

ad::Tensor multi_head(const Tensor& q, const Tensor& k, const Tensor& v,
                      const AttentionBlockParams& params, const Mask* key_mask,
                      const CasaConfig& cfg, const ForwardOptions& opts,
                      std::vector<double>* weights_avg_out) {
    if (params.heads.empty()) throw ConfigError("multi_head: no head parameters");
    const double attn_drop = cfg.drop_probability(cfg.attn_dropout);
    if (opts.training && attn_drop > 0.0 && opts.rng == nullptr)
        throw ConfigError("multi_head: training with dropout requires an RNG");

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(params.heads.size());
    std::vector<double> weight_acc;
    for (const auto& head : params.heads) {
        Tensor qh = ad::matmul(q, head.w_q);
        Tensor kh = ad::matmul(k, head.w_k);
        Tensor vh = ad::matmul(v, head.w_v);
        const double divisor = cfg.scale_mode == CasaConfig::ScaleMode::head_width
                                   ? static_cast<double>(qh.cols())
                                   : static_cast<double>(cfg.d);
        Tensor scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), 1.0 / std::sqrt(divisor));
        Tensor attn = ad::softmax_masked(scores, key_mask);
        if (weights_avg_out) {
            // First query row, pre-dropout: the reported distribution.
            const auto& w = attn.values();
            const std::size_t cols = attn.cols();
            if (weight_acc.empty()) weight_acc.assign(cols, 0.0);
            for (std::size_t j = 0; j < cols; ++j) weight_acc[j] += w[j];
        }
        if (opts.training && attn_drop > 0.0)
            attn = ad::dropout(attn, attn_drop, *opts.rng, true);
        head_outputs.push_back(ad::matmul(attn, vh));
    }
    if (weights_avg_out) {
        for (auto& x : weight_acc) x /= static_cast<double>(params.heads.size());
        *weights_avg_out = std::move(weight_acc);
    }
    Tensor merged = head_outputs.size() == 1 ? head_outputs[0] : ad::concat(head_outputs, 1);
    return ad::matmul(merged, params.w_o);
}

ad::Tensor feed_forward(const Tensor& x, const AttentionBlockParams& params, const CasaConfig& cfg,
                        const ForwardOptions& opts) {
    const double dense_drop = cfg.drop_probability(cfg.dense_dropout);
    if (opts.training && dense_drop > 0.0 && opts.rng == nullptr)
        throw ConfigError("feed_forward: training with dropout requires an RNG");
    Tensor hidden = ad::relu(ad::add_bias(ad::matmul(x, params.ffn_w1), params.ffn_b1));
    if (opts.training && dense_drop > 0.0) hidden = ad::dropout(hidden, dense_drop, *opts.rng, true);
    return ad::add_bias(ad::matmul(hidden, params.ffn_w2), params.ffn_b2);
}

CoAttendResult co_attend(const Tensor& r_evidence, const Mask& evidence_mask,
                         const Tensor& r_claim, const Mask& claim_mask,
                         const std::vector<AttentionBlockParams>& claim_branch,
                         const std::vector<AttentionBlockParams>& evidence_branch,
                         const CasaConfig& cfg, const ForwardOptions& opts,
                         AttentionTrace* trace) {
    if (claim_branch.empty() || evidence_branch.empty())
        throw ConfigError("co_attend: both branches need at least one block");

    CoAttendResult out;

    // Branch 1: evidence pool queries the claim sequence.
    Tensor query = ad::max_pool_positions(r_evidence, evidence_mask);
    for (std::size_t b = 0; b < claim_branch.size(); ++b) {
        const bool last = b + 1 == claim_branch.size();
        std::vector<double>* weights = (last && trace) ? &trace->claim_weights : nullptr;
        Tensor attended =
            multi_head(query, r_claim, r_claim, claim_branch[b], &claim_mask, cfg, opts, weights);
        query = feed_forward(attended, claim_branch[b], cfg, opts);
    }
    out.claim_vec = query;  // C

    // Branch 2: the interacted claim queries the evidence sequence.
    for (std::size_t b = 0; b < evidence_branch.size(); ++b) {
        const bool last = b + 1 == evidence_branch.size();
        std::vector<double>* weights = (last && trace) ? &trace->evidence_weights : nullptr;
        Tensor attended = multi_head(query, r_evidence, r_evidence, evidence_branch[b],
                                     &evidence_mask, cfg, opts, weights);
        query = feed_forward(attended, evidence_branch[b], cfg, opts);
    }
    out.evidence_vec = query;  // E
    return out;
}

ad::Tensor fuse_and_classify(const Tensor& evidence_vec, const Tensor& claim_vec,
                             const ClassifierParams& params, const CasaConfig& cfg) {
    const std::size_t width = cfg.rep_width();
    if (evidence_vec.rows() != 1 || evidence_vec.cols() != width || claim_vec.rows() != 1 ||
        claim_vec.cols() != width)
        throw ShapeError("fuse_and_classify: expected 1x" + std::to_string(width) + " vectors");
    if (params.w_p.rows() != 4 * width || params.w_p.cols() != cfg.classes)
        throw ShapeError("fuse_and_classify: classifier expects input width " +
                         std::to_string(params.w_p.rows()) + ", fusion width is " +
                         std::to_string(4 * width));
    Tensor fused = ad::concat({evidence_vec, ad::abs(ad::sub(evidence_vec, claim_vec)),
                               ad::mul(evidence_vec, claim_vec), claim_vec},
                              1);
    Tensor logits = ad::add_bias(ad::matmul(fused, params.w_p), params.b_p);
    return ad::softmax_masked(logits, nullptr);
}

ad::Tensor cross_entropy(const Tensor& probs, const std::vector<double>& one_hot) {
    if (probs.size() != one_hot.size())
        throw ShapeError("cross_entropy: label width " + std::to_string(one_hot.size()) +
                         " does not match probability width " + std::to_string(probs.size()));
    Tensor y = Tensor::row(one_hot);
    return ad::scale(ad::sum(ad::mul(y, ad::log(probs))), -1.0);
}

ad::Tensor cross_entropy(const Tensor& probs, std::size_t true_class) {
    if (true_class >= probs.size())
        throw ShapeError("cross_entropy: class index out of range");
    std::vector<double> one_hot(probs.size(), 0.0);
    one_hot[true_class] = 1.0;
    return cross_entropy(probs, one_hot);
}

// ---------------------------------------------------------------------------
// Model

CasaModel::CasaModel(CasaConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(derive_seed(seed, 1)) {
    cfg_.validate();
    if (cfg_.encoder == CasaConfig::EncoderKind::bigru)
        throw ConfigError("encoder 'bigru' is a config hook only; use 'bilstm'");

    Rng init_rng(derive_seed(seed, 0));
    auto uniform_param = [&](const std::string& name, std::size_t rows, std::size_t cols,
                             std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<double> values(rows * cols);
        for (auto& v : values) v = (init_rng.next_double() * 2.0 - 1.0) * bound;
        Tensor t = Tensor::from_values({rows, cols}, std::move(values));
        t.set_requires_grad(true);
        params_.push_back({name, t});
        return t;
    };
    auto zero_param = [&](const std::string& name, std::size_t cols) {
        Tensor t = Tensor::zeros({1, cols});
        t.set_requires_grad(true);
        params_.push_back({name, t});
        return t;
    };

    auto make_direction = [&](const std::string& prefix) {
        LstmDirectionParams p;
        p.w_x = uniform_param(prefix + ".w_x", cfg_.d, 4 * cfg_.h, cfg_.d);
        p.w_h = uniform_param(prefix + ".w_h", cfg_.h, 4 * cfg_.h, cfg_.h);
        p.b = zero_param(prefix + ".b", 4 * cfg_.h);
        // Forget-gate bias starts at 1 (gate order [i, f, g, o]).
        auto& b = p.b.mutable_values();
        for (std::size_t i = cfg_.h; i < 2 * cfg_.h; ++i) b[i] = 1.0;
        return p;
    };
    enc_claim_ = {make_direction("claim_encoder.fwd"), make_direction("claim_encoder.bwd")};
    enc_evidence_ = {make_direction("evidence_encoder.fwd"),
                     make_direction("evidence_encoder.bwd")};

    const std::size_t w = cfg_.rep_width();
    const std::size_t head_w = cfg_.head_width();
    const std::size_t f = cfg_.ffn_width();
    auto make_branch = [&](const std::string& branch, std::vector<AttentionBlockParams>& out) {
        for (std::size_t b = 0; b < cfg_.blocks; ++b) {
            AttentionBlockParams block;
            const std::string bp = branch + "." + std::to_string(b);
            for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
                const std::string hp = bp + ".head" + std::to_string(hd);
                HeadParams head;
                head.w_q = uniform_param(hp + ".w_q", w, head_w, w);
                head.w_k = uniform_param(hp + ".w_k", w, head_w, w);
                head.w_v = uniform_param(hp + ".w_v", w, head_w, w);
                block.heads.push_back(head);
            }
            block.w_o = uniform_param(bp + ".w_o", w, w, w);
            block.ffn_w1 = uniform_param(bp + ".ffn_w1", w, f, w);
            block.ffn_b1 = zero_param(bp + ".ffn_b1", f);
            block.ffn_w2 = uniform_param(bp + ".ffn_w2", f, w, f);
            block.ffn_b2 = zero_param(bp + ".ffn_b2", w);
            out.push_back(std::move(block));
        }
    };
    make_branch("claim_branch", claim_branch_);
    make_branch("evidence_branch", evidence_branch_);

    classifier_.w_p = uniform_param("classifier.w_p", 4 * w, cfg_.classes, 4 * w);
    classifier_.b_p = zero_param("classifier.b_p", cfg_.classes);
}

ad::Tensor CasaModel::forward(const Tensor& claim_emb, const Mask& claim_mask,
                              const Tensor& evidence_emb, const Mask& evidence_mask,
                              bool training, AttentionTrace* trace) {
    ForwardOptions opts;
    opts.training = training;
    opts.rng = &rng_;
    Tensor r_claim = encode(claim_emb, claim_mask, enc_claim_, cfg_);
    Tensor r_evidence = encode(evidence_emb, evidence_mask, enc_evidence_, cfg_);
    CoAttendResult co = co_attend(r_evidence, evidence_mask, r_claim, claim_mask, claim_branch_,
                                  evidence_branch_, cfg_, opts, trace);
    return fuse_and_classify(co.evidence_vec, co.claim_vec, classifier_, cfg_);
}

void CasaModel::zero_grads() {
    for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<std::vector<double>> CasaModel::snapshot_weights() const {
    std::vector<std::vector<double>> snap;
    snap.reserve(params_.size());
    for (const auto& p : params_) snap.push_back(p.tensor.values());
    return snap;
}

void CasaModel::restore_weights(const std::vector<std::vector<double>>& snapshot) {
    if (snapshot.size() != params_.size())
        throw DataError("weight snapshot does not match parameter count");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (snapshot[i].size() != params_[i].tensor.size())
            throw DataError("weight snapshot shape mismatch at '" + params_[i].name + "'");
        params_[i].tensor.mutable_values() = snapshot[i];
    }
}

void CasaModel::save(const std::string& base_path, const std::string& extra_json) const {
    json config;
    config["casa"] = json::parse(cfg_.to_json());
    config["extra"] = extra_json.empty() ? json(nullptr) : json::parse(extra_json);
    ad::save_checkpoint(base_path, params_, config.dump());
}

CasaModel CasaModel::load(const std::string& base_path, std::string* extra_json_out) {
    ad::Checkpoint ckpt = ad::load_checkpoint(base_path);
    if (ckpt.config_json.empty())
        throw DataError(base_path + ": checkpoint carries no model config");
    json config = json::parse(ckpt.config_json);
    if (!config.contains("casa"))
        throw DataError(base_path + ": checkpoint config has no 'casa' section");
    CasaConfig cfg = CasaConfig::from_json(config.at("casa").dump());
    if (extra_json_out) {
        *extra_json_out =
            config.contains("extra") && !config.at("extra").is_null() ? config.at("extra").dump()
                                                                      : std::string{};
    }

    CasaModel model(cfg, 0);
    if (ckpt.params.size() != model.params_.size())
        throw DataError(base_path + ": checkpoint has " + std::to_string(ckpt.params.size()) +
                        " parameters, model expects " + std::to_string(model.params_.size()));
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        const auto& stored = ckpt.params[i];
        auto& live = model.params_[i];
        if (stored.name != live.name)
            throw DataError(base_path + ": parameter order mismatch ('" + stored.name + "' vs '" +
                            live.name + "')");
        if (stored.tensor.shape() != live.tensor.shape())
            throw DataError(base_path + ": shape mismatch for parameter '" + stored.name + "'");
        live.tensor.mutable_values() = stored.tensor.values();
    }
    return model;
}

}  // namespace veritree
