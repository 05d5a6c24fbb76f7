#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fd_check.hpp"
#include "test_support.hpp"
#include "veritree/casa.hpp"
#include "veritree/errors.hpp"

using namespace veritree;
using ad::Mask;
using ad::Tensor;

namespace {

CasaConfig tiny_config(std::size_t d = 4, std::size_t h = 2, std::size_t l = 3,
                       std::size_t heads = 1, std::size_t blocks = 1) {
    CasaConfig cfg;
    cfg.d = d;
    cfg.h = h;
    cfg.l = l;
    cfg.heads = heads;
    cfg.blocks = blocks;
    cfg.attn_dropout = 0.0;
    cfg.dense_dropout = 0.0;
    return cfg;
}

Tensor identity(std::size_t n) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return Tensor::from_values({n, n}, v);
}

// Independent plain-double LSTM unroll (gate order [i, f, g, o]).
std::vector<std::vector<double>> lstm_oracle(const std::vector<std::vector<double>>& xs,
                                             const std::vector<double>& w_x,
                                             const std::vector<double>& w_h,
                                             const std::vector<double>& b, std::size_t d,
                                             std::size_t h) {
    auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    std::vector<double> hprev(h, 0.0), cprev(h, 0.0);
    std::vector<std::vector<double>> out;
    for (const auto& x : xs) {
        std::vector<double> z(4 * h, 0.0);
        for (std::size_t j = 0; j < 4 * h; ++j) {
            double acc = b[j];
            for (std::size_t i = 0; i < d; ++i) acc += x[i] * w_x[i * 4 * h + j];
            for (std::size_t i = 0; i < h; ++i) acc += hprev[i] * w_h[i * 4 * h + j];
            z[j] = acc;
        }
        std::vector<double> hnext(h), cnext(h);
        for (std::size_t k = 0; k < h; ++k) {
            const double ig = sigmoid(z[k]);
            const double fg = sigmoid(z[h + k]);
            const double gg = std::tanh(z[2 * h + k]);
            const double og = sigmoid(z[3 * h + k]);
            cnext[k] = fg * cprev[k] + ig * gg;
            hnext[k] = og * std::tanh(cnext[k]);
        }
        hprev = hnext;
        cprev = cnext;
        out.push_back(hnext);
    }
    return out;
}

EncoderParams fixed_encoder(std::size_t d, std::size_t h, double scale) {
    auto fill = [&](std::size_t rows, std::size_t cols, double mult) {
        std::vector<double> v(rows * cols);
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = mult * (0.05 * static_cast<double>((i * 7 + 3) % 11) - 0.25);
        return v;
    };
    EncoderParams p;
    p.fwd.w_x = Tensor::from_values({d, 4 * h}, fill(d, 4 * h, scale));
    p.fwd.w_h = Tensor::from_values({h, 4 * h}, fill(h, 4 * h, -scale));
    p.fwd.b = Tensor::from_values({1, 4 * h}, fill(1, 4 * h, 0.5 * scale));
    p.bwd.w_x = Tensor::from_values({d, 4 * h}, fill(d, 4 * h, 0.8 * scale));
    p.bwd.w_h = Tensor::from_values({h, 4 * h}, fill(h, 4 * h, 0.6 * scale));
    p.bwd.b = Tensor::from_values({1, 4 * h}, fill(1, 4 * h, -0.4 * scale));
    return p;
}

}  // namespace

TEST_CASE("config validation") {
    CasaConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());

    cfg.heads = 3;  // 2h = 4 not divisible by 3
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    // The full-scale configuration is representable.
    CasaConfig paper;
    paper.d = 768;
    paper.h = 120;
    paper.heads = 6;
    paper.blocks = 4;
    paper.attn_dropout = 0.8;
    paper.dropout_is_keep_prob = true;  // 0.8 read as keep-probability
    CHECK_NOTHROW(paper.validate());
    CHECK(paper.head_width() == 40);
    CHECK(paper.drop_probability(paper.attn_dropout) == doctest::Approx(0.2));

    // As a drop probability 0.8 is also admissible.
    paper.dropout_is_keep_prob = false;
    CHECK(paper.drop_probability(paper.attn_dropout) == doctest::Approx(0.8));

    // Config JSON round trip.
    const CasaConfig parsed = CasaConfig::from_json(paper.to_json());
    CHECK(parsed.d == 768);
    CHECK(parsed.h == 120);
    CHECK(parsed.heads == 6);
    CHECK(parsed.blocks == 4);

    // BiGRU stays a config hook.
    CasaConfig gru = tiny_config();
    gru.encoder = CasaConfig::EncoderKind::bigru;
    CHECK_THROWS_AS(CasaModel(gru, 1), ConfigError);
}

TEST_CASE("encode: bounded outputs, zeroed pads, and width") {
    const CasaConfig cfg = tiny_config(3, 2, 4);
    EncoderParams params = fixed_encoder(3, 2, 1.0);
    // Zero biases for the boundedness check.
    params.fwd.b = Tensor::zeros({1, 8});
    params.bwd.b = Tensor::zeros({1, 8});

    const Tensor zeros_in = Tensor::zeros({4, 3});
    const Mask mask = {1, 1, 1, 0};
    const Tensor r = encode(zeros_in, mask, params, cfg);
    CHECK(r.rows() == 4);
    CHECK(r.cols() == 4);  // 2h
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(r.at(i, j) > -1.0);
            CHECK(r.at(i, j) < 1.0);
        }
    for (std::size_t j = 0; j < 4; ++j) CHECK(r.at(3, j) == 0.0);  // pad row exactly zero

    // l = 1: both directions see the same single step.
    const Tensor single = encode(Tensor::from_values({1, 3}, {0.3, -0.2, 0.4}), Mask{1},
                                 params, tiny_config(3, 2, 1));
    CHECK(single.rows() == 1);
    CHECK(single.cols() == 4);

    CHECK_THROWS_AS(encode(Tensor::zeros({4, 2}), mask, params, cfg), ShapeError);
    CHECK_THROWS_AS(encode(zeros_in, Mask{1, 1}, params, cfg), ShapeError);
}

TEST_CASE("encode matches a hand-unrolled LSTM recurrence") {
    const std::size_t d = 3, h = 2, l = 2;
    const CasaConfig cfg = tiny_config(d, h, l);
    const EncoderParams params = fixed_encoder(d, h, 1.0);

    const std::vector<std::vector<double>> xs = {{0.1, -0.2, 0.3}, {-0.4, 0.5, 0.6}};
    const Tensor input = Tensor::from_values({l, d}, {0.1, -0.2, 0.3, -0.4, 0.5, 0.6});
    const Tensor r = encode(input, Mask{1, 1}, params, cfg);

    const auto fwd = lstm_oracle(xs, params.fwd.w_x.values(), params.fwd.w_h.values(),
                                 params.fwd.b.values(), d, h);
    const auto bwd_rev = lstm_oracle({xs[1], xs[0]}, params.bwd.w_x.values(),
                                     params.bwd.w_h.values(), params.bwd.b.values(), d, h);

    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t k = 0; k < h; ++k) {
            CHECK(r.at(i, k) == doctest::Approx(fwd[i][k]).epsilon(1e-12));
            // Backward direction processed the sequence reversed.
            CHECK(r.at(i, h + k) == doctest::Approx(bwd_rev[l - 1 - i][k]).epsilon(1e-12));
        }
    }
}

TEST_CASE("scaled dot attention identities and brute force") {
    // Single key/value: output equals the value row for any query.
    {
        const Tensor q = Tensor::from_values({1, 2}, {0.3, -1.0});
        const Tensor k = Tensor::from_values({1, 2}, {2.0, 0.1});
        const Tensor v = Tensor::from_values({1, 2}, {7.0, -3.0});
        const Tensor out = scaled_dot_attention(q, k, v, nullptr, 2.0);
        CHECK(out.values() == std::vector<double>{7.0, -3.0});
    }

    // Identical keys: uniform weights, output is the mean of values.
    {
        const Tensor q = Tensor::from_values({1, 2}, {0.5, 0.5});
        const Tensor k = Tensor::from_values({3, 2}, {1.0, 2.0, 1.0, 2.0, 1.0, 2.0});
        const Tensor v = Tensor::from_values({3, 2}, {3.0, 0.0, 0.0, 3.0, 3.0, 3.0});
        const Tensor out = scaled_dot_attention(q, k, v, nullptr, 2.0);
        CHECK(out.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(out.at(0, 1) == doctest::Approx(2.0).epsilon(1e-12));
    }

    // 2 queries x 3 keys, hand-evaluated.
    {
        const std::vector<double> qv = {0.2, -0.4, 1.0, 0.3};
        const std::vector<double> kv = {0.5, 0.1, -0.3, 0.8, 0.9, -0.2};
        const std::vector<double> vv = {1.0, 2.0, -1.0, 0.5, 0.25, -0.75};
        const Tensor q = Tensor::from_values({2, 2}, qv);
        const Tensor k = Tensor::from_values({3, 2}, kv);
        const Tensor v = Tensor::from_values({3, 2}, vv);
        const double divisor = 2.0;

        Tensor weights;
        const Tensor out = scaled_dot_attention(q, k, v, nullptr, divisor, &weights);

        for (std::size_t qi = 0; qi < 2; ++qi) {
            double scores[3];
            double z = 0.0;
            for (std::size_t ki = 0; ki < 3; ++ki) {
                scores[ki] = (qv[qi * 2] * kv[ki * 2] + qv[qi * 2 + 1] * kv[ki * 2 + 1]) /
                             std::sqrt(divisor);
            }
            const double mx = std::max({scores[0], scores[1], scores[2]});
            double w[3];
            for (std::size_t ki = 0; ki < 3; ++ki) {
                w[ki] = std::exp(scores[ki] - mx);
                z += w[ki];
            }
            for (std::size_t ki = 0; ki < 3; ++ki) w[ki] /= z;
            for (std::size_t col = 0; col < 2; ++col) {
                double expected = 0.0;
                for (std::size_t ki = 0; ki < 3; ++ki) expected += w[ki] * vv[ki * 2 + col];
                CHECK(out.at(qi, col) == doctest::Approx(expected).epsilon(1e-12));
            }
            for (std::size_t ki = 0; ki < 3; ++ki)
                CHECK(weights.at(qi, ki) == doctest::Approx(w[ki]).epsilon(1e-12));
        }
    }

    // Fully masked keys are an error.
    {
        const Tensor q = Tensor::from_values({1, 2}, {1.0, 1.0});
        const Tensor k = Tensor::from_values({2, 2}, {1.0, 0.0, 0.0, 1.0});
        const Mask none = {0, 0};
        CHECK_THROWS_AS(scaled_dot_attention(q, k, k, &none, 2.0), DataError);
    }
}

TEST_CASE("multi-head reductions and shapes") {
    const std::size_t h = 2, w = 2 * h;  // 2h = 4
    const CasaConfig cfg = tiny_config(4, h, 3, 1, 1);
    const ForwardOptions opts;

    // j=1 with identity projections reduces to scaled_dot_attention.
    AttentionBlockParams block;
    block.heads.push_back({identity(w), identity(w), identity(w)});
    block.w_o = identity(w);
    block.ffn_w1 = identity(w);
    block.ffn_b1 = Tensor::zeros({1, w});
    block.ffn_w2 = identity(w);
    block.ffn_b2 = Tensor::zeros({1, w});

    Rng rng(3);
    const Tensor q = Tensor::from_values({1, w}, fd_check::bounded_values(rng, w));
    const Tensor kv = Tensor::from_values({3, w}, fd_check::bounded_values(rng, 3 * w));
    const Mask mask = {1, 1, 1};

    const Tensor via_multi = multi_head(q, kv, kv, block, &mask, cfg, opts);
    const Tensor direct = scaled_dot_attention(q, kv, kv, &mask, static_cast<double>(w));
    REQUIRE(via_multi.size() == direct.size());
    for (std::size_t i = 0; i < direct.size(); ++i)
        CHECK(via_multi.values()[i] == doctest::Approx(direct.values()[i]).epsilon(1e-12));

    // j=2: output shape stays m x 2h, and a per-head brute force agrees.
    const CasaConfig cfg2 = tiny_config(4, h, 3, 2, 1);
    AttentionBlockParams block2;
    auto mat = [&](double mult, std::size_t rows, std::size_t cols) {
        std::vector<double> v(rows * cols);
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = mult * (0.1 * static_cast<double>((i * 5 + 1) % 7) - 0.3);
        return Tensor::from_values({rows, cols}, v);
    };
    const std::size_t D = cfg2.head_width();  // 2
    block2.heads.push_back({mat(1.0, w, D), mat(-0.7, w, D), mat(0.4, w, D)});
    block2.heads.push_back({mat(0.3, w, D), mat(0.9, w, D), mat(-0.5, w, D)});
    block2.w_o = mat(0.8, w, w);
    block2.ffn_w1 = identity(w);
    block2.ffn_b1 = Tensor::zeros({1, w});
    block2.ffn_w2 = identity(w);
    block2.ffn_b2 = Tensor::zeros({1, w});

    const Tensor out2 = multi_head(q, kv, kv, block2, &mask, cfg2, opts);
    CHECK(out2.rows() == 1);
    CHECK(out2.cols() == w);

    // Brute force: project, attend per head, concat, project by w_o.
    std::vector<Tensor> heads;
    for (const auto& head : block2.heads) {
        const Tensor qh = ad::matmul(q, head.w_q);
        const Tensor kh = ad::matmul(kv, head.w_k);
        const Tensor vh = ad::matmul(kv, head.w_v);
        heads.push_back(scaled_dot_attention(qh, kh, vh, &mask, static_cast<double>(D)));
    }
    const Tensor expected = ad::matmul(ad::concat(heads, 1), block2.w_o);
    for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(out2.values()[i] == doctest::Approx(expected.values()[i]).epsilon(1e-12));
}

TEST_CASE("co-attend: widths, identity composition, pad invariance") {
    const std::size_t h = 2, w = 4;
    const CasaConfig cfg = tiny_config(4, h, 1, 1, 1);
    const ForwardOptions opts;

    AttentionBlockParams block;
    block.heads.push_back({identity(w), identity(w), identity(w)});
    block.w_o = identity(w);
    block.ffn_w1 = Tensor::from_values({w, w}, {0.2, 0, 0, 0, 0, 0.2, 0, 0,
                                                0, 0, 0.2, 0, 0, 0, 0, 0.2});
    block.ffn_b1 = Tensor::from_values({1, w}, {0.1, -0.1, 0.2, 0.0});
    block.ffn_w2 = identity(w);
    block.ffn_b2 = Tensor::from_values({1, w}, {0.05, 0.05, -0.05, 0.0});

    // Single-position sequences: branch 1 must produce FFN(claim row).
    const Tensor r_claim = Tensor::from_values({1, w}, {0.4, -0.3, 0.8, 0.1});
    const Tensor r_evidence = Tensor::from_values({1, w}, {1.0, 2.0, -1.0, 0.5});
    const Mask m1 = {1};

    const CoAttendResult co = co_attend(r_evidence, m1, r_claim, m1, {block}, {block}, cfg, opts);
    CHECK(co.claim_vec.cols() == w);
    CHECK(co.evidence_vec.cols() == w);

    const Tensor expected_c = feed_forward(r_claim, block, cfg, opts);
    for (std::size_t i = 0; i < expected_c.size(); ++i)
        CHECK(co.claim_vec.values()[i] ==
              doctest::Approx(expected_c.values()[i]).epsilon(1e-12));

    // Values at pad positions cannot influence the outputs.
    const Tensor r_claim_padded =
        Tensor::from_values({3, w}, {0.4, -0.3, 0.8, 0.1,  9.0, 9.0, 9.0, 9.0,  1.0, 1.0, 1.0, 1.0});
    const Tensor r_claim_padded_other =
        Tensor::from_values({3, w}, {0.4, -0.3, 0.8, 0.1,  -5.0, 2.0, 0.0, 3.0,  0.0, 4.0, 4.0, 4.0});
    const Mask m_pad = {1, 0, 0};
    const CoAttendResult a =
        co_attend(r_evidence, m1, r_claim_padded, m_pad, {block}, {block}, cfg, opts);
    const CoAttendResult b =
        co_attend(r_evidence, m1, r_claim_padded_other, m_pad, {block}, {block}, cfg, opts);
    CHECK(a.claim_vec.values() == b.claim_vec.values());
    CHECK(a.evidence_vec.values() == b.evidence_vec.values());
}

TEST_CASE("fuse and classify") {
    const std::size_t h = 2, w = 4;
    CasaConfig cfg = tiny_config(4, h, 3, 1, 1);

    ClassifierParams zero;
    zero.w_p = Tensor::zeros({4 * w, 2});
    zero.b_p = Tensor::zeros({1, 2});
    const Tensor e = Tensor::from_values({1, w}, {0.5, -0.25, 1.0, 0.0});

    // Zero classifier gives the uniform distribution.
    const Tensor uniform = fuse_and_classify(e, e, zero, cfg);
    CHECK(uniform.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(uniform.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(uniform.at(0, 0) + uniform.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));

    // Hand-computed fixture: W_p picks the |E-C| block's first element for
    // class 0 and the ExC block's second element for class 1.
    const Tensor c = Tensor::from_values({1, w}, {0.1, 0.15, 0.5, -1.0});
    ClassifierParams params;
    std::vector<double> wp(4 * w * 2, 0.0);
    wp[(w + 0) * 2 + 0] = 2.0;      // |E-C|[0] -> logit 0
    wp[(2 * w + 1) * 2 + 1] = 3.0;  // (E.C)[1] -> logit 1
    params.w_p = Tensor::from_values({4 * w, 2}, wp);
    params.b_p = Tensor::from_values({1, 2}, {0.1, -0.2});

    const double logit0 = 2.0 * std::fabs(0.5 - 0.1) + 0.1;         // 0.9
    const double logit1 = 3.0 * (-0.25 * 0.15) - 0.2;               // -0.3125
    const double z = std::exp(logit0) + std::exp(logit1);
    const Tensor p = fuse_and_classify(e, c, params, cfg);
    CHECK(p.at(0, 0) == doctest::Approx(std::exp(logit0) / z).epsilon(1e-12));
    CHECK(p.at(0, 1) == doctest::Approx(std::exp(logit1) / z).epsilon(1e-12));

    // E = C zeroes the |E-C| block: logit 0 becomes just the bias.
    const Tensor p_same = fuse_and_classify(c, c, params, cfg);
    const double same0 = 0.1;
    const double same1 = 3.0 * (0.15 * 0.15) - 0.2;
    const double zz = std::exp(same0) + std::exp(same1);
    CHECK(p_same.at(0, 0) == doctest::Approx(std::exp(same0) / zz).epsilon(1e-12));

    // Wrong widths are rejected.
    const Tensor narrow = Tensor::from_values({1, 2}, {1.0, 2.0});
    CHECK_THROWS_AS(fuse_and_classify(narrow, narrow, params, cfg), ShapeError);
    ClassifierParams badw;
    badw.w_p = Tensor::zeros({3 * w, 2});
    badw.b_p = Tensor::zeros({1, 2});
    CHECK_THROWS_AS(fuse_and_classify(e, c, badw, cfg), ShapeError);
}

TEST_CASE("cross entropy") {
    const Tensor certain = Tensor::row({1.0, 0.0});
    CHECK(cross_entropy(certain, 0).item() == doctest::Approx(0.0).epsilon(1e-9));

    const Tensor uniform = Tensor::row({0.5, 0.5});
    CHECK(cross_entropy(uniform, 1).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    const Tensor skewed = Tensor::row({0.9, 0.1});
    CHECK(cross_entropy(skewed, 1).item() == doctest::Approx(-std::log(0.1)).epsilon(1e-9));
    CHECK(cross_entropy(skewed, 1).item() == doctest::Approx(2.3026).epsilon(1e-4));

    CHECK_THROWS_AS(cross_entropy(skewed, 5), ShapeError);
}

TEST_CASE("model determinism, dropout behavior, and checkpoint round trip") {
    CasaConfig cfg = tiny_config(4, 2, 3, 2, 1);
    cfg.attn_dropout = 0.3;
    cfg.dense_dropout = 0.3;

    Rng rng(21);
    const Tensor claim = Tensor::from_values({3, 4}, fd_check::bounded_values(rng, 12, 0.0));
    const Tensor evidence = Tensor::from_values({3, 4}, fd_check::bounded_values(rng, 12, 0.0));
    const Mask mask = {1, 1, 0};

    // Same seed, same init, identical eval forwards.
    CasaModel m1(cfg, 77);
    CasaModel m2(cfg, 77);
    const Tensor p1 = m1.forward(claim, mask, evidence, mask, false);
    const Tensor p2 = m2.forward(claim, mask, evidence, mask, false);
    CHECK(p1.values() == p2.values());
    CHECK(p1.at(0, 0) + p1.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));

    // Different seed, different parameters.
    CasaModel m3(cfg, 78);
    CHECK(m3.forward(claim, mask, evidence, mask, false).values() != p1.values());

    // Eval passes are identical; training passes consume dropout randomness.
    CHECK(m1.forward(claim, mask, evidence, mask, false).values() == p1.values());
    const Tensor t1 = m1.forward(claim, mask, evidence, mask, true);
    const Tensor t2 = m1.forward(claim, mask, evidence, mask, true);
    CHECK(t1.values() != t2.values());

    // Checkpoint round trip: weights survive at f32 precision, config intact.
    test_support::TempDir dir;
    m1.save(dir.file("ckpt"), R"({"purpose": "test"})");
    std::string extra;
    CasaModel restored = CasaModel::load(dir.file("ckpt"), &extra);
    CHECK(extra.find("purpose") != std::string::npos);
    CHECK(restored.config().heads == cfg.heads);
    const Tensor pr = restored.forward(claim, mask, evidence, mask, false);
    for (std::size_t i = 0; i < pr.size(); ++i)
        CHECK(pr.values()[i] == doctest::Approx(p1.values()[i]).epsilon(1e-5));
}

TEST_CASE("attention trace weights form distributions over unmasked positions") {
    CasaConfig cfg = tiny_config(4, 2, 4, 2, 2);
    CasaModel model(cfg, 5);
    Rng rng(6);
    const Tensor claim = Tensor::from_values({4, 4}, fd_check::bounded_values(rng, 16, 0.0));
    const Tensor evidence = Tensor::from_values({4, 4}, fd_check::bounded_values(rng, 16, 0.0));
    const Mask claim_mask = {1, 1, 1, 0};
    const Mask evidence_mask = {1, 1, 0, 0};

    AttentionTrace trace;
    model.forward(claim, claim_mask, evidence, evidence_mask, false, &trace);

    REQUIRE(trace.claim_weights.size() == 4);
    REQUIRE(trace.evidence_weights.size() == 4);
    double claim_sum = 0.0, evidence_sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        claim_sum += trace.claim_weights[i];
        evidence_sum += trace.evidence_weights[i];
        if (!claim_mask[i]) CHECK(trace.claim_weights[i] == 0.0);
        if (!evidence_mask[i]) CHECK(trace.evidence_weights[i] == 0.0);
    }
    CHECK(claim_sum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(evidence_sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("full-model gradients match finite differences at the pinned dims") {
    // d=8, h=4, l=6, j=2, blocks=2, dropout off.
    CasaConfig cfg;
    cfg.d = 8;
    cfg.h = 4;
    cfg.l = 6;
    cfg.heads = 2;
    cfg.blocks = 2;
    cfg.attn_dropout = 0.0;
    cfg.dense_dropout = 0.0;
    CasaModel model(cfg, 2024);

    Rng rng(9);
    Tensor claim = Tensor::from_values({6, 8}, fd_check::bounded_values(rng, 48, 0.0));
    Tensor evidence = Tensor::from_values({6, 8}, fd_check::bounded_values(rng, 48, 0.0));
    const Mask claim_mask = {1, 1, 1, 1, 0, 0};
    const Mask evidence_mask = {1, 1, 1, 0, 0, 0};

    std::vector<Tensor> inputs = {claim, evidence};
    for (const auto& p : model.parameters()) inputs.push_back(p.tensor);

    auto build_loss = [&] {
        Tensor probs = model.forward(claim, claim_mask, evidence, evidence_mask, false);
        return cross_entropy(probs, 1);
    };
    const auto result = fd_check::compare_gradients(inputs, build_loss);
    INFO(result.detail);
    CHECK(result.ok);
    CHECK(result.worst_rel < 1e-4);
}

TEST_CASE("scale mode switches the attention divisor") {
    // With j=2 the per-head width D=2 differs from d=4, so the two scale
    // modes must disagree numerically.
    CasaConfig head_cfg = tiny_config(4, 2, 3, 2, 1);
    CasaConfig embed_cfg = head_cfg;
    embed_cfg.scale_mode = CasaConfig::ScaleMode::embed_dim;

    CasaModel m_head(head_cfg, 42);
    CasaModel m_embed(embed_cfg, 42);  // identical parameters, different divisor

    Rng rng(8);
    const Tensor claim = Tensor::from_values({3, 4}, fd_check::bounded_values(rng, 12, 0.0));
    const Tensor evidence = Tensor::from_values({3, 4}, fd_check::bounded_values(rng, 12, 0.0));
    const Mask mask = {1, 1, 1};

    const Tensor p_head = m_head.forward(claim, mask, evidence, mask, false);
    const Tensor p_embed = m_embed.forward(claim, mask, evidence, mask, false);
    CHECK(p_head.values() != p_embed.values());

    // The choice survives a checkpoint round trip.
    test_support::TempDir dir;
    m_embed.save(dir.file("m"), "");
    CasaModel restored = CasaModel::load(dir.file("m"));
    CHECK(restored.config().scale_mode == CasaConfig::ScaleMode::embed_dim);
    CHECK(restored.forward(claim, mask, evidence, mask, false).values() !=
          p_head.values());
}

TEST_CASE("checkpoint with a tampered manifest is rejected") {
    test_support::TempDir dir;
    CasaModel model(tiny_config(), 3);
    model.save(dir.file("m"), "");

    auto manifest = nlohmann::json::parse(std::ifstream(dir.file("m.json")));
    manifest["params"][0]["name"] = "someone_else.w";
    test_support::write_file(dir.file("m.json"), manifest.dump());
    CHECK_THROWS_AS(CasaModel::load(dir.file("m")), DataError);
}
