#include "veritree/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "veritree/errors.hpp"
#include "veritree/rng.hpp"

namespace veritree {

using ad::Tensor;
using nlohmann::json;

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (grid_step <= 0.0) throw ConfigError("grid step must be positive");
}

ScoreFn ScoringContext::scorer() const {
    if (!table) throw ConfigError("scoring context has no embedding table");
    return DefaultScorer(*table, rubric, use_soft_cosine);
}

std::size_t class_index(Label label) {
    switch (label) {
        case Label::truthful: return 0;
        case Label::fake: return 1;
        case Label::unverified: break;
    }
    throw DataError("unverified threads cannot be classified; filter the corpus first");
}

const std::vector<std::string>& class_names() {
    static const std::vector<std::string> names = {"true", "false"};
    return names;
}

ad::Mask effective_mask(const std::vector<std::uint8_t>& mask) {
    ad::Mask out(mask.begin(), mask.end());
    for (auto m : out)
        if (m) return out;
    if (out.empty()) throw ShapeError("effective_mask: empty mask");
    out[0] = 1;  // expose one pad position so pooling/attention stay defined
    return out;
}

ThreadFeatures build_features(const ConversationThread& thread, const DecisionThresholds& th,
                              const ScoringContext& scoring, const CasaConfig& cfg,
                              bool disable_evidence) {
    if (!scoring.table) throw ConfigError("scoring context has no embedding table");
    if (scoring.table->dimension() != cfg.d)
        throw ConfigError("embedding dimension " + std::to_string(scoring.table->dimension()) +
                          " does not match model d = " + std::to_string(cfg.d));

    ThreadFeatures f;
    f.thread_id = thread.claim_id;
    f.label_index = class_index(thread.label);

    const TokenSequence claim_seq =
        pad_sequence(sequence_of(tokenize(thread.claim_text)), cfg.l);
    f.claim = embed(claim_seq, *scoring.table);

    f.selection = select_evidence(thread, th, scoring.scorer(), cfg.l);
    if (disable_evidence) {
        f.selection.selected.clear();
        f.selection.pruned_tree.roots.clear();
        f.selection.evidence_tokens = pad_sequence(sequence_of({}), cfg.l);
    }
    f.evidence = embed(f.selection.evidence_tokens, *scoring.table);
    return f;
}

namespace {

Tensor to_tensor(const EmbeddedSequence& e) {
    return Tensor::from_values({e.length, e.dim}, e.values);
}

std::size_t predict_class(CasaModel& model, const ThreadFeatures& f, AttentionTrace* trace,
                          double* prob_out) {
    Tensor probs = model.forward(to_tensor(f.claim), effective_mask(f.claim.mask),
                                 to_tensor(f.evidence), effective_mask(f.evidence.mask),
                                 /*training=*/false, trace);
    const auto& p = probs.values();
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.size(); ++c)
        if (p[c] > p[best]) best = c;
    if (prob_out) *prob_out = p[best];
    return best;
}

MetricsReport evaluate_features(CasaModel& model, const std::vector<ThreadFeatures>& features) {
    if (features.empty()) throw DataError("cannot evaluate an empty split");
    std::vector<std::vector<std::size_t>> confusion(
        class_names().size(), std::vector<std::size_t>(class_names().size(), 0));
    for (const auto& f : features) {
        const std::size_t predicted = predict_class(model, f, nullptr, nullptr);
        confusion[f.label_index][predicted]++;
    }
    return MetricsReport::from_confusion(std::move(confusion));
}

std::vector<ThreadFeatures> features_for(const Corpus& corpus, Split split,
                                         const DecisionThresholds& th,
                                         const ScoringContext& scoring, const CasaConfig& cfg,
                                         bool disable_evidence) {
    std::vector<ThreadFeatures> out;
    for (const ConversationThread* t : corpus.threads_in(split))
        out.push_back(build_features(*t, th, scoring, cfg, disable_evidence));
    return out;
}

}  // namespace

TrainOutcome train_once(const Corpus& corpus, const DecisionThresholds& th,
                        const TrainConfig& train_cfg, const CasaConfig& casa_cfg,
                        const ScoringContext& scoring) {
    train_cfg.validate();
    casa_cfg.validate();
    th.validate();

    const auto train_features =
        features_for(corpus, Split::train, th, scoring, casa_cfg, train_cfg.disable_evidence);
    if (train_features.empty()) throw DataError("training split is empty");
    const auto val_features =
        features_for(corpus, Split::validation, th, scoring, casa_cfg, train_cfg.disable_evidence);

    CasaModel model(casa_cfg, derive_seed(train_cfg.seed, 0x6d6f64656cULL));
    ad::Adam adam(train_cfg.lr);
    ad::Sgd sgd(train_cfg.lr);
    Rng shuffle_rng(derive_seed(train_cfg.seed, 0x7368756666ULL));

    TrainOutcome out{std::move(model), {}, {}, 0};

    double best_f1 = -1.0;
    std::vector<std::vector<double>> best_weights;
    std::size_t stale_epochs = 0;

    std::vector<std::size_t> order(train_features.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + train_cfg.batch_size);
            Tensor batch_loss;
            for (std::size_t k = start; k < end; ++k) {
                const ThreadFeatures& f = train_features[order[k]];
                Tensor probs = out.model.forward(
                    to_tensor(f.claim), effective_mask(f.claim.mask), to_tensor(f.evidence),
                    effective_mask(f.evidence.mask), /*training=*/true, nullptr);
                Tensor sample_loss = cross_entropy(probs, f.label_index);
                batch_loss = batch_loss.defined() ? ad::add(batch_loss, sample_loss) : sample_loss;
            }
            batch_loss = ad::scale(batch_loss, 1.0 / static_cast<double>(end - start));
            ad::backward(batch_loss);
            if (train_cfg.optimizer == TrainConfig::Optimizer::adam)
                adam.step(out.model.parameters());
            else
                sgd.step(out.model.parameters());
            epoch_loss += batch_loss.item() * static_cast<double>(end - start);
        }
        out.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
        out.epochs_run = epoch + 1;

        if (!val_features.empty()) {
            const MetricsReport val = evaluate_features(out.model, val_features);
            if (val.macro_f1 > best_f1) {
                best_f1 = val.macro_f1;
                best_weights = out.model.snapshot_weights();
                stale_epochs = 0;
            } else if (++stale_epochs > train_cfg.early_stop_patience) {
                break;
            }
        }
    }

    if (!best_weights.empty()) out.model.restore_weights(best_weights);
    out.validation = val_features.empty() ? MetricsReport{}
                                          : evaluate_features(out.model, val_features);
    return out;
}

MetricsReport evaluate(CasaModel& model, const Corpus& corpus, Split split,
                       const DecisionThresholds& th, const ScoringContext& scoring,
                       bool disable_evidence) {
    const auto features =
        features_for(corpus, split, th, scoring, model.config(), disable_evidence);
    return evaluate_features(model, features);
}

SweepOutcome sweep(const Corpus& corpus, const std::vector<DecisionThresholds>& grid,
                   const TrainConfig& train_cfg, const CasaConfig& casa_cfg,
                   const ScoringContext& scoring) {
    if (grid.empty()) throw ConfigError("sweep requires a non-empty threshold grid");

    std::optional<SweepOutcome> out;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        TrainConfig cfg_g = train_cfg;
        cfg_g.seed = derive_seed(train_cfg.seed, g);  // independent stream per grid point

        TrainOutcome trained = train_once(corpus, grid[g], cfg_g, casa_cfg, scoring);

        std::size_t selected = 0;
        const ScoreFn scorer = scoring.scorer();
        for (const auto& thread : corpus.threads)
            selected += select_evidence(thread, grid[g], scorer, casa_cfg.l).selected.size();

        SweepRow row{grid[g], trained.validation, selected};
        const bool better =
            !out ||
            row.validation.macro_f1 > out->table[out->best_index].validation.macro_f1 ||
            (row.validation.macro_f1 == out->table[out->best_index].validation.macro_f1 &&
             selected < out->table[out->best_index].selected_comments);
        if (!out) {
            out.emplace(SweepOutcome{grid[g], 0, std::move(trained.model), {}});
            out->table.push_back(std::move(row));
        } else {
            out->table.push_back(std::move(row));
            if (better) {
                out->best = grid[g];
                out->best_index = g;
                out->best_model = std::move(trained.model);
            }
        }
    }
    return std::move(*out);
}

std::string sweep_table_csv(const std::vector<SweepRow>& table) {
    std::ostringstream os;
    os << "simi_low,simi_high,rcred_min,ccred_min,selected_comments,accuracy,"
          "macro_precision,macro_recall,macro_f1\n";
    os.precision(10);
    for (const auto& row : table) {
        os << row.thresholds.simi_low << ',' << row.thresholds.simi_high << ','
           << row.thresholds.rcred_min << ',' << row.thresholds.ccred_min << ','
           << row.selected_comments << ',' << row.validation.accuracy << ','
           << row.validation.macro_precision << ',' << row.validation.macro_recall << ','
           << row.validation.macro_f1 << '\n';
    }
    return os.str();
}

ExplanationReport explain(CasaModel& model, const ConversationThread& thread,
                          const DecisionThresholds& th, const ScoringContext& scoring) {
    const ThreadFeatures f =
        build_features(thread, th, scoring, model.config(), /*disable_evidence=*/false);

    ExplanationReport report;
    report.thread_id = thread.claim_id;

    AttentionTrace trace;
    double prob = 0.0;
    const std::size_t predicted = predict_class(model, f, &trace, &prob);
    report.predicted_label = class_names()[predicted];
    report.probability = prob;

    std::unordered_map<std::string, const CommentNode*> by_id;
    thread.for_each_comment([&](const CommentNode& n) { by_id.emplace(n.id, &n); });
    for (const auto& sel : f.selection.selected) {
        ExplanationReport::EvidenceEntry entry;
        entry.id = sel.id;
        entry.text = by_id.count(sel.id) ? by_id.at(sel.id)->text : std::string{};
        entry.scores = sel.scores;
        entry.fired = sel.fired.names();
        report.evidence.push_back(std::move(entry));
    }

    const TokenSequence claim_seq = pad_sequence(sequence_of(tokenize(thread.claim_text)),
                                                 model.config().l);
    auto collect = [](const TokenSequence& seq, const std::vector<double>& weights,
                      std::vector<ExplanationReport::TokenWeight>& out) {
        for (std::size_t i = 0; i < seq.length() && i < weights.size(); ++i)
            if (seq.mask[i]) out.push_back({seq.tokens[i], weights[i]});
    };
    collect(claim_seq, trace.claim_weights, report.claim_attention);
    collect(f.selection.evidence_tokens, trace.evidence_weights, report.evidence_attention);
    return report;
}

std::string ExplanationReport::to_json() const {
    json j;
    j["thread_id"] = thread_id;
    j["prediction"] = {{"label", predicted_label}, {"probability", probability}};
    j["evidence"] = json::array();
    for (const auto& e : evidence) {
        j["evidence"].push_back(json{{"id", e.id},
                                     {"text", e.text},
                                     {"scores",
                                      {{"simi", e.scores.simi},
                                       {"r_cred", e.scores.r_cred},
                                       {"c_cred", e.scores.c_cred}}},
                                     {"fired", e.fired}});
    }
    auto weights_json = [](const std::vector<TokenWeight>& ws) {
        json arr = json::array();
        for (const auto& w : ws) arr.push_back(json{{"token", w.token}, {"weight", w.weight}});
        return arr;
    };
    j["claim_attention"] = weights_json(claim_attention);
    j["evidence_attention"] = weights_json(evidence_attention);
    return j.dump();
}

}  // namespace veritree
