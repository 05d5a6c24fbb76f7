#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "veritree/casa.hpp"
#include "veritree/credibility.hpp"
#include "veritree/embeddings.hpp"
#include "veritree/evidence.hpp"
#include "veritree/metrics.hpp"
#include "veritree/thread_model.hpp"

namespace veritree {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double lr = 0.001;
    std::uint64_t seed = 42;
    double grid_step = 0.1;
    std::size_t early_stop_patience = 10;  // epochs without validation improvement
    bool disable_evidence = false;         // force the all-pad evidence path (0% comments)

    enum class Optimizer { adam, sgd };
    Optimizer optimizer = Optimizer::adam;

    void validate() const;
};

/// Everything needed to turn threads into condition scores: the embedding
/// table, the rubric, and the similarity mode.
struct ScoringContext {
    const EmbeddingTable* table = nullptr;
    CredibilityRubric rubric;
    bool use_soft_cosine = true;

    ScoreFn scorer() const;
};

/// Class indexing is fixed: 0 = true, 1 = false.
std::size_t class_index(Label label);
const std::vector<std::string>& class_names();

/// Per-thread model inputs for a fixed threshold configuration.
struct ThreadFeatures {
    std::string thread_id;
    std::size_t label_index = 0;
    EmbeddedSequence claim;
    EmbeddedSequence evidence;
    EvidenceSelection selection;
};

ThreadFeatures build_features(const ConversationThread& thread, const DecisionThresholds& th,
                              const ScoringContext& scoring, const CasaConfig& cfg,
                              bool disable_evidence);

/// Mask actually handed to attention: when a sequence has no real tokens
/// its first (pad) position is exposed so pooling and attention stay
/// defined; the all-pad evidence path is valid training input.
ad::Mask effective_mask(const std::vector<std::uint8_t>& mask);

struct TrainOutcome {
    CasaModel model;
    MetricsReport validation;
    std::vector<double> epoch_losses;
    std::size_t epochs_run = 0;
};

/// Evidence extraction + mini-batch training with early stopping on
/// validation macro-F1. Deterministic for a fixed seed. Throws DataError
/// on an empty training split.
TrainOutcome train_once(const Corpus& corpus, const DecisionThresholds& th,
                        const TrainConfig& train_cfg, const CasaConfig& casa_cfg,
                        const ScoringContext& scoring);

MetricsReport evaluate(CasaModel& model, const Corpus& corpus, Split split,
                       const DecisionThresholds& th, const ScoringContext& scoring,
                       bool disable_evidence = false);

struct SweepRow {
    DecisionThresholds thresholds;
    MetricsReport validation;
    std::size_t selected_comments = 0;  // across the whole corpus
};

struct SweepOutcome {
    DecisionThresholds best;
    std::size_t best_index = 0;
    CasaModel best_model;
    std::vector<SweepRow> table;
};

/// Fresh model per grid point; argmax validation macro-F1, ties broken by
/// fewer selected comments, then grid order.
SweepOutcome sweep(const Corpus& corpus, const std::vector<DecisionThresholds>& grid,
                   const TrainConfig& train_cfg, const CasaConfig& casa_cfg,
                   const ScoringContext& scoring);

std::string sweep_table_csv(const std::vector<SweepRow>& table);

struct ExplanationReport {
    std::string thread_id;
    std::string predicted_label;
    double probability = 0.0;

    struct EvidenceEntry {
        std::string id;
        std::string text;
        ConditionScores scores;
        std::vector<std::string> fired;
    };
    std::vector<EvidenceEntry> evidence;

    struct TokenWeight {
        std::string token;
        double weight = 0.0;
    };
    std::vector<TokenWeight> claim_attention;     // non-pad positions only
    std::vector<TokenWeight> evidence_attention;  // non-pad positions only

    std::string to_json() const;
};

/// Re-runs selection and the forward pass (dropout off) and reports the
/// verdict, the selected evidence with condition values, and the
/// final-block attention weights of both branches.
ExplanationReport explain(CasaModel& model, const ConversationThread& thread,
                          const DecisionThresholds& th, const ScoringContext& scoring);

}  // namespace veritree
