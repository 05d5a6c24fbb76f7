#pragma once

#include <functional>
#include <string>
#include <vector>

#include "veritree/credibility.hpp"
#include "veritree/embeddings.hpp"
#include "veritree/thread_model.hpp"

namespace veritree {

/// Decision-rule cutoffs: a closed simi band [simi_low, simi_high] plus
/// strict lower cutoffs a2/a3 for the two credibility conditions.
struct DecisionThresholds {
    double simi_low = 0.0;
    double simi_high = 1.0;
    double rcred_min = 0.0;  // a2
    double ccred_min = 0.0;  // a3

    /// Throws ConfigError unless 0 <= simi_low <= simi_high <= 1 and both
    /// credibility cutoffs lie in [0, 1].
    void validate() const;
};

struct ConditionSet {
    bool simi = false;
    bool r_cred = false;
    bool c_cred = false;

    bool any() const { return simi || r_cred || c_cred; }
    std::vector<std::string> names() const;
};

struct Decision {
    bool selected = false;
    ConditionSet fired;
};

/// Disjunctive rule: fired.simi iff simi in [simi_low, simi_high] (closed
/// band), fired.r_cred iff r_cred > a2, fired.c_cred iff c_cred > a3;
/// selected iff any condition fired.
Decision decide(const ConditionScores& scores, const DecisionThresholds& th);

struct SelectedComment {
    std::string id;
    ConditionScores scores;
    ConditionSet fired;
};

struct EvidenceSelection {
    std::vector<SelectedComment> selected;  // depth-first pre-order of the original tree
    ConversationThread pruned_tree;         // subtrees with no selected node removed
    TokenSequence evidence_tokens;          // concatenated selected texts, padded to l
};

/// Per-node scorer; called once per comment in DFS pre-order.
using ScoreFn = std::function<ConditionScores(const ConversationThread&, const CommentNode&)>;

/// Production scorer: semantic similarity from embeddings (soft cosine by
/// default) plus the two rubric credibilities. Caches the claim-side bag
/// per thread.
class DefaultScorer {
public:
    DefaultScorer(const EmbeddingTable& table, CredibilityRubric rubric, bool use_soft_cosine);

    ConditionScores operator()(const ConversationThread& thread, const CommentNode& node) const;

private:
    const EmbeddingTable* table_;
    CredibilityRubric rubric_;
    bool use_soft_cosine_;
    mutable std::string cached_claim_id_;
    mutable bool cache_valid_ = false;
    mutable BagOfWords cached_claim_bag_;
    mutable std::vector<double> cached_claim_avg_;
};

/// Apply the decision rule to every comment, prune subtrees containing no
/// selected node, and assemble the evidence token sequence (selected texts
/// concatenated in DFS pre-order, truncated/padded to max_tokens).
EvidenceSelection select_evidence(const ConversationThread& thread, const DecisionThresholds& th,
                                  const ScoreFn& scorer, std::size_t max_tokens);

struct ThresholdRanges {
    double simi_low = 0.0;  // fixed, not swept
    double simi_high_lo = 0.0, simi_high_hi = 0.8;
    double rcred_lo = 0.0, rcred_hi = 0.8;
    double ccred_lo = 0.0, ccred_hi = 0.7;
};

/// Cartesian grid over (simi_high, a2, a3), endpoints included, outermost
/// axis first. Throws ConfigError on step <= 0 or an empty range.
std::vector<DecisionThresholds> threshold_grid(const ThresholdRanges& ranges, double step);

}  // namespace veritree
