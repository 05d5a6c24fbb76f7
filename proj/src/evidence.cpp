#include "veritree/evidence.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "veritree/errors.hpp"

namespace veritree {

void DecisionThresholds::validate() const {
    if (!(simi_low >= 0.0 && simi_low <= simi_high && simi_high <= 1.0))
        throw ConfigError("simi band must satisfy 0 <= low <= high <= 1 (got [" +
                          std::to_string(simi_low) + ", " + std::to_string(simi_high) + "])");
    if (rcred_min < 0.0 || rcred_min > 1.0 || ccred_min < 0.0 || ccred_min > 1.0)
        throw ConfigError("credibility cutoffs must lie in [0, 1]");
}

std::vector<std::string> ConditionSet::names() const {
    std::vector<std::string> out;
    if (simi) out.push_back("simi");
    if (r_cred) out.push_back("r_cred");
    if (c_cred) out.push_back("c_cred");
    return out;
}

Decision decide(const ConditionScores& scores, const DecisionThresholds& th) {
    Decision d;
    d.fired.simi = scores.simi >= th.simi_low && scores.simi <= th.simi_high;
    d.fired.r_cred = scores.r_cred > th.rcred_min;
    d.fired.c_cred = scores.c_cred > th.ccred_min;
    d.selected = d.fired.any();
    return d;
}

DefaultScorer::DefaultScorer(const EmbeddingTable& table, CredibilityRubric rubric,
                             bool use_soft_cosine)
    : table_(&table), rubric_(std::move(rubric)), use_soft_cosine_(use_soft_cosine) {
    rubric_.validate();
}

ConditionScores DefaultScorer::operator()(const ConversationThread& thread,
                                          const CommentNode& node) const {
    if (!cache_valid_ || cached_claim_id_ != thread.claim_id) {
        const auto claim_tokens = tokenize(thread.claim_text);
        cached_claim_bag_ = BagOfWords::from_tokens(claim_tokens);
        cached_claim_avg_ = average_embedding(sequence_of(claim_tokens), *table_);
        cached_claim_id_ = thread.claim_id;
        cache_valid_ = true;
    }

    ConditionScores s;
    const auto comment_tokens = tokenize(node.text);
    if (use_soft_cosine_) {
        const BagOfWords comment_bag = BagOfWords::from_tokens(comment_tokens);
        SimilarityInput in;
        in.claim_bag = &cached_claim_bag_;
        in.comment_bag = &comment_bag;
        in.table = table_;
        s.simi = semantic_similarity(in);
    } else {
        SimilarityInput in;
        in.claim_avg = cached_claim_avg_;
        in.comment_avg = average_embedding(sequence_of(comment_tokens), *table_);
        s.simi = semantic_similarity(in);
    }
    s.r_cred = reviewer_credibility(node.reviewer, rubric_);
    s.c_cred = comment_credibility(node.meta, rubric_);
    return s;
}

namespace {

// Prune children with no selected node in their subtree; returns the node
// (with pruned children) when its subtree contains a selection.
bool prune_into(const CommentNode& node, const std::unordered_set<std::string>& keep,
                CommentNode& out) {
    CommentNode copy;
    copy.id = node.id;
    copy.parent_id = node.parent_id;
    copy.text = node.text;
    copy.reviewer = node.reviewer;
    copy.meta = node.meta;
    bool any = keep.count(node.id) > 0;
    for (const auto& child : node.children) {
        CommentNode kept_child;
        if (prune_into(child, keep, kept_child)) {
            copy.children.push_back(std::move(kept_child));
            any = true;
        }
    }
    if (any) out = std::move(copy);
    return any;
}

}  // namespace

EvidenceSelection select_evidence(const ConversationThread& thread, const DecisionThresholds& th,
                                  const ScoreFn& scorer, std::size_t max_tokens) {
    th.validate();
    if (!scorer) throw ConfigError("select_evidence requires a scorer");

    EvidenceSelection out;

    // Score each node exactly once, in DFS pre-order. Subtree-wise traversal
    // would revisit nested nodes; membership is a set union, so a single
    // pre-order pass is equivalent.
    std::unordered_set<std::string> keep;
    thread.for_each_comment([&](const CommentNode& node) {
        const ConditionScores scores = scorer(thread, node);
        const Decision d = decide(scores, th);
        if (d.selected) {
            out.selected.push_back({node.id, scores, d.fired});
            keep.insert(node.id);
        }
    });

    out.pruned_tree.claim_id = thread.claim_id;
    out.pruned_tree.claim_text = thread.claim_text;
    out.pruned_tree.label = thread.label;
    out.pruned_tree.claim_reviewer = thread.claim_reviewer;
    for (const auto& root : thread.roots) {
        CommentNode kept;
        if (prune_into(root, keep, kept)) out.pruned_tree.roots.push_back(std::move(kept));
    }

    std::vector<std::string> tokens;
    thread.for_each_comment([&](const CommentNode& node) {
        if (!keep.count(node.id)) return;
        for (auto& t : tokenize(node.text)) tokens.push_back(std::move(t));
    });
    out.evidence_tokens = pad_sequence(sequence_of(std::move(tokens)), max_tokens);
    return out;
}

std::vector<DecisionThresholds> threshold_grid(const ThresholdRanges& ranges, double step) {
    if (step <= 0.0) throw ConfigError("grid step must be positive");

    auto axis = [&](double lo, double hi) {
        if (lo > hi) throw ConfigError("empty threshold range [" + std::to_string(lo) + ", " +
                                       std::to_string(hi) + "]");
        std::vector<double> points;
        const double span = hi - lo;
        const auto steps = static_cast<std::size_t>(std::floor(span / step + 1e-9));
        for (std::size_t k = 0; k <= steps; ++k) points.push_back(lo + static_cast<double>(k) * step);
        if (hi - points.back() > 1e-9) points.push_back(hi);  // endpoints always included
        return points;
    };

    const auto simi_axis = axis(ranges.simi_high_lo, ranges.simi_high_hi);
    const auto rcred_axis = axis(ranges.rcred_lo, ranges.rcred_hi);
    const auto ccred_axis = axis(ranges.ccred_lo, ranges.ccred_hi);

    std::vector<DecisionThresholds> grid;
    grid.reserve(simi_axis.size() * rcred_axis.size() * ccred_axis.size());
    for (double a1 : simi_axis)
        for (double a2 : rcred_axis)
            for (double a3 : ccred_axis) {
                DecisionThresholds th;
                th.simi_low = ranges.simi_low;
                th.simi_high = a1;
                th.rcred_min = a2;
                th.ccred_min = a3;
                th.validate();
                grid.push_back(th);
            }
    return grid;
}

}  // namespace veritree
