#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace veritree {

/// Reviewer (comment author) metadata used by the reviewer-credibility rubric.
struct ReviewerMeta {
    bool verified = false;
    bool geo_present = false;
    bool screen_name_present = false;
    bool profile_image_present = false;
    std::uint64_t followers = 0;
    std::uint64_t friends = 0;
    std::uint64_t favourites = 0;

    bool operator==(const ReviewerMeta&) const = default;
};

/// Comment metadata used by the comment-credibility rubric. content_length
/// is the token count of the comment text and is filled in at parse time.
struct CommentMeta {
    bool geo_present = false;
    bool source_present = false;
    bool favorited = false;
    std::uint64_t favorite_count = 0;
    std::uint64_t content_length = 0;

    bool operator==(const CommentMeta&) const = default;
};

struct CommentNode {
    std::string id;
    std::string parent_id;  // another comment id, or the claim id for top-level comments
    std::string text;
    ReviewerMeta reviewer;
    CommentMeta meta;
    std::vector<CommentNode> children;  // input order preserved

    bool operator==(const CommentNode&) const = default;
};

enum class Label { truthful, fake, unverified };

std::string label_name(Label l);
Label label_from_name(const std::string& name);

/// A claim plus its tree of comments: the unit of ingestion, evidence
/// selection, and verification.
struct ConversationThread {
    std::string claim_id;
    std::string claim_text;
    Label label = Label::unverified;
    ReviewerMeta claim_reviewer;
    std::vector<CommentNode> roots;

    std::size_t comment_count() const;

    bool operator==(const ConversationThread&) const = default;

    /// Depth-first pre-order over all comment nodes (roots in input order).
    template <typename Fn>
    void for_each_comment(Fn&& fn) const {
        for (const auto& r : roots) visit_node(r, fn);
    }

private:
    template <typename Fn>
    static void visit_node(const CommentNode& n, Fn&& fn) {
        fn(n);
        for (const auto& c : n.children) visit_node(c, fn);
    }
};

struct ParsedThread {
    ConversationThread thread;
    std::vector<std::string> warnings;  // one entry per re-rooted orphan comment
};

/// Parse one canonical thread document (JSON). Orphan comments (parent id
/// absent from the document) are re-rooted under the claim and flagged in
/// the warning list. Throws ParseError on malformed documents and
/// ValidationError on duplicate ids, cycles, or an empty claim text.
ParsedThread parse_thread(const std::string& raw);

/// Inverse of parse_thread; emits the canonical single-line JSON document.
std::string serialize_thread(const ConversationThread& thread);

enum class Split { train, validation, test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct Corpus {
    std::vector<ConversationThread> threads;
    std::map<std::string, Split> split_assignment;  // thread_id -> split

    std::vector<const ConversationThread*> threads_in(Split s) const;
};

struct SplitRatios {
    double train = 0.7;
    double validation = 0.1;
    double test = 0.2;
};

/// Drop unverified threads and partition the rest by seeded shuffle +
/// largest-remainder rounding. Deterministic for identical inputs.
/// Throws DataError when fewer than 3 threads survive filtering.
Corpus filter_and_split(std::vector<ConversationThread> threads, const SplitRatios& ratios,
                        std::uint64_t seed);

/// Corpus file: one canonical thread document per line.
std::vector<ParsedThread> load_corpus_file(const std::string& path);
void save_corpus_file(const std::string& path, const std::vector<ConversationThread>& threads);

/// Split file: `thread_id<TAB>split` lines.
std::map<std::string, Split> load_split_file(const std::string& path);
void save_split_file(const std::string& path, const std::map<std::string, Split>& assignment);

/// Map a PHEME/RumourEval-style directory tree (source-tweets/ + reactions/
/// + annotation.json per thread) onto canonical thread documents.
std::vector<ParsedThread> ingest_pheme_directory(const std::string& root);

}  // namespace veritree
