#include "veritree/synthetic.hpp"

#include <algorithm>
#include <sstream>

#include "veritree/embeddings.hpp"
#include "veritree/rng.hpp"

namespace veritree {

namespace {

std::string filler_word(std::size_t i) {
    std::ostringstream os;
    os << "word" << i;
    return os.str();
}

ReviewerMeta high_cred_reviewer(Rng& rng) {
    ReviewerMeta m;
    m.verified = true;
    m.geo_present = true;
    m.screen_name_present = true;
    m.profile_image_present = true;
    m.followers = 500 + rng.next_below(1500);   // top bracket
    m.friends = 200 + rng.next_below(600);      // top bracket
    m.favourites = 200 + rng.next_below(600);   // top bracket
    return m;
}

ReviewerMeta low_cred_reviewer(Rng& rng) {
    ReviewerMeta m;  // all flags false
    m.followers = rng.next_below(100);  // lowest brackets throughout
    m.friends = rng.next_below(100);
    m.favourites = rng.next_below(100);
    return m;
}

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

}  // namespace

std::vector<ConversationThread> make_planted_corpus(const SyntheticSpec& spec) {
    std::vector<ConversationThread> threads;
    threads.reserve(spec.threads);

    for (std::size_t t = 0; t < spec.threads; ++t) {
        Rng rng(derive_seed(spec.seed, t));
        const bool fake = (t % 2) == 1;  // exactly balanced classes
        const std::string& slot = fake ? spec.marker_token : spec.neutral_token;
        const std::string& opposite = fake ? spec.neutral_token : spec.marker_token;

        ConversationThread thread;
        thread.claim_id = "synth-" + std::to_string(t);
        thread.label = fake ? Label::fake : Label::truthful;
        thread.claim_reviewer = high_cred_reviewer(rng);

        std::vector<std::string> claim_tokens;
        for (std::size_t i = 0; i < spec.claim_filler_tokens; ++i)
            claim_tokens.push_back(filler_word(rng.next_below(spec.vocab_size)));
        if (rng.next_double() < spec.claim_slot_prob) {
            const std::size_t pos = rng.next_below(claim_tokens.size() + 1);
            claim_tokens.insert(claim_tokens.begin() + static_cast<std::ptrdiff_t>(pos), slot);
        }
        thread.claim_text = join(claim_tokens);

        struct PendingComment {
            CommentNode node;
            std::string parent;
        };
        std::vector<PendingComment> comments;
        auto parent_for = [&](Rng& r) -> std::string {
            if (!comments.empty() && r.next_double() < spec.nest_prob)
                return comments[r.next_below(comments.size())].node.id;
            return thread.claim_id;
        };

        // Echo comments: carry the class token, overlap the claim a little,
        // and come from high-credibility reviewers. Length >= 10 tokens puts
        // them in the top content-length bracket.
        for (std::size_t e = 0; e < spec.echo_comments; ++e) {
            PendingComment pc;
            pc.node.id = thread.claim_id + "-echo" + std::to_string(e);
            std::vector<std::string> toks;
            toks.push_back(slot);
            for (std::size_t i = 0; i < 3 && i < claim_tokens.size(); ++i)
                toks.push_back(claim_tokens[rng.next_below(claim_tokens.size())]);
            while (toks.size() < 10)
                toks.push_back(filler_word(rng.next_below(spec.vocab_size)));
            pc.node.text = join(toks);
            pc.node.reviewer = high_cred_reviewer(rng);
            pc.node.meta.geo_present = true;
            pc.node.meta.source_present = true;
            pc.node.meta.favorited = true;
            pc.node.meta.favorite_count = 100 + rng.next_below(300);  // top bracket
            pc.parent = parent_for(rng);
            comments.push_back(std::move(pc));
        }

        // Noise comments: near-copies of the claim carrying the *opposite*
        // class token, with rock-bottom metadata. Their simi is high (outside
        // a moderate band) and both credibilities sit in the lowest brackets,
        // so threshold configurations exist that exclude exactly these.
        for (std::size_t nidx = 0; nidx < spec.noise_comments; ++nidx) {
            PendingComment pc;
            pc.node.id = thread.claim_id + "-noise" + std::to_string(nidx);
            std::vector<std::string> toks(
                claim_tokens.begin(),
                claim_tokens.begin() +
                    static_cast<std::ptrdiff_t>(std::min<std::size_t>(8, claim_tokens.size())));
            toks.push_back(opposite);  // total <= 9 keeps content_length < 10
            pc.node.text = join(toks);
            pc.node.reviewer = low_cred_reviewer(rng);
            pc.node.meta.favorite_count = rng.next_below(100);
            pc.parent = parent_for(rng);
            comments.push_back(std::move(pc));
        }

        // Materialize the forest, preserving the order above.
        for (auto& pc : comments) pc.node.meta.content_length = tokenize(pc.node.text).size();
        std::vector<std::size_t> child_of_claim;
        std::vector<std::vector<std::size_t>> children(comments.size());
        for (std::size_t i = 0; i < comments.size(); ++i) {
            if (comments[i].parent == thread.claim_id) {
                child_of_claim.push_back(i);
            } else {
                for (std::size_t j = 0; j < comments.size(); ++j)
                    if (comments[j].node.id == comments[i].parent) {
                        children[j].push_back(i);
                        break;
                    }
            }
            comments[i].node.parent_id = comments[i].parent;
        }
        auto build = [&](auto&& self, std::size_t i) -> CommentNode {
            CommentNode n = std::move(comments[i].node);
            for (std::size_t c : children[i]) n.children.push_back(self(self, c));
            return n;
        };
        for (std::size_t r : child_of_claim) thread.roots.push_back(build(build, r));

        threads.push_back(std::move(thread));
    }
    return threads;
}

}  // namespace veritree
