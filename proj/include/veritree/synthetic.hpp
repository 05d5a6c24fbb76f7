#pragma once

#include <cstdint>
#include <vector>

#include "veritree/thread_model.hpp"

namespace veritree {

/// Desk-scale corpus with a planted lexical signal. False claims (and their
/// echo comments) carry `marker_token`; true threads carry `neutral_token`
/// in the same slot, so the classes are separable from text alone.
///
/// Echo comments get high-credibility metadata. Noise comments copy the
/// claim text but swap in the *opposite* class token and carry rock-bottom
/// metadata, so a sweep that filters on credibility or on the simi band can
/// drop exactly the misleading comments.
struct SyntheticSpec {
    std::size_t threads = 200;
    std::uint64_t seed = 7;

    std::size_t claim_filler_tokens = 6;
    double claim_slot_prob = 1.0;  // chance the claim itself carries its class token
    std::size_t echo_comments = 3;
    std::size_t noise_comments = 2;
    double nest_prob = 0.4;  // chance a comment replies to an earlier comment
    std::size_t vocab_size = 40;

    std::string marker_token = "veriflag";
    std::string neutral_token = "calmday";
};

std::vector<ConversationThread> make_planted_corpus(const SyntheticSpec& spec);

}  // namespace veritree
