#include "flightpref/encoding.hpp"

#include <algorithm>
#include <set>

namespace flightpref {

UtteranceEncoder::UtteranceEncoder(std::vector<std::string> vocabulary, const Grammar& grammar)
    : vocab_(std::move(vocabulary)), grammar_(&grammar) {
    std::sort(vocab_.begin(), vocab_.end());
    vocab_.erase(std::unique(vocab_.begin(), vocab_.end()), vocab_.end());
    for (std::size_t i = 0; i < vocab_.size(); ++i) lookup_.emplace(vocab_[i], static_cast<std::uint32_t>(i));
}

UtteranceEncoder UtteranceEncoder::build(std::span<const Utterance> utterances, const Grammar& grammar) {
    std::set<std::string> tokens;
    for (const auto& u : utterances) tokens.insert(u.tokens.begin(), u.tokens.end());
    return UtteranceEncoder(std::vector<std::string>(tokens.begin(), tokens.end()), grammar);
}

SparseFeatures UtteranceEncoder::encode(const Utterance& u) const {
    std::vector<std::uint32_t> idx;
    idx.reserve(u.tokens.size() + 4);
    for (const auto& t : u.tokens) {
        auto it = lookup_.find(t);
        idx.push_back(it == lookup_.end() ? static_cast<std::uint32_t>(unk_index()) : it->second);
    }
    for (const auto& c : grammar_->parse(u).clauses) {
        idx.push_back(static_cast<std::uint32_t>(clause_offset() + c.id()));
    }
    idx.push_back(static_cast<std::uint32_t>(bias_index()));
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    SparseFeatures out;
    out.value.assign(idx.size(), 1.0);
    out.index = std::move(idx);
    return out;
}

std::array<std::uint32_t, kNumFeatures + 1> reward_code_indices(const RewardVector& theta) {
    std::array<std::uint32_t, kNumFeatures + 1> idx{};
    for (std::size_t i = 0; i < kNumFeatures; ++i) idx[i] = static_cast<std::uint32_t>(i * kGridLevels + theta.level(i));
    idx[kNumFeatures] = static_cast<std::uint32_t>(kRewardCodeDim - 1);
    return idx;
}

std::array<double, kActionCodeDim> action_code(const OptionSet& options, std::size_t chosen) {
    std::array<double, kActionCodeDim> code{};
    FeatureVector mean{};
    for (const auto& f : options.flights) {
        const auto phi = f.features();
        for (std::size_t k = 0; k < kNumFeatures; ++k) mean[k] += phi[k] / static_cast<double>(kNumOptions);
    }
    const auto phi = options[chosen].features();
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
        code[k] = phi[k];
        code[kNumFeatures + k] = phi[k] - mean[k];
    }
    code[kActionCodeDim - 1] = 1.0;
    return code;
}

}  // namespace flightpref
