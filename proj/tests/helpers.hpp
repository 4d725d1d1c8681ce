#pragma once

#include <memory>

#include "flightpref/pragmatics.hpp"

namespace fp_test {

using namespace flightpref;

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

inline std::shared_ptr<const UtteranceEncoder> encoder_for(const UtteranceSet& support) {
    return std::make_shared<UtteranceEncoder>(UtteranceEncoder::build(support.items()));
}

/// Random listener and reward speaker over `support`.
inline std::shared_ptr<PragmaticModel> random_model(const UtteranceSet& support, std::uint64_t seed,
                                                    double scale = 1.0) {
    Rng rng(seed);
    auto enc = encoder_for(support);
    const auto d = static_cast<Eigen::Index>(enc->dim());
    auto listener = std::make_shared<LinearListener>(enc, random_matrix(kListenerCodeDim, d, scale, rng));
    auto speaker = std::make_shared<LinearRewardSpeaker>(enc, random_matrix(kRewardCodeDim, d, scale, rng));
    auto grid = std::make_shared<RewardSpeakerGrid>(std::vector<std::shared_ptr<const LinearRewardSpeaker>>{speaker},
                                                    support);
    return std::make_shared<PragmaticModel>(listener, grid);
}

inline OptionSet options_from(std::initializer_list<FeatureVector> rows) {
    OptionSet m;
    std::size_t i = 0;
    for (const auto& r : rows) m.flights[i++] = Flight::from_features(r);
    return m;
}

inline double naive_reward(const FeatureVector& theta, const FeatureVector& phi) {
    double s = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) s = s + theta[i] * phi[i];
    return s;
}

}  // namespace fp_test
