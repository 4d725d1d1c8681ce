#pragma once

// Flights, option sets, reward vectors and the linear reward function.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flightpref/rng.hpp"

namespace flightpref {

using json = nlohmann::ordered_json;

inline constexpr std::size_t kNumFeatures = 8;
inline constexpr std::size_t kNumCarriers = 4;
inline constexpr std::size_t kNumOptions = 3;
inline constexpr std::size_t kGridLevels = 5;
/// 5^8 reward vectors on the weight grid.
inline constexpr std::size_t kGridSize = 390625;
inline constexpr std::string_view kSchemaVersion = "v1";

/// Real-valued 8-vector: a feature vector phi(flight), or a reward estimate.
using FeatureVector = std::array<double, kNumFeatures>;

enum class Carrier : std::uint8_t { American = 0, Delta = 1, JetBlue = 2, Southwest = 3 };

std::string_view carrier_name(Carrier c);
Carrier carrier_from_name(std::string_view name);

/// Feature slots: 4 carrier indicators, then price, stops, longest stop, arrival slack.
enum class Feature : std::uint8_t {
    American = 0,
    Delta = 1,
    JetBlue = 2,
    Southwest = 3,
    Price = 4,
    Stops = 5,
    LongestStop = 6,
    ArrivalSlack = 7,
};

std::string_view feature_name(Feature f);
inline constexpr bool is_carrier(Feature f) { return static_cast<std::size_t>(f) < kNumCarriers; }
inline constexpr Feature carrier_feature(Carrier c) { return static_cast<Feature>(c); }

struct Flight {
    Carrier carrier = Carrier::American;
    double price_norm = 0.0;
    double stops_norm = 0.0;  // 0, 0.5, 1 for 0/1/2 stops
    double longest_stop_norm = 0.0;
    double arrival_slack_norm = 0.0;

    /// phi(flight): carrier one-hot followed by the four scalars.
    FeatureVector features() const;

    /// Inverse of features(). Throws std::invalid_argument unless the carrier
    /// block is a valid one-hot and scalars lie in [0, 1].
    static Flight from_features(const FeatureVector& phi);

    friend bool operator==(const Flight&, const Flight&) = default;
};

/// Reward weights on the grid {-1, -0.5, 0, 0.5, 1}^8, stored as levels 0..4.
class RewardVector {
public:
    RewardVector() { levels_.fill(2); }

    /// Throws std::invalid_argument if any weight is off the grid.
    static RewardVector from_weights(const FeatureVector& w);
    static RewardVector from_levels(const std::array<std::uint8_t, kNumFeatures>& levels);
    static RewardVector from_grid_index(std::uint32_t index);

    double weight(std::size_t i) const { return level_value(levels_[i]); }
    FeatureVector weights() const;
    std::uint8_t level(std::size_t i) const { return levels_[i]; }
    const std::array<std::uint8_t, kNumFeatures>& levels() const { return levels_; }

    /// Base-5 index with feature 0 as the most significant digit.
    std::uint32_t grid_index() const;

    static constexpr double level_value(std::uint8_t level) { return 0.5 * (static_cast<int>(level) - 2); }

    friend bool operator==(const RewardVector&, const RewardVector&) = default;

private:
    std::array<std::uint8_t, kNumFeatures> levels_{};
};

/// Level index (0..4) of a grid weight, or -1 if off the grid.
int grid_level(double w);

struct OptionSet {
    std::array<Flight, kNumOptions> flights{};

    bool has_duplicates() const;
    const Flight& operator[](std::size_t i) const { return flights[i]; }

    friend bool operator==(const OptionSet&, const OptionSet&) = default;
};

double dot(const FeatureVector& a, const FeatureVector& b);

/// r_theta(flight) = theta . phi(flight).
double reward(const RewardVector& theta, const Flight& flight);
double reward(const FeatureVector& theta, const Flight& flight);

struct OptimalOption {
    std::size_t index = 0;          // lowest index in the tie-set
    std::vector<std::size_t> ties;  // all argmax indices
};

inline constexpr double kTieTolerance = 1e-12;

OptimalOption optimal_option(const RewardVector& theta, const OptionSet& options);
OptimalOption optimal_option(const FeatureVector& theta, const OptionSet& options);
/// Argmax of three precomputed rewards with the same tie rule.
OptimalOption optimal_option(const std::array<double, kNumOptions>& rewards);

Flight sample_flight(Rng& rng);
OptionSet sample_option_set(Rng& rng);
RewardVector sample_reward(Rng& rng);

// JSON (fixed key order, "v": "v1").
json to_json(const Flight& f);
json to_json(const OptionSet& m);
json to_json(const RewardVector& theta);
Flight flight_from_json(const json& j);
OptionSet option_set_from_json(const json& j);
RewardVector reward_from_json(const json& j);

/// Option set as a 3x8 array of feature rows (corpus layout).
json option_features_json(const OptionSet& m);
OptionSet option_set_from_features_json(const json& j);

}  // namespace flightpref
