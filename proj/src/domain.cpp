#include "flightpref/domain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flightpref {

namespace {

constexpr std::array<std::string_view, kNumCarriers> kCarrierNames = {"american", "delta", "jetblue",
                                                                      "southwest"};
constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "american", "delta", "jetblue", "southwest", "price", "stops", "longest_stop", "arrival_slack"};

double scalar_from_json(const json& j, const char* key) {
    double v = j.at(key).get<double>();
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string("flight field out of [0,1]: ") + key);
    return v;
}

void check_version(const json& j) {
    if (j.contains("v") && j.at("v") != kSchemaVersion)
        throw std::invalid_argument("unsupported schema version: " + j.at("v").dump());
}

}  // namespace

std::string_view carrier_name(Carrier c) { return kCarrierNames[static_cast<std::size_t>(c)]; }

Carrier carrier_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kNumCarriers; ++i) {
        if (kCarrierNames[i] == name) return static_cast<Carrier>(i);
    }
    throw std::invalid_argument("unknown carrier: " + std::string(name));
}

std::string_view feature_name(Feature f) { return kFeatureNames[static_cast<std::size_t>(f)]; }

FeatureVector Flight::features() const {
    FeatureVector phi{};
    phi[static_cast<std::size_t>(carrier)] = 1.0;
    phi[4] = price_norm;
    phi[5] = stops_norm;
    phi[6] = longest_stop_norm;
    phi[7] = arrival_slack_norm;
    return phi;
}

Flight Flight::from_features(const FeatureVector& phi) {
    int carrier = -1;
    for (std::size_t i = 0; i < kNumCarriers; ++i) {
        if (phi[i] == 1.0) {
            if (carrier >= 0) throw std::invalid_argument("carrier block is not one-hot");
            carrier = static_cast<int>(i);
        } else if (phi[i] != 0.0) {
            throw std::invalid_argument("carrier indicator must be 0 or 1");
        }
    }
    if (carrier < 0) throw std::invalid_argument("carrier block is not one-hot");
    for (std::size_t i = kNumCarriers; i < kNumFeatures; ++i) {
        if (!(phi[i] >= 0.0 && phi[i] <= 1.0)) throw std::invalid_argument("scalar feature out of [0,1]");
    }
    Flight f;
    f.carrier = static_cast<Carrier>(carrier);
    f.price_norm = phi[4];
    f.stops_norm = phi[5];
    f.longest_stop_norm = phi[6];
    f.arrival_slack_norm = phi[7];
    return f;
}

int grid_level(double w) {
    for (int l = 0; l < static_cast<int>(kGridLevels); ++l) {
        if (w == RewardVector::level_value(static_cast<std::uint8_t>(l))) return l;
    }
    return -1;
}

RewardVector RewardVector::from_weights(const FeatureVector& w) {
    RewardVector r;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
        int l = grid_level(w[i]);
        if (l < 0) throw std::invalid_argument("reward weight off the {-1,-0.5,0,0.5,1} grid");
        r.levels_[i] = static_cast<std::uint8_t>(l);
    }
    return r;
}

RewardVector RewardVector::from_levels(const std::array<std::uint8_t, kNumFeatures>& levels) {
    RewardVector r;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
        if (levels[i] >= kGridLevels) throw std::invalid_argument("reward level out of range");
    }
    r.levels_ = levels;
    return r;
}

RewardVector RewardVector::from_grid_index(std::uint32_t index) {
    if (index >= kGridSize) throw std::invalid_argument("grid index out of range");
    RewardVector r;
    for (std::size_t i = kNumFeatures; i-- > 0;) {
        r.levels_[i] = static_cast<std::uint8_t>(index % kGridLevels);
        index /= kGridLevels;
    }
    return r;
}

std::uint32_t RewardVector::grid_index() const {
    std::uint32_t idx = 0;
    for (std::uint8_t l : levels_) idx = idx * kGridLevels + l;
    return idx;
}

FeatureVector RewardVector::weights() const {
    FeatureVector w{};
    for (std::size_t i = 0; i < kNumFeatures; ++i) w[i] = weight(i);
    return w;
}

bool OptionSet::has_duplicates() const {
    return flights[0] == flights[1] || flights[0] == flights[2] || flights[1] == flights[2];
}

double dot(const FeatureVector& a, const FeatureVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < kNumFeatures; ++i) s += a[i] * b[i];
    return s;
}

double reward(const RewardVector& theta, const Flight& flight) { return dot(theta.weights(), flight.features()); }

double reward(const FeatureVector& theta, const Flight& flight) { return dot(theta, flight.features()); }

OptimalOption optimal_option(const std::array<double, kNumOptions>& rewards) {
    const double best = *std::max_element(rewards.begin(), rewards.end());
    OptimalOption out;
    for (std::size_t i = 0; i < kNumOptions; ++i) {
        if (best - rewards[i] <= kTieTolerance) out.ties.push_back(i);
    }
    out.index = out.ties.front();
    return out;
}

OptimalOption optimal_option(const FeatureVector& theta, const OptionSet& options) {
    std::array<double, kNumOptions> r{};
    for (std::size_t i = 0; i < kNumOptions; ++i) r[i] = reward(theta, options[i]);
    return optimal_option(r);
}

OptimalOption optimal_option(const RewardVector& theta, const OptionSet& options) {
    return optimal_option(theta.weights(), options);
}

Flight sample_flight(Rng& rng) {
    Flight f;
    f.carrier = static_cast<Carrier>(rng.uniform_int(kNumCarriers));
    f.price_norm = static_cast<double>(rng.uniform_int(101)) / 100.0;
    f.stops_norm = static_cast<double>(rng.uniform_int(3)) / 2.0;
    f.longest_stop_norm = static_cast<double>(rng.uniform_int(101)) / 100.0;
    f.arrival_slack_norm = static_cast<double>(rng.uniform_int(101)) / 100.0;
    return f;
}

OptionSet sample_option_set(Rng& rng) {
    OptionSet m;
    for (auto& f : m.flights) f = sample_flight(rng);
    return m;
}

RewardVector sample_reward(Rng& rng) {
    std::array<std::uint8_t, kNumFeatures> levels{};
    for (auto& l : levels) l = static_cast<std::uint8_t>(rng.uniform_int(kGridLevels));
    return RewardVector::from_levels(levels);
}

json to_json(const Flight& f) {
    json j;
    j["v"] = kSchemaVersion;
    j["carrier"] = carrier_name(f.carrier);
    j["price_norm"] = f.price_norm;
    j["stops_norm"] = f.stops_norm;
    j["longest_stop_norm"] = f.longest_stop_norm;
    j["arrival_slack_norm"] = f.arrival_slack_norm;
    return j;
}

json to_json(const OptionSet& m) {
    json j;
    j["v"] = kSchemaVersion;
    j["flights"] = json::array();
    for (const auto& f : m.flights) j["flights"].push_back(to_json(f));
    return j;
}

json to_json(const RewardVector& theta) {
    json j;
    j["v"] = kSchemaVersion;
    j["weights"] = theta.weights();
    return j;
}

Flight flight_from_json(const json& j) {
    check_version(j);
    Flight f;
    f.carrier = carrier_from_name(j.at("carrier").get<std::string>());
    f.price_norm = scalar_from_json(j, "price_norm");
    f.stops_norm = scalar_from_json(j, "stops_norm");
    f.longest_stop_norm = scalar_from_json(j, "longest_stop_norm");
    f.arrival_slack_norm = scalar_from_json(j, "arrival_slack_norm");
    return f;
}

OptionSet option_set_from_json(const json& j) {
    check_version(j);
    const auto& arr = j.at("flights");
    if (!arr.is_array() || arr.size() != kNumOptions) throw std::invalid_argument("option set needs exactly 3 flights");
    OptionSet m;
    for (std::size_t i = 0; i < kNumOptions; ++i) m.flights[i] = flight_from_json(arr[i]);
    return m;
}

RewardVector reward_from_json(const json& j) {
    check_version(j);
    const auto& w = j.at("weights");
    if (!w.is_array() || w.size() != kNumFeatures) throw std::invalid_argument("reward needs 8 weights");
    return RewardVector::from_weights(w.get<FeatureVector>());
}

json option_features_json(const OptionSet& m) {
    json j = json::array();
    for (const auto& f : m.flights) j.push_back(f.features());
    return j;
}

OptionSet option_set_from_features_json(const json& j) {
    if (!j.is_array() || j.size() != kNumOptions) throw std::invalid_argument("options must be a 3x8 array");
    OptionSet m;
    for (std::size_t i = 0; i < kNumOptions; ++i) {
        if (!j[i].is_array() || j[i].size() != kNumFeatures) throw std::invalid_argument("options must be a 3x8 array");
        m.flights[i] = Flight::from_features(j[i].get<FeatureVector>());
    }
    return m;
}

}  // namespace flightpref
