#include "sgda/motor_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "sgda/kv_config.hpp"

namespace sgda {

namespace {

constexpr std::array<std::string_view, 8> kFaultNames{
    "healthy",          "rotor_bar",          "eccentricity", "inter_turn_short",
    "bearing_outer_race", "bearing_inner_race", "bearing_ball", "mechanical_other",
};

constexpr double kDuplicateToleranceHz = 1e-9;
constexpr double kNearFundamentalHz = 0.5;

struct Candidate {
    double hz;
    std::pair<int, int> order;
};

void add_folded(std::vector<Candidate>& out, double hz, int order, int index) {
    out.push_back({std::abs(hz), {order, index}});
}

}  // namespace

std::string_view to_string(FaultClass fault) { return kFaultNames.at(static_cast<std::size_t>(fault)); }

FaultClass parse_fault_class(std::string_view name) {
    for (std::size_t i = 0; i < kFaultNames.size(); ++i)
        if (kFaultNames[i] == name) return static_cast<FaultClass>(i);
    throw std::invalid_argument("unknown fault class '" + std::string(name) + "'");
}

std::string label_to_string(const Label& label) {
    return label ? std::string(to_string(*label)) : std::string("unlabeled");
}

Label parse_label(std::string_view name) {
    if (name == "unlabeled") return std::nullopt;
    return parse_fault_class(name);
}

void MotorParameters::validate() const {
    if (!(supply_frequency_hz > 0.0) || !std::isfinite(supply_frequency_hz))
        throw std::invalid_argument("supply_frequency_hz must be positive");
    if (pole_pairs < 1) throw std::invalid_argument("pole_pairs must be a positive integer");
    if (!(slip >= 0.0 && slip < 1.0)) throw std::invalid_argument("slip must lie in [0, 1)");
    if (n_balls < 1) throw std::invalid_argument("n_balls must be a positive integer");
    if (!(ball_diameter_mm > 0.0)) throw std::invalid_argument("ball_diameter_mm must be positive");
    if (!(pitch_diameter_mm > 0.0)) throw std::invalid_argument("pitch_diameter_mm must be positive");
    if (!(ball_diameter_mm < pitch_diameter_mm))
        throw std::invalid_argument("ball_diameter_mm must be smaller than pitch_diameter_mm");
    if (!(contact_angle_rad >= 0.0 && contact_angle_rad < std::numbers::pi / 2))
        throw std::invalid_argument("contact_angle_rad must lie in [0, pi/2)");
    for (double f : mechanical_frequencies_hz)
        if (!(f > 0.0) || !std::isfinite(f))
            throw std::invalid_argument("mechanical_frequencies_hz entries must be positive");
    if (!(rotor_frequency(*this) > 0.0)) throw std::invalid_argument("rotor frequency must be positive");
}

namespace {

MotorParameters from_config(const KeyValueConfig& cfg) {
    MotorParameters p;
    p.supply_frequency_hz = cfg.require_double("supply_frequency_hz");
    p.pole_pairs = static_cast<int>(cfg.require_int("pole_pairs"));
    p.slip = cfg.require_double("slip");
    p.n_balls = static_cast<int>(cfg.require_int("n_balls"));
    p.ball_diameter_mm = cfg.require_double("ball_diameter_mm");
    p.pitch_diameter_mm = cfg.require_double("pitch_diameter_mm");
    p.contact_angle_rad = cfg.require_double("contact_angle_rad");
    for (const auto& item : cfg.get_list("mechanical_frequencies_hz"))
        p.mechanical_frequencies_hz.push_back(parse_double(item, "mechanical_frequencies_hz"));
    p.validate();
    return p;
}

}  // namespace

MotorParameters parse_motor_parameters(const std::string& text) {
    return from_config(KeyValueConfig::parse(text, "<motor parameters>"));
}

MotorParameters load_motor_parameters(const std::filesystem::path& path) {
    return from_config(KeyValueConfig::load(path));
}

std::string format_motor_parameters(const MotorParameters& p) {
    std::ostringstream out;
    out.precision(17);
    out << "supply_frequency_hz = " << p.supply_frequency_hz << '\n'
        << "pole_pairs = " << p.pole_pairs << '\n'
        << "slip = " << p.slip << '\n'
        << "n_balls = " << p.n_balls << '\n'
        << "ball_diameter_mm = " << p.ball_diameter_mm << '\n'
        << "pitch_diameter_mm = " << p.pitch_diameter_mm << '\n'
        << "contact_angle_rad = " << p.contact_angle_rad << '\n';
    if (!p.mechanical_frequencies_hz.empty()) {
        out << "mechanical_frequencies_hz = ";
        for (std::size_t i = 0; i < p.mechanical_frequencies_hz.size(); ++i)
            out << (i ? ", " : "") << p.mechanical_frequencies_hz[i];
        out << '\n';
    }
    return out.str();
}

double rotor_frequency(const MotorParameters& p) {
    return p.supply_frequency_hz * (1.0 - p.slip) / p.pole_pairs;
}

double ball_pass_outer_hz(const MotorParameters& p) {
    const double ratio = p.ball_diameter_mm / p.pitch_diameter_mm * std::cos(p.contact_angle_rad);
    return p.n_balls / 2.0 * rotor_frequency(p) * (1.0 - ratio);
}

double ball_pass_inner_hz(const MotorParameters& p) {
    const double ratio = p.ball_diameter_mm / p.pitch_diameter_mm * std::cos(p.contact_angle_rad);
    return p.n_balls / 2.0 * rotor_frequency(p) * (1.0 + ratio);
}

double ball_spin_hz(const MotorParameters& p) {
    const double ratio = p.ball_diameter_mm / p.pitch_diameter_mm * std::cos(p.contact_angle_rad);
    return p.pitch_diameter_mm / (2.0 * p.ball_diameter_mm) * rotor_frequency(p) * (1.0 - ratio * ratio);
}

SignatureFrequencySet signature_frequencies(const MotorParameters& params, FaultClass fault, int max_order,
                                            double band_limit_hz) {
    if (fault == FaultClass::Healthy) throw std::invalid_argument("healthy class has no signature");
    if (max_order < 1) throw std::invalid_argument("max_order must be at least 1");
    if (!(band_limit_hz > 0.0)) throw std::invalid_argument("band_limit_hz must be positive");
    params.validate();

    const double fs = params.supply_frequency_hz;
    const double s = params.slip;
    const double rotor_ratio = (1.0 - s) / params.pole_pairs;

    std::vector<Candidate> raw;
    switch (fault) {
        case FaultClass::RotorBar:
            for (int k = 1; k <= max_order; ++k) {
                add_folded(raw, fs * (1.0 - 2.0 * k * s), k, -1);
                add_folded(raw, fs * (1.0 + 2.0 * k * s), k, +1);
            }
            break;
        case FaultClass::Eccentricity:
            for (int k = 1; k <= max_order; ++k) {
                add_folded(raw, fs * (1.0 - k * rotor_ratio), k, -1);
                add_folded(raw, fs * (1.0 + k * rotor_ratio), k, +1);
            }
            break;
        case FaultClass::InterTurnShort:
            for (int k = 1; k <= max_order; ++k)
                for (int m : {1, 3, 5}) {
                    add_folded(raw, fs * (k * rotor_ratio - m), k, -m);
                    add_folded(raw, fs * (k * rotor_ratio + m), k, +m);
                }
            break;
        case FaultClass::BearingOuterRace:
        case FaultClass::BearingInnerRace:
        case FaultClass::BearingBall: {
            const double characteristic = fault == FaultClass::BearingOuterRace   ? ball_pass_outer_hz(params)
                                          : fault == FaultClass::BearingInnerRace ? ball_pass_inner_hz(params)
                                                                                  : ball_spin_hz(params);
            for (int m = 1; m <= max_order; ++m) {
                add_folded(raw, fs - m * characteristic, m, -1);
                add_folded(raw, fs + m * characteristic, m, +1);
            }
            break;
        }
        case FaultClass::MechanicalOther:
            if (params.mechanical_frequencies_hz.empty())
                throw std::invalid_argument("mechanical_other requires explicit frequencies");
            for (std::size_t i = 0; i < params.mechanical_frequencies_hz.size(); ++i)
                add_folded(raw, params.mechanical_frequencies_hz[i], 0, static_cast<int>(i));
            break;
        case FaultClass::Healthy:
            break;
    }

    std::erase_if(raw, [&](const Candidate& c) { return !(c.hz > 0.0 && c.hz < band_limit_hz); });
    std::stable_sort(raw.begin(), raw.end(), [](const Candidate& a, const Candidate& b) { return a.hz < b.hz; });

    SignatureFrequencySet result;
    result.fault = fault;
    for (const auto& c : raw) {
        if (!result.frequencies_hz.empty() && c.hz - result.frequencies_hz.back() <= kDuplicateToleranceHz) continue;
        result.frequencies_hz.push_back(c.hz);
        result.harmonic_orders.push_back(c.order);
        result.near_fundamental.push_back(std::abs(c.hz - fs) < kNearFundamentalHz);
    }
    return result;
}

}  // namespace sgda
