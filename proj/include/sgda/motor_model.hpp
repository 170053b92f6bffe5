#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sgda {

enum class FaultClass {
    Healthy,
    RotorBar,
    Eccentricity,
    InterTurnShort,
    BearingOuterRace,
    BearingInnerRace,
    BearingBall,
    MechanicalOther,
};

inline constexpr std::array<FaultClass, 8> kAllFaultClasses{
    FaultClass::Healthy,          FaultClass::RotorBar,         FaultClass::Eccentricity,
    FaultClass::InterTurnShort,   FaultClass::BearingOuterRace, FaultClass::BearingInnerRace,
    FaultClass::BearingBall,      FaultClass::MechanicalOther,
};

/// Absent value means the recording or window carries no label.
using Label = std::optional<FaultClass>;

std::string_view to_string(FaultClass fault);
FaultClass parse_fault_class(std::string_view name);
std::string label_to_string(const Label& label);
Label parse_label(std::string_view name);

inline bool is_anomalous(FaultClass fault) { return fault != FaultClass::Healthy; }

struct MotorParameters {
    double supply_frequency_hz = 50.0;
    int pole_pairs = 2;
    double slip = 0.04;
    int n_balls = 9;
    double ball_diameter_mm = 7.94;
    double pitch_diameter_mm = 39.04;
    double contact_angle_rad = 0.0;
    /// Characteristic frequencies for MechanicalOther, which has no closed-form
    /// signature. Empty means the class is not configured for this motor.
    std::vector<double> mechanical_frequencies_hz;

    /// Throws std::invalid_argument naming the first violated constraint.
    void validate() const;
};

/// Reads `key = value` lines; keys are the MotorParameters field names.
/// `mechanical_frequencies_hz` is an optional comma-separated list.
MotorParameters load_motor_parameters(const std::filesystem::path& path);
MotorParameters parse_motor_parameters(const std::string& text);
std::string format_motor_parameters(const MotorParameters& params);

struct SignatureFrequencySet {
    FaultClass fault = FaultClass::RotorBar;
    std::vector<double> frequencies_hz;
    /// (order, signed sideband index) of the formula that produced each entry.
    std::vector<std::pair<int, int>> harmonic_orders;
    /// Entries within 0.5 Hz of the supply frequency; kept, but hard to resolve.
    std::vector<bool> near_fundamental;
};

/// Mechanical rotation frequency f_s (1 - s) / p.
double rotor_frequency(const MotorParameters& params);

double ball_pass_outer_hz(const MotorParameters& params);
double ball_pass_inner_hz(const MotorParameters& params);
double ball_spin_hz(const MotorParameters& params);

/// All formula-generated current signature frequencies of `fault` with orders up
/// to `max_order` in (0, band_limit_hz), ascending and deduplicated.
SignatureFrequencySet signature_frequencies(const MotorParameters& params, FaultClass fault, int max_order,
                                            double band_limit_hz);

}  // namespace sgda
