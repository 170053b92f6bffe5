#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sgda/motor_model.hpp"
#include "sgda/signal_io.hpp"

namespace sgda {

/// Physical description of one synthetic stator-current recording.
struct SimSpec {
    MotorParameters params;
    double fundamental_amp = 1.0;
    /// Odd harmonic order -> amplitude relative to the fundamental.
    std::map<int, double> harmonic_amps{{3, 0.05}, {5, 0.02}};
    double noise_std = 0.005;
    FaultClass fault = FaultClass::Healthy;
    /// Sideband level relative to the fundamental; never positive.
    double fault_amp_db = -20.0;
    /// Highest formula order of the fault's sidebands that is synthesized.
    int max_order = 1;
    double duration_s = 2.0;
    double sample_rate_hz = 8192.0;
    std::uint64_t seed = 0;
    std::string source_id;

    void validate() const;
};

/// Frequencies the simulator places for `spec.fault` (empty for Healthy).
std::vector<double> simulated_fault_frequencies(const SimSpec& spec);

/// Fundamental plus harmonics, one sine per signature frequency of the fault at
/// fault_amp_db below the fundamental, and white Gaussian noise. Phases and
/// noise come from `spec.seed`, drawn in a fixed order (fundamental, harmonics,
/// sidebands, noise) so healthy and faulty specs sharing a seed share the
/// healthy components exactly.
CurrentRecording simulate(const SimSpec& spec);

SimSpec parse_sim_spec(const std::string& text);
std::string format_sim_spec(const SimSpec& spec);
void save_sim_spec(const std::filesystem::path& path, const SimSpec& spec);

}  // namespace sgda
