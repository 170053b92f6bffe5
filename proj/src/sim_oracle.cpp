#include "sgda/sim_oracle.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sgda/kv_config.hpp"

namespace sgda {

void SimSpec::validate() const {
    params.validate();
    if (!(fundamental_amp > 0.0)) throw std::invalid_argument("fundamental_amp must be positive");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("noise_std must be non-negative");
    if (!(fault_amp_db <= 0.0)) throw std::invalid_argument("fault_amp_db must not exceed 0 dB");
    if (max_order < 1) throw std::invalid_argument("max_order must be at least 1");
    if (!(duration_s > 0.0)) throw std::invalid_argument("duration_s must be positive");
    if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("sample_rate_hz must be positive");
    const double nyquist = sample_rate_hz / 2.0;
    for (const auto& [order, amp] : harmonic_amps) {
        if (order < 3 || order % 2 == 0) throw std::invalid_argument("harmonic orders must be odd and >= 3");
        if (order * params.supply_frequency_hz >= nyquist)
            throw std::invalid_argument("harmonic " + std::to_string(order) + " lies above Nyquist");
        if (!std::isfinite(amp)) throw std::invalid_argument("harmonic amplitude must be finite");
    }
    if (params.supply_frequency_hz >= nyquist) throw std::invalid_argument("supply frequency lies above Nyquist");
}

std::vector<double> simulated_fault_frequencies(const SimSpec& spec) {
    if (spec.fault == FaultClass::Healthy) return {};
    const auto set =
        signature_frequencies(spec.params, spec.fault, spec.max_order, std::numeric_limits<double>::max());
    const double nyquist = spec.sample_rate_hz / 2.0;
    for (double f : set.frequencies_hz)
        if (f >= nyquist)
            throw std::invalid_argument("signature frequency " + format_double(f) + " Hz lies above Nyquist " +
                                        format_double(nyquist) + " Hz");
    return set.frequencies_hz;
}

CurrentRecording simulate(const SimSpec& spec) {
    spec.validate();
    const auto fault_freqs = simulated_fault_frequencies(spec);

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    struct Tone {
        double hz, amp, phase;
    };
    std::vector<Tone> tones;
    const double fs = spec.params.supply_frequency_hz;
    const double a = spec.fundamental_amp;
    tones.push_back({fs, a, phase(rng)});
    for (const auto& [order, rel] : spec.harmonic_amps) tones.push_back({order * fs, a * rel, phase(rng)});
    const double sideband = a * std::pow(10.0, spec.fault_amp_db / 20.0);
    for (double f : fault_freqs) tones.push_back({f, sideband, phase(rng)});

    const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate_hz));
    if (n == 0) throw std::invalid_argument("simulation produces no samples");
    std::normal_distribution<double> noise(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);

    CurrentRecording rec;
    rec.sample_rate_hz = spec.sample_rate_hz;
    rec.source_id = spec.source_id;
    rec.label = spec.fault;
    rec.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.sample_rate_hz;
        double v = 0.0;
        for (const auto& tone : tones) v += tone.amp * std::sin(2.0 * std::numbers::pi * tone.hz * t + tone.phase);
        if (spec.noise_std > 0.0) v += noise(rng);
        rec.samples[i] = v;
    }
    return rec;
}

SimSpec parse_sim_spec(const std::string& text) {
    const auto cfg = KeyValueConfig::parse(text, "<sim spec>");
    SimSpec spec;
    // Motor keys share the file; absent ones keep the default motor's values.
    auto motor = KeyValueConfig::parse(format_motor_parameters(spec.params), "<default motor>");
    for (const auto& key : {"supply_frequency_hz", "pole_pairs", "slip", "n_balls", "ball_diameter_mm",
                            "pitch_diameter_mm", "contact_angle_rad", "mechanical_frequencies_hz"})
        if (auto v = cfg.get(key)) motor.set(key, *v);
    spec.params = parse_motor_parameters(motor.to_string());
    spec.fundamental_amp = cfg.get_double("fundamental_amp", spec.fundamental_amp);
    if (cfg.contains("harmonic_amps")) {
        spec.harmonic_amps.clear();
        for (const auto& item : cfg.get_list("harmonic_amps")) {
            const auto parts = split(item, ':');
            if (parts.size() != 2) throw std::invalid_argument("harmonic_amps entries must be order:amplitude");
            spec.harmonic_amps[static_cast<int>(parse_int(parts[0], "harmonic order"))] =
                parse_double(parts[1], "harmonic amplitude");
        }
    }
    spec.noise_std = cfg.get_double("noise_std", spec.noise_std);
    spec.fault = parse_fault_class(cfg.get_string("fault", "healthy"));
    spec.fault_amp_db = cfg.get_double("fault_amp_db", spec.fault_amp_db);
    spec.max_order = static_cast<int>(cfg.get_int("max_order", spec.max_order));
    spec.duration_s = cfg.get_double("duration_s", spec.duration_s);
    spec.sample_rate_hz = cfg.get_double("sample_rate_hz", spec.sample_rate_hz);
    spec.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    spec.source_id = cfg.get_string("source_id", "");
    spec.validate();
    return spec;
}

std::string format_sim_spec(const SimSpec& spec) {
    std::ostringstream out;
    out << format_motor_parameters(spec.params);
    out << "fundamental_amp = " << format_double(spec.fundamental_amp) << '\n';
    out << "harmonic_amps = ";
    bool first = true;
    for (const auto& [order, amp] : spec.harmonic_amps) {
        out << (first ? "" : ", ") << order << ':' << format_double(amp);
        first = false;
    }
    out << '\n'
        << "noise_std = " << format_double(spec.noise_std) << '\n'
        << "fault = " << to_string(spec.fault) << '\n'
        << "fault_amp_db = " << format_double(spec.fault_amp_db) << '\n'
        << "max_order = " << spec.max_order << '\n'
        << "duration_s = " << format_double(spec.duration_s) << '\n'
        << "sample_rate_hz = " << format_double(spec.sample_rate_hz) << '\n'
        << "seed = " << spec.seed << '\n';
    if (!spec.source_id.empty()) out << "source_id = " << spec.source_id << '\n';
    return out.str();
}

void save_sim_spec(const std::filesystem::path& path, const SimSpec& spec) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write sim spec: " + path.string());
    out << format_sim_spec(spec);
}

}  // namespace sgda
