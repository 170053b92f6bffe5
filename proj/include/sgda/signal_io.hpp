#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sgda/motor_model.hpp"

namespace sgda {

struct CurrentRecording {
    double sample_rate_hz = 0.0;
    std::vector<double> samples;  // amperes, one phase
    std::string source_id;
    Label label;

    /// Non-empty, finite, and sampled at least twice `band_limit_hz`.
    void validate(double band_limit_hz) const;
};

/// Parses a single-phase `time_s,current_a` CSV. The sample rate is not
/// inferred from the time column; callers pass the declared value.
CurrentRecording load_recording(const std::filesystem::path& path, double sample_rate_hz,
                                const std::string& source_id = {}, Label label = std::nullopt);

/// Multi-phase variant: every column after `time_s` becomes one recording whose
/// source id is `<source_id>/<column name>`.
std::vector<CurrentRecording> load_phase_recordings(const std::filesystem::path& path, double sample_rate_hz,
                                                    const std::string& source_id = {}, Label label = std::nullopt);

/// Writes shortest round-trip decimal representations, so reloading is bit-exact.
void save_recording(const std::filesystem::path& path, const CurrentRecording& recording);

using SampleWindow = std::vector<double>;

/// Consecutive windows of `window_len` samples, `hop` apart; the tail that does
/// not fill a window is dropped.
std::vector<SampleWindow> split_windows(const CurrentRecording& recording, std::size_t window_len, std::size_t hop);

struct ManifestEntry {
    std::filesystem::path recording;
    Label label;
    std::filesystem::path motor_config;
    double sample_rate_hz = 0.0;
};

struct DatasetManifest {
    static constexpr int kFormatVersion = 1;

    int format_version = kFormatVersion;
    std::vector<ManifestEntry> entries;
};

/// Text format: a `sgda-manifest <version>` header line, then one
/// `path,label,motor_config,sample_rate_hz` line per entry. `#` lines are
/// comments. Relative paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct ManifestContents {
    std::vector<CurrentRecording> recordings;
    /// Keyed by the motor config path relative to the manifest directory.
    std::map<std::string, MotorParameters> motors;
    /// Index into `motors` for each recording.
    std::vector<std::string> recording_motor;
};

/// Loads every recording and each distinct motor config once. Source ids are
/// the recording paths relative to the manifest directory.
ManifestContents load_manifest_contents(const std::filesystem::path& path);

}  // namespace sgda
