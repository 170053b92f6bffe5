#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sgda/augment.hpp"
#include "sgda/classifier.hpp"
#include "sgda/kv_config.hpp"
#include "sgda/motor_model.hpp"
#include "sgda/spectrum.hpp"
#include "sgda/vae.hpp"

namespace sgda {

enum class ExperimentId { E1, E2, E3, E4, Epsilon };

std::string_view to_string(ExperimentId id);
/// Accepts E1..E4 and epsilon, case-insensitively.
ExperimentId parse_experiment_id(std::string_view text);

/// A: peaks drawn from a VAE trained on extracted segments. B: Gaussian kernels.
enum class GeneratorOption { A, B };

/// Where injected peak heights come from. Window: the fixed fraction range in
/// AugmentOptions. Segments: the range of relative levels measured on the
/// extracted segments the generator was trained on (Option A only).
enum class AmplitudePolicy { Window, Segments };

struct ExperimentConfig {
    ExperimentId experiment = ExperimentId::E1;
    GeneratorOption generator = GeneratorOption::B;
    std::size_t train_per_class = 300;
    std::size_t test_per_class = 100;
    std::vector<FaultClass> faults;
    std::vector<std::uint64_t> seeds;
    /// Sideband levels of simulated fault recordings, cycled over recordings.
    std::vector<double> severity_db{-20.0};
    /// Share of each fault's training windows taken from real fault recordings.
    double real_anomaly_fraction = 0.0;
    /// Share of each fault's test windows that are SGDA-injected rather than real.
    double test_synthetic_fraction = 0.0;
    /// Evaluate on the training set itself (a memorization check).
    bool test_on_train = false;

    MotorParameters motor;
    /// Optional manifest of recorded data replacing the simulator; empty means simulate.
    std::string corpus_manifest;
    double noise_std = 0.005;
    double sample_rate_hz = 8192.0;
    double duration_s = 2.0;
    std::size_t window_length = 8192;
    std::size_t hop = 4096;

    AugmentOptions augment;
    AmplitudePolicy amplitude_policy = AmplitudePolicy::Window;
    ResNetConfig resnet;
    VaeConfig vae;
    /// Extracted segments per fault used to train the Option A generator.
    std::size_t generator_windows = 60;
    SvmConfig svm;
    MlpConfig mlp;
    std::vector<std::size_t> epsilon_counts{1, 10, 25, 50, 100, 300};

    // Execution settings; they never change results and are not hashed.
    std::size_t threads = 1;
    std::filesystem::path output_root = "runs";
    /// Directory that relative corpus paths resolve against.
    std::filesystem::path base_dir = ".";

    /// Throws std::invalid_argument naming the first violated constraint.
    void validate() const;
};

/// Defaults per experiment: fault set and generator option.
ExperimentConfig default_experiment_config(ExperimentId id);

/// Unknown keys are errors; absent keys take default_experiment_config values.
ExperimentConfig parse_experiment_config(const KeyValueConfig& kv);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Every result-affecting field, sorted, one `key = value` per line.
std::string canonical_config_text(const ExperimentConfig& config);
/// SHA-256 of the canonical text, lowercase hex.
std::string config_hash(const ExperimentConfig& config);
/// Run directory name: the first 16 hex digits of the hash.
std::string run_directory_name(const ExperimentConfig& config);

/// An invariant of the protocol was violated; results must not be reported.
class GuardViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws GuardViolation "data leakage" when any source recording id appears in both sets.
void assert_no_leakage(const LabeledDataset& train, const LabeledDataset& test);

/// Throws GuardViolation unless every data row of a report CSV carries a
/// config hash, seed list, generator option and severity grid.
void check_report_provenance(const std::string& csv_text);

/// Lowercase hex SHA-256 of `text`.
std::string sha256_hex(const std::string& text);

/// The Option A generator and the relative peak levels of its training segments.
struct SegmentGenerator {
    std::shared_ptr<const VaeModel> model;
    double level_min = 0.0;
    double level_max = 0.0;
    std::size_t n_segments = 0;
};

/// Trains a VAE on segments around the signature bins of each labeled fault
/// window, skipping bins whose segment holds the supply fundamental (it would
/// dominate the normalization and hide the sideband's shape).
SegmentGenerator train_segment_generator(std::span<const SpectrumWindow> fault_windows, const MotorParameters& motor,
                                         int max_order, const VaeConfig& config);

struct ResultRow {
    std::string model;
    /// Real anomalous training windows (epsilon study only).
    std::optional<std::size_t> count;
    std::vector<EvalReport> per_seed;  // in config seed order
    SeedStats stats;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::string config_hash;
    std::vector<ResultRow> rows;

    /// First row with this model name and count; throws when absent.
    const ResultRow& row(std::string_view model, std::optional<std::size_t> count = std::nullopt) const;
};

/// Healthy vs one fault, SGDA-injected anomalies on both sides.
ExperimentResult run_e1(const ExperimentConfig& config);
/// Healthy plus at least four faults, Gaussian-kernel anomalies on both sides.
ExperimentResult run_e2(const ExperimentConfig& config);
/// Trained on SGDA data, tested on held-out real fault recordings (one fault).
ExperimentResult run_e3(const ExperimentConfig& config);
/// As run_e3 with two faults.
ExperimentResult run_e4(const ExperimentConfig& config);
/// CNN, SVM and MLP trained with `count` real anomalies versus SGDA with none.
ExperimentResult run_epsilon(const ExperimentConfig& config);
/// Dispatches on config.experiment.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Header plus one row per result row, every row carrying the provenance tuple.
std::string report_csv(const ExperimentResult& result);
/// One row per (model, count, seed).
std::string per_seed_csv(const ExperimentResult& result);
/// Plain-text table of mean +/- std in percent.
std::string report_table(const ExperimentResult& result);
/// Renders a report CSV (possibly several concatenated) as a text table.
std::string render_report_csv(const std::string& csv_text);

/// Writes config.txt, report.csv, per_seed.csv and report.txt under
/// output_root / run_directory_name and returns that directory.
std::filesystem::path write_run(const ExperimentResult& result);

}  // namespace sgda
