#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sgda/motor_model.hpp"
#include "sgda/spectrum.hpp"

namespace sgda {

inline constexpr std::size_t kSegmentLength = 20;
/// A segment centred on bin c covers [c - kSegmentLeft, c + kSegmentLength - kSegmentLeft - 1].
inline constexpr std::size_t kSegmentLeft = 10;

struct PeakSegment {
    std::vector<double> values;  // kSegmentLength entries in [0, 1]
    std::size_t center_bin = 0;
    double seg_min = 0.0;
    double seg_max = 0.0;
    /// Zero-range source; values are all zero and the segment is unusable for training.
    bool degenerate = false;
};

/// True when the 20-bin segment around `center_bin` lies inside [0, n_bins).
bool segment_in_band(std::size_t center_bin, std::size_t n_bins = kSpectrumBins);

/// Copies the 20 bins around `center_bin` and min-max normalizes them.
PeakSegment extract_segment(const SpectrumWindow& spectrum, std::size_t center_bin);

/// Min-max normalization of an arbitrary 20-value slice.
PeakSegment normalize_segment(std::span<const double> raw, std::size_t center_bin = 0);

/// Unit impulse at the segment centre smoothed by a Gaussian kernel of standard
/// deviation `width_bins`, scaled so the maximum equals `amplitude`.
PeakSegment gaussian_peak(double width_bins, double amplitude);

/// v -> target_min + v (target_max - target_min).
std::vector<double> denormalize(const PeakSegment& segment, double target_min, double target_max);

/// Element-wise max of the spectrum and `segment` over the 20 bins around
/// `center_bin`; bins outside are copied unchanged. The label becomes `fault`.
SpectrumWindow insert_peak(const SpectrumWindow& spectrum, std::span<const double> segment, std::size_t center_bin,
                           FaultClass fault);

/// Supplies normalized peak shapes: 20 values in [0, 1] with unit maximum.
class PeakSource {
public:
    virtual ~PeakSource() = default;
    virtual std::vector<double> next_shape(std::mt19937_64& rng) = 0;
    virtual std::string name() const = 0;
};

/// Generator-free shapes: Gaussian kernels with sigma drawn from [sigma_min, sigma_max].
class GaussianPeakSource final : public PeakSource {
public:
    explicit GaussianPeakSource(double sigma_min = 0.5, double sigma_max = 2.0);
    std::vector<double> next_shape(std::mt19937_64& rng) override;
    std::string name() const override { return "gaussian"; }

private:
    double sigma_min_;
    double sigma_max_;
};

struct AugmentOptions {
    int max_order = 1;
    /// Injected peak height as a fraction of (window max - segment baseline).
    double amplitude_min = 0.3;
    double amplitude_max = 1.0;
};

/// Bins of `fault`'s signature frequencies whose full segment fits in the band.
/// Throws naming the fault when none does.
std::vector<std::size_t> usable_signature_bins(const MotorParameters& params, FaultClass fault, double bin_width_hz,
                                               int max_order, std::size_t n_bins = kSpectrumBins);

/// `per_class` unmodified healthy windows plus `per_class` windows per fault,
/// each carrying one generated peak at a uniformly chosen signature bin. Every
/// output window draws from its own substream of `seed`, so the result does not
/// depend on construction order.
LabeledDataset build_augmented_dataset(std::span<const SpectrumWindow> healthy, const MotorParameters& params,
                                       std::span<const FaultClass> faults, PeakSource& generator,
                                       std::size_t per_class, std::uint64_t seed, const AugmentOptions& options = {});

/// Inverse of the amplitude policy: (segment max - segment median) /
/// (window max - segment median) for the segment around `center_bin`.
double relative_peak_level(const SpectrumWindow& spectrum, std::size_t center_bin);

/// Normalized segments around `center_bins` of every window, skipping
/// degenerate and out-of-band ones.
std::vector<PeakSegment> collect_segments(std::span<const SpectrumWindow> windows,
                                          std::span<const std::size_t> center_bins);

/// Deterministic per-item generator derived from a master seed.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream);

struct AugmentMetadata {
    std::uint64_t seed = 0;
    std::size_t per_class = 0;
    std::string generator;
    std::vector<FaultClass> faults;
    AugmentOptions options;
};

void save_augment_metadata(const std::filesystem::path& path, const AugmentMetadata& metadata);

}  // namespace sgda
