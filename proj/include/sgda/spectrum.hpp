#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sgda/motor_model.hpp"

namespace sgda {

inline constexpr std::size_t kSpectrumBins = 250;

struct SpectrumWindow {
    std::vector<double> magnitudes;
    double bin_width_hz = 1.0;
    std::string source_id;
    std::size_t window_index = 0;
    Label label;

    std::size_t size() const { return magnitudes.size(); }
};

struct LabeledDataset {
    std::vector<SpectrumWindow> windows;

    std::size_t size() const { return windows.size(); }
    bool empty() const { return windows.empty(); }
    /// Distinct labels in first-appearance order; throws on unlabeled windows.
    std::vector<FaultClass> classes() const;
    std::size_t count(FaultClass fault) const;
};

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

/// One-sided DFT X_0 .. X_{N/2} of a real sequence, unnormalized
/// (X_k = sum_t x_t e^{-i 2 pi k t / N}). N must be a power of two >= 2.
std::vector<std::complex<double>> real_fft(std::span<const double> x);

/// |real_fft(x)|.
std::vector<double> fft_magnitude(std::span<const double> x);

/// First `n_bins` magnitudes, verbatim.
SpectrumWindow truncate_spectrum(std::span<const double> magnitudes, double bin_width_hz,
                                 std::size_t n_bins = kSpectrumBins);

/// Zero-pads `window` to the next power of two, transforms, and truncates. The
/// bin width is sample_rate / padded length.
SpectrumWindow compute_spectrum(std::span<const double> window, double sample_rate_hz,
                                std::size_t n_bins = kSpectrumBins);

/// round(f / bin_width) with ties to even; throws when the bin falls outside
/// the truncated band.
std::size_t frequency_to_bin(double f_hz, double bin_width_hz, std::size_t n_bins = kSpectrumBins);

/// Header `label,source_id,window_index,bin_width_hz,b0,...`; one window per row.
void save_dataset_csv(const std::filesystem::path& path, const LabeledDataset& dataset);
LabeledDataset load_dataset_csv(const std::filesystem::path& path);

}  // namespace sgda
