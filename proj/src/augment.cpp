#include "sgda/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "sgda/kv_config.hpp"

namespace sgda {

namespace {

double median_of(std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

}  // namespace

bool segment_in_band(std::size_t center_bin, std::size_t n_bins) {
    return center_bin >= kSegmentLeft && center_bin - kSegmentLeft + kSegmentLength <= n_bins;
}

PeakSegment normalize_segment(std::span<const double> raw, std::size_t center_bin) {
    if (raw.size() != kSegmentLength)
        throw std::invalid_argument("segment must have " + std::to_string(kSegmentLength) + " values, got " +
                                    std::to_string(raw.size()));
    PeakSegment seg;
    seg.center_bin = center_bin;
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    seg.seg_min = *lo;
    seg.seg_max = *hi;
    const double range = seg.seg_max - seg.seg_min;
    seg.values.resize(kSegmentLength, 0.0);
    if (!(range > 0.0)) {
        seg.degenerate = true;
        return seg;
    }
    for (std::size_t i = 0; i < kSegmentLength; ++i) seg.values[i] = (raw[i] - seg.seg_min) / range;
    // Pin the extremes exactly; (x - min) / range can round just off 0 or 1.
    seg.values[static_cast<std::size_t>(lo - raw.begin())] = 0.0;
    seg.values[static_cast<std::size_t>(hi - raw.begin())] = 1.0;
    return seg;
}

PeakSegment extract_segment(const SpectrumWindow& spectrum, std::size_t center_bin) {
    if (!segment_in_band(center_bin, spectrum.size()))
        throw std::out_of_range("segment around bin " + std::to_string(center_bin) + " leaves the " +
                                std::to_string(spectrum.size()) + "-bin band");
    const auto first = spectrum.magnitudes.begin() + static_cast<std::ptrdiff_t>(center_bin - kSegmentLeft);
    return normalize_segment(std::span<const double>(&*first, kSegmentLength), center_bin);
}

PeakSegment gaussian_peak(double width_bins, double amplitude) {
    if (!(width_bins > 0.0)) throw std::invalid_argument("gaussian_peak: width must be positive");
    if (!(amplitude > 0.0 && amplitude <= 1.0)) throw std::invalid_argument("gaussian_peak: amplitude must be in (0, 1]");
    // Convolving a unit impulse with the kernel reproduces the kernel, centred on
    // the impulse; only the ratio to the centre tap matters after scaling.
    PeakSegment seg;
    seg.values.resize(kSegmentLength);
    for (std::size_t i = 0; i < kSegmentLength; ++i) {
        const double offset = static_cast<double>(i) - static_cast<double>(kSegmentLeft);
        seg.values[i] = amplitude * std::exp(-offset * offset / (2.0 * width_bins * width_bins));
    }
    const auto [lo, hi] = std::minmax_element(seg.values.begin(), seg.values.end());
    seg.seg_min = *lo;
    seg.seg_max = *hi;
    return seg;
}

std::vector<double> denormalize(const PeakSegment& segment, double target_min, double target_max) {
    if (target_max < target_min) throw std::invalid_argument("denormalize: target_max below target_min");
    std::vector<double> out(segment.values.size());
    const double range = target_max - target_min;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = target_min + segment.values[i] * range;
    return out;
}

SpectrumWindow insert_peak(const SpectrumWindow& spectrum, std::span<const double> segment, std::size_t center_bin,
                           FaultClass fault) {
    if (segment.size() != kSegmentLength)
        throw std::invalid_argument("insert_peak: segment must have " + std::to_string(kSegmentLength) +
                                    " values, got " + std::to_string(segment.size()));
    if (!segment_in_band(center_bin, spectrum.size()))
        throw std::out_of_range("insert_peak: segment around bin " + std::to_string(center_bin) + " leaves the band");
    SpectrumWindow out = spectrum;
    const std::size_t first = center_bin - kSegmentLeft;
    for (std::size_t i = 0; i < kSegmentLength; ++i)
        out.magnitudes[first + i] = std::max(out.magnitudes[first + i], segment[i]);
    out.label = fault;
    return out;
}

GaussianPeakSource::GaussianPeakSource(double sigma_min, double sigma_max)
    : sigma_min_(sigma_min), sigma_max_(sigma_max) {
    if (!(sigma_min > 0.0 && sigma_max >= sigma_min)) throw std::invalid_argument("invalid Gaussian width range");
}

std::vector<double> GaussianPeakSource::next_shape(std::mt19937_64& rng) {
    const double sigma = std::uniform_real_distribution<double>(sigma_min_, sigma_max_)(rng);
    return gaussian_peak(sigma, 1.0).values;
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5d9au};
    return std::mt19937_64(seq);
}

std::vector<std::size_t> usable_signature_bins(const MotorParameters& params, FaultClass fault, double bin_width_hz,
                                               int max_order, std::size_t n_bins) {
    const double band_limit = bin_width_hz * static_cast<double>(n_bins);
    const auto signatures = signature_frequencies(params, fault, max_order, band_limit);
    std::vector<std::size_t> bins;
    for (double f : signatures.frequencies_hz) {
        const double index = std::nearbyint(f / bin_width_hz);
        if (index >= static_cast<double>(n_bins)) continue;
        const auto bin = static_cast<std::size_t>(index);
        if (segment_in_band(bin, n_bins) && std::find(bins.begin(), bins.end(), bin) == bins.end()) bins.push_back(bin);
    }
    if (bins.empty())
        throw std::invalid_argument("fault " + std::string(to_string(fault)) +
                                    " has no signature frequency whose segment fits the " + std::to_string(n_bins) +
                                    "-bin band");
    return bins;
}

LabeledDataset build_augmented_dataset(std::span<const SpectrumWindow> healthy, const MotorParameters& params,
                                       std::span<const FaultClass> faults, PeakSource& generator,
                                       std::size_t per_class, std::uint64_t seed, const AugmentOptions& options) {
    if (healthy.empty()) throw std::invalid_argument("build_augmented_dataset: no healthy windows");
    if (faults.empty()) throw std::invalid_argument("build_augmented_dataset: no fault classes");
    if (per_class == 0) throw std::invalid_argument("build_augmented_dataset: per_class must be positive");
    if (!(options.amplitude_min >= 0.0 && options.amplitude_max >= options.amplitude_min))
        throw std::invalid_argument("build_augmented_dataset: invalid amplitude range");

    const std::size_t n_bins = healthy.front().size();
    const double bin_width = healthy.front().bin_width_hz;
    for (const auto& w : healthy)
        if (w.size() != n_bins || w.bin_width_hz != bin_width)
            throw std::invalid_argument("build_augmented_dataset: healthy windows differ in binning");

    std::vector<std::vector<std::size_t>> bins_per_fault;
    for (FaultClass f : faults) {
        if (f == FaultClass::Healthy) throw std::invalid_argument("build_augmented_dataset: healthy is not a fault");
        bins_per_fault.push_back(usable_signature_bins(params, f, bin_width, options.max_order, n_bins));
    }

    LabeledDataset out;
    out.windows.reserve(per_class * (faults.size() + 1));

    // Healthy class: a seeded permutation of the pool, cycled when it is short.
    auto order_rng = substream(seed, 0);
    const auto order = permutation(healthy.size(), order_rng);
    for (std::size_t i = 0; i < per_class; ++i) {
        SpectrumWindow w = healthy[order[i % order.size()]];
        w.label = FaultClass::Healthy;
        out.windows.push_back(std::move(w));
    }

    std::uniform_int_distribution<std::size_t> pick_window(0, healthy.size() - 1);
    std::uniform_real_distribution<double> pick_amplitude(options.amplitude_min, options.amplitude_max);
    for (std::size_t f = 0; f < faults.size(); ++f) {
        const auto& bins = bins_per_fault[f];
        std::uniform_int_distribution<std::size_t> pick_bin(0, bins.size() - 1);
        for (std::size_t i = 0; i < per_class; ++i) {
            auto rng = substream(seed, 1 + f * per_class + i);
            const SpectrumWindow& base = healthy[pick_window(rng)];
            const std::size_t centre = bins[pick_bin(rng)];
            const auto shape = generator.next_shape(rng);

            const auto first = base.magnitudes.begin() + static_cast<std::ptrdiff_t>(centre - kSegmentLeft);
            const double baseline = median_of(std::vector<double>(first, first + kSegmentLength));
            const double window_max = *std::max_element(base.magnitudes.begin(), base.magnitudes.end());
            const double level = pick_amplitude(rng) * (window_max - baseline) + baseline;

            PeakSegment unit;
            unit.values = shape;
            const auto segment = denormalize(unit, baseline, level);
            out.windows.push_back(insert_peak(base, segment, centre, faults[f]));
        }
    }
    return out;
}

double relative_peak_level(const SpectrumWindow& spectrum, std::size_t center_bin) {
    if (!segment_in_band(center_bin, spectrum.size()))
        throw std::out_of_range("relative_peak_level: segment around bin " + std::to_string(center_bin) +
                                " leaves the band");
    const auto first = spectrum.magnitudes.begin() + static_cast<std::ptrdiff_t>(center_bin - kSegmentLeft);
    const std::vector<double> raw(first, first + kSegmentLength);
    const double baseline = median_of(raw);
    const double window_max = *std::max_element(spectrum.magnitudes.begin(), spectrum.magnitudes.end());
    if (!(window_max > baseline)) return 0.0;
    return (*std::max_element(raw.begin(), raw.end()) - baseline) / (window_max - baseline);
}

std::vector<PeakSegment> collect_segments(std::span<const SpectrumWindow> windows,
                                          std::span<const std::size_t> center_bins) {
    std::vector<PeakSegment> out;
    for (const auto& w : windows)
        for (std::size_t c : center_bins) {
            if (!segment_in_band(c, w.size())) continue;
            auto seg = extract_segment(w, c);
            if (!seg.degenerate) out.push_back(std::move(seg));
        }
    return out;
}

void save_augment_metadata(const std::filesystem::path& path, const AugmentMetadata& m) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metadata: " + path.string());
    out << "seed = " << m.seed << '\n'
        << "per_class = " << m.per_class << '\n'
        << "generator = " << m.generator << '\n'
        << "faults = ";
    for (std::size_t i = 0; i < m.faults.size(); ++i) out << (i ? ", " : "") << to_string(m.faults[i]);
    out << '\n'
        << "max_order = " << m.options.max_order << '\n'
        << "amplitude_min = " << format_double(m.options.amplitude_min) << '\n'
        << "amplitude_max = " << format_double(m.options.amplitude_max) << '\n'
        << "segment_length = " << kSegmentLength << '\n';
}

}  // namespace sgda
