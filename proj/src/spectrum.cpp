#include "sgda/spectrum.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "sgda/kv_config.hpp"

namespace sgda {

namespace {

using cd = std::complex<double>;

// In-place iterative radix-2 decimation-in-time transform.
void fft_in_place(std::vector<cd>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
        for (std::size_t k = 0; k < half; ++k) {
            // Twiddles evaluated directly rather than by recurrence, to hold
            // round-off flat for long transforms.
            const cd w = std::polar(1.0, angle * static_cast<double>(k));
            for (std::size_t start = 0; start < n; start += len) {
                const cd u = a[start + k];
                const cd v = a[start + k + half] * w;
                a[start + k] = u + v;
                a[start + k + half] = u - v;
            }
        }
    }
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && std::has_single_bit(n); }

std::size_t next_power_of_two(std::size_t n) { return n <= 1 ? 1 : std::bit_ceil(n); }

std::vector<cd> real_fft(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2 || !is_power_of_two(n)) throw std::invalid_argument("FFT length must be a power of two >= 2");
    for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument("FFT input contains a non-finite value");

    // Pack even/odd samples into one half-length complex transform, then split.
    const std::size_t half = n / 2;
    std::vector<cd> z(half);
    for (std::size_t t = 0; t < half; ++t) z[t] = cd(x[2 * t], x[2 * t + 1]);
    fft_in_place(z);

    std::vector<cd> out(half + 1);
    for (std::size_t k = 0; k <= half; ++k) {
        const cd zk = z[k % half];
        const cd zc = std::conj(z[(half - k) % half]);
        const cd even = 0.5 * (zk + zc);
        const cd odd = cd(0.0, -0.5) * (zk - zc);
        const cd w = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
        out[k] = even + w * odd;
    }
    return out;
}

std::vector<double> fft_magnitude(std::span<const double> x) {
    const auto spectrum = real_fft(x);
    std::vector<double> mags(spectrum.size());
    std::transform(spectrum.begin(), spectrum.end(), mags.begin(), [](const cd& c) { return std::abs(c); });
    return mags;
}

SpectrumWindow truncate_spectrum(std::span<const double> magnitudes, double bin_width_hz, std::size_t n_bins) {
    if (!(bin_width_hz > 0.0)) throw std::invalid_argument("bin width must be positive");
    if (magnitudes.size() < n_bins) throw std::invalid_argument("window too short for truncation");
    SpectrumWindow w;
    w.magnitudes.assign(magnitudes.begin(), magnitudes.begin() + static_cast<std::ptrdiff_t>(n_bins));
    w.bin_width_hz = bin_width_hz;
    return w;
}

SpectrumWindow compute_spectrum(std::span<const double> window, double sample_rate_hz, std::size_t n_bins) {
    if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("sample rate must be positive");
    const std::size_t padded = std::max<std::size_t>(2, next_power_of_two(window.size()));
    std::vector<double> buffer(padded, 0.0);
    std::copy(window.begin(), window.end(), buffer.begin());
    const auto mags = fft_magnitude(buffer);
    return truncate_spectrum(mags, sample_rate_hz / static_cast<double>(padded), n_bins);
}

std::size_t frequency_to_bin(double f_hz, double bin_width_hz, std::size_t n_bins) {
    if (!(f_hz >= 0.0) || !std::isfinite(f_hz)) throw std::invalid_argument("frequency must be non-negative");
    if (!(bin_width_hz > 0.0)) throw std::invalid_argument("bin width must be positive");
    // nearbyint under the default rounding mode rounds half to even.
    const double index = std::nearbyint(f_hz / bin_width_hz);
    if (index >= static_cast<double>(n_bins))
        throw std::out_of_range("frequency outside truncated band: " + format_double(f_hz) + " Hz");
    return static_cast<std::size_t>(index);
}

std::vector<FaultClass> LabeledDataset::classes() const {
    std::vector<FaultClass> out;
    for (const auto& w : windows) {
        if (!w.label) throw std::invalid_argument("dataset contains an unlabeled window: " + w.source_id);
        if (std::find(out.begin(), out.end(), *w.label) == out.end()) out.push_back(*w.label);
    }
    return out;
}

std::size_t LabeledDataset::count(FaultClass fault) const {
    return static_cast<std::size_t>(
        std::count_if(windows.begin(), windows.end(), [&](const SpectrumWindow& w) { return w.label == fault; }));
}

void save_dataset_csv(const std::filesystem::path& path, const LabeledDataset& dataset) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset: " + path.string());
    const std::size_t bins = dataset.empty() ? kSpectrumBins : dataset.windows.front().size();
    out << "label,source_id,window_index,bin_width_hz";
    for (std::size_t b = 0; b < bins; ++b) out << ",b" << b;
    out << '\n';
    for (const auto& w : dataset.windows) {
        if (w.size() != bins) throw std::invalid_argument("dataset windows differ in bin count");
        if (w.source_id.find(',') != std::string::npos)
            throw std::invalid_argument("source id contains a comma: " + w.source_id);
        out << label_to_string(w.label) << ',' << w.source_id << ',' << w.window_index << ','
            << format_double(w.bin_width_hz);
        for (double m : w.magnitudes) out << ',' << format_double(m);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

LabeledDataset load_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header");
    const auto header = split(trim(line), ',');
    if (header.size() < 5 || header[0] != "label") throw std::runtime_error(path.string() + ": malformed header");
    const std::size_t bins = header.size() - 4;

    LabeledDataset dataset;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const auto fields = split(trim(line), ',');
        if (fields.size() != bins + 4) throw std::runtime_error(where + ": wrong field count");
        SpectrumWindow w;
        w.label = parse_label(fields[0]);
        w.source_id = fields[1];
        w.window_index = static_cast<std::size_t>(parse_int(fields[2], where));
        w.bin_width_hz = parse_double(fields[3], where);
        w.magnitudes.reserve(bins);
        for (std::size_t b = 0; b < bins; ++b) w.magnitudes.push_back(parse_double(fields[4 + b], where));
        dataset.windows.push_back(std::move(w));
    }
    return dataset;
}

}  // namespace sgda
