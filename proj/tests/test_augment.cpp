#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "sgda/augment.hpp"
#include "sgda/sim_oracle.hpp"
#include "sgda/signal_io.hpp"

using namespace sgda;

namespace {

SpectrumWindow ramp_window() {
    SpectrumWindow w;
    w.magnitudes.assign(250, 0.0);
    for (std::size_t i = 0; i < 20; ++i) w.magnitudes[90 + i] = static_cast<double>(i);
    return w;
}

std::vector<SpectrumWindow> healthy_pool(std::size_t recordings, std::uint64_t seed) {
    std::vector<SpectrumWindow> pool;
    for (std::size_t r = 0; r < recordings; ++r) {
        SimSpec spec;
        spec.seed = seed + r;
        spec.source_id = "h" + std::to_string(r);
        const auto rec = simulate(spec);
        std::size_t index = 0;
        for (const auto& win : split_windows(rec, 8192, 4096)) {
            auto s = compute_spectrum(win, rec.sample_rate_hz);
            s.label = FaultClass::Healthy;
            s.source_id = rec.source_id;
            s.window_index = index++;
            pool.push_back(std::move(s));
        }
    }
    return pool;
}

const std::vector<FaultClass> kFiveFaults{FaultClass::RotorBar, FaultClass::Eccentricity, FaultClass::InterTurnShort,
                                          FaultClass::BearingOuterRace, FaultClass::BearingInnerRace};

}  // namespace

TEST_CASE("extract a ramp") {
    const auto seg = extract_segment(ramp_window(), 100);
    REQUIRE(seg.values.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) CHECK(seg.values[i] == doctest::Approx(static_cast<double>(i) / 19.0));
    CHECK(seg.values.front() == 0.0);
    CHECK(seg.values.back() == 1.0);
    CHECK(seg.seg_min == 0.0);
    CHECK(seg.seg_max == 19.0);
    CHECK(!seg.degenerate);
}

TEST_CASE("constant and out-of-band segments") {
    SpectrumWindow w;
    w.magnitudes.assign(250, 5.0);
    const auto seg = extract_segment(w, 120);
    CHECK(seg.degenerate);
    CHECK(seg.seg_min == 5.0);
    CHECK(seg.seg_max == 5.0);
    CHECK(std::all_of(seg.values.begin(), seg.values.end(), [](double v) { return v == 0.0; }));
    CHECK_THROWS_AS(extract_segment(w, 5), std::out_of_range);
    CHECK_THROWS_AS(extract_segment(w, 241), std::out_of_range);
    CHECK_NOTHROW(extract_segment(w, 240));
    CHECK_NOTHROW(extract_segment(w, 10));
}

TEST_CASE("gaussian peaks") {
    const auto narrow = gaussian_peak(0.05, 1.0);
    CHECK(narrow.values[10] == 1.0);
    CHECK(narrow.values[9] < 1e-12);
    CHECK(narrow.values[11] < 1e-12);

    const auto unit = gaussian_peak(1.0, 1.0);
    CHECK(unit.values[10] == 1.0);
    CHECK(unit.values[9] == doctest::Approx(std::exp(-0.5)));
    CHECK(unit.values[11] == doctest::Approx(0.6065).epsilon(1e-4));

    const auto half = gaussian_peak(2.0, 0.5);
    CHECK(*std::max_element(half.values.begin(), half.values.end()) == 0.5);
    for (double v : half.values) CHECK((v >= 0.0 && v <= 1.0));
    CHECK_THROWS(gaussian_peak(0.0, 1.0));
}

TEST_CASE("denormalize") {
    PeakSegment seg;
    for (std::size_t i = 0; i < 20; ++i) seg.values.push_back(static_cast<double>(i) / 19.0);
    const auto out = denormalize(seg, 2.0, 4.0);
    CHECK(out.front() == 2.0);
    CHECK(out.back() == 4.0);
    const auto flat = denormalize(seg, 3.0, 3.0);
    CHECK(std::all_of(flat.begin(), flat.end(), [](double v) { return v == 3.0; }));

    SUBCASE("own anchors restore the source bins") {
        std::mt19937_64 rng(2);
        std::uniform_real_distribution<double> u(0.0, 100.0);
        SpectrumWindow w;
        for (int i = 0; i < 250; ++i) w.magnitudes.push_back(u(rng));
        const auto s = extract_segment(w, 60);
        const auto back = denormalize(s, s.seg_min, s.seg_max);
        for (std::size_t i = 0; i < 20; ++i) CHECK(back[i] == doctest::Approx(w.magnitudes[50 + i]).epsilon(1e-13));
    }
}

TEST_CASE("insert_peak") {
    SpectrumWindow w;
    w.magnitudes.assign(250, 1.0);
    w.label = FaultClass::Healthy;

    const std::vector<double> low(20, 0.5);
    const auto same = insert_peak(w, low, 100, FaultClass::RotorBar);
    CHECK(same.magnitudes == w.magnitudes);
    CHECK(same.label == FaultClass::RotorBar);

    std::vector<double> spike(20, 0.0);
    spike[10] = 10.0;
    spike[9] = 2.0;
    const auto once = insert_peak(w, spike, 100, FaultClass::RotorBar);
    CHECK(once.magnitudes[100] == 10.0);
    CHECK(once.magnitudes[99] == 2.0);
    CHECK(once.magnitudes[101] == 1.0);
    const auto twice = insert_peak(once, spike, 100, FaultClass::RotorBar);
    CHECK(twice.magnitudes == once.magnitudes);

    CHECK_THROWS_AS(insert_peak(w, std::vector<double>(19, 1.0), 100, FaultClass::RotorBar), std::invalid_argument);
    CHECK_THROWS_AS(insert_peak(w, spike, 245, FaultClass::RotorBar), std::out_of_range);
}

TEST_CASE("property: normalization is idempotent") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> raw(20);
        for (auto& v : raw) v = u(rng);
        const auto once = normalize_segment(raw);
        const auto twice = normalize_segment(once.values);
        CHECK(twice.values == once.values);
        CHECK(*std::min_element(once.values.begin(), once.values.end()) == 0.0);
        CHECK(*std::max_element(once.values.begin(), once.values.end()) == 1.0);
    }
}

TEST_CASE("augmented dataset: counts, determinism, locality, detectability") {
    const auto pool = healthy_pool(4, 100);
    const MotorParameters params;
    GaussianPeakSource gaussian;

    SUBCASE("one fault") {
        const std::vector<FaultClass> one{FaultClass::RotorBar};
        const auto ds = build_augmented_dataset(pool, params, one, gaussian, 10, 1);
        CHECK(ds.size() == 20);
        CHECK(ds.count(FaultClass::Healthy) == 10);
        CHECK(ds.count(FaultClass::RotorBar) == 10);
    }

    const auto ds = build_augmented_dataset(pool, params, kFiveFaults, gaussian, 100, 42);
    REQUIRE(ds.size() == 600);
    CHECK(ds.count(FaultClass::Healthy) == 100);
    for (FaultClass f : kFiveFaults) CHECK(ds.count(f) == 100);

    const auto again = build_augmented_dataset(pool, params, kFiveFaults, gaussian, 100, 42);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(again.windows[i].magnitudes == ds.windows[i].magnitudes);
        CHECK(again.windows[i].label == ds.windows[i].label);
    }

    std::size_t detectable = 0, injected = 0;
    for (const auto& w : ds.windows) {
        const auto source = std::find_if(pool.begin(), pool.end(), [&](const SpectrumWindow& h) {
            return h.source_id == w.source_id && h.window_index == w.window_index;
        });
        REQUIRE(source != pool.end());
        std::vector<std::size_t> changed;
        for (std::size_t b = 0; b < 250; ++b)
            if (w.magnitudes[b] != source->magnitudes[b]) changed.push_back(b);
        if (w.label == FaultClass::Healthy) {
            CHECK(changed.empty());
            continue;
        }
        ++injected;
        REQUIRE(!changed.empty());
        const auto bins = usable_signature_bins(params, *w.label, 1.0, 1);
        const auto centre = std::find_if(bins.begin(), bins.end(), [&](std::size_t c) {
            return changed.front() >= c - kSegmentLeft && changed.back() < c - kSegmentLeft + kSegmentLength;
        });
        REQUIRE(centre != bins.end());
        const std::size_t c = *centre;
        double before = 0.0, after = 0.0;
        for (std::size_t b = c - 1; b <= c + 1; ++b) {
            before = std::max(before, source->magnitudes[b]);
            after = std::max(after, w.magnitudes[b]);
        }
        if (after > before) ++detectable;
    }
    CHECK(injected == 500);
    CHECK(static_cast<double>(detectable) >= 0.99 * static_cast<double>(injected));
}

TEST_CASE("substreams are independent of construction order") {
    auto a = substream(7, 3);
    auto b = substream(7, 3);
    auto c = substream(7, 4);
    CHECK(a() == b());
    CHECK(substream(7, 3)() != c());
}

TEST_CASE("faults without in-band signatures are rejected by name") {
    MotorParameters params;
    params.mechanical_frequencies_hz = {2000.0};
    const auto pool = healthy_pool(1, 5);
    GaussianPeakSource gaussian;
    const std::vector<FaultClass> faults{FaultClass::MechanicalOther};
    CHECK_THROWS_WITH(build_augmented_dataset(pool, params, faults, gaussian, 4, 1),
                      doctest::Contains("mechanical_other"));
    CHECK_THROWS(build_augmented_dataset({}, params, kFiveFaults, gaussian, 4, 1));
}

TEST_CASE("relative peak level inverts the amplitude policy") {
    const auto pool = healthy_pool(2, 300);
    const MotorParameters params;
    GaussianPeakSource spike(0.05, 0.05);
    AugmentOptions fixed;
    fixed.amplitude_min = fixed.amplitude_max = 0.4;
    const std::vector<FaultClass> inner{FaultClass::BearingInnerRace};
    const auto ds = build_augmented_dataset(pool, params, inner, spike, 20, 9, fixed);
    const auto bins = usable_signature_bins(params, FaultClass::BearingInnerRace, 1.0, 1);
    for (const auto& w : ds.windows) {
        if (w.label != FaultClass::BearingInnerRace) continue;
        double level = 0.0;
        for (std::size_t c : bins) level = std::max(level, relative_peak_level(w, c));
        CHECK(level == doctest::Approx(0.4).epsilon(0.01));
    }

    // A sideband at -20 dB stands a tenth of the fundamental above the floor.
    SimSpec spec;
    spec.fault = FaultClass::BearingInnerRace;
    spec.seed = 4;
    const auto rec = simulate(spec);
    const auto faulty = compute_spectrum(split_windows(rec, 8192, 4096).front(), rec.sample_rate_hz);
    for (std::size_t c : bins) CHECK(relative_peak_level(faulty, c) == doctest::Approx(0.1).epsilon(0.05));

    CHECK_THROWS_AS(relative_peak_level(faulty, 245), std::out_of_range);
}
