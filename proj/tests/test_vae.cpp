#include <cmath>
#include <random>

#include "doctest.h"
#include "sgda/sim_oracle.hpp"
#include "sgda/signal_io.hpp"
#include "sgda/vae.hpp"
#include "support/kl_quadrature.hpp"
#include "support/temp_dir.hpp"

using namespace sgda;

namespace {

// Normalized segments around Gaussian peaks injected into simulated healthy
// spectra at rotor-bar and inner-race signature bins.
std::vector<PeakSegment> gaussian_corpus(std::size_t n, std::uint64_t seed) {
    std::vector<SpectrumWindow> pool;
    for (std::uint64_t r = 0; r < 3; ++r) {
        SimSpec spec;
        spec.seed = seed + r;
        const auto rec = simulate(spec);
        for (const auto& w : split_windows(rec, 8192, 4096)) pool.push_back(compute_spectrum(w, rec.sample_rate_hz));
    }
    GaussianPeakSource gaussian;
    const std::vector<FaultClass> faults{FaultClass::BearingInnerRace};
    const auto ds = build_augmented_dataset(pool, MotorParameters{}, faults, gaussian, n, seed);
    const auto bins = usable_signature_bins(MotorParameters{}, FaultClass::BearingInnerRace, 1.0, 1);
    std::vector<PeakSegment> out;
    for (const auto& w : ds.windows) {
        if (w.label != FaultClass::BearingInnerRace) continue;
        // The injected bin is whichever signature bin now holds the larger value.
        std::size_t best = bins.front();
        for (std::size_t b : bins)
            if (w.magnitudes[b] > w.magnitudes[best]) best = b;
        out.push_back(extract_segment(w, best));
    }
    return out;
}

VaeConfig small_config(std::size_t epochs, std::uint64_t seed) {
    VaeConfig cfg;
    cfg.epochs = epochs;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("closed-form KL") {
    const std::vector<double> zero{0.0};
    CHECK(kl_unit_gaussian(zero, zero) == 0.0);
    const std::vector<double> one{1.0};
    CHECK(kl_unit_gaussian(one, zero) == 0.5);
    const std::vector<double> nan{std::nan("")};
    CHECK_THROWS(kl_unit_gaussian(nan, zero));
    CHECK_THROWS(kl_unit_gaussian(std::vector<double>{0, 0}, zero));
}

TEST_CASE("KL matches quadrature and is zero only at the prior") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> mu_dist(-3.0, 3.0), lv_dist(-3.0, 2.0);
    for (int i = 0; i < 50; ++i) {
        const double mu = mu_dist(rng), lv = lv_dist(rng);
        const double closed = kl_unit_gaussian(std::vector<double>{mu}, std::vector<double>{lv});
        CHECK(std::abs(closed - testing::kl_by_quadrature(mu, lv)) < 1e-6);
        CHECK(closed > 0.0);
    }
    CHECK(kl_unit_gaussian(std::vector<double>{1e-5}, std::vector<double>{0.0}) > 0.0);
}

TEST_CASE("reparameterization") {
    const std::vector<double> mu{0.5, -2.0}, lv{0.0, 1.0};
    CHECK(reparameterize(mu, lv, std::vector<double>{0, 0}) == mu);
    CHECK(reparameterize(std::vector<double>{3.0}, std::vector<double>{0.0}, std::vector<double>{1.0})[0] == 4.0);

    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    const double m = 1.25, logvar = 0.7;
    const int draws = 100000;
    double acc = 0.0;
    for (int i = 0; i < draws; ++i)
        acc += reparameterize(std::vector<double>{m}, std::vector<double>{logvar}, std::vector<double>{n01(rng)})[0];
    CHECK(std::abs(acc / draws - m) < 3.0 * std::exp(0.5 * logvar) / std::sqrt(static_cast<double>(draws)));
}

TEST_CASE("VAE training, reconstruction and generation") {
    const auto corpus = gaussian_corpus(200, 3);
    REQUIRE(corpus.size() == 200);

    const auto trained = train_vae(corpus, small_config(500, 7));
    REQUIRE(trained.loss_history.size() == 500);
    for (double l : trained.loss_history) CHECK(std::isfinite(l));
    CHECK(trained.loss_history.back() < trained.loss_history.front());

    double worst = 0.0, mean = 0.0;
    for (const auto& s : corpus) {
        const double e = reconstruction_mse(trained.model, s.values);
        worst = std::max(worst, e);
        mean += e / static_cast<double>(corpus.size());
    }
    MESSAGE("reconstruction MSE mean ", mean, " worst ", worst);
    CHECK(reconstruction_mse(trained.model, corpus.front().values) < 0.02);
    CHECK(mean < 0.02);

    CHECK(generate_peaks(trained.model, 0, 1).empty());
    const auto peaks = generate_peaks(trained.model, 100, 11);
    REQUIRE(peaks.size() == 100);
    std::size_t unimodal = 0;
    for (const auto& p : peaks) {
        REQUIRE(p.values.size() == kSegmentLength);
        for (double v : p.values) CHECK((v >= 0.0 && v <= 1.0));
        CHECK(*std::max_element(p.values.begin(), p.values.end()) == 1.0);
        if (is_unimodal(p.values)) ++unimodal;
    }
    double pairwise = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < peaks.size(); ++i)
        for (std::size_t j = i + 1; j < peaks.size(); ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < kSegmentLength; ++k) d += std::pow(peaks[i].values[k] - peaks[j].values[k], 2);
            pairwise += std::sqrt(d);
            ++pairs;
        }
    MESSAGE("unimodal ", unimodal, "/100, mean pairwise distance ", pairwise / static_cast<double>(pairs));
    CHECK(unimodal >= 90);
    CHECK(pairwise / static_cast<double>(pairs) > 1e-3);

    SUBCASE("same seed, same parameters") {
        const auto again = train_vae(corpus, small_config(500, 7));
        const auto a = trained.model.parameters(), b = again.model.parameters();
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
        CHECK(again.loss_history == trained.loss_history);
    }

    SUBCASE("checkpoint round trip") {
        testing::TempDir dir;
        trained.model.save(dir / "vae.ckpt");
        VaeModel loaded(small_config(1, 99));
        loaded.load(dir / "vae.ckpt");
        const auto p1 = generate_peaks(trained.model, 5, 21), p2 = generate_peaks(loaded, 5, 21);
        for (std::size_t i = 0; i < 5; ++i) CHECK(p1[i].values == p2[i].values);
    }

    SUBCASE("peak source draws from the model") {
        VaePeakSource source(std::make_shared<VaeModel>(trained.model.clone()));
        std::mt19937_64 rng(4);
        const auto shape = source.next_shape(rng);
        CHECK(shape.size() == kSegmentLength);
        CHECK(peak_prominence(shape) >= kMinPeakProminence);
    }
}

TEST_CASE("training needs one batch of usable segments") {
    const auto corpus = gaussian_corpus(20, 1);
    const std::span<const PeakSegment> few(corpus.data(), 15);
    CHECK_THROWS_WITH(train_vae(few, small_config(1, 0)), doctest::Contains("fewer than one batch"));
    std::vector<PeakSegment> degenerate(20);
    for (auto& s : degenerate) {
        s.values.assign(kSegmentLength, 0.0);
        s.degenerate = true;
    }
    CHECK_THROWS(train_vae(degenerate, small_config(1, 0)));
}

TEST_CASE("an untrainable generator is reported") {
    // Decoder output weights at zero give a flat sigmoid(0) = 0.5 everywhere.
    VaeModel flat(small_config(1, 0));
    for (auto& p : flat.parameters())
        if (p.name == "out.w" || p.name == "out.b")
            for (double& v : p.tensor.mutable_data()) v = 0.0;
    CHECK_THROWS_WITH(generate_peaks(flat, 3, 0), "degenerate generator");
}

TEST_CASE("shape helpers") {
    CHECK(is_unimodal(std::vector<double>{0, 0.2, 0.9, 1.0, 0.5, 0.1}));
    CHECK(!is_unimodal(std::vector<double>{0, 1.0, 0.2, 0.9, 0.1}));
    CHECK(is_unimodal(std::vector<double>{0, 1.0, 0.5, 0.51, 0.2}));
    CHECK(peak_prominence(std::vector<double>{1, 1, 1}) == 0.0);
    CHECK(peak_prominence(std::vector<double>{0, 0, 0, 1}) == doctest::Approx(0.75));
}
