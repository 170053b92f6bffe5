#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "sgda/classifier.hpp"
#include "sgda/signal_io.hpp"
#include "sgda/sim_oracle.hpp"
#include "support/temp_dir.hpp"

using namespace sgda;

namespace {

// Noise floor, a shared reference peak at bin 120 (the role the supply
// frequency plays in real spectra), and one bump at a class-specific bin.
LabeledDataset blobs(const std::vector<std::pair<FaultClass, std::size_t>>& classes, std::size_t per_class,
                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, 1.5);
    LabeledDataset ds;
    for (std::size_t i = 0; i < per_class; ++i)
        for (const auto& [label, centre] : classes) {
            SpectrumWindow w;
            w.magnitudes.resize(250);
            for (auto& m : w.magnitudes) m = noise(rng);
            w.magnitudes[120] += 50.0;
            const double c = static_cast<double>(centre) + jitter(rng);
            for (std::size_t b = 0; b < 250; ++b)
                w.magnitudes[b] += 20.0 * std::exp(-std::pow(static_cast<double>(b) - c, 2) / 8.0);
            w.label = label;
            w.source_id = "toy";
            w.window_index = ds.size();
            ds.windows.push_back(std::move(w));
        }
    return ds;
}

ResNetConfig narrow(std::size_t n_classes, std::uint64_t seed, std::size_t epochs = 20) {
    ResNetConfig cfg;
    cfg.block_channels = {4, 8, 16, 32};
    cfg.n_classes = n_classes;
    cfg.seed = seed;
    cfg.epochs = epochs;
    return cfg;
}

const std::vector<FaultClass> kBinary{FaultClass::Healthy, FaultClass::RotorBar};

bool same_parameters(const nn::ParameterList& a, const nn::ParameterList& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::ranges::equal(a[i].tensor.data(), b[i].tensor.data())) return false;
    return true;
}

}  // namespace

TEST_CASE("ResNet construction") {
    const ResNet model(narrow(2, 1), kBinary);
    SpectrumWindow w;
    w.magnitudes.assign(250, 1.0);
    const auto s = model.scores(std::span<const SpectrumWindow>(&w, 1));
    REQUIRE(s.size() == 1);
    CHECK(s[0].size() == 2);

    CHECK(same_parameters(model.parameters(), ResNet(narrow(2, 1), kBinary).parameters()));
    CHECK(!same_parameters(model.parameters(), ResNet(narrow(2, 2), kBinary).parameters()));
    CHECK(model.parameter_count() == ResNet(narrow(2, 9), kBinary).parameter_count());

    CHECK_THROWS(ResNet(narrow(1, 1), {FaultClass::Healthy}));
    ResNetConfig full;
    CHECK(full.block_channels == std::vector<std::size_t>{64, 128, 256, 512});
    CHECK(full.batch_size == 16);
    CHECK(full.lr == 0.001);
}

TEST_CASE("zero input yields the head bias") {
    ResNet model(narrow(3, 4), {FaultClass::Healthy, FaultClass::RotorBar, FaultClass::Eccentricity});
    const auto params = model.parameters();
    auto head_b = std::find_if(params.begin(), params.end(), [](const auto& p) { return p.name == "head.b"; })->tensor;
    head_b.mutable_data()[0] = 0.3;
    head_b.mutable_data()[1] = -0.7;
    head_b.mutable_data()[2] = 1.5;
    SpectrumWindow zero;
    zero.magnitudes.assign(250, 0.0);
    const auto s = model.scores(std::span<const SpectrumWindow>(&zero, 1));
    CHECK(s[0] == std::vector<double>{0.3, -0.7, 1.5});
}

TEST_CASE("ResNet learns separable blobs") {
    const auto ds = blobs({{FaultClass::Healthy, 95}, {FaultClass::RotorBar, 200}}, 64, 3);
    ResNet model(narrow(2, 5), kBinary);
    const auto history = train(model, ds);
    REQUIRE(history.loss.size() == 20);
    for (double l : history.loss) CHECK(std::isfinite(l));
    CHECK(history.loss.back() < history.loss.front());
    CHECK(history.accuracy.back() == 1.0);
    CHECK(evaluate(model, ds).accuracy == 1.0);

    ResNet twin(narrow(2, 5), kBinary);
    CHECK(train(twin, ds).loss == history.loss);

    SUBCASE("checkpoint reload gives bit-exact logits") {
        testing::TempDir dir;
        model.save(dir / "m.ckpt");
        ResNet loaded(narrow(2, 77), kBinary);
        loaded.load(dir / "m.ckpt");
        CHECK(loaded.scores(ds.windows) == model.scores(ds.windows));
    }

    SUBCASE("shuffling the test set leaves the report unchanged") {
        const auto test = blobs({{FaultClass::Healthy, 97}, {FaultClass::RotorBar, 196}}, 20, 8);
        auto shuffled = test;
        std::mt19937_64 rng(2);
        std::shuffle(shuffled.windows.begin(), shuffled.windows.end(), rng);
        const auto a = evaluate(model, test), b = evaluate(model, shuffled);
        CHECK(a.accuracy == b.accuracy);
        CHECK(a.macro_f1 == b.macro_f1);
        CHECK(a.confusion == b.confusion);
        CHECK(a.per_class_f1 == b.per_class_f1);
    }

    CHECK_THROWS(train(model, LabeledDataset{}));
}

TEST_CASE("evaluation metrics") {
    const std::vector<FaultClass> truth{FaultClass::Healthy, FaultClass::Healthy, FaultClass::RotorBar,
                                        FaultClass::RotorBar};
    const auto perfect = evaluate_predictions(kBinary, truth, truth);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.macro_f1 == 1.0);

    const auto test = blobs({{FaultClass::Healthy, 60}, {FaultClass::RotorBar, 180}}, 5, 1);
    const auto constant = evaluate(ConstantClassifier(kBinary, FaultClass::Healthy), test);
    CHECK(constant.accuracy == 0.5);
    CHECK(constant.per_class_f1.at(FaultClass::Healthy) == doctest::Approx(2.0 / 3.0));
    CHECK(constant.per_class_f1.at(FaultClass::RotorBar) == 0.0);
    CHECK(constant.macro_f1 == doctest::Approx(1.0 / 3.0));
    CHECK(constant.confusion[0][0] + constant.confusion[0][1] == 5);
    CHECK(constant.confusion[1][0] + constant.confusion[1][1] == 5);
    CHECK(constant.n_test == 10);

    CHECK_THROWS_WITH(evaluate(ConstantClassifier(kBinary, FaultClass::Healthy), LabeledDataset{}), doctest::Contains("empty"));
    const auto foreign = blobs({{FaultClass::BearingBall, 60}}, 2, 1);
    CHECK_THROWS_WITH(evaluate(ConstantClassifier(kBinary, FaultClass::Healthy), foreign), doctest::Contains("bearing_ball"));

    CHECK(evaluate(ConstantClassifier(kBinary, FaultClass::RotorBar), test).per_class_f1.at(FaultClass::Healthy) == 0.0);
    CHECK_THROWS(ConstantClassifier(kBinary, FaultClass::Eccentricity));

    const std::vector<EvalReport> one{constant};
    CHECK(summarize(one).accuracy_std == 0.0);
    const std::vector<EvalReport> two{constant, perfect};
    CHECK(summarize(two).accuracy_mean == 0.75);
    CHECK(summarize(two).accuracy_std == doctest::Approx(std::sqrt(0.125)));
    CHECK(format_report(constant).find("rotor_bar") != std::string::npos);
}

TEST_CASE("linear SVM") {
    LabeledDataset two;
    for (int i = 0; i < 2; ++i) {
        SpectrumWindow w;
        w.magnitudes.assign(250, 0.0);
        w.magnitudes[10] = i == 0 ? 1.0 : -1.0;
        w.label = kBinary[static_cast<std::size_t>(i)];
        two.windows.push_back(w);
    }
    SvmConfig cfg;
    cfg.epochs = 50;
    CHECK(evaluate(train_svm(two, cfg).model, two).accuracy == 1.0);

    const auto three = blobs({{FaultClass::Healthy, 40}, {FaultClass::RotorBar, 125}, {FaultClass::Eccentricity, 210}},
                             30, 6);
    cfg.epochs = 30;
    const auto svm = train_svm(three, cfg);
    CHECK(evaluate(svm.model, three).accuracy == 1.0);

    // Non-overlapping 50-step averages of the objective never rise.
    const auto& obj = svm.objective;
    REQUIRE(obj.size() >= 100);
    double previous = INFINITY;
    for (std::size_t start = 0; start + 50 <= obj.size(); start += 50) {
        double avg = 0.0;
        for (std::size_t i = start; i < start + 50; ++i) avg += obj[i] / 50.0;
        CHECK(avg <= previous);
        previous = avg;
    }

    CHECK(train_svm(three, cfg).model.weights == svm.model.weights);
    CHECK_THROWS_WITH(train_svm(blobs({{FaultClass::Healthy, 40}}, 5, 1), cfg), doctest::Contains("single class"));
}

TEST_CASE("linear SVM converges on raw-scale spectra") {
    // The fundamental bin sits near 4096 while fault sidebands are ten times
    // smaller and the floor is below 1; plain iterates oscillate here.
    LabeledDataset ds;
    for (FaultClass f : kBinary)
        for (std::uint64_t r = 0; r < 30; ++r) {
            SimSpec spec;
            spec.fault = f == FaultClass::Healthy ? FaultClass::Healthy : FaultClass::InterTurnShort;
            spec.seed = 100 * r + static_cast<std::uint64_t>(f);
            for (const auto& win : split_windows(simulate(spec), 8192, 4096)) {
                auto w = compute_spectrum(win, spec.sample_rate_hz);
                w.label = f;
                ds.windows.push_back(std::move(w));
            }
        }
    const SvmConfig cfg;
    const auto svm = train_svm(ds, cfg);
    CHECK(evaluate(svm.model, ds).accuracy == 1.0);
    CHECK(svm.model.objective(ds, cfg.c) < 0.05);
}

TEST_CASE("MLP") {
    const auto ds = blobs({{FaultClass::Healthy, 60}, {FaultClass::RotorBar, 180}}, 30, 2);
    MlpConfig logistic;
    logistic.hidden_dims = {};
    logistic.epochs = 30;
    const auto lr = train_mlp(ds, logistic);
    CHECK(evaluate(lr.model, ds).accuracy == 1.0);
    CHECK(lr.model.parameters().size() == 2);

    MlpConfig cfg;
    cfg.epochs = 5;
    const auto a = train_mlp(ds, cfg), b = train_mlp(ds, cfg);
    CHECK(same_parameters(a.model.parameters(), b.model.parameters()));
    CHECK(a.model.scores(ds.windows).front().size() == 2);
    CHECK_THROWS(train_mlp(LabeledDataset{}, cfg));
}
