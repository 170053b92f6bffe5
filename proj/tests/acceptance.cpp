// Runs every acceptance criterion at its stated tolerance and prints one
// PASS/FAIL line each. Exits non-zero when any criterion fails.
//
//   acceptance [--only 1,5,6] [--threads N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "sgda/augment.hpp"
#include "sgda/experiments.hpp"
#include "sgda/sim_oracle.hpp"
#include "sgda/spectrum.hpp"
#include "sgda/vae.hpp"
#include "support/gradient_suite.hpp"
#include "support/kl_quadrature.hpp"
#include "support/temp_dir.hpp"

using namespace sgda;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

double pct(double x) { return 100.0 * x; }

// ------------------------------------------------------------ experiments

struct ExperimentRun {
    ExperimentResult result;
    double seconds = 0.0;
    std::filesystem::path config_file;
    std::filesystem::path run_dir;
};

class ExperimentCache {
public:
    ExperimentCache(const std::filesystem::path& root, std::size_t threads) : root_(root), threads_(threads) {}

    /// Runs the default configuration of `id` from a config file on disk, once.
    const ExperimentRun& get(ExperimentId id) {
        auto it = runs_.find(id);
        if (it != runs_.end()) return it->second;
        ExperimentRun run;
        run.config_file = root_ / (std::string(to_string(id)) + ".txt");
        std::ofstream(run.config_file) << canonical_config_text(default_experiment_config(id))
                                       << "output_root = runs\n";
        auto cfg = load_experiment_config(run.config_file);
        cfg.threads = threads_;
        const auto t0 = std::chrono::steady_clock::now();
        run.result = run_experiment(cfg);
        run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        run.run_dir = write_run(run.result);
        std::cout << report_table(run.result) << fmt::format("  ({:.1f} s)\n", run.seconds) << std::flush;
        return runs_.emplace(id, std::move(run)).first->second;
    }

private:
    std::filesystem::path root_;
    std::size_t threads_;
    std::map<ExperimentId, ExperimentRun> runs_;
};

Outcome criterion1(ExperimentCache& cache) {
    const auto& run = cache.get(ExperimentId::E1);
    const auto& s = run.result.row("SGDA").stats;
    const bool pass = s.n_seeds == 5 && s.accuracy_mean >= 0.99 && s.accuracy_std <= 0.02 && run.seconds < 300.0;
    return {pass, fmt::format("E1 SGDA accuracy {:.2f} +/- {:.2f} % over {} seeds, {:.0f} s (need >= 99, std <= 2, "
                              "5 seeds, < 300 s)",
                              pct(s.accuracy_mean), pct(s.accuracy_std), s.n_seeds, run.seconds)};
}

Outcome criterion2(ExperimentCache& cache) {
    const auto& run = cache.get(ExperimentId::E2);
    const auto& sgda = run.result.row("SGDA").stats;
    const auto& svm = run.result.row("SVM").stats;
    const auto& svm_sgda = run.result.row("SVM+SGDA").stats;
    const double gap = pct(sgda.accuracy_mean - svm.accuracy_mean);
    const bool pass = sgda.accuracy_mean >= 0.95 && gap >= 30.0 && run.seconds < 600.0;
    return {pass, fmt::format("E2 SGDA {:.2f} %, linear SVM {:.2f} %, gap {:.2f} points, {:.0f} s (need >= 95, "
                              "gap >= 30, < 600 s); SVM trained on SGDA data {:.2f} %",
                              pct(sgda.accuracy_mean), pct(svm.accuracy_mean), gap, run.seconds,
                              pct(svm_sgda.accuracy_mean))};
}

Outcome criterion3(ExperimentCache& cache) {
    const auto& e3 = cache.get(ExperimentId::E3);
    const auto& e4 = cache.get(ExperimentId::E4);
    const auto& a = e3.result.row("SGDA").stats;
    const auto& b = e4.result.row("SGDA").stats;
    const bool severity = e3.result.config.severity_db == std::vector<double>{-20.0} &&
                          e4.result.config.severity_db == std::vector<double>{-20.0};
    const bool pass = severity && a.n_seeds == 5 && b.n_seeds == 5 && a.accuracy_mean >= 0.90 &&
                      b.accuracy_mean >= 0.85 && e3.seconds < 600.0 && e4.seconds < 600.0;
    return {pass, fmt::format("E3 {:.2f} +/- {:.2f} % ({:.0f} s), E4 {:.2f} +/- {:.2f} % ({:.0f} s) at -20 dB "
                              "(need >= 90 and >= 85, < 600 s each)",
                              pct(a.accuracy_mean), pct(a.accuracy_std), e3.seconds, pct(b.accuracy_mean),
                              pct(b.accuracy_std), e4.seconds)};
}

Outcome criterion4(ExperimentCache& cache) {
    const auto& run = cache.get(ExperimentId::Epsilon);
    const auto& counts = run.result.config.epsilon_counts;
    double sgda_lo = 1.0, sgda_hi = 0.0, mlp_lo = 1.0, mlp_hi = 0.0;
    for (std::size_t c : counts) {
        const double s = run.result.row("SGDA", c).stats.accuracy_mean;
        const double m = run.result.row("MLP", c).stats.accuracy_mean;
        sgda_lo = std::min(sgda_lo, s);
        sgda_hi = std::max(sgda_hi, s);
        mlp_lo = std::min(mlp_lo, m);
        mlp_hi = std::max(mlp_hi, m);
    }
    const double cnn_first = run.result.row("CNN", counts.front()).stats.accuracy_mean;
    const double cnn_last = run.result.row("CNN", counts.back()).stats.accuracy_mean;
    const bool sgda_ok = pct(sgda_hi - sgda_lo) <= 1.0;
    const bool cnn_ok = cnn_last >= cnn_first;
    const bool mlp_ok = mlp_lo >= 0.45 && mlp_hi <= 0.65;
    const bool pass = sgda_ok && cnn_ok && mlp_ok && run.seconds < 1200.0;
    return {pass, fmt::format("SGDA spread {:.2f} points [{}], CNN {:.2f} -> {:.2f} % [{}], MLP range "
                              "[{:.2f}, {:.2f}] % [{}], {:.0f} s (need <= 1 point, monotone endpoints, within "
                              "[45, 65], < 1200 s)",
                              pct(sgda_hi - sgda_lo), sgda_ok ? "ok" : "fail", pct(cnn_first), pct(cnn_last),
                              cnn_ok ? "ok" : "fail", pct(mlp_lo), pct(mlp_hi), mlp_ok ? "ok" : "fail",
                              run.seconds)};
}

// -------------------------------------------------------- numerical oracles

Outcome criterion5() {
    bool pass = true;
    std::string detail;
    for (const auto& c : testing::run_gradient_suite(2024, 20)) {
        const bool ok = c.shapes >= 20 && c.max_relative_error < 1e-4;
        pass = pass && ok;
        detail += fmt::format("{}{} {:.1e}/{}", detail.empty() ? "" : ", ", c.name, c.max_relative_error, c.shapes);
    }
    return {pass, "max relative error / shapes: " + detail + " (need < 1e-4 over >= 20 shapes)"};
}

Outcome criterion6() {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> normal;
    double worst_parseval = 0.0;
    for (std::size_t n = 2; n <= (1u << 14); n *= 2) {
        for (int rep = 0; rep < 5; ++rep) {
            std::vector<double> x(n);
            for (double& v : x) v = normal(rng);
            double time_energy = 0.0;
            for (double v : x) time_energy += v * v;
            const auto m = fft_magnitude(x);
            // Two-sided energy from the one-sided magnitudes.
            double freq = m.front() * m.front() + m.back() * m.back();
            for (std::size_t k = 1; k + 1 < m.size(); ++k) freq += 2.0 * m[k] * m[k];
            const double n_time = static_cast<double>(n) * time_energy;
            worst_parseval = std::max(worst_parseval, std::abs(freq - n_time) / n_time);
        }
    }
    double worst_share = 1.0;
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (std::size_t n : {16u, 256u, 8192u, 16384u}) {
        for (int rep = 0; rep < 20; ++rep) {
            const std::size_t bin = std::uniform_int_distribution<std::size_t>(1, n / 2 - 1)(rng);
            const double ph = phase(rng);
            std::vector<double> x(n);
            for (std::size_t t = 0; t < n; ++t)
                x[t] = std::cos(2.0 * std::numbers::pi * static_cast<double>(bin * t) / static_cast<double>(n) + ph);
            const auto m = fft_magnitude(x);
            double total = 0.0;
            for (double v : m) total += v * v;
            worst_share = std::min(worst_share, m[bin] * m[bin] / total);
        }
    }
    const double dc = fft_magnitude(std::vector<double>(8, 1.0)).front();
    const bool pass = worst_parseval <= 1e-9 && worst_share >= 0.999 && dc == 8.0;
    return {pass, fmt::format("Parseval worst {:.1e} to N=16384, worst in-bin share {:.6f}, all-ones DC {} "
                              "(need <= 1e-9, >= 0.999, exactly 8)",
                              worst_parseval, worst_share, format_double(dc))};
}

Outcome criterion7() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> mu_dist(-3.0, 3.0), lv_dist(-3.0, 2.0);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const double mu = mu_dist(rng), lv = lv_dist(rng);
        const double closed = kl_unit_gaussian(std::vector<double>{mu}, std::vector<double>{lv});
        worst = std::max(worst, std::abs(closed - testing::kl_by_quadrature(mu, lv)));
    }
    const double at_prior = kl_unit_gaussian(std::vector<double>{0.0}, std::vector<double>{0.0});
    const bool pass = worst < 1e-6 && at_prior == 0.0;
    return {pass, fmt::format("50 cases, worst |closed - quadrature| {:.1e}, kl(0, 0) = {} (need < 1e-6, exactly 0)",
                              worst, format_double(at_prior))};
}

SpectrumWindow first_window(const SimSpec& spec) {
    const auto rec = simulate(spec);
    return compute_spectrum(std::span<const double>(rec.samples.data(), 8192), rec.sample_rate_hz);
}

Outcome criterion8() {
    double worst = std::numeric_limits<double>::infinity();
    std::string where;
    std::size_t checked = 0;
    for (FaultClass f : kAllFaultClasses) {
        if (!is_anomalous(f)) continue;
        SimSpec healthy;
        healthy.seed = 8;
        healthy.noise_std = 0.005;
        healthy.params.mechanical_frequencies_hz = {37.5, 162.5};
        SimSpec faulty = healthy;
        faulty.fault = f;
        faulty.fault_amp_db = -20.0;
        const auto h = first_window(healthy);
        const auto y = first_window(faulty);
        const auto sig = signature_frequencies(faulty.params, f, faulty.max_order, static_cast<double>(kSpectrumBins) - 0.5);
        for (double hz : sig.frequencies_hz) {
            if (hz >= static_cast<double>(kSpectrumBins) - 0.5) continue;
            const auto bin = frequency_to_bin(hz, h.bin_width_hz);
            const double rise = 20.0 * std::log10(y.magnitudes[bin] / h.magnitudes[bin]);
            ++checked;
            if (rise < worst) {
                worst = rise;
                where = fmt::format("{} at {:.2f} Hz", to_string(f), hz);
            }
        }
    }
    const bool pass = checked > 0 && worst >= 6.0;
    return {pass, fmt::format("{} signature bins over 7 fault classes, weakest rise {:.1f} dB ({}) (need >= 6 dB)",
                              checked, worst, where)};
}

Outcome criterion9() {
    // 40 healthy recordings give 120 source windows.
    std::vector<SpectrumWindow> pool;
    for (int r = 0; r < 40; ++r) {
        SimSpec spec;
        spec.seed = 900 + static_cast<std::uint64_t>(r);
        const auto rec = simulate(spec);
        std::size_t index = 0;
        for (const auto& win : split_windows(rec, 8192, 4096)) {
            auto s = compute_spectrum(win, rec.sample_rate_hz);
            s.label = FaultClass::Healthy;
            s.source_id = "h" + std::to_string(r);
            s.window_index = index++;
            pool.push_back(std::move(s));
        }
    }
    std::map<std::pair<std::string, std::size_t>, const SpectrumWindow*> by_key;
    for (const auto& w : pool) by_key[{w.source_id, w.window_index}] = &w;

    const MotorParameters params;
    const std::vector<FaultClass> faults{FaultClass::RotorBar, FaultClass::Eccentricity, FaultClass::InterTurnShort,
                                         FaultClass::BearingOuterRace, FaultClass::BearingInnerRace};
    GaussianPeakSource gaussian;
    const auto ds = build_augmented_dataset(pool, params, faults, gaussian, 2000, 99);

    std::size_t augmented = 0, local = 0;
    for (const auto& w : ds.windows) {
        if (!is_anomalous(*w.label)) continue;
        ++augmented;
        const auto* source = by_key.at({w.source_id, w.window_index});
        std::size_t lo = kSpectrumBins, hi = 0;
        for (std::size_t b = 0; b < kSpectrumBins; ++b)
            if (w.magnitudes[b] != source->magnitudes[b]) {
                lo = std::min(lo, b);
                hi = b;
            }
        if (lo == kSpectrumBins) {  // the peak stayed under the spectrum everywhere
            ++local;
            continue;
        }
        for (std::size_t c : usable_signature_bins(params, *w.label, 1.0, 1)) {
            const std::size_t first = c - kSegmentLeft;
            if (lo >= first && hi < first + kSegmentLength) {
                ++local;
                break;
            }
        }
    }
    const bool pass = augmented >= 10000 && local == augmented;
    return {pass, fmt::format("{} of {} augmented windows changed only inside one 20-bin signature segment "
                              "(need all of >= 10000)",
                              local, augmented)};
}

Outcome criterion10(ExperimentCache& cache) {
    std::string detail;
    bool pass = true;
    for (auto id : {ExperimentId::E1, ExperimentId::E2, ExperimentId::E3, ExperimentId::E4, ExperimentId::Epsilon}) {
        const auto& first = cache.get(id);
        const auto csv = slurp(first.run_dir / "report.csv");
        const auto per_seed = slurp(first.run_dir / "per_seed.csv");
        auto cfg = load_experiment_config(first.config_file);
        cfg.threads = 1;  // a different schedule must not matter either
        const auto again = run_experiment(cfg);
        const bool same = report_csv(again) == csv && per_seed_csv(again) == per_seed;
        pass = pass && same;
        detail += fmt::format("{}{} {}", detail.empty() ? "" : ", ", to_string(id), same ? "identical" : "DIFFERENT");
    }
    return {pass, detail + " (report.csv and per_seed.csv on rerun from the same config file)"};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    std::size_t threads = 1;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--only" && i + 1 < argc) {
            for (const auto& item : split(argv[++i], ',')) only.insert(static_cast<int>(parse_int(item, "--only")));
        } else if (arg == "--threads" && i + 1 < argc) {
            threads = static_cast<std::size_t>(parse_int(argv[++i], "--threads"));
        } else {
            std::cerr << "usage: acceptance [--only 1,2,...] [--threads N]\n";
            return 2;
        }
    }

    testing::TempDir scratch;
    ExperimentCache cache(scratch.path(), threads);
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {5, criterion5},
        {6, criterion6},
        {7, criterion7},
        {8, criterion8},
        {9, criterion9},
        {1, [&] { return criterion1(cache); }},
        {2, [&] { return criterion2(cache); }},
        {3, [&] { return criterion3(cache); }},
        {4, [&] { return criterion4(cache); }},
        {10, [&] { return criterion10(cache); }},
    };

    std::map<int, Outcome> outcomes;
    for (const auto& [n, check] : criteria) {
        if (!only.empty() && !only.count(n)) continue;
        try {
            outcomes.emplace(n, check());
        } catch (const std::exception& e) {
            outcomes.emplace(n, Outcome{false, std::string("threw: ") + e.what()});
        }
        const auto& o = outcomes.at(n);
        std::cout << fmt::format("criterion {:>2} {}  {}\n", n, o.pass ? "PASS" : "FAIL", o.detail) << std::flush;
    }

    std::cout << "\nsummary\n";
    int failed = 0;
    for (const auto& [n, o] : outcomes) {
        std::cout << fmt::format("criterion {:>2} {}\n", n, o.pass ? "PASS" : "FAIL");
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
