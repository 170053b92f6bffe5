#include "sgda/experiments.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "sgda/signal_io.hpp"
#include "sgda/sim_oracle.hpp"

namespace sgda {

namespace {

// ---------------------------------------------------------------- text helpers

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& format, std::string_view sep = ", ") {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += format(items[i]);
    }
    return out;
}

std::string join_doubles(const std::vector<double>& v, std::string_view sep = ", ") {
    return join(v, [](double x) { return format_double(x); }, sep);
}

template <typename T>
std::string join_ints(const std::vector<T>& v, std::string_view sep = ", ") {
    return join(v, [](T x) { return std::to_string(x); }, sep);
}

std::string join_faults(const std::vector<FaultClass>& v, std::string_view sep = ", ") {
    return join(v, [](FaultClass f) { return std::string(to_string(f)); }, sep);
}

std::vector<std::string> list_of(const KeyValueConfig& kv, const std::string& key) {
    auto items = kv.get_list(key);
    for (auto& item : items) item = trim(item);
    return items;
}

std::size_t as_count(long long v, const std::string& key) {
    if (v < 0) throw std::invalid_argument(key + " must not be negative");
    return static_cast<std::size_t>(v);
}

std::vector<std::size_t> count_list(const KeyValueConfig& kv, const std::string& key, std::vector<std::size_t> fallback) {
    if (!kv.contains(key)) return fallback;
    std::vector<std::size_t> out;
    for (const auto& item : list_of(kv, key)) out.push_back(as_count(parse_int(item, key), key));
    return out;
}

const char* generator_name(GeneratorOption g) { return g == GeneratorOption::A ? "A" : "B"; }

const std::vector<std::string> kMotorKeys{"supply_frequency_hz", "pole_pairs",        "slip",
                                          "n_balls",             "ball_diameter_mm",  "pitch_diameter_mm",
                                          "contact_angle_rad",   "mechanical_frequencies_hz"};

const std::set<std::string> kExperimentKeys{
    "experiment",     "generator",       "train_per_class",   "test_per_class", "faults",
    "seeds",          "severity_db",     "real_anomaly_fraction", "test_synthetic_fraction",
    "test_on_train",  "corpus_manifest", "noise_std",         "sample_rate_hz", "duration_s",
    "window_length",  "hop",             "max_order",         "amplitude_min",  "amplitude_max",
    "amplitude_policy",
    "resnet_channels", "resnet_kernel",  "resnet_epochs",     "resnet_batch",   "resnet_lr",
    "log_input",      "vae_hidden",      "vae_latent",        "vae_epochs",     "vae_batch",
    "vae_lr",         "vae_beta",        "generator_windows", "svm_c",          "svm_epochs",     "svm_lr",
    "svm_batch",      "mlp_hidden",      "mlp_epochs",        "mlp_batch",      "mlp_lr",
    "epsilon_counts", "threads",         "output_root"};

// ---------------------------------------------------------------- seeds

// Tags keep every derived random stream of one experiment seed distinct.
enum : std::uint64_t {
    kTagTrainAugment = 1,
    kTagTestAugment = 2,
    kTagResNet = 3,
    kTagSvm = 4,
    kTagMlp = 5,
    kTagVae = 6,
    kTagRecording = std::uint64_t{1} << 40,
};

std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
    auto rng = substream(seed, tag);
    return rng();
}

// ---------------------------------------------------------------- corpus

enum class Split { Train, Test };

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

// Labeled spectrum windows, simulated on demand or cut from a recorded manifest.
class Corpus {
public:
    explicit Corpus(const ExperimentConfig& cfg) : cfg_(cfg) {
        if (cfg.corpus_manifest.empty()) return;
        const auto path = cfg.base_dir / cfg.corpus_manifest;
        if (!std::filesystem::exists(path)) throw std::runtime_error("missing corpus: " + path.string());
        auto contents = load_manifest_contents(path);
        std::sort(contents.recordings.begin(), contents.recordings.end(),
                  [](const auto& a, const auto& b) { return a.source_id < b.source_id; });
        // Alternate recordings of each label between the splits.
        std::map<FaultClass, std::size_t> seen;
        for (const auto& rec : contents.recordings) {
            if (!rec.label) continue;
            const std::size_t i = seen[*rec.label]++;
            auto& bucket = recorded_[{*rec.label, i % 2 == 0 ? Split::Train : Split::Test}];
            std::size_t index = 0;
            for (const auto& w : split_windows(rec, cfg.window_length, cfg.hop))
                bucket.push_back(to_spectrum(w, rec.sample_rate_hz, rec.source_id, index++, *rec.label));
        }
        if (recorded_.empty()) throw std::runtime_error("missing corpus: no labeled recordings in " + path.string());
    }

    /// The first `n` windows of `label` in `split` for experiment seed `seed`.
    std::vector<SpectrumWindow> windows(FaultClass label, Split split, std::size_t n, std::uint64_t seed) const {
        if (!cfg_.corpus_manifest.empty()) {
            const auto it = recorded_.find({label, split});
            const std::size_t have = it == recorded_.end() ? 0 : it->second.size();
            if (have < n)
                throw std::runtime_error(fmt::format("corpus has {} {} windows in the {} split, {} needed", have,
                                                     to_string(label), split_name(split), n));
            return {it->second.begin(), it->second.begin() + static_cast<std::ptrdiff_t>(n)};
        }
        std::vector<SpectrumWindow> out;
        for (std::size_t r = 0; out.size() < n; ++r) {
            SimSpec spec;
            spec.params = cfg_.motor;
            spec.noise_std = cfg_.noise_std;
            spec.sample_rate_hz = cfg_.sample_rate_hz;
            spec.duration_s = cfg_.duration_s;
            spec.max_order = cfg_.augment.max_order;
            spec.fault = label;
            spec.fault_amp_db = cfg_.severity_db[r % cfg_.severity_db.size()];
            const std::uint64_t tag = kTagRecording | (static_cast<std::uint64_t>(split) << 36) |
                                      (static_cast<std::uint64_t>(label) << 28) | r;
            spec.seed = derive(seed, tag);
            spec.source_id = fmt::format("sim/{}/{}/seed{}/r{}", split_name(split), to_string(label), seed, r);
            const auto rec = simulate(spec);
            std::size_t index = 0;
            for (const auto& w : split_windows(rec, cfg_.window_length, cfg_.hop)) {
                if (out.size() == n) break;
                out.push_back(to_spectrum(w, rec.sample_rate_hz, rec.source_id, index++, label));
            }
            if (index == 0) throw std::invalid_argument("recordings are shorter than one window");
        }
        return out;
    }

private:
    static SpectrumWindow to_spectrum(const SampleWindow& w, double rate, const std::string& id, std::size_t index,
                                      FaultClass label) {
        auto s = compute_spectrum(w, rate);
        s.source_id = id;
        s.window_index = index;
        s.label = label;
        return s;
    }

    const ExperimentConfig& cfg_;
    std::map<std::pair<FaultClass, Split>, std::vector<SpectrumWindow>> recorded_;
};

// ---------------------------------------------------------------- per-seed pieces

struct SeedRun {
    const ExperimentConfig& cfg;
    const Corpus& corpus;
    std::uint64_t seed;
};

double bin_width(const ExperimentConfig& cfg) {
    return cfg.sample_rate_hz / static_cast<double>(next_power_of_two(cfg.window_length));
}

struct Generator {
    std::unique_ptr<PeakSource> source;
    AugmentOptions options;
};

Generator make_generator(const SeedRun& run) {
    const auto& cfg = run.cfg;
    if (cfg.generator == GeneratorOption::B) return {std::make_unique<GaussianPeakSource>(), cfg.augment};

    std::vector<SpectrumWindow> windows;
    for (FaultClass f : cfg.faults) {
        const auto part = run.corpus.windows(f, Split::Train, cfg.generator_windows, run.seed);
        windows.insert(windows.end(), part.begin(), part.end());
    }
    VaeConfig vae = cfg.vae;
    vae.seed = derive(run.seed, kTagVae);
    const auto trained = train_segment_generator(windows, cfg.motor, cfg.augment.max_order, vae);
    AugmentOptions options = cfg.augment;
    if (cfg.amplitude_policy == AmplitudePolicy::Segments) {
        options.amplitude_min = trained.level_min;
        options.amplitude_max = trained.level_max;
    }
    return {std::make_unique<VaePeakSource>(trained.model), options};
}

LabeledDataset synthetic(const SeedRun& run, std::span<const SpectrumWindow> pool, std::span<const FaultClass> faults,
                         Generator& generator, std::size_t per_class, std::uint64_t tag) {
    return build_augmented_dataset(pool, run.cfg.motor, faults, *generator.source, per_class, derive(run.seed, tag),
                                   generator.options);
}

std::vector<FaultClass> class_list(const ExperimentConfig& cfg) {
    std::vector<FaultClass> classes{FaultClass::Healthy};
    classes.insert(classes.end(), cfg.faults.begin(), cfg.faults.end());
    return classes;
}

EvalReport fit_resnet(const SeedRun& run, const LabeledDataset& train_set, const LabeledDataset& test_set,
                      const std::vector<FaultClass>& classes) {
    ResNetConfig rc = run.cfg.resnet;
    rc.n_classes = classes.size();
    rc.seed = derive(run.seed, kTagResNet);
    ResNet model(rc, classes);
    train(model, train_set);
    return evaluate(model, test_set);
}

EvalReport fit_svm(const SeedRun& run, const LabeledDataset& train_set, const LabeledDataset& test_set) {
    SvmConfig sc = run.cfg.svm;
    sc.seed = derive(run.seed, kTagSvm);
    return evaluate(train_svm(train_set, sc).model, test_set);
}

EvalReport fit_mlp(const SeedRun& run, const LabeledDataset& train_set, const LabeledDataset& test_set) {
    MlpConfig mc = run.cfg.mlp;
    mc.seed = derive(run.seed, kTagMlp);
    return evaluate(train_mlp(train_set, mc).model, test_set);
}

// The paper's SVM baseline never sees augmented data: it trains on healthy
// windows plus whatever real anomalies the protocol allows. With none, a
// supervised model can only answer healthy.
EvalReport fit_baseline_svm(const SeedRun& run, const LabeledDataset& available, const LabeledDataset& test_set) {
    if (available.classes().size() < 2)
        return evaluate(ConstantClassifier(class_list(run.cfg), FaultClass::Healthy), test_set);
    return fit_svm(run, available, test_set);
}

LabeledDataset healthy_only(const LabeledDataset& ds) {
    LabeledDataset out;
    for (const auto& w : ds.windows)
        if (w.label == FaultClass::Healthy) out.windows.push_back(w);
    return out;
}

using SeedRows = std::vector<std::pair<std::pair<std::string, std::optional<std::size_t>>, EvalReport>>;

// Healthy plus SGDA anomalies, train and test from disjoint recordings.
SeedRows synthetic_protocol(const SeedRun& run) {
    const auto& cfg = run.cfg;
    auto generator = make_generator(run);
    const auto train_pool = run.corpus.windows(FaultClass::Healthy, Split::Train, cfg.train_per_class, run.seed);
    const auto train_set = synthetic(run, train_pool, cfg.faults, generator, cfg.train_per_class, kTagTrainAugment);
    LabeledDataset test_set = train_set;
    if (!cfg.test_on_train) {
        const auto test_pool = run.corpus.windows(FaultClass::Healthy, Split::Test, cfg.test_per_class, run.seed);
        test_set = synthetic(run, test_pool, cfg.faults, generator, cfg.test_per_class, kTagTestAugment);
    }
    return {{{"SGDA", std::nullopt}, fit_resnet(run, train_set, test_set, class_list(cfg))},
            {{"SVM", std::nullopt}, fit_baseline_svm(run, healthy_only(train_set), test_set)},
            {{"SVM+SGDA", std::nullopt}, fit_svm(run, train_set, test_set)}};
}

struct TrainingSets {
    LabeledDataset sgda;       // healthy, SGDA and any real anomalous windows
    LabeledDataset available;  // the same without the SGDA windows
};

// Training set of healthy and SGDA windows, with an optional share of real
// fault windows replacing synthetic ones.
TrainingSets sgda_training_set(const SeedRun& run, Generator& generator) {
    const auto& cfg = run.cfg;
    const auto pool = run.corpus.windows(FaultClass::Healthy, Split::Train, cfg.train_per_class, run.seed);
    TrainingSets sets{synthetic(run, pool, cfg.faults, generator, cfg.train_per_class, kTagTrainAugment), {}};
    sets.available = healthy_only(sets.sgda);
    const auto n_real = static_cast<std::size_t>(std::llround(cfg.real_anomaly_fraction * cfg.train_per_class));
    if (n_real == 0) return sets;
    for (FaultClass f : cfg.faults) {
        const auto real = run.corpus.windows(f, Split::Train, n_real, run.seed);
        std::size_t seen = 0, replaced = 0;
        for (auto& w : sets.sgda.windows)
            if (w.label == f && seen++ >= cfg.train_per_class - n_real) w = real[replaced++];
        sets.available.windows.insert(sets.available.windows.end(), real.begin(), real.end());
    }
    return sets;
}

// Held-out healthy windows plus real fault windows, optionally diluted with SGDA ones.
LabeledDataset real_test_set(const SeedRun& run, Generator& generator) {
    const auto& cfg = run.cfg;
    const auto pool = run.corpus.windows(FaultClass::Healthy, Split::Test, cfg.test_per_class, run.seed);
    LabeledDataset test_set;
    test_set.windows = pool;
    const auto n_syn = static_cast<std::size_t>(std::llround(cfg.test_synthetic_fraction * cfg.test_per_class));
    for (std::size_t i = 0; i < cfg.faults.size(); ++i) {
        const FaultClass f = cfg.faults[i];
        const auto real = run.corpus.windows(f, Split::Test, cfg.test_per_class - n_syn, run.seed);
        test_set.windows.insert(test_set.windows.end(), real.begin(), real.end());
        if (n_syn == 0) continue;
        const std::vector<FaultClass> one{f};
        const auto syn = synthetic(run, pool, one, generator, n_syn, kTagTestAugment + 16 * (i + 1));
        for (const auto& w : syn.windows)
            if (w.label == f) test_set.windows.push_back(w);
    }
    return test_set;
}

SeedRows real_protocol(const SeedRun& run) {
    auto generator = make_generator(run);
    const auto sets = sgda_training_set(run, generator);
    const auto& train_set = sets.sgda;
    const auto test_set = run.cfg.test_on_train ? train_set : real_test_set(run, generator);
    assert_no_leakage(train_set, test_set);
    return {{{"SGDA", std::nullopt}, fit_resnet(run, train_set, test_set, class_list(run.cfg))},
            {{"SVM", std::nullopt}, fit_baseline_svm(run, sets.available, test_set)},
            {{"SVM+SGDA", std::nullopt}, fit_svm(run, train_set, test_set)}};
}

SeedRows epsilon_protocol(const SeedRun& run) {
    const auto& cfg = run.cfg;
    const FaultClass fault = cfg.faults.front();
    const std::size_t pool_size = *std::max_element(cfg.epsilon_counts.begin(), cfg.epsilon_counts.end());
    auto generator = make_generator(run);
    const auto sgda_train = sgda_training_set(run, generator).sgda;
    const auto test_set = cfg.test_on_train ? sgda_train : real_test_set(run, generator);
    assert_no_leakage(sgda_train, test_set);

    const auto healthy = run.corpus.windows(FaultClass::Healthy, Split::Train, cfg.train_per_class, run.seed);
    const auto anomalies = run.corpus.windows(fault, Split::Train, pool_size, run.seed);
    const auto classes = class_list(cfg);

    SeedRows rows;
    std::vector<EvalReport> cnn, svm, mlp;
    for (std::size_t count : cfg.epsilon_counts) {
        LabeledDataset train_set;
        train_set.windows = healthy;
        train_set.windows.insert(train_set.windows.end(), anomalies.begin(),
                                 anomalies.begin() + static_cast<std::ptrdiff_t>(count));
        assert_no_leakage(train_set, test_set);
        cnn.push_back(fit_resnet(run, train_set, test_set, classes));
        svm.push_back(fit_svm(run, train_set, test_set));
        mlp.push_back(fit_mlp(run, train_set, test_set));
    }
    // SGDA never sees a real anomaly, so one model serves every column.
    const auto sgda = fit_resnet(run, sgda_train, test_set, classes);
    const std::pair<const char*, const std::vector<EvalReport>*> models[]{{"CNN", &cnn}, {"SVM", &svm}, {"MLP", &mlp}};
    for (const auto& [name, reports] : models)
        for (std::size_t i = 0; i < cfg.epsilon_counts.size(); ++i)
            rows.push_back({{name, cfg.epsilon_counts[i]}, (*reports)[i]});
    for (std::size_t count : cfg.epsilon_counts) rows.push_back({{"SGDA", count}, sgda});
    return rows;
}

ExperimentResult run_seeds(const ExperimentConfig& cfg, SeedRows (*protocol)(const SeedRun&)) {
    cfg.validate();
    const Corpus corpus(cfg);
    std::vector<SeedRows> per_seed(cfg.seeds.size());
    const std::size_t threads = std::max<std::size_t>(1, cfg.threads);
    for (std::size_t start = 0; start < cfg.seeds.size(); start += threads) {
        std::vector<std::future<SeedRows>> jobs;
        const std::size_t end = std::min(cfg.seeds.size(), start + threads);
        for (std::size_t i = start; i < end; ++i)
            jobs.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred, protocol,
                                      SeedRun{cfg, corpus, cfg.seeds[i]}));
        for (std::size_t i = start; i < end; ++i) per_seed[i] = jobs[i - start].get();
    }

    // Aggregate in seed order so the result is independent of completion order.
    ExperimentResult result{cfg, config_hash(cfg), {}};
    for (std::size_t r = 0; r < per_seed.front().size(); ++r) {
        ResultRow row;
        row.model = per_seed.front()[r].first.first;
        row.count = per_seed.front()[r].first.second;
        for (const auto& seed_rows : per_seed) row.per_seed.push_back(seed_rows[r].second);
        row.stats = summarize(row.per_seed);
        result.rows.push_back(std::move(row));
    }
    return result;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') quoted = !quoted;
        else if (c == ',' && !quoted) out.push_back(std::exchange(field, {}));
        else field += c;
    }
    out.push_back(field);
    return out;
}

std::string percent(const std::string& mean, const std::string& std_dev) {
    return fmt::format("{:.2f} +/- {:.2f}", 100.0 * parse_double(mean, "mean"), 100.0 * parse_double(std_dev, "std"));
}

}  // namespace

// ---------------------------------------------------------------- config

std::string_view to_string(ExperimentId id) {
    switch (id) {
        case ExperimentId::E1: return "E1";
        case ExperimentId::E2: return "E2";
        case ExperimentId::E3: return "E3";
        case ExperimentId::E4: return "E4";
        case ExperimentId::Epsilon: return "EPSILON";
    }
    throw std::logic_error("unknown experiment id");
}

ExperimentId parse_experiment_id(std::string_view text) {
    std::string upper(text);
    for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (auto id : {ExperimentId::E1, ExperimentId::E2, ExperimentId::E3, ExperimentId::E4, ExperimentId::Epsilon})
        if (to_string(id) == upper) return id;
    throw std::invalid_argument("unknown experiment '" + std::string(text) + "' (expected E1, E2, E3, E4 or epsilon)");
}

ExperimentConfig default_experiment_config(ExperimentId id) {
    ExperimentConfig cfg;
    cfg.experiment = id;
    cfg.seeds = {1, 2, 3, 4, 5};
    // Narrow residual widths keep a five-seed run within minutes on one core.
    cfg.resnet.block_channels = {8, 16, 32, 64};
    switch (id) {
        case ExperimentId::E1:
            cfg.generator = GeneratorOption::A;
            cfg.amplitude_policy = AmplitudePolicy::Segments;
            cfg.faults = {FaultClass::BearingInnerRace};
            break;
        case ExperimentId::E2:
            cfg.generator = GeneratorOption::B;
            cfg.faults = {FaultClass::RotorBar, FaultClass::Eccentricity, FaultClass::BearingOuterRace,
                          FaultClass::BearingInnerRace};
            break;
        case ExperimentId::E3:
            cfg.generator = GeneratorOption::A;
            cfg.amplitude_policy = AmplitudePolicy::Segments;
            cfg.faults = {FaultClass::InterTurnShort};
            break;
        case ExperimentId::E4:
            cfg.generator = GeneratorOption::A;
            cfg.amplitude_policy = AmplitudePolicy::Segments;
            cfg.faults = {FaultClass::InterTurnShort, FaultClass::BearingOuterRace};
            break;
        case ExperimentId::Epsilon:
            cfg.generator = GeneratorOption::A;
            cfg.amplitude_policy = AmplitudePolicy::Segments;
            cfg.faults = {FaultClass::InterTurnShort};
            break;
    }
    return cfg;
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw std::invalid_argument("seeds must not be empty");
    if (faults.empty()) throw std::invalid_argument("faults must not be empty");
    if (std::set<FaultClass>(faults.begin(), faults.end()).size() != faults.size())
        throw std::invalid_argument("faults must not repeat");
    for (FaultClass f : faults)
        if (!is_anomalous(f)) throw std::invalid_argument("faults must not include healthy");
    const std::size_t n = faults.size();
    switch (experiment) {
        case ExperimentId::E1:
        case ExperimentId::E3:
        case ExperimentId::Epsilon:
            if (n != 1) throw std::invalid_argument(std::string(to_string(experiment)) + " is binary: give one fault");
            break;
        case ExperimentId::E2:
            if (n < 4) throw std::invalid_argument("E2 needs at least 4 anomalous fault classes");
            break;
        case ExperimentId::E4:
            if (n < 2) throw std::invalid_argument("E4 needs at least 2 anomalous fault classes");
            break;
    }
    if (train_per_class == 0 || test_per_class == 0) throw std::invalid_argument("per-class counts must be positive");
    if (severity_db.empty()) throw std::invalid_argument("severity_db must not be empty");
    for (double db : severity_db)
        if (!(db <= 0.0)) throw std::invalid_argument("severity_db entries must not be positive");
    for (double f : {real_anomaly_fraction, test_synthetic_fraction})
        if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("fractions must lie in [0, 1]");
    if (window_length == 0 || hop == 0) throw std::invalid_argument("window_length and hop must be positive");
    if (!(sample_rate_hz > 0.0) || !(duration_s > 0.0)) throw std::invalid_argument("sample_rate_hz and duration_s must be positive");
    if (amplitude_policy == AmplitudePolicy::Segments && generator != GeneratorOption::A)
        throw std::invalid_argument("amplitude_policy segments needs generator A");
    if (resnet.block_channels.empty()) throw std::invalid_argument("resnet_channels must not be empty");
    if (experiment == ExperimentId::Epsilon) {
        if (epsilon_counts.empty()) throw std::invalid_argument("epsilon_counts must not be empty");
        for (std::size_t c : epsilon_counts) {
            if (c == 0) throw std::invalid_argument("epsilon counts must be positive");
            if (c > train_per_class)
                throw std::invalid_argument(fmt::format("epsilon count {} exceeds the anomalous pool of {} windows", c,
                                                        train_per_class));
        }
    }
    motor.validate();
    // Throws naming any fault whose signatures all fall outside the band.
    for (FaultClass f : faults) usable_signature_bins(motor, f, bin_width(*this), augment.max_order);
}

ExperimentConfig parse_experiment_config(const KeyValueConfig& kv) {
    for (const auto& [key, value] : kv.entries())
        if (!kExperimentKeys.count(key) && !(key.rfind("motor.", 0) == 0 &&
                                             std::find(kMotorKeys.begin(), kMotorKeys.end(), key.substr(6)) !=
                                                 kMotorKeys.end()))
            throw std::invalid_argument("unknown config key '" + key + "'");

    ExperimentConfig cfg = default_experiment_config(parse_experiment_id(kv.require("experiment")));
    const std::string gen = kv.get_string("generator", generator_name(cfg.generator));
    if (gen == "A" || gen == "a") cfg.generator = GeneratorOption::A;
    else if (gen == "B" || gen == "b") cfg.generator = GeneratorOption::B;
    else throw std::invalid_argument("generator must be A or B, not '" + gen + "'");

    cfg.train_per_class = as_count(kv.get_int("train_per_class", 300), "train_per_class");
    cfg.test_per_class = as_count(kv.get_int("test_per_class", 100), "test_per_class");
    if (kv.contains("faults")) {
        cfg.faults.clear();
        for (const auto& name : list_of(kv, "faults")) cfg.faults.push_back(parse_fault_class(name));
    }
    if (kv.contains("seeds")) {
        cfg.seeds.clear();
        for (const auto& s : list_of(kv, "seeds"))
            cfg.seeds.push_back(static_cast<std::uint64_t>(as_count(parse_int(s, "seeds"), "seeds")));
    }
    if (kv.contains("severity_db")) {
        cfg.severity_db.clear();
        for (const auto& s : list_of(kv, "severity_db")) cfg.severity_db.push_back(parse_double(s, "severity_db"));
    }
    cfg.real_anomaly_fraction = kv.get_double("real_anomaly_fraction", 0.0);
    cfg.test_synthetic_fraction = kv.get_double("test_synthetic_fraction", 0.0);
    cfg.test_on_train = kv.get_bool("test_on_train", false);

    auto motor = KeyValueConfig::parse(format_motor_parameters(MotorParameters{}), "<default motor>");
    for (const auto& key : kMotorKeys)
        if (auto v = kv.get("motor." + key)) motor.set(key, *v);
    cfg.motor = parse_motor_parameters(motor.to_string());

    cfg.corpus_manifest = kv.get_string("corpus_manifest", "");
    cfg.noise_std = kv.get_double("noise_std", cfg.noise_std);
    cfg.sample_rate_hz = kv.get_double("sample_rate_hz", cfg.sample_rate_hz);
    cfg.duration_s = kv.get_double("duration_s", cfg.duration_s);
    cfg.window_length = as_count(kv.get_int("window_length", 8192), "window_length");
    cfg.hop = as_count(kv.get_int("hop", 4096), "hop");

    cfg.augment.max_order = static_cast<int>(kv.get_int("max_order", cfg.augment.max_order));
    cfg.augment.amplitude_min = kv.get_double("amplitude_min", cfg.augment.amplitude_min);
    cfg.augment.amplitude_max = kv.get_double("amplitude_max", cfg.augment.amplitude_max);
    const std::string policy =
        kv.get_string("amplitude_policy", cfg.generator == GeneratorOption::A ? "segments" : "window");
    if (policy == "window") cfg.amplitude_policy = AmplitudePolicy::Window;
    else if (policy == "segments") cfg.amplitude_policy = AmplitudePolicy::Segments;
    else throw std::invalid_argument("amplitude_policy must be window or segments, not '" + policy + "'");

    cfg.resnet.block_channels = count_list(kv, "resnet_channels", cfg.resnet.block_channels);
    cfg.resnet.kernel_size = as_count(kv.get_int("resnet_kernel", 7), "resnet_kernel");
    cfg.resnet.epochs = as_count(kv.get_int("resnet_epochs", 10), "resnet_epochs");
    cfg.resnet.batch_size = as_count(kv.get_int("resnet_batch", 16), "resnet_batch");
    cfg.resnet.lr = kv.get_double("resnet_lr", cfg.resnet.lr);
    cfg.resnet.log_input = kv.get_bool("log_input", true);

    cfg.vae.hidden_dim = as_count(kv.get_int("vae_hidden", 16), "vae_hidden");
    cfg.vae.latent_dim = as_count(kv.get_int("vae_latent", 4), "vae_latent");
    cfg.vae.epochs = as_count(kv.get_int("vae_epochs", 500), "vae_epochs");
    cfg.vae.batch_size = as_count(kv.get_int("vae_batch", 16), "vae_batch");
    cfg.vae.lr = kv.get_double("vae_lr", cfg.vae.lr);
    cfg.vae.beta = kv.get_double("vae_beta", cfg.vae.beta);
    cfg.generator_windows = as_count(kv.get_int("generator_windows", 60), "generator_windows");

    cfg.svm.c = kv.get_double("svm_c", cfg.svm.c);
    cfg.svm.epochs = as_count(kv.get_int("svm_epochs", 20), "svm_epochs");
    cfg.svm.lr = kv.get_double("svm_lr", cfg.svm.lr);
    cfg.svm.batch_size = as_count(kv.get_int("svm_batch", 16), "svm_batch");
    cfg.mlp.hidden_dims = count_list(kv, "mlp_hidden", cfg.mlp.hidden_dims);
    cfg.mlp.epochs = as_count(kv.get_int("mlp_epochs", 10), "mlp_epochs");
    cfg.mlp.batch_size = as_count(kv.get_int("mlp_batch", 16), "mlp_batch");
    cfg.mlp.lr = kv.get_double("mlp_lr", cfg.mlp.lr);

    cfg.epsilon_counts = count_list(kv, "epsilon_counts", cfg.epsilon_counts);
    cfg.threads = as_count(kv.get_int("threads", 1), "threads");
    cfg.output_root = kv.get_string("output_root", "runs");
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    auto cfg = parse_experiment_config(KeyValueConfig::load(path));
    const auto dir = std::filesystem::absolute(path).parent_path();
    cfg.base_dir = dir;
    if (cfg.output_root.is_relative()) cfg.output_root = dir / cfg.output_root;
    return cfg;
}

std::string canonical_config_text(const ExperimentConfig& c) {
    KeyValueConfig kv;
    kv.set("experiment", std::string(to_string(c.experiment)));
    kv.set("generator", generator_name(c.generator));
    kv.set("train_per_class", std::to_string(c.train_per_class));
    kv.set("test_per_class", std::to_string(c.test_per_class));
    kv.set("faults", join_faults(c.faults));
    kv.set("seeds", join_ints(c.seeds));
    kv.set("severity_db", join_doubles(c.severity_db));
    kv.set("real_anomaly_fraction", format_double(c.real_anomaly_fraction));
    kv.set("test_synthetic_fraction", format_double(c.test_synthetic_fraction));
    kv.set("test_on_train", c.test_on_train ? "true" : "false");
    const auto motor = KeyValueConfig::parse(format_motor_parameters(c.motor), "<motor>");
    for (const auto& [key, value] : motor.entries()) kv.set("motor." + key, value);
    kv.set("corpus_manifest", c.corpus_manifest);
    kv.set("noise_std", format_double(c.noise_std));
    kv.set("sample_rate_hz", format_double(c.sample_rate_hz));
    kv.set("duration_s", format_double(c.duration_s));
    kv.set("window_length", std::to_string(c.window_length));
    kv.set("hop", std::to_string(c.hop));
    kv.set("max_order", std::to_string(c.augment.max_order));
    kv.set("amplitude_min", format_double(c.augment.amplitude_min));
    kv.set("amplitude_max", format_double(c.augment.amplitude_max));
    kv.set("amplitude_policy", c.amplitude_policy == AmplitudePolicy::Segments ? "segments" : "window");
    kv.set("resnet_channels", join_ints(c.resnet.block_channels));
    kv.set("resnet_kernel", std::to_string(c.resnet.kernel_size));
    kv.set("resnet_epochs", std::to_string(c.resnet.epochs));
    kv.set("resnet_batch", std::to_string(c.resnet.batch_size));
    kv.set("resnet_lr", format_double(c.resnet.lr));
    kv.set("log_input", c.resnet.log_input ? "true" : "false");
    kv.set("vae_hidden", std::to_string(c.vae.hidden_dim));
    kv.set("vae_latent", std::to_string(c.vae.latent_dim));
    kv.set("vae_epochs", std::to_string(c.vae.epochs));
    kv.set("vae_batch", std::to_string(c.vae.batch_size));
    kv.set("vae_lr", format_double(c.vae.lr));
    kv.set("vae_beta", format_double(c.vae.beta));
    kv.set("generator_windows", std::to_string(c.generator_windows));
    kv.set("svm_c", format_double(c.svm.c));
    kv.set("svm_epochs", std::to_string(c.svm.epochs));
    kv.set("svm_lr", format_double(c.svm.lr));
    kv.set("svm_batch", std::to_string(c.svm.batch_size));
    kv.set("mlp_hidden", join_ints(c.mlp.hidden_dims));
    kv.set("mlp_epochs", std::to_string(c.mlp.epochs));
    kv.set("mlp_batch", std::to_string(c.mlp.batch_size));
    kv.set("mlp_lr", format_double(c.mlp.lr));
    kv.set("epsilon_counts", join_ints(c.epsilon_counts));
    return kv.to_string();
}

std::string config_hash(const ExperimentConfig& config) { return sha256_hex(canonical_config_text(config)); }

std::string run_directory_name(const ExperimentConfig& config) { return config_hash(config).substr(0, 16); }

std::string sha256_hex(const std::string& text) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(text.data(), text.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    std::string hex;
    for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

void assert_no_leakage(const LabeledDataset& train, const LabeledDataset& test) {
    std::set<std::string> train_ids;
    for (const auto& w : train.windows) train_ids.insert(w.source_id);
    for (const auto& w : test.windows)
        if (train_ids.count(w.source_id))
            throw GuardViolation("data leakage: recording '" + w.source_id + "' is in both train and test sets");
}

void check_report_provenance(const std::string& csv_text) {
    std::istringstream in(csv_text);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line.rfind("experiment,", 0) == 0) continue;
        const auto f = parse_csv_line(line);
        if (f.size() != 13 || f[8].size() != 64 || f[9].empty() || f[10].empty() || f[11].empty())
            throw GuardViolation("report row lacks provenance: " + line);
        ++rows;
    }
    if (rows == 0) throw GuardViolation("report has no rows");
}

SegmentGenerator train_segment_generator(std::span<const SpectrumWindow> fault_windows, const MotorParameters& motor,
                                         int max_order, const VaeConfig& config) {
    std::vector<PeakSegment> segments;
    std::vector<double> levels;
    std::map<std::pair<FaultClass, double>, std::vector<std::size_t>> bins_for;
    for (const auto& w : fault_windows) {
        if (!w.label || !is_anomalous(*w.label))
            throw std::invalid_argument("generator training windows must carry a fault label");
        auto& bins = bins_for[{*w.label, w.bin_width_hz}];
        if (bins.empty()) {
            const auto fundamental = static_cast<std::size_t>(std::nearbyint(motor.supply_frequency_hz / w.bin_width_hz));
            for (std::size_t b : usable_signature_bins(motor, *w.label, w.bin_width_hz, max_order, w.size())) {
                const bool covers = b - kSegmentLeft <= fundamental && fundamental < b - kSegmentLeft + kSegmentLength;
                if (!covers) bins.push_back(b);
            }
            if (bins.empty())
                throw std::invalid_argument("every signature segment of " + std::string(to_string(*w.label)) +
                                            " holds the supply fundamental");
        }
        for (std::size_t b : bins) {
            auto seg = extract_segment(w, b);
            if (seg.degenerate) continue;
            segments.push_back(std::move(seg));
            levels.push_back(relative_peak_level(w, b));
        }
    }
    auto trained = train_vae(segments, config);
    SegmentGenerator out;
    out.model = std::make_shared<const VaeModel>(std::move(trained.model));
    const auto [lo, hi] = std::minmax_element(levels.begin(), levels.end());
    out.level_min = *lo;
    out.level_max = *hi;
    out.n_segments = segments.size();
    return out;
}

// ---------------------------------------------------------------- runs

const ResultRow& ExperimentResult::row(std::string_view model, std::optional<std::size_t> count) const {
    for (const auto& r : rows)
        if (r.model == model && r.count == count) return r;
    throw std::out_of_range("no result row for model " + std::string(model));
}

ExperimentResult run_e1(const ExperimentConfig& config) {
    if (config.experiment != ExperimentId::E1) throw std::invalid_argument("run_e1 needs an E1 config");
    return run_seeds(config, synthetic_protocol);
}

ExperimentResult run_e2(const ExperimentConfig& config) {
    if (config.experiment != ExperimentId::E2) throw std::invalid_argument("run_e2 needs an E2 config");
    return run_seeds(config, synthetic_protocol);
}

ExperimentResult run_e3(const ExperimentConfig& config) {
    if (config.experiment != ExperimentId::E3) throw std::invalid_argument("run_e3 needs an E3 config");
    return run_seeds(config, real_protocol);
}

ExperimentResult run_e4(const ExperimentConfig& config) {
    if (config.experiment != ExperimentId::E4) throw std::invalid_argument("run_e4 needs an E4 config");
    return run_seeds(config, real_protocol);
}

ExperimentResult run_epsilon(const ExperimentConfig& config) {
    if (config.experiment != ExperimentId::Epsilon) throw std::invalid_argument("run_epsilon needs an epsilon config");
    return run_seeds(config, epsilon_protocol);
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    switch (config.experiment) {
        case ExperimentId::E1: return run_e1(config);
        case ExperimentId::E2: return run_e2(config);
        case ExperimentId::E3: return run_e3(config);
        case ExperimentId::E4: return run_e4(config);
        case ExperimentId::Epsilon: return run_epsilon(config);
    }
    throw std::logic_error("unknown experiment id");
}

// ---------------------------------------------------------------- reports

std::string report_csv(const ExperimentResult& result) {
    const auto& c = result.config;
    std::string out =
        "experiment,model,count,accuracy_mean,accuracy_std,f1_mean,f1_std,n_seeds,config_hash,seeds,generator,"
        "severity_db,faults\n";
    for (const auto& r : result.rows)
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(c.experiment), r.model,
                           r.count ? std::to_string(*r.count) : "", format_double(r.stats.accuracy_mean),
                           format_double(r.stats.accuracy_std), format_double(r.stats.f1_mean),
                           format_double(r.stats.f1_std), r.stats.n_seeds, result.config_hash,
                           join_ints(c.seeds, ";"), generator_name(c.generator), join_doubles(c.severity_db, ";"),
                           join_faults(c.faults, ";"));
    return out;
}

std::string per_seed_csv(const ExperimentResult& result) {
    std::string out = "experiment,model,count,seed,accuracy,macro_f1,n_test\n";
    for (const auto& r : result.rows)
        for (std::size_t i = 0; i < r.per_seed.size(); ++i)
            out += fmt::format("{},{},{},{},{},{},{}\n", to_string(result.config.experiment), r.model,
                               r.count ? std::to_string(*r.count) : "", result.config.seeds[i],
                               format_double(r.per_seed[i].accuracy), format_double(r.per_seed[i].macro_f1),
                               r.per_seed[i].n_test);
    return out;
}

std::string render_report_csv(const std::string& csv_text) {
    struct Block {
        std::string experiment, hash, generator, seeds;
        std::vector<std::vector<std::string>> rows;
    };
    std::vector<Block> blocks;
    std::istringstream in(csv_text);
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = parse_csv_line(line);
        if (fields.front() == "experiment") {
            header = fields;
            continue;
        }
        if (header.empty() || fields.size() != header.size()) throw std::runtime_error("malformed report CSV line: " + line);
        if (blocks.empty() || blocks.back().hash != fields[8] || blocks.back().experiment != fields[0])
            blocks.push_back({fields[0], fields[8], fields[10], fields[9], {}});
        blocks.back().rows.push_back(std::move(fields));
    }

    std::string out;
    for (const auto& b : blocks) {
        out += fmt::format("{}  config {}  generator {}  seeds {}\n", b.experiment, b.hash.substr(0, 16), b.generator,
                           b.seeds);
        const bool grid = !b.rows.front()[2].empty();
        if (!grid) {
            out += fmt::format("  {:<8} {:>18} {:>18}\n", "model", "accuracy (%)", "macro F1 (%)");
            for (const auto& r : b.rows)
                out += fmt::format("  {:<8} {:>18} {:>18}\n", r[1], percent(r[3], r[4]), percent(r[5], r[6]));
        } else {
            // Model by count grid of accuracy, one column per count.
            std::vector<std::string> counts, models;
            std::map<std::pair<std::string, std::string>, std::string> cell;
            for (const auto& r : b.rows) {
                if (std::find(counts.begin(), counts.end(), r[2]) == counts.end()) counts.push_back(r[2]);
                if (std::find(models.begin(), models.end(), r[1]) == models.end()) models.push_back(r[1]);
                cell[{r[1], r[2]}] = percent(r[3], r[4]);
            }
            out += fmt::format("  {:<8}", "count");
            for (const auto& c : counts) out += fmt::format(" {:>16}", c);
            out += '\n';
            for (const auto& m : models) {
                out += fmt::format("  {:<8}", m);
                for (const auto& c : counts) out += fmt::format(" {:>16}", cell.count({m, c}) ? cell[{m, c}] : "-");
                out += '\n';
            }
        }
        out += '\n';
    }
    return out;
}

std::string report_table(const ExperimentResult& result) { return render_report_csv(report_csv(result)); }

std::filesystem::path write_run(const ExperimentResult& result) {
    const auto dir = result.config.output_root / result.config_hash.substr(0, 16);
    std::filesystem::create_directories(dir);
    write_file(dir / "config.txt", canonical_config_text(result.config));
    write_file(dir / "report.csv", report_csv(result));
    write_file(dir / "per_seed.csv", per_seed_csv(result));
    write_file(dir / "report.txt", report_table(result));
    return dir;
}

}  // namespace sgda
