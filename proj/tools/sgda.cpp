// Command-line front end. Every verb reads one key = value config file and
// writes its outputs under <out>/<first 16 hex digits of the run hash>.
// Exit codes: 0 success, 1 bad input or runtime failure, 2 guard violation.

#include <CLI11.hpp>
#include <fmt/core.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sgda/augment.hpp"
#include "sgda/classifier.hpp"
#include "sgda/experiments.hpp"
#include "sgda/kv_config.hpp"
#include "sgda/signal_io.hpp"
#include "sgda/sim_oracle.hpp"
#include "sgda/spectrum.hpp"
#include "sgda/vae.hpp"

namespace fs = std::filesystem;
using namespace sgda;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void reject_unknown(const KeyValueConfig& kv, const std::set<std::string>& known) {
    for (const auto& [key, value] : kv.entries())
        if (!known.count(key)) throw std::invalid_argument(kv.origin() + ": unknown key '" + key + "'");
}

fs::path resolve(const KeyValueConfig& kv, const std::string& key) {
    const fs::path p = kv.require(key);
    return p.is_absolute() ? p : fs::absolute(kv.origin()).parent_path() / p;
}

/// Hash of the verb, the canonical config and the bytes of every input file,
/// so a changed input never reuses an older run directory.
std::string run_hash(const std::string& verb, const KeyValueConfig& kv, const std::vector<fs::path>& inputs) {
    std::string text = verb + "\n" + kv.to_string();
    for (const auto& p : inputs) text += sha256_hex(read_file(p)) + "\n";
    return sha256_hex(text);
}

fs::path make_run_dir(const fs::path& root, const std::string& hash, const KeyValueConfig& kv) {
    const auto dir = root / hash.substr(0, 16);
    fs::create_directories(dir);
    write_file(dir / "config.txt", kv.to_string());
    return dir;
}

std::vector<SpectrumWindow> manifest_windows(const fs::path& manifest, std::size_t window_length, std::size_t hop,
                                             MotorParameters* motor) {
    const auto contents = load_manifest_contents(manifest);
    if (contents.motors.size() != 1)
        throw std::invalid_argument(manifest.string() + ": expected recordings of exactly one motor");
    if (motor) *motor = contents.motors.begin()->second;
    std::vector<SpectrumWindow> out;
    for (const auto& rec : contents.recordings) {
        const auto parts = split_windows(rec, window_length, hop);
        for (std::size_t i = 0; i < parts.size(); ++i) {
            auto w = compute_spectrum(parts[i], rec.sample_rate_hz);
            w.source_id = rec.source_id;
            w.window_index = i;
            w.label = rec.label;
            out.push_back(std::move(w));
        }
    }
    return out;
}

ResNetConfig resnet_config(const KeyValueConfig& kv) {
    ResNetConfig rc;
    if (kv.contains("resnet_channels")) {
        rc.block_channels.clear();
        for (const auto& c : kv.get_list("resnet_channels"))
            rc.block_channels.push_back(static_cast<std::size_t>(parse_int(c, "resnet_channels")));
    }
    rc.kernel_size = static_cast<std::size_t>(kv.get_int("resnet_kernel", 7));
    rc.epochs = static_cast<std::size_t>(kv.get_int("resnet_epochs", 10));
    rc.batch_size = static_cast<std::size_t>(kv.get_int("resnet_batch", 16));
    rc.lr = kv.get_double("resnet_lr", rc.lr);
    rc.log_input = kv.get_bool("log_input", true);
    rc.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
    return rc;
}

// ------------------------------------------------------------------ verbs

int cmd_simulate(const fs::path& config, const fs::path& out_root) {
    const auto kv = KeyValueConfig::load(config);
    reject_unknown(kv, {"supply_frequency_hz", "pole_pairs", "slip", "n_balls", "ball_diameter_mm",
                        "pitch_diameter_mm", "contact_angle_rad", "mechanical_frequencies_hz", "fundamental_amp",
                        "harmonic_amps", "noise_std", "fault", "fault_amp_db", "max_order", "duration_s",
                        "sample_rate_hz", "seed", "source_id", "recordings"});
    const auto recordings = static_cast<std::size_t>(kv.get_int("recordings", 1));
    if (recordings == 0) throw std::invalid_argument("recordings must be positive");
    std::string spec_text;
    for (const auto& [k, v] : kv.entries())
        if (k != "recordings") spec_text += k + " = " + v + "\n";
    const SimSpec base = parse_sim_spec(spec_text);

    const auto dir = make_run_dir(out_root, run_hash("simulate", kv, {}), kv);
    write_file(dir / "motor.txt", format_motor_parameters(base.params));
    DatasetManifest manifest;
    for (std::size_t r = 0; r < recordings; ++r) {
        SimSpec spec = base;
        spec.seed = base.seed + r;
        const std::string name = fmt::format("recording_{:03}.csv", r);
        spec.source_id = name;
        save_recording(dir / name, simulate(spec));
        manifest.entries.push_back({name, spec.fault, "motor.txt", spec.sample_rate_hz});
    }
    save_manifest(dir / "manifest.txt", manifest);
    save_sim_spec(dir / "spec.txt", base);
    std::cout << dir.string() << '\n';
    return 0;
}

int cmd_augment(const fs::path& config, const fs::path& out_root) {
    const auto kv = KeyValueConfig::load(config);
    reject_unknown(kv, {"healthy_manifest", "fault_manifest", "faults", "generator", "per_class", "seed",
                        "window_length", "hop", "max_order", "amplitude_min", "amplitude_max", "amplitude_policy",
                        "vae_hidden", "vae_latent", "vae_epochs", "vae_batch", "vae_lr", "vae_beta"});
    const auto window_length = static_cast<std::size_t>(kv.get_int("window_length", 8192));
    const auto hop = static_cast<std::size_t>(kv.get_int("hop", 4096));
    const auto seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
    const auto per_class = static_cast<std::size_t>(kv.require_int("per_class"));
    std::vector<FaultClass> faults;
    for (const auto& f : kv.get_list("faults")) faults.push_back(parse_fault_class(f));
    if (faults.empty()) throw std::invalid_argument("faults must name at least one fault class");
    const std::string generator = kv.get_string("generator", "B");
    if (generator != "A" && generator != "B") throw std::invalid_argument("generator must be A or B");

    AugmentOptions options;
    options.max_order = static_cast<int>(kv.get_int("max_order", 1));
    options.amplitude_min = kv.get_double("amplitude_min", options.amplitude_min);
    options.amplitude_max = kv.get_double("amplitude_max", options.amplitude_max);

    std::vector<fs::path> inputs{resolve(kv, "healthy_manifest")};
    if (generator == "A") inputs.push_back(resolve(kv, "fault_manifest"));
    MotorParameters motor;
    const auto healthy = manifest_windows(inputs[0], window_length, hop, &motor);
    for (const auto& w : healthy)
        if (w.label != FaultClass::Healthy)
            throw std::invalid_argument("healthy_manifest holds a non-healthy recording: " + w.source_id);

    const auto dir = make_run_dir(out_root, run_hash("augment", kv, inputs), kv);
    std::unique_ptr<PeakSource> source;
    if (generator == "B") {
        source = std::make_unique<GaussianPeakSource>();
    } else {
        VaeConfig vc;
        vc.hidden_dim = static_cast<std::size_t>(kv.get_int("vae_hidden", 16));
        vc.latent_dim = static_cast<std::size_t>(kv.get_int("vae_latent", 4));
        vc.epochs = static_cast<std::size_t>(kv.get_int("vae_epochs", 500));
        vc.batch_size = static_cast<std::size_t>(kv.get_int("vae_batch", 16));
        vc.lr = kv.get_double("vae_lr", vc.lr);
        vc.beta = kv.get_double("vae_beta", vc.beta);
        vc.seed = seed;
        const auto fault_windows = manifest_windows(inputs[1], window_length, hop, nullptr);
        const auto trained = train_segment_generator(fault_windows, motor, options.max_order, vc);
        if (kv.get_string("amplitude_policy", "segments") == "segments") {
            options.amplitude_min = trained.level_min;
            options.amplitude_max = trained.level_max;
        }
        trained.model->save(dir / "vae.ckpt");
        source = std::make_unique<VaePeakSource>(trained.model);
    }
    const auto dataset = build_augmented_dataset(healthy, motor, faults, *source, per_class, seed, options);
    save_dataset_csv(dir / "dataset.csv", dataset);
    save_augment_metadata(dir / "metadata.txt", {seed, per_class, source->name(), faults, options});
    std::cout << dir.string() << '\n';
    return 0;
}

int cmd_train(const fs::path& config, const fs::path& out_root) {
    const auto kv = KeyValueConfig::load(config);
    reject_unknown(kv, {"dataset", "seed", "resnet_channels", "resnet_kernel", "resnet_epochs", "resnet_batch",
                        "resnet_lr", "log_input"});
    const auto dataset_path = resolve(kv, "dataset");
    const auto data = load_dataset_csv(dataset_path);
    std::set<FaultClass> present;
    for (const auto& w : data.windows) {
        if (!w.label) throw std::invalid_argument("training windows must be labeled");
        present.insert(*w.label);
    }
    const std::vector<FaultClass> classes(present.begin(), present.end());
    auto rc = resnet_config(kv);
    rc.n_classes = classes.size();

    const auto dir = make_run_dir(out_root, run_hash("train", kv, {dataset_path}), kv);
    ResNet model(rc, classes);
    const auto history = train(model, data);
    model.save(dir / "model.ckpt");
    std::string class_text;
    for (FaultClass c : classes) class_text += std::string(to_string(c)) + "\n";
    write_file(dir / "classes.txt", class_text);
    std::string hist = "epoch,loss,accuracy\n";
    for (std::size_t e = 0; e < history.loss.size(); ++e)
        hist += fmt::format("{},{},{}\n", e + 1, format_double(history.loss[e]), format_double(history.accuracy[e]));
    write_file(dir / "history.csv", hist);
    std::cout << dir.string() << '\n';
    return 0;
}

int cmd_eval(const fs::path& config, const fs::path& out_root) {
    const auto kv = KeyValueConfig::load(config);
    reject_unknown(kv, {"model_run", "dataset"});
    const auto model_dir = resolve(kv, "model_run");
    const auto dataset_path = resolve(kv, "dataset");
    const auto train_kv = KeyValueConfig::load(model_dir / "config.txt");
    std::vector<FaultClass> classes;
    {
        std::istringstream in(read_file(model_dir / "classes.txt"));
        for (std::string line; std::getline(in, line);)
            if (!trim(line).empty()) classes.push_back(parse_fault_class(trim(line)));
    }
    auto rc = resnet_config(train_kv);
    rc.n_classes = classes.size();
    ResNet model(rc, classes);
    model.load(model_dir / "model.ckpt");
    const auto test = load_dataset_csv(dataset_path);

    const auto dir = make_run_dir(out_root, run_hash("eval", kv, {model_dir / "model.ckpt", dataset_path}), kv);
    const auto report = evaluate(model, test);
    write_file(dir / "report.txt", format_report(report));
    write_file(dir / "metrics.csv", fmt::format("accuracy,macro_f1,n_test\n{},{},{}\n", format_double(report.accuracy),
                                                format_double(report.macro_f1), report.n_test));
    std::cout << format_report(report) << dir.string() << '\n';
    return 0;
}

int cmd_experiment(const std::string& id_text, const fs::path& config, const fs::path& out_root, std::size_t threads) {
    const auto id = parse_experiment_id(id_text);
    KeyValueConfig kv;
    fs::path base = fs::current_path();
    if (!config.empty()) {
        kv = KeyValueConfig::load(config);
        base = fs::absolute(config).parent_path();
    }
    if (auto given = kv.get("experiment"); given && parse_experiment_id(*given) != id)
        throw std::invalid_argument(fmt::format("config is for {} but {} was requested", *given, to_string(id)));
    kv.set("experiment", std::string(to_string(id)));
    auto cfg = parse_experiment_config(kv);
    cfg.base_dir = base;
    if (!out_root.empty()) cfg.output_root = out_root;
    else if (cfg.output_root.is_relative()) cfg.output_root = base / cfg.output_root;
    if (threads > 0) cfg.threads = threads;

    const auto result = run_experiment(cfg);
    check_report_provenance(report_csv(result));
    const auto dir = write_run(result);
    std::cout << report_table(result) << dir.string() << '\n';
    return 0;
}

int cmd_report(const std::vector<fs::path>& inputs, const fs::path& out_file) {
    std::string csv;
    for (const auto& in : inputs) {
        const auto path = fs::is_directory(in) ? in / "report.csv" : in;
        const auto text = read_file(path);
        check_report_provenance(text);
        csv += text;
    }
    const auto table = render_report_csv(csv);
    if (!out_file.empty()) write_file(out_file, table);
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Signature-guided data augmentation for motor fault diagnosis"};
    app.require_subcommand(1);

    fs::path config, out_root = "runs";
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config, "key = value config file")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--out", out_root, "root of the run directories");
    };
    auto* simulate_cmd = app.add_subcommand("simulate", "synthesize stator-current recordings and a manifest");
    add_common(simulate_cmd);
    auto* augment_cmd = app.add_subcommand("augment", "inject generated peaks into healthy spectra");
    add_common(augment_cmd);
    auto* train_cmd = app.add_subcommand("train", "train a ResNet on a labeled dataset CSV");
    add_common(train_cmd);
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained model on a dataset CSV");
    add_common(eval_cmd);

    auto* exp_cmd = app.add_subcommand("experiment", "run E1, E2, E3, E4 or epsilon over all seeds");
    std::string exp_id;
    fs::path exp_out;
    std::size_t threads = 0;
    exp_cmd->add_option("id", exp_id, "E1|E2|E3|E4|epsilon")->required();
    exp_cmd->add_option("-c,--config", config, "key = value config file")->check(CLI::ExistingFile);
    exp_cmd->add_option("-o,--out", exp_out, "root of the run directories (overrides output_root)");
    exp_cmd->add_option("-j,--threads", threads, "seeds run concurrently");

    auto* report_cmd = app.add_subcommand("report", "render report CSVs or run directories as a table");
    std::vector<fs::path> report_inputs;
    fs::path report_out;
    report_cmd->add_option("inputs", report_inputs, "report.csv files or run directories")->required();
    report_cmd->add_option("-o,--out", report_out, "also write the table to this file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate_cmd) return cmd_simulate(config, out_root);
        if (*augment_cmd) return cmd_augment(config, out_root);
        if (*train_cmd) return cmd_train(config, out_root);
        if (*eval_cmd) return cmd_eval(config, out_root);
        if (*exp_cmd) return cmd_experiment(exp_id, config, exp_out, threads);
        if (*report_cmd) return cmd_report(report_inputs, report_out);
    } catch (const GuardViolation& e) {
        std::cerr << "guard violated: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
