#include "sgda/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace sgda {

namespace {

constexpr std::size_t kEvalBatch = 64;

void check_classes(const std::vector<FaultClass>& classes) {
    if (classes.size() < 2) throw std::invalid_argument("a classifier needs at least 2 classes");
    for (std::size_t i = 0; i < classes.size(); ++i)
        for (std::size_t j = i + 1; j < classes.size(); ++j)
            if (classes[i] == classes[j]) throw std::invalid_argument("duplicate class in classifier class set");
}

std::vector<int> class_targets(const SpectrumClassifier& model, const LabeledDataset& dataset) {
    std::vector<int> targets;
    targets.reserve(dataset.size());
    for (const auto& w : dataset.windows) {
        if (!w.label) throw std::invalid_argument("training window " + w.source_id + " is unlabeled");
        targets.push_back(model.class_index(*w.label));
    }
    return targets;
}

std::size_t feature_count(const LabeledDataset& dataset) {
    if (dataset.empty()) throw std::invalid_argument("empty dataset");
    const std::size_t n = dataset.windows.front().size();
    for (const auto& w : dataset.windows)
        if (w.size() != n) throw std::invalid_argument("dataset windows differ in length");
    return n;
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Shared mini-batch Adam loop for the differentiable models.
TrainHistory fit(const nn::ParameterList& params, const std::function<nn::Tensor(const nn::Tensor&)>& forward,
                 const std::function<nn::Tensor(std::span<const SpectrumWindow>)>& to_input,
                 const LabeledDataset& dataset, std::span<const int> targets, std::size_t batch_size,
                 std::size_t epochs, double lr, std::uint64_t seed) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    nn::AdamState adam;
    adam.lr = lr;
    nn::Rng rng(seed ^ 0xd1b54a32d192ed03ULL);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    TrainHistory history;
    std::vector<SpectrumWindow> batch;
    std::vector<int> batch_targets;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t b = std::min(batch_size, order.size() - start);
            batch.clear();
            batch_targets.clear();
            for (std::size_t i = 0; i < b; ++i) {
                batch.push_back(dataset.windows[order[start + i]]);
                batch_targets.push_back(targets[order[start + i]]);
            }
            const auto logits = forward(to_input(batch));
            const auto loss = nn::softmax_cross_entropy(logits, batch_targets);
            nn::zero_grads(params);
            loss.backward();
            nn::adam_step(params, adam);
            loss_sum += loss.item() * static_cast<double>(b);
            const std::size_t c = logits.dim(1);
            for (std::size_t i = 0; i < b; ++i)
                if (argmax(logits.data().subspan(i * c, c)) == static_cast<std::size_t>(batch_targets[i])) ++correct;
        }
        history.loss.push_back(loss_sum / static_cast<double>(order.size()));
        history.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(order.size()));
    }
    return history;
}

std::vector<std::vector<double>> batched_scores(
    std::span<const SpectrumWindow> windows, const std::function<nn::Tensor(const nn::Tensor&)>& forward,
    const std::function<nn::Tensor(std::span<const SpectrumWindow>)>& to_input) {
    nn::NoGradGuard no_grad;
    std::vector<std::vector<double>> out;
    out.reserve(windows.size());
    for (std::size_t start = 0; start < windows.size(); start += kEvalBatch) {
        const auto chunk = windows.subspan(start, std::min(kEvalBatch, windows.size() - start));
        const auto logits = forward(to_input(chunk));
        const std::size_t c = logits.dim(1);
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            const auto row = logits.data().subspan(i * c, c);
            out.emplace_back(row.begin(), row.end());
        }
    }
    return out;
}

nn::Tensor raw_matrix(std::span<const SpectrumWindow> windows, std::size_t n_features) {
    std::vector<double> data;
    data.reserve(windows.size() * n_features);
    for (const auto& w : windows) {
        if (w.size() != n_features)
            throw std::invalid_argument("window has " + std::to_string(w.size()) + " bins, model expects " +
                                        std::to_string(n_features));
        data.insert(data.end(), w.magnitudes.begin(), w.magnitudes.end());
    }
    return nn::Tensor({windows.size(), n_features}, std::move(data));
}

double sample_std(std::span<const double> v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<FaultClass> SpectrumClassifier::predict(std::span<const SpectrumWindow> windows) const {
    std::vector<FaultClass> out;
    out.reserve(windows.size());
    for (const auto& row : scores(windows)) out.push_back(classes()[argmax(row)]);
    return out;
}

int SpectrumClassifier::class_index(FaultClass fault) const {
    const auto& cs = classes();
    const auto it = std::find(cs.begin(), cs.end(), fault);
    if (it == cs.end()) throw std::invalid_argument("label " + std::string(to_string(fault)) + " is not in the model's class set");
    return static_cast<int>(it - cs.begin());
}

ConstantClassifier::ConstantClassifier(std::vector<FaultClass> classes, FaultClass predicted)
    : classes_(std::move(classes)) {
    check_classes(classes_);
    predicted_ = static_cast<std::size_t>(class_index(predicted));
}

std::vector<std::vector<double>> ConstantClassifier::scores(std::span<const SpectrumWindow> windows) const {
    std::vector<double> row(classes_.size(), 0.0);
    row[predicted_] = 1.0;
    return std::vector<std::vector<double>>(windows.size(), row);
}

// ---------------------------------------------------------------- ResNet

ResNet::ResNet(const ResNetConfig& config, std::vector<FaultClass> classes)
    : config_(config), classes_(std::move(classes)) {
    check_classes(classes_);
    if (config_.n_classes != classes_.size())
        throw std::invalid_argument(fmt::format("ResNet config has {} classes but {} were given", config_.n_classes,
                                                classes_.size()));
    if (config_.block_channels.size() != 4) throw std::invalid_argument("ResNet needs exactly 4 block widths");
    if (config_.kernel_size % 2 == 0) throw std::invalid_argument("kernel size must be odd for same padding");
    nn::Rng rng(config_.seed);
    const std::size_t k = config_.kernel_size;
    std::size_t c_in = 1;
    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t c = config_.block_channels[i];
        if (c == 0) throw std::invalid_argument("block width must be positive");
        Block b;
        b.stride = i == 0 ? 1 : 2;
        b.w1 = nn::he_normal({c, c_in, k}, c_in * k, rng);
        b.b1 = nn::Tensor::zeros({c}, true);
        b.w2 = nn::he_normal({c, c, k}, c * k, rng);
        b.b2 = nn::Tensor::zeros({c}, true);
        b.projected = c != c_in || b.stride != 1;
        if (b.projected) {
            b.proj_w = nn::he_normal({c, c_in, 1}, c_in, rng);
            b.proj_b = nn::Tensor::zeros({c}, true);
        }
        blocks_.push_back(std::move(b));
        c_in = c;
    }
    head_w_ = nn::he_normal({classes_.size(), c_in}, c_in, rng);
    head_b_ = nn::Tensor::zeros({classes_.size()}, true);
}

nn::ParameterList ResNet::parameters() const {
    nn::ParameterList out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        const std::string p = "block" + std::to_string(i + 1) + ".";
        out.push_back({p + "conv1.w", b.w1});
        out.push_back({p + "conv1.b", b.b1});
        out.push_back({p + "conv2.w", b.w2});
        out.push_back({p + "conv2.b", b.b2});
        if (b.projected) {
            out.push_back({p + "skip.w", b.proj_w});
            out.push_back({p + "skip.b", b.proj_b});
        }
    }
    out.push_back({"head.w", head_w_});
    out.push_back({"head.b", head_b_});
    return out;
}

std::size_t ResNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
}

nn::Tensor ResNet::forward(const nn::Tensor& x) const {
    const std::size_t pad = config_.kernel_size / 2;
    nn::Tensor h = x;
    for (const auto& b : blocks_) {
        const auto y = nn::leaky_relu(nn::conv1d(h, b.w1, b.b1, b.stride, pad));
        const auto z = nn::conv1d(y, b.w2, b.b2, 1, pad);
        const auto skip = b.projected ? nn::conv1d(h, b.proj_w, b.proj_b, b.stride, 0) : h;
        h = nn::leaky_relu(nn::residual_add(z, skip));
    }
    return nn::dense(nn::global_avg_pool(h), head_w_, head_b_);
}

nn::Tensor ResNet::to_input(std::span<const SpectrumWindow> windows) const {
    if (windows.empty()) throw std::invalid_argument("no windows to score");
    const std::size_t n = windows.front().size();
    std::vector<double> data;
    data.reserve(windows.size() * n);
    for (const auto& w : windows) {
        if (w.size() != n) throw std::invalid_argument("windows differ in length");
        for (double m : w.magnitudes) data.push_back(config_.log_input ? std::log1p(m) : m);
    }
    return nn::Tensor({windows.size(), 1, n}, std::move(data));
}

std::vector<std::vector<double>> ResNet::scores(std::span<const SpectrumWindow> windows) const {
    return batched_scores(
        windows, [this](const nn::Tensor& x) { return forward(x); },
        [this](std::span<const SpectrumWindow> w) { return to_input(w); });
}

void ResNet::save(const std::filesystem::path& path) const { nn::save_checkpoint(path, parameters()); }
void ResNet::load(const std::filesystem::path& path) { nn::load_checkpoint(path, parameters()); }

TrainHistory train(ResNet& model, const LabeledDataset& dataset) {
    feature_count(dataset);
    const auto targets = class_targets(model, dataset);
    const auto& cfg = model.config();
    return fit(
        model.parameters(), [&](const nn::Tensor& x) { return model.forward(x); },
        [&](std::span<const SpectrumWindow> w) { return model.to_input(w); }, dataset, targets, cfg.batch_size,
        cfg.epochs, cfg.lr, cfg.seed);
}

// ---------------------------------------------------------------- evaluation

EvalReport evaluate_predictions(const std::vector<FaultClass>& classes, std::span<const FaultClass> truth,
                                std::span<const FaultClass> predicted) {
    if (truth.empty()) throw std::invalid_argument("empty test set");
    if (truth.size() != predicted.size()) throw std::invalid_argument("truth and predictions differ in length");
    auto index = [&](FaultClass f) {
        const auto it = std::find(classes.begin(), classes.end(), f);
        if (it == classes.end())
            throw std::invalid_argument("label " + std::string(to_string(f)) + " is not in the model's class set");
        return static_cast<std::size_t>(it - classes.begin());
    };
    EvalReport r;
    r.classes = classes;
    r.n_test = truth.size();
    r.confusion.assign(classes.size(), std::vector<std::size_t>(classes.size(), 0));
    for (std::size_t i = 0; i < truth.size(); ++i) ++r.confusion[index(truth[i])][index(predicted[i])];

    std::size_t correct = 0;
    for (std::size_t c = 0; c < classes.size(); ++c) correct += r.confusion[c][c];
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n_test);

    double f1_sum = 0.0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::size_t predicted_c = 0, actual_c = 0;
        for (std::size_t o = 0; o < classes.size(); ++o) {
            predicted_c += r.confusion[o][c];
            actual_c += r.confusion[c][o];
        }
        const std::size_t tp = r.confusion[c][c];
        // F1 = 2 TP / (2 TP + FP + FN); zero when the class never occurs on either side.
        const std::size_t denom = predicted_c + actual_c;
        const double f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
        r.per_class_f1[classes[c]] = f1;
        f1_sum += f1;
    }
    r.macro_f1 = f1_sum / static_cast<double>(classes.size());
    return r;
}

EvalReport evaluate(const SpectrumClassifier& model, const LabeledDataset& test) {
    if (test.empty()) throw std::invalid_argument("empty test set");
    std::vector<FaultClass> truth;
    truth.reserve(test.size());
    for (const auto& w : test.windows) {
        if (!w.label) throw std::invalid_argument("test window " + w.source_id + " is unlabeled");
        model.class_index(*w.label);
        truth.push_back(*w.label);
    }
    const auto predicted = model.predict(test.windows);
    return evaluate_predictions(model.classes(), truth, predicted);
}

SeedStats summarize(std::span<const EvalReport> reports) {
    SeedStats s;
    s.n_seeds = reports.size();
    if (reports.empty()) return s;
    std::vector<double> acc, f1;
    for (const auto& r : reports) {
        acc.push_back(r.accuracy);
        f1.push_back(r.macro_f1);
    }
    s.accuracy_mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
    s.f1_mean = std::accumulate(f1.begin(), f1.end(), 0.0) / static_cast<double>(f1.size());
    s.accuracy_std = sample_std(acc, s.accuracy_mean);
    s.f1_std = sample_std(f1, s.f1_mean);
    return s;
}

std::string format_report(const EvalReport& r) {
    std::ostringstream out;
    out << fmt::format("n_test {}  accuracy {:.4f}  macro F1 {:.4f}\n", r.n_test, r.accuracy, r.macro_f1);
    std::size_t width = 9;
    for (FaultClass c : r.classes) width = std::max(width, to_string(c).size());
    out << fmt::format("{:<{}}", "true\\pred", width);
    for (std::size_t c = 0; c < r.classes.size(); ++c) out << fmt::format(" {:>6}", c);
    out << "      F1\n";
    for (std::size_t t = 0; t < r.classes.size(); ++t) {
        out << fmt::format("{:<{}}", to_string(r.classes[t]), width);
        for (std::size_t p = 0; p < r.classes.size(); ++p) out << fmt::format(" {:>6}", r.confusion[t][p]);
        out << fmt::format("  {:.4f}\n", r.per_class_f1.at(r.classes[t]));
    }
    return out.str();
}

// ---------------------------------------------------------------- SVM

LinearSvm::LinearSvm(std::vector<FaultClass> classes, std::size_t n_features) : classes_(std::move(classes)) {
    check_classes(classes_);
    weights.assign(classes_.size(), std::vector<double>(n_features, 0.0));
    bias.assign(classes_.size(), 0.0);
}

std::vector<std::vector<double>> LinearSvm::scores(std::span<const SpectrumWindow> windows) const {
    std::vector<std::vector<double>> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        if (w.size() != weights.front().size()) throw std::invalid_argument("window length differs from SVM input");
        std::vector<double> row(classes_.size());
        for (std::size_t c = 0; c < classes_.size(); ++c)
            row[c] = std::inner_product(w.magnitudes.begin(), w.magnitudes.end(), weights[c].begin(), bias[c]);
        out.push_back(std::move(row));
    }
    return out;
}

double LinearSvm::objective(const LabeledDataset& dataset, double c) const {
    const double lambda = 1.0 / (c * static_cast<double>(dataset.size()));
    const auto s = scores(dataset.windows);
    double total = 0.0;
    for (std::size_t k = 0; k < classes_.size(); ++k) {
        double norm = 0.0;
        for (double v : weights[k]) norm += v * v;
        double hinge = 0.0;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const double y = dataset.windows[i].label == classes_[k] ? 1.0 : -1.0;
            hinge += std::max(0.0, 1.0 - y * s[i][k]);
        }
        total += 0.5 * lambda * norm + hinge / static_cast<double>(dataset.size());
    }
    return total / static_cast<double>(classes_.size());
}

SvmTraining train_svm(const LabeledDataset& dataset, const SvmConfig& config) {
    const std::size_t n_features = feature_count(dataset);
    auto classes = dataset.classes();
    std::sort(classes.begin(), classes.end());
    if (classes.size() < 2) throw std::invalid_argument("train_svm: dataset has a single class");
    if (!(config.c > 0.0) || !(config.lr > 0.0) || config.batch_size == 0)
        throw std::invalid_argument("train_svm: invalid configuration");

    SvmTraining out{LinearSvm(classes, n_features), {}};
    auto& m = out.model;
    const double lambda = 1.0 / (config.c * static_cast<double>(dataset.size()));
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    // Squared-gradient accumulators; the per-coordinate step lr / sqrt(G)
    // undoes the huge spread of raw bin magnitudes.
    constexpr double kFloor = 1e-12;
    std::vector<std::vector<double>> acc_w(classes.size(), std::vector<double>(n_features, kFloor));
    std::vector<double> acc_b(classes.size(), kFloor);
    std::vector<double> grad(n_features);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t b = std::min(config.batch_size, order.size() - start);
            for (std::size_t k = 0; k < classes.size(); ++k) {
                for (std::size_t f = 0; f < n_features; ++f) grad[f] = lambda * m.weights[k][f];
                double grad_b = 0.0;
                for (std::size_t i = 0; i < b; ++i) {
                    const auto& w = dataset.windows[order[start + i]];
                    const double y = w.label == classes[k] ? 1.0 : -1.0;
                    const double score =
                        std::inner_product(w.magnitudes.begin(), w.magnitudes.end(), m.weights[k].begin(), m.bias[k]);
                    if (y * score >= 1.0) continue;
                    for (std::size_t f = 0; f < n_features; ++f) grad[f] -= y * w.magnitudes[f] / static_cast<double>(b);
                    grad_b -= y / static_cast<double>(b);
                }
                for (std::size_t f = 0; f < n_features; ++f) {
                    acc_w[k][f] += grad[f] * grad[f];
                    m.weights[k][f] -= config.lr * grad[f] / std::sqrt(acc_w[k][f]);
                }
                acc_b[k] += grad_b * grad_b;
                m.bias[k] -= config.lr * grad_b / std::sqrt(acc_b[k]);
            }
            out.objective.push_back(m.objective(dataset, config.c));
        }
    }
    return out;
}

// ---------------------------------------------------------------- MLP

Mlp::Mlp(const MlpConfig& config, std::vector<FaultClass> classes, std::size_t n_features)
    : classes_(std::move(classes)) {
    check_classes(classes_);
    nn::Rng rng(config.seed);
    std::size_t in = n_features;
    auto dims = config.hidden_dims;
    dims.push_back(classes_.size());
    for (std::size_t out : dims) {
        if (out == 0) throw std::invalid_argument("MLP layer width must be positive");
        weights_.push_back(nn::he_normal({out, in}, in, rng));
        biases_.push_back(nn::Tensor::zeros({out}, true));
        in = out;
    }
}

nn::ParameterList Mlp::parameters() const {
    nn::ParameterList out;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        out.push_back({"dense" + std::to_string(i + 1) + ".w", weights_[i]});
        out.push_back({"dense" + std::to_string(i + 1) + ".b", biases_[i]});
    }
    return out;
}

nn::Tensor Mlp::forward(const nn::Tensor& x) const {
    nn::Tensor h = x;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        h = nn::dense(h, weights_[i], biases_[i]);
        if (i + 1 < weights_.size()) h = nn::leaky_relu(h);
    }
    return h;
}

std::vector<std::vector<double>> Mlp::scores(std::span<const SpectrumWindow> windows) const {
    const std::size_t n = weights_.front().dim(1);
    return batched_scores(
        windows, [this](const nn::Tensor& x) { return forward(x); },
        [n](std::span<const SpectrumWindow> w) { return raw_matrix(w, n); });
}

MlpTraining train_mlp(const LabeledDataset& dataset, const MlpConfig& config) {
    const std::size_t n_features = feature_count(dataset);
    auto classes = dataset.classes();
    std::sort(classes.begin(), classes.end());
    MlpTraining out{Mlp(config, classes, n_features), {}};
    const auto targets = class_targets(out.model, dataset);
    const auto& model = out.model;
    out.history = fit(
        model.parameters(), [&](const nn::Tensor& x) { return model.forward(x); },
        [n_features](std::span<const SpectrumWindow> w) { return raw_matrix(w, n_features); }, dataset, targets,
        config.batch_size, config.epochs, config.lr, config.seed);
    return out;
}

}  // namespace sgda
