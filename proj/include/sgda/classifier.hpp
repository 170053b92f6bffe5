#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sgda/neural.hpp"
#include "sgda/spectrum.hpp"

namespace sgda {

/// Anything that scores spectrum windows against a fixed, ordered class set.
class SpectrumClassifier {
public:
    virtual ~SpectrumClassifier() = default;
    virtual const std::vector<FaultClass>& classes() const = 0;
    /// One row of class scores per window; argmax is the prediction.
    virtual std::vector<std::vector<double>> scores(std::span<const SpectrumWindow> windows) const = 0;

    std::vector<FaultClass> predict(std::span<const SpectrumWindow> windows) const;
    /// Position of `fault` in classes(); throws when absent.
    int class_index(FaultClass fault) const;
};

/// Scores one fixed class highest for every window: all a supervised learner
/// can do when its training data holds a single class.
class ConstantClassifier final : public SpectrumClassifier {
public:
    ConstantClassifier(std::vector<FaultClass> classes, FaultClass predicted);
    const std::vector<FaultClass>& classes() const override { return classes_; }
    std::vector<std::vector<double>> scores(std::span<const SpectrumWindow> windows) const override;

private:
    std::vector<FaultClass> classes_;
    std::size_t predicted_;
};

struct TrainHistory {
    std::vector<double> loss;      // mean training loss per epoch
    std::vector<double> accuracy;  // training accuracy per epoch, measured during the epoch
};

// ---------------------------------------------------------------- ResNet

struct ResNetConfig {
    std::vector<std::size_t> block_channels{64, 128, 256, 512};
    std::size_t kernel_size = 7;
    std::size_t n_classes = 2;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    /// Feed ln(1 + |X|) rather than raw magnitudes.
    bool log_input = true;
};

/// Four residual blocks of two same-padded convolutions (the first strided by
/// 2 in blocks after the first), leaky ReLU, identity or 1x1 projection skips,
/// global average pooling and a dense head.
class ResNet final : public SpectrumClassifier {
public:
    ResNet(const ResNetConfig& config, std::vector<FaultClass> classes);

    const ResNetConfig& config() const { return config_; }
    const std::vector<FaultClass>& classes() const override { return classes_; }
    nn::ParameterList parameters() const;
    std::size_t parameter_count() const;

    /// [B, 1, L] -> [B, n_classes].
    nn::Tensor forward(const nn::Tensor& x) const;
    /// Stacks windows into a [B, 1, L] input, applying the configured transform.
    nn::Tensor to_input(std::span<const SpectrumWindow> windows) const;
    std::vector<std::vector<double>> scores(std::span<const SpectrumWindow> windows) const override;

    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    struct Block {
        nn::Tensor w1, b1, w2, b2, proj_w, proj_b;
        std::size_t stride = 1;
        bool projected = false;
    };

    ResNetConfig config_;
    std::vector<FaultClass> classes_;
    std::vector<Block> blocks_;
    nn::Tensor head_w_, head_b_;
};

/// Shuffled mini-batch Adam on softmax cross-entropy.
TrainHistory train(ResNet& model, const LabeledDataset& dataset);

// ---------------------------------------------------------------- evaluation

struct EvalReport {
    std::vector<FaultClass> classes;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::map<FaultClass, double> per_class_f1;
    /// confusion[true][predicted], indexed like `classes`.
    std::vector<std::vector<std::size_t>> confusion;
    std::size_t n_test = 0;
};

EvalReport evaluate(const SpectrumClassifier& model, const LabeledDataset& test);
/// Report from paired true and predicted labels over `classes`.
EvalReport evaluate_predictions(const std::vector<FaultClass>& classes, std::span<const FaultClass> truth,
                                std::span<const FaultClass> predicted);

/// Mean and sample standard deviation (0 for a single seed).
struct SeedStats {
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;
    double f1_mean = 0.0;
    double f1_std = 0.0;
    std::size_t n_seeds = 0;
};

SeedStats summarize(std::span<const EvalReport> reports);
std::string format_report(const EvalReport& report);

// ---------------------------------------------------------------- comparators

struct SvmConfig {
    double c = 1.0;
    /// Base step of the per-coordinate adaptive update.
    double lr = 0.01;
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
};

/// One-vs-rest soft-margin linear SVM on raw magnitudes.
class LinearSvm final : public SpectrumClassifier {
public:
    LinearSvm(std::vector<FaultClass> classes, std::size_t n_features);
    const std::vector<FaultClass>& classes() const override { return classes_; }
    std::vector<std::vector<double>> scores(std::span<const SpectrumWindow> windows) const override;

    std::vector<std::vector<double>> weights;  // [class][feature]
    std::vector<double> bias;                  // [class]

    /// Mean over classes of lambda/2 |w|^2 + mean hinge, lambda = 1 / (C n).
    double objective(const LabeledDataset& dataset, double c) const;

private:
    std::vector<FaultClass> classes_;
};

struct SvmTraining {
    LinearSvm model;
    /// Objective after every mini-batch step.
    std::vector<double> objective;
};

/// Mini-batch subgradient descent on the primal hinge objective with
/// AdaGrad-style per-coordinate steps; the bias is left unregularized.
SvmTraining train_svm(const LabeledDataset& dataset, const SvmConfig& config);

struct MlpConfig {
    std::vector<std::size_t> hidden_dims{128, 64};
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

/// Dense layers with leaky ReLU on raw magnitudes; no hidden layers gives
/// multinomial logistic regression.
class Mlp final : public SpectrumClassifier {
public:
    Mlp(const MlpConfig& config, std::vector<FaultClass> classes, std::size_t n_features);
    const std::vector<FaultClass>& classes() const override { return classes_; }
    nn::ParameterList parameters() const;
    nn::Tensor forward(const nn::Tensor& x) const;  // [B, features] -> [B, classes]
    std::vector<std::vector<double>> scores(std::span<const SpectrumWindow> windows) const override;

private:
    std::vector<FaultClass> classes_;
    std::vector<nn::Tensor> weights_, biases_;
};

struct MlpTraining {
    Mlp model;
    TrainHistory history;
};

MlpTraining train_mlp(const LabeledDataset& dataset, const MlpConfig& config);

}  // namespace sgda
