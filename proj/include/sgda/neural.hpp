#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sgda::nn {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles that records the operations producing it,
/// so a scalar result can back-propagate into every leaf with requires_grad.
///
/// Tensors are handles: copies share storage and graph position. Use clone()
/// for an independent copy.
class Tensor {
public:
    struct Node;

    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const { return shape().at(axis); }
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;

    bool requires_grad() const;
    bool has_grad() const;
    /// Empty span until a backward pass has reached this tensor.
    std::span<const double> grad() const;
    void zero_grad();

    /// Seeds d(self)/d(self) = 1 and accumulates gradients into every leaf.
    /// Only valid for single-element tensors.
    void backward() const;

    /// Same values, no history, requires_grad = false.
    Tensor detach() const;
    /// Independent copy of the values, keeping requires_grad.
    Tensor clone() const;

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>, std::function<void(Node&)>);

    std::shared_ptr<Node> node_;
};

struct Tensor::Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad();
};

/// Builds an op result. The graph edge is recorded only when gradient tracking
/// is enabled and at least one input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(Tensor::Node&)> backward_fn);

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor exp(const Tensor& a);
Tensor leaky_relu(const Tensor& x, double alpha = 0.01);
Tensor sigmoid(const Tensor& x);
/// Skip connection of a residual block; identical to add but names intent.
inline Tensor residual_add(const Tensor& x, const Tensor& skip) { return add(x, skip); }

// Reductions and shape.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// [C, L] -> [C] or [B, C, L] -> [B, C], averaging over the last axis.
Tensor global_avg_pool(const Tensor& x);

/// Cross-correlation. input [C_in, L] or [B, C_in, L]; kernels [C_out, C_in, K];
/// bias [C_out]. Output length floor((L + 2 padding - K) / stride) + 1.
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// W x + b. input [N] or [B, N]; weights [M, N]; bias [M].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// -log softmax(logits)[true_class], max-subtracted.
Tensor softmax_cross_entropy(const Tensor& logits, int true_class);
/// Batch mean over rows of [B, C] logits.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> true_classes);

/// Mean squared error over all elements.
Tensor mse_loss(const Tensor& prediction, const Tensor& target);

/// sum_i 0.5 (mu_i^2 + exp(logvar_i) - 1 - logvar_i), the divergence of
/// N(mu, exp(logvar)) from the unit Gaussian.
Tensor kl_unit_gaussian(const Tensor& mu, const Tensor& logvar);

std::vector<double> softmax(std::span<const double> logits);

// Initialization.
Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng, bool requires_grad = true);
Tensor uniform(Shape shape, double low, double high, Rng& rng, bool requires_grad = false);
Tensor standard_normal(Shape shape, Rng& rng);

struct NamedTensor {
    std::string name;
    Tensor tensor;
};
using ParameterList = std::vector<NamedTensor>;

void zero_grads(const ParameterList& params);

struct AdamState {
    std::uint64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam update applied in place to every parameter's data.
/// Moment buffers are allocated on the first step.
void adam_step(const ParameterList& params, AdamState& state);

/// Little-endian file of named float64 arrays.
void save_checkpoint(const std::filesystem::path& path, const ParameterList& params);
/// Copies stored values into matching parameters; names and shapes must agree.
void load_checkpoint(const std::filesystem::path& path, const ParameterList& params);

}  // namespace sgda::nn
