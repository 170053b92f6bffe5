#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "sgda/augment.hpp"
#include "sgda/neural.hpp"

namespace sgda {

struct VaeConfig {
    std::size_t hidden_dim = 16;
    std::size_t latent_dim = 4;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    std::size_t epochs = 500;
    double beta = 1.0;
    std::uint64_t seed = 0;
};

/// sum_i 0.5 (mu_i^2 + exp(logvar_i) - 1 - logvar_i).
double kl_unit_gaussian(std::span<const double> mu, std::span<const double> logvar);

/// z = mu + exp(logvar / 2) * eps.
std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> logvar,
                                   std::span<const double> eps);

/// 20 -> hidden (leaky ReLU) -> (mu, logvar); latent -> hidden (leaky ReLU) -> 20 (sigmoid).
class VaeModel {
public:
    struct Output {
        nn::Tensor reconstruction;
        nn::Tensor mu;
        nn::Tensor logvar;
    };

    explicit VaeModel(const VaeConfig& config);

    const VaeConfig& config() const { return config_; }
    nn::ParameterList parameters() const;

    /// `x` is [B, 20]; `eps` is [B, latent_dim].
    Output forward(const nn::Tensor& x, const nn::Tensor& eps) const;
    /// `z` is [B, latent_dim]; returns [B, 20] in (0, 1).
    nn::Tensor decode(const nn::Tensor& z) const;

    /// Independent copy of every parameter.
    VaeModel clone() const;

    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    VaeConfig config_;
    nn::Tensor enc_w_, enc_b_, mu_w_, mu_b_, logvar_w_, logvar_b_;
    nn::Tensor dec_w_, dec_b_, out_w_, out_b_;
};

struct VaeTrainingResult {
    VaeModel model;
    /// Mean per-segment loss (reconstruction MSE + beta KL) of every epoch.
    std::vector<double> loss_history;
    std::vector<double> reconstruction_history;
};

/// Mini-batch Adam on MSE + beta KL. Needs at least one full batch of
/// non-degenerate segments; degenerate ones are skipped.
VaeTrainingResult train_vae(std::span<const PeakSegment> segments, const VaeConfig& config);

/// Per-segment reconstruction MSE using the posterior mean.
double reconstruction_mse(const VaeModel& model, std::span<const double> segment);

/// (max - mean) / (max - min): how far a shape's top stands above its average
/// level, relative to its range. Zero for flat shapes.
double peak_prominence(std::span<const double> values);

/// First differences, ignoring steps smaller than `tolerance`, change sign at
/// most once and only from rising to falling.
bool is_unimodal(std::span<const double> values, double tolerance = 0.02);

/// Draws accepted by generate_peaks have at least this prominence.
inline constexpr double kMinPeakProminence = 0.5;

/// `n` decoded segments from z ~ N(0, I), min-max rescaled to [0, 1]. Draws
/// below kMinPeakProminence are rejected; more than 100 n draws throws
/// "degenerate generator".
std::vector<PeakSegment> generate_peaks(const VaeModel& model, std::size_t n, std::uint64_t seed);

/// Peak source backed by a trained VAE.
class VaePeakSource final : public PeakSource {
public:
    explicit VaePeakSource(std::shared_ptr<const VaeModel> model) : model_(std::move(model)) {}
    std::vector<double> next_shape(std::mt19937_64& rng) override;
    std::string name() const override { return "vae"; }

private:
    std::shared_ptr<const VaeModel> model_;
};

}  // namespace sgda
