#include "sgda/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace sgda {

namespace {

nn::Tensor zeros_param(std::size_t n) { return nn::Tensor::zeros({n}, true); }

// One decoded draw, or nothing when it fails the prominence test.
std::optional<std::vector<double>> draw_shape(const VaeModel& model, std::mt19937_64& rng) {
    nn::NoGradGuard no_grad;
    const auto z = nn::standard_normal({1, model.config().latent_dim}, rng);
    const auto decoded = model.decode(z);
    std::vector<double> v(decoded.data().begin(), decoded.data().end());
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double min = *lo, max = *hi;
    if (!(max - min > 1e-9) || peak_prominence(v) < kMinPeakProminence) return std::nullopt;
    for (double& x : v) x = (x - min) / (max - min);
    v[static_cast<std::size_t>(lo - v.begin())] = 0.0;
    v[static_cast<std::size_t>(hi - v.begin())] = 1.0;
    return v;
}

}  // namespace

double kl_unit_gaussian(std::span<const double> mu, std::span<const double> logvar) {
    if (mu.size() != logvar.size()) throw std::invalid_argument("kl_unit_gaussian: mu and logvar lengths differ");
    double kl = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (!std::isfinite(mu[i]) || !std::isfinite(logvar[i]))
            throw std::invalid_argument("kl_unit_gaussian: non-finite input");
        kl += 0.5 * (mu[i] * mu[i] + std::exp(logvar[i]) - 1.0 - logvar[i]);
    }
    return kl;
}

std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> logvar,
                                   std::span<const double> eps) {
    if (mu.size() != logvar.size() || mu.size() != eps.size())
        throw std::invalid_argument("reparameterize: length mismatch");
    std::vector<double> z(mu.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + std::exp(0.5 * logvar[i]) * eps[i];
    return z;
}

VaeModel::VaeModel(const VaeConfig& config) : config_(config) {
    if (config.hidden_dim == 0 || config.latent_dim == 0) throw std::invalid_argument("VAE dimensions must be positive");
    nn::Rng rng(config.seed);
    const std::size_t h = config.hidden_dim, z = config.latent_dim;
    enc_w_ = nn::he_normal({h, kSegmentLength}, kSegmentLength, rng);
    enc_b_ = zeros_param(h);
    mu_w_ = nn::he_normal({z, h}, h, rng);
    mu_b_ = zeros_param(z);
    // A small logvar head keeps early posteriors near unit variance.
    logvar_w_ = nn::uniform({z, h}, -0.01, 0.01, rng, true);
    logvar_b_ = zeros_param(z);
    dec_w_ = nn::he_normal({h, z}, z, rng);
    dec_b_ = zeros_param(h);
    out_w_ = nn::he_normal({kSegmentLength, h}, h, rng);
    out_b_ = zeros_param(kSegmentLength);
}

nn::ParameterList VaeModel::parameters() const {
    return {{"enc.w", enc_w_},       {"enc.b", enc_b_}, {"mu.w", mu_w_},   {"mu.b", mu_b_},   {"logvar.w", logvar_w_},
            {"logvar.b", logvar_b_}, {"dec.w", dec_w_}, {"dec.b", dec_b_}, {"out.w", out_w_}, {"out.b", out_b_}};
}

VaeModel::Output VaeModel::forward(const nn::Tensor& x, const nn::Tensor& eps) const {
    const auto hidden = nn::leaky_relu(nn::dense(x, enc_w_, enc_b_));
    auto mu = nn::dense(hidden, mu_w_, mu_b_);
    auto logvar = nn::dense(hidden, logvar_w_, logvar_b_);
    const auto z = nn::add(mu, nn::mul(nn::exp(nn::scale(logvar, 0.5)), eps));
    return {decode(z), std::move(mu), std::move(logvar)};
}

nn::Tensor VaeModel::decode(const nn::Tensor& z) const {
    return nn::sigmoid(nn::dense(nn::leaky_relu(nn::dense(z, dec_w_, dec_b_)), out_w_, out_b_));
}

VaeModel VaeModel::clone() const {
    VaeModel copy(config_);
    const auto src = parameters();
    auto dst = copy.parameters();
    for (std::size_t i = 0; i < src.size(); ++i)
        std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), dst[i].tensor.mutable_data().begin());
    return copy;
}

void VaeModel::save(const std::filesystem::path& path) const { nn::save_checkpoint(path, parameters()); }
void VaeModel::load(const std::filesystem::path& path) { nn::load_checkpoint(path, parameters()); }

VaeTrainingResult train_vae(std::span<const PeakSegment> segments, const VaeConfig& config) {
    std::vector<const PeakSegment*> usable;
    for (const auto& s : segments) {
        if (s.degenerate) continue;
        if (s.values.size() != kSegmentLength) throw std::invalid_argument("train_vae: segment of wrong length");
        usable.push_back(&s);
    }
    if (config.batch_size == 0) throw std::invalid_argument("train_vae: batch size must be positive");
    if (usable.size() < config.batch_size)
        throw std::invalid_argument("train_vae: " + std::to_string(usable.size()) +
                                    " usable segments, fewer than one batch of " + std::to_string(config.batch_size));

    VaeTrainingResult result{VaeModel(config), {}, {}};
    const auto params = result.model.parameters();
    nn::AdamState adam;
    adam.lr = config.lr;
    nn::Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    std::vector<std::size_t> order(usable.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0, recon_total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t b = std::min(config.batch_size, order.size() - start);
            std::vector<double> xs;
            xs.reserve(b * kSegmentLength);
            for (std::size_t i = 0; i < b; ++i) {
                const auto& v = usable[order[start + i]]->values;
                xs.insert(xs.end(), v.begin(), v.end());
            }
            const nn::Tensor x({b, kSegmentLength}, std::move(xs));
            const auto eps = nn::standard_normal({b, config.latent_dim}, rng);
            const auto out = result.model.forward(x, eps);
            const auto recon = nn::mse_loss(out.reconstruction, x);
            const auto kl = nn::scale(nn::kl_unit_gaussian(out.mu, out.logvar), config.beta / static_cast<double>(b));
            const auto loss = nn::add(recon, kl);
            nn::zero_grads(params);
            loss.backward();
            nn::adam_step(params, adam);
            total += loss.item() * static_cast<double>(b);
            recon_total += recon.item() * static_cast<double>(b);
        }
        result.loss_history.push_back(total / static_cast<double>(order.size()));
        result.reconstruction_history.push_back(recon_total / static_cast<double>(order.size()));
    }
    return result;
}

double reconstruction_mse(const VaeModel& model, std::span<const double> segment) {
    if (segment.size() != kSegmentLength) throw std::invalid_argument("reconstruction_mse: segment of wrong length");
    nn::NoGradGuard no_grad;
    const nn::Tensor x({1, kSegmentLength}, std::vector<double>(segment.begin(), segment.end()));
    const auto out = model.forward(x, nn::Tensor::zeros({1, model.config().latent_dim}));
    return nn::mse_loss(out.reconstruction, x).item();
}

double peak_prominence(std::span<const double> values) {
    if (values.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    return (*hi - mean) / range;
}

bool is_unimodal(std::span<const double> values, double tolerance) {
    bool falling = false;
    for (std::size_t i = 1; i < values.size(); ++i) {
        const double d = values[i] - values[i - 1];
        if (std::abs(d) < tolerance) continue;
        if (d < 0.0) falling = true;
        else if (falling) return false;
    }
    return true;
}

std::vector<PeakSegment> generate_peaks(const VaeModel& model, std::size_t n, std::uint64_t seed) {
    std::vector<PeakSegment> out;
    out.reserve(n);
    std::mt19937_64 rng(seed);
    std::size_t draws = 0;
    while (out.size() < n) {
        if (++draws > 100 * n) throw std::runtime_error("degenerate generator");
        if (auto v = draw_shape(model, rng)) {
            PeakSegment seg;
            seg.values = std::move(*v);
            seg.seg_min = 0.0;
            seg.seg_max = 1.0;
            seg.center_bin = kSegmentLeft;
            out.push_back(std::move(seg));
        }
    }
    return out;
}

std::vector<double> VaePeakSource::next_shape(std::mt19937_64& rng) {
    for (int draw = 0; draw < 100; ++draw)
        if (auto v = draw_shape(*model_, rng)) return *v;
    throw std::runtime_error("degenerate generator");
}

}  // namespace sgda
