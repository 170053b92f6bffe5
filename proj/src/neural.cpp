#include "sgda/neural.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace sgda::nn {

namespace {

thread_local bool g_grad_enabled = true;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(op + ": shape mismatch " + shape_to_string(a) + " vs " + shape_to_string(b));
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

Tensor::Node& parent(Tensor::Node& self, std::size_t i) { return *self.parents[i]; }

template <typename Fn>
Tensor unary_elementwise(const Tensor& a, Fn&& forward, std::function<void(Tensor::Node&)> backward) {
    std::vector<double> out(a.numel());
    const auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(x[i]);
    return make_result(a.shape(), std::move(out), {a}, std::move(backward));
}

constexpr char kCheckpointMagic[8] = {'S', 'G', 'D', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw std::runtime_error("checkpoint truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
    out << ']';
    return out.str();
}

std::vector<double>& Tensor::Node::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    for (auto d : shape)
        if (d == 0) throw std::invalid_argument("tensor dimensions must be positive: " + shape_to_string(shape));
    if (data.size() != shape_numel(shape))
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                                    shape_to_string(shape));
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
    if (!node_) throw std::logic_error("undefined tensor");
    return node_->shape;
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
    if (!node_) throw std::logic_error("undefined tensor");
    return node_->data;
}

std::span<double> Tensor::mutable_data() {
    if (!node_) throw std::logic_error("undefined tensor");
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item() requires a single-element tensor, got " +
                                                  shape_to_string(shape()));
    return node_->data.front();
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size() && !node_->data.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) return {};
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }

Tensor Tensor::clone() const { return Tensor(shape(), node_->data, requires_grad()); }

void Tensor::backward() const {
    if (numel() != 1) throw std::invalid_argument("backward() requires a scalar, got " + shape_to_string(shape()));
    if (!node_->requires_grad) throw std::logic_error("backward() on a tensor that does not require grad");

    // Iterative post-order DFS gives a topological order (inputs before outputs).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() == n->data.size()) n->backward_fn(*n);
    }
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(Tensor::Node&)> backward_fn) {
    auto node = std::make_shared<Tensor::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    if (g_grad_enabled) {
        const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            for (auto& t : inputs) node->parents.push_back(t.node());
            node->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return make_result(a.shape(), std::move(out), {a, b}, [](Tensor::Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            auto& p = parent(self, k);
            if (!p.requires_grad) continue;
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return make_result(a.shape(), std::move(out), {a, b}, [](Tensor::Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            auto& p = parent(self, k);
            if (!p.requires_grad) continue;
            const double sign = k == 0 ? 1.0 : -1.0;
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return make_result(a.shape(), std::move(out), {a, b}, [](Tensor::Node& self) {
        auto& pa = parent(self, 0);
        auto& pb = parent(self, 1);
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary_elementwise(
        a, [factor](double v) { return v * factor; },
        [factor](Tensor::Node& self) {
            auto& g = parent(self, 0).ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
        });
}

Tensor exp(const Tensor& a) {
    return unary_elementwise(
        a, [](double v) { return std::exp(v); },
        [](Tensor::Node& self) {
            auto& g = parent(self, 0).ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.data[i] * self.grad[i];
        });
}

Tensor leaky_relu(const Tensor& x, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("leaky_relu: alpha must be positive");
    return unary_elementwise(
        x, [alpha](double v) { return v >= 0.0 ? v : alpha * v; },
        [alpha](Tensor::Node& self) {
            auto& p = parent(self, 0);
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += (p.data[i] >= 0.0 ? 1.0 : alpha) * self.grad[i];
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary_elementwise(
        x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](Tensor::Node& self) {
            auto& g = parent(self, 0).ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double s = self.data[i];
                g[i] += s * (1.0 - s) * self.grad[i];
            }
        });
}

// ---------------------------------------------------------------------------
// Reductions and shape

Tensor sum(const Tensor& a) {
    const auto x = a.data();
    const double total = std::accumulate(x.begin(), x.end(), 0.0);
    return make_result({1}, {total}, {a}, [](Tensor::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        for (double& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    const auto x = a.data();
    const double n = static_cast<double>(x.size());
    const double total = std::accumulate(x.begin(), x.end(), 0.0) / n;
    return make_result({1}, {total}, {a}, [n](Tensor::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        for (double& v : g) v += self.grad[0] / n;
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                                    shape_to_string(shape));
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result(std::move(shape), std::move(out), {a}, [](Tensor::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 2 && x.rank() != 3)
        throw std::invalid_argument("global_avg_pool: expected [C, L] or [B, C, L], got " + shape_to_string(x.shape()));
    const std::size_t length = x.shape().back();
    const std::size_t rows = x.numel() / length;
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    std::vector<double> out(rows);
    const auto v = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t t = 0; t < length; ++t) acc += v[r * length + t];
        out[r] = acc / static_cast<double>(length);
    }
    return make_result(std::move(out_shape), std::move(out), {x}, [rows, length](Tensor::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        const double inv = 1.0 / static_cast<double>(length);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t t = 0; t < length; ++t) g[r * length + t] += self.grad[r] * inv;
    });
}

// ---------------------------------------------------------------------------
// Convolution and dense layers

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    if (stride == 0) throw std::invalid_argument("conv1d: stride must be positive");
    if (kernels.rank() != 3) throw std::invalid_argument("conv1d: kernels must be [C_out, C_in, K], got " +
                                                         shape_to_string(kernels.shape()));
    const bool batched = input.rank() == 3;
    if (!batched && input.rank() != 2)
        throw std::invalid_argument("conv1d: input must be [C_in, L] or [B, C_in, L], got " +
                                    shape_to_string(input.shape()));
    const std::size_t batch = batched ? input.dim(0) : 1;
    const std::size_t c_in = input.dim(batched ? 1 : 0);
    const std::size_t length = input.dim(batched ? 2 : 1);
    const std::size_t c_out = kernels.dim(0);
    const std::size_t k = kernels.dim(2);
    if (kernels.dim(1) != c_in) shape_error("conv1d", input.shape(), kernels.shape());
    if (bias.shape() != Shape{c_out}) shape_error("conv1d bias", bias.shape(), Shape{c_out});
    if (length + 2 * padding < k)
        throw std::invalid_argument("conv1d: padded input shorter than kernel: " + shape_to_string(input.shape()) +
                                    " vs " + shape_to_string(kernels.shape()));
    const std::size_t l_out = (length + 2 * padding - k) / stride + 1;
    const std::size_t rows = c_in * k;
    const std::size_t cols_n = batch * l_out;

    // im2col: column (b, t) holds the receptive field of output position t.
    auto cols = std::make_shared<std::vector<double>>(rows * cols_n, 0.0);
    const auto x = input.data();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t ci = 0; ci < c_in; ++ci)
            for (std::size_t kk = 0; kk < k; ++kk) {
                double* row = cols->data() + (ci * k + kk) * cols_n + b * l_out;
                const double* src = x.data() + (b * c_in + ci) * length;
                for (std::size_t t = 0; t < l_out; ++t) {
                    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + kk) -
                                               static_cast<std::ptrdiff_t>(padding);
                    if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(length)) row[t] = src[pos];
                }
            }

    ConstMatMap w(kernels.data().data(), static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(rows));
    ConstMatMap col_mat(cols->data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols_n));
    RowMatrix product = w * col_mat;

    std::vector<double> out(batch * c_out * l_out);
    const auto bvals = bias.data();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t co = 0; co < c_out; ++co)
            for (std::size_t t = 0; t < l_out; ++t)
                out[(b * c_out + co) * l_out + t] = product(static_cast<Eigen::Index>(co),
                                                            static_cast<Eigen::Index>(b * l_out + t)) +
                                                    bvals[co];

    Shape out_shape = batched ? Shape{batch, c_out, l_out} : Shape{c_out, l_out};
    return make_result(
        std::move(out_shape), std::move(out), {input, kernels, bias},
        [cols, batch, c_in, length, c_out, k, l_out, rows, cols_n, stride, padding](Tensor::Node& self) {
            RowMatrix grad_out(static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(cols_n));
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t co = 0; co < c_out; ++co)
                    for (std::size_t t = 0; t < l_out; ++t)
                        grad_out(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(b * l_out + t)) =
                            self.grad[(b * c_out + co) * l_out + t];

            auto& in_node = parent(self, 0);
            auto& w_node = parent(self, 1);
            auto& b_node = parent(self, 2);
            ConstMatMap col_mat(cols->data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols_n));
            if (w_node.requires_grad) {
                MatMap gw(w_node.ensure_grad().data(), static_cast<Eigen::Index>(c_out),
                          static_cast<Eigen::Index>(rows));
                gw.noalias() += grad_out * col_mat.transpose();
            }
            if (b_node.requires_grad) {
                auto& gb = b_node.ensure_grad();
                for (std::size_t co = 0; co < c_out; ++co) gb[co] += grad_out.row(static_cast<Eigen::Index>(co)).sum();
            }
            if (in_node.requires_grad) {
                ConstMatMap w(w_node.data.data(), static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(rows));
                RowMatrix grad_cols = w.transpose() * grad_out;
                auto& gx = in_node.ensure_grad();
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t ci = 0; ci < c_in; ++ci)
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            const double* row = grad_cols.data() + (ci * k + kk) * cols_n + b * l_out;
                            double* dst = gx.data() + (b * c_in + ci) * length;
                            for (std::size_t t = 0; t < l_out; ++t) {
                                const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + kk) -
                                                           static_cast<std::ptrdiff_t>(padding);
                                if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(length)) dst[pos] += row[t];
                            }
                        }
            }
        });
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (weights.rank() != 2) throw std::invalid_argument("dense: weights must be [M, N], got " +
                                                         shape_to_string(weights.shape()));
    const bool batched = input.rank() == 2;
    if (!batched && input.rank() != 1)
        throw std::invalid_argument("dense: input must be [N] or [B, N], got " + shape_to_string(input.shape()));
    const std::size_t batch = batched ? input.dim(0) : 1;
    const std::size_t n = input.shape().back();
    const std::size_t m = weights.dim(0);
    if (weights.dim(1) != n) shape_error("dense", input.shape(), weights.shape());
    if (bias.shape() != Shape{m}) shape_error("dense bias", bias.shape(), Shape{m});

    const auto B = static_cast<Eigen::Index>(batch);
    const auto M = static_cast<Eigen::Index>(m);
    const auto N = static_cast<Eigen::Index>(n);
    ConstMatMap x(input.data().data(), B, N);
    ConstMatMap w(weights.data().data(), M, N);
    std::vector<double> out(batch * m);
    MatMap y(out.data(), B, M);
    y.noalias() = x * w.transpose();
    const auto bvals = bias.data();
    for (Eigen::Index r = 0; r < B; ++r)
        for (Eigen::Index c = 0; c < M; ++c) y(r, c) += bvals[static_cast<std::size_t>(c)];

    Shape out_shape = batched ? Shape{batch, m} : Shape{m};
    return make_result(std::move(out_shape), std::move(out), {input, weights, bias}, [B, M, N](Tensor::Node& self) {
        auto& in_node = parent(self, 0);
        auto& w_node = parent(self, 1);
        auto& b_node = parent(self, 2);
        ConstMatMap gy(self.grad.data(), B, M);
        if (in_node.requires_grad) {
            ConstMatMap w(w_node.data.data(), M, N);
            MatMap gx(in_node.ensure_grad().data(), B, N);
            gx.noalias() += gy * w;
        }
        if (w_node.requires_grad) {
            ConstMatMap x(in_node.data.data(), B, N);
            MatMap gw(w_node.ensure_grad().data(), M, N);
            gw.noalias() += gy.transpose() * x;
        }
        if (b_node.requires_grad) {
            auto& gb = b_node.ensure_grad();
            for (Eigen::Index c = 0; c < M; ++c) gb[static_cast<std::size_t>(c)] += gy.col(c).sum();
        }
    });
}

// ---------------------------------------------------------------------------
// Losses

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) return {};
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] = std::exp(logits[i] - peak));
    for (double& v : p) v /= total;
    return p;
}

Tensor softmax_cross_entropy(const Tensor& logits, int true_class) {
    if (logits.rank() != 1) throw std::invalid_argument("softmax_cross_entropy: expected [C] logits, got " +
                                                        shape_to_string(logits.shape()));
    const std::vector<int> one{true_class};
    return reshape(softmax_cross_entropy(reshape(logits, {1, logits.dim(0)}), one), {1});
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> true_classes) {
    if (logits.rank() != 2)
        throw std::invalid_argument("softmax_cross_entropy: expected [B, C] logits, got " +
                                    shape_to_string(logits.shape()));
    const std::size_t batch = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    if (true_classes.size() != batch)
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(true_classes.size()) +
                                    " labels for batch of " + std::to_string(batch));
    for (int c : true_classes)
        if (c < 0 || static_cast<std::size_t>(c) >= classes)
            throw std::out_of_range("softmax_cross_entropy: class " + std::to_string(c) + " outside [0, " +
                                    std::to_string(classes) + ")");

    auto probs = std::make_shared<std::vector<double>>(batch * classes);
    const auto z = logits.data();
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const auto row = z.subspan(b * classes, classes);
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (double v : row) total += std::exp(v - peak);
        const double log_norm = peak + std::log(total);
        loss += log_norm - row[static_cast<std::size_t>(true_classes[b])];
        for (std::size_t c = 0; c < classes; ++c) (*probs)[b * classes + c] = std::exp(row[c] - log_norm);
    }
    loss /= static_cast<double>(batch);
    std::vector<int> labels(true_classes.begin(), true_classes.end());
    return make_result({1}, {loss}, {logits}, [probs, labels, batch, classes](Tensor::Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        const double upstream = self.grad[0] / static_cast<double>(batch);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < classes; ++c) {
                const double onehot = static_cast<int>(c) == labels[b] ? 1.0 : 0.0;
                g[b * classes + c] += upstream * ((*probs)[b * classes + c] - onehot);
            }
    });
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
    require_same_shape("mse_loss", prediction, target);
    const auto p = prediction.data(), t = target.data();
    const double n = static_cast<double>(p.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
    return make_result({1}, {acc / n}, {prediction, target}, [n](Tensor::Node& self) {
        auto& pp = parent(self, 0);
        auto& pt = parent(self, 1);
        const double upstream = 2.0 * self.grad[0] / n;
        if (pp.requires_grad) {
            auto& g = pp.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += upstream * (pp.data[i] - pt.data[i]);
        }
        if (pt.requires_grad) {
            auto& g = pt.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= upstream * (pp.data[i] - pt.data[i]);
        }
    });
}

Tensor kl_unit_gaussian(const Tensor& mu, const Tensor& logvar) {
    require_same_shape("kl_unit_gaussian", mu, logvar);
    const auto m = mu.data(), lv = logvar.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!std::isfinite(m[i]) || !std::isfinite(lv[i]))
            throw std::invalid_argument("kl_unit_gaussian: non-finite input");
        acc += 0.5 * (m[i] * m[i] + std::exp(lv[i]) - 1.0 - lv[i]);
    }
    return make_result({1}, {acc}, {mu, logvar}, [](Tensor::Node& self) {
        auto& pm = parent(self, 0);
        auto& pl = parent(self, 1);
        const double upstream = self.grad[0];
        if (pm.requires_grad) {
            auto& g = pm.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += upstream * pm.data[i];
        }
        if (pl.requires_grad) {
            auto& g = pl.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += upstream * 0.5 * (std::exp(pl.data[i]) - 1.0);
        }
    });
}

// ---------------------------------------------------------------------------
// Initialization

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng, bool requires_grad) {
    if (fan_in == 0) throw std::invalid_argument("he_normal: fan_in must be positive");
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = dist(rng);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor uniform(Shape shape, double low, double high, Rng& rng, bool requires_grad) {
    std::uniform_real_distribution<double> dist(low, high);
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = dist(rng);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor standard_normal(Shape shape, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = dist(rng);
    return Tensor(std::move(shape), std::move(data), false);
}

// ---------------------------------------------------------------------------
// Optimization and persistence

void zero_grads(const ParameterList& params) {
    for (const auto& p : params) {
        auto copy = p.tensor;
        copy.zero_grad();
    }
}

void adam_step(const ParameterList& params, AdamState& state) {
    for (const auto& p : params)
        if (!p.tensor.has_grad()) throw std::invalid_argument("adam_step: parameter '" + p.name + "' has no gradient");
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.tensor.numel(), 0.0);
            state.second_moment.emplace_back(p.tensor.numel(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size())
        throw std::invalid_argument("adam_step: optimizer state does not match parameter list");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto tensor = params[i].tensor;
        auto data = tensor.mutable_data();
        const auto grad = tensor.grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != data.size())
            throw std::invalid_argument("adam_step: moment size mismatch for '" + params[i].name + "'");
        for (std::size_t j = 0; j < data.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * grad[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * grad[j] * grad[j];
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            data[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_le<std::uint32_t>(out, kCheckpointVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const auto& shape = p.tensor.shape();
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) write_le<std::uint64_t>(out, d);
        for (double v : p.tensor.data()) write_le<double>(out, v);
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, const ParameterList& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[sizeof(kCheckpointMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error(path.string() + ": not a checkpoint file");
    const auto version = read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw std::runtime_error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    const auto count = read_le<std::uint32_t>(in);
    if (count != params.size())
        throw std::runtime_error(path.string() + ": checkpoint holds " + std::to_string(count) + " arrays, model has " +
                                 std::to_string(params.size()));
    for (const auto& p : params) {
        const auto name_len = read_le<std::uint32_t>(in);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw std::runtime_error("checkpoint truncated");
        if (name != p.name)
            throw std::runtime_error(path.string() + ": expected parameter '" + p.name + "', found '" + name + "'");
        const auto rank = read_le<std::uint32_t>(in);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(read_le<std::uint64_t>(in));
        if (shape != p.tensor.shape())
            throw std::runtime_error(path.string() + ": parameter '" + name + "' has shape " + shape_to_string(shape) +
                                     ", model expects " + shape_to_string(p.tensor.shape()));
        auto tensor = p.tensor;
        for (double& v : tensor.mutable_data()) v = read_le<double>(in);
    }
}

}  // namespace sgda::nn
