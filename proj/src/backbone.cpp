#include "taskmaml/backbone.hpp"

#include <cmath>
#include <random>

#include "network_kernels.hpp"
#include "taskmaml/errors.hpp"

namespace taskmaml {

std::string InputShape::describe() const {
    if (kind == InputKind::vector) return "vector[" + std::to_string(dim) + "]";
    return "image[" + std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels) + "]";
}

void BackboneConfig::validate() const {
    if (fc_output_dim != 1) throw ConfigError("backbone.fc_output_dim must be 1 (single-attribute detector)");
    if (input.size() == 0) throw ConfigError("backbone input shape " + input.describe() + " is empty");
    for (std::size_t i = 0; i < conv_channels.size(); ++i) {
        if (conv_channels[i] == 0) throw ConfigError("backbone.conv_channels[" + std::to_string(i) + "] is zero");
    }
    if (input.kind == InputKind::vector) return;
    if (conv_channels.empty()) throw ConfigError("backbone.conv_channels must be non-empty for image input");
    if (kernel_size == 0 || kernel_size % 2 == 0) {
        throw ConfigError("backbone.kernel_size must be odd for 'same' padding, got " + std::to_string(kernel_size));
    }
    if (pool_size == 0) throw ConfigError("backbone.pool_size must be >= 1");
    std::size_t h = input.height;
    std::size_t w = input.width;
    for (std::size_t i = 0; i < conv_channels.size(); ++i) {
        h /= pool_size;
        w /= pool_size;
        if (h < 1 || w < 1) {
            throw ConfigError("backbone pooling stage " + std::to_string(i) + " reduces " + input.describe() +
                              " below 1x1");
        }
    }
}

Backbone::Backbone(BackboneConfig config) : config_(std::move(config)) {
    config_.validate();
    auto layout = std::make_shared<ParameterLayout>();
    plan_.conv = config_.input.kind == InputKind::image;
    plan_.batchnorm = config_.use_batchnorm;
    plan_.kernel = plan_.conv ? config_.kernel_size : 1;
    plan_.pool = plan_.conv ? config_.pool_size : 1;
    plan_.input_size = config_.input.size();

    std::size_t channels = plan_.conv ? config_.input.channels : config_.input.dim;
    std::size_t h = plan_.conv ? config_.input.height : 1;
    std::size_t w = plan_.conv ? config_.input.width : 1;
    const std::string kind = plan_.conv ? "conv" : "dense";
    for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
        Block b;
        b.in_channels = channels;
        b.out_channels = config_.conv_channels[i];
        b.height = h;
        b.width = w;
        b.out_height = h / plan_.pool;
        b.out_width = w / plan_.pool;
        const std::string prefix = "block" + std::to_string(i) + ".";
        b.weight = layout->append(prefix + kind + ".weight", b.out_channels * b.in_channels * plan_.kernel * plan_.kernel);
        if (plan_.batchnorm) {
            b.scale = layout->append(prefix + "bn.scale", b.out_channels);
            b.shift = layout->append(prefix + "bn.shift", b.out_channels);
        } else {
            b.bias = layout->append(prefix + kind + ".bias", b.out_channels);
        }
        plan_.blocks.push_back(b);
        channels = b.out_channels;
        h = b.out_height;
        w = b.out_width;
    }
    plan_.fc_in = channels * h * w;
    plan_.fc_weight = layout->append("fc.weight", plan_.fc_in);
    plan_.fc_bias = layout->append("fc.bias", 1);
    layout_ = std::move(layout);
}

ParameterVector Backbone::init_params(std::uint64_t seed) const {
    ParameterVector params(layout_);
    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t offset, std::size_t length, double stddev) {
        std::normal_distribution<double> dist(0.0, stddev);
        for (std::size_t i = 0; i < length; ++i) params[offset + i] = dist(rng);
    };
    for (const auto& b : plan_.blocks) {
        const std::size_t fan_in = b.in_channels * plan_.kernel * plan_.kernel;
        fill(b.weight, b.out_channels * fan_in, std::sqrt(2.0 / static_cast<double>(fan_in)));
        if (plan_.batchnorm) {
            for (std::size_t c = 0; c < b.out_channels; ++c) params[b.scale + c] = 1.0;
        }
    }
    fill(plan_.fc_weight, plan_.fc_in, std::sqrt(1.0 / static_cast<double>(plan_.fc_in)));
    return params;
}

void Backbone::check(const ParameterVector& params, const LabeledBatch& batch) const {
    if (!params.layout() || !(params.layout() == layout_ || *params.layout() == *layout_)) {
        throw ShapeError("parameter layout does not match backbone: expected " + std::to_string(layout_->size()) +
                         " values, received " + std::to_string(params.size()));
    }
    if (batch.size() == 0) throw ShapeError("empty batch");
    if (batch.example_size != plan_.input_size || batch.inputs.size() != batch.size() * batch.example_size) {
        throw ShapeError("input shape mismatch: expected " + config_.input.describe() + " (" +
                         std::to_string(plan_.input_size) + " values per example), received " +
                         std::to_string(batch.example_size));
    }
}

namespace {

template <class S>
double run_loss(const Backbone::Plan& plan, const ParameterVector& params, const LabeledBatch& batch,
                std::vector<double>* grad, double* probs) {
    std::vector<S> theta(params.size());
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = static_cast<S>(params[i]);
    std::vector<S> g;
    if (grad) g.assign(theta.size(), S(0));
    const S loss = detail::evaluate_network<S>(plan, theta.data(), batch, grad ? g.data() : nullptr, probs);
    if (grad) grad->assign(g.begin(), g.end());
    return static_cast<double>(loss);
}

template <class T>
std::vector<double> run_hvp(const Backbone::Plan& plan, const ParameterVector& params, const LabeledBatch& batch,
                            const ParameterVector& v) {
    using D = Dual<T>;
    std::vector<D> theta(params.size());
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = D(static_cast<T>(params[i]), static_cast<T>(v[i]));
    std::vector<D> g(theta.size(), D(0));
    detail::evaluate_network<D>(plan, theta.data(), batch, g.data(), nullptr);
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = static_cast<double>(g[i].d);
    return out;
}

}  // namespace

std::vector<double> Backbone::forward(const ParameterVector& params, const LabeledBatch& batch, Mode) const {
    check(params, batch);
    std::vector<double> probs(batch.size());
    if (config_.precision == Precision::f64) {
        run_loss<double>(plan_, params, batch, nullptr, probs.data());
    } else {
        run_loss<float>(plan_, params, batch, nullptr, probs.data());
    }
    return probs;
}

double Backbone::loss(const ParameterVector& params, const LabeledBatch& batch) const {
    check(params, batch);
    if (config_.precision == Precision::f64) return run_loss<double>(plan_, params, batch, nullptr, nullptr);
    return run_loss<float>(plan_, params, batch, nullptr, nullptr);
}

LossAndGradient Backbone::loss_and_gradient(const ParameterVector& params, const LabeledBatch& batch) const {
    check(params, batch);
    std::vector<double> g;
    const double l = config_.precision == Precision::f64 ? run_loss<double>(plan_, params, batch, &g, nullptr)
                                                         : run_loss<float>(plan_, params, batch, &g, nullptr);
    return {l, ParameterVector(layout_, std::move(g))};
}

ParameterVector Backbone::hessian_vector_product(const ParameterVector& params, const LabeledBatch& batch,
                                                 const ParameterVector& v) const {
    check(params, batch);
    params.require_same_layout(v, "hessian_vector_product");
    auto out = config_.precision == Precision::f64 ? run_hvp<double>(plan_, params, batch, v)
                                                   : run_hvp<float>(plan_, params, batch, v);
    return ParameterVector(layout_, std::move(out));
}

double bce_loss(std::span<const double> probs, std::span<const double> labels) {
    if (probs.size() != labels.size()) {
        throw ShapeError("bce_loss: " + std::to_string(probs.size()) + " probabilities vs " +
                         std::to_string(labels.size()) + " labels");
    }
    if (probs.empty()) throw ShapeError("bce_loss: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
        total -= labels[i] > 0.5 ? std::log(p) : std::log(1.0 - p);
    }
    return total / static_cast<double>(probs.size());
}

}  // namespace taskmaml
