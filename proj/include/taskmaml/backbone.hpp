#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "taskmaml/parameters.hpp"

namespace taskmaml {

enum class InputKind { vector, image };
enum class Precision { f32, f64 };
enum class Mode { train, eval };

/// Shape of one example. Image payloads are stored height x width x channels,
/// channel fastest.
struct InputShape {
    InputKind kind = InputKind::vector;
    std::size_t dim = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    static InputShape vector(std::size_t d) { return {InputKind::vector, d, 0, 0, 0}; }
    static InputShape image(std::size_t h, std::size_t w, std::size_t c) { return {InputKind::image, 0, h, w, c}; }

    std::size_t size() const noexcept { return kind == InputKind::vector ? dim : height * width * channels; }
    std::string describe() const;
    bool operator==(const InputShape&) const = default;
};

struct BackboneConfig {
    InputShape input = InputShape::image(32, 32, 1);
    /// Conv filter counts for images; hidden widths of the MLP for vectors.
    std::vector<std::size_t> conv_channels{64, 48, 32, 16};
    std::size_t kernel_size = 5;
    std::size_t pool_size = 2;
    bool use_batchnorm = true;
    std::size_t fc_output_dim = 1;
    std::uint64_t seed = 0;
    Precision precision = Precision::f32;

    /// Throws ConfigError naming the offending field or stage.
    void validate() const;
    bool operator==(const BackboneConfig&) const = default;
};

/// Mean binary cross-entropy with probabilities clamped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-7;
inline constexpr double kBatchNormEps = 1e-5;

double bce_loss(std::span<const double> probs, std::span<const double> labels);

/// Conv/MLP detector ending in a single sigmoid unit.
///
/// Conv blocks are 'same'-padded stride-1 convolutions, batchnorm, ReLU and a
/// pool_size max-pool. Batchnorm always normalizes with the statistics of the
/// batch being evaluated; no running statistics exist.
class Backbone final : public Objective {
public:
    explicit Backbone(BackboneConfig config);

    const BackboneConfig& config() const noexcept { return config_; }
    const LayoutPtr& layout() const override { return layout_; }
    std::size_t parameter_count() const noexcept { return layout_->size(); }

    /// Fan-in scaled normal weights; biases and shifts zero; scales one.
    ParameterVector init_params(std::uint64_t seed) const;

    std::vector<double> forward(const ParameterVector& params, const LabeledBatch& batch,
                                Mode mode = Mode::train) const;
    double loss(const ParameterVector& params, const LabeledBatch& batch) const override;
    LossAndGradient loss_and_gradient(const ParameterVector& params, const LabeledBatch& batch) const override;
    ParameterVector hessian_vector_product(const ParameterVector& params, const LabeledBatch& batch,
                                           const ParameterVector& v) const override;

    struct Block {
        std::size_t in_channels = 0;
        std::size_t out_channels = 0;
        std::size_t height = 0;  // input spatial size (1 for dense blocks)
        std::size_t width = 0;
        std::size_t out_height = 0;
        std::size_t out_width = 0;
        std::size_t weight = 0;  // offsets into the parameter vector
        std::size_t bias = 0;
        std::size_t scale = 0;
        std::size_t shift = 0;
    };
    struct Plan {
        bool conv = false;
        bool batchnorm = true;
        std::size_t kernel = 1;
        std::size_t pool = 1;
        std::size_t input_size = 0;
        std::vector<Block> blocks;
        std::size_t fc_in = 0;
        std::size_t fc_weight = 0;
        std::size_t fc_bias = 0;
    };
    const Plan& plan() const noexcept { return plan_; }

private:
    void check(const ParameterVector& params, const LabeledBatch& batch) const;

    BackboneConfig config_;
    Plan plan_;
    LayoutPtr layout_;
};

}  // namespace taskmaml
