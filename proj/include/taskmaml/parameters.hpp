#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace taskmaml {

struct LayoutEntry {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;

    bool operator==(const LayoutEntry&) const = default;
};

/// Names contiguous ranges of a flat parameter array.
class ParameterLayout {
public:
    ParameterLayout() = default;
    explicit ParameterLayout(std::vector<LayoutEntry> entries);

    /// Appends a range at the current end and returns its offset.
    std::size_t append(std::string name, std::size_t length);

    const std::vector<LayoutEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return total_; }
    const LayoutEntry& find(const std::string& name) const;

    /// CRC-32 of the serialized (name, offset, length) list.
    std::uint32_t checksum() const;

    bool operator==(const ParameterLayout& other) const { return entries_ == other.entries_; }

private:
    std::vector<LayoutEntry> entries_;
    std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParameterLayout>;

/// Flat parameter values with a shared layout descriptor.
class ParameterVector {
public:
    ParameterVector() = default;
    explicit ParameterVector(LayoutPtr layout);
    ParameterVector(LayoutPtr layout, std::vector<double> values);

    const LayoutPtr& layout() const noexcept { return layout_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> slice(const std::string& name);
    std::span<const double> slice(const std::string& name) const;

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    bool same_layout(const ParameterVector& other) const;
    void require_same_layout(const ParameterVector& other, const char* context) const;
    bool all_finite() const;

    ParameterVector zeros_like() const { return ParameterVector(layout_); }

    ParameterVector& operator+=(const ParameterVector& other);
    ParameterVector& operator-=(const ParameterVector& other);
    ParameterVector& operator*=(double scale);
    /// this += scale * other
    ParameterVector& axpy(double scale, const ParameterVector& other);

    friend ParameterVector operator+(ParameterVector a, const ParameterVector& b) { return a += b; }
    friend ParameterVector operator-(ParameterVector a, const ParameterVector& b) { return a -= b; }
    friend ParameterVector operator*(double s, ParameterVector a) { return a *= s; }

    bool operator==(const ParameterVector& other) const;

private:
    LayoutPtr layout_;
    std::vector<double> values_;
};

double dot(const ParameterVector& a, const ParameterVector& b);
double norm(const ParameterVector& a);

/// Inputs (row-major, one row per example) with binary labels.
struct LabeledBatch {
    std::size_t example_size = 0;
    std::vector<double> inputs;
    std::vector<double> labels;
    /// Dataset row of each example, when the batch came from a sampler.
    std::vector<std::size_t> rows;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const double> example(std::size_t i) const {
        return std::span<const double>(inputs).subspan(i * example_size, example_size);
    }
    void push_back(std::span<const double> x, double label, std::size_t row = 0);
    void push_back(std::span<const float> x, double label, std::size_t row = 0);
    std::size_t positives() const;
};

struct LossAndGradient {
    double loss = 0.0;
    ParameterVector gradient;
};

/// A scalar training objective that is twice differentiable in its parameters.
///
/// The meta module only talks to this interface, so tests can substitute
/// closed-form objectives for the network.
class Objective {
public:
    virtual ~Objective() = default;

    virtual const LayoutPtr& layout() const = 0;
    virtual double loss(const ParameterVector& params, const LabeledBatch& batch) const = 0;
    virtual LossAndGradient loss_and_gradient(const ParameterVector& params, const LabeledBatch& batch) const = 0;
    virtual ParameterVector hessian_vector_product(const ParameterVector& params, const LabeledBatch& batch,
                                                   const ParameterVector& v) const = 0;

    ParameterVector gradient(const ParameterVector& params, const LabeledBatch& batch) const {
        return loss_and_gradient(params, batch).gradient;
    }
};

}  // namespace taskmaml
