#include "taskmaml/parameters.hpp"

#include <algorithm>
#include <cmath>

#include <zlib.h>

#include "taskmaml/errors.hpp"

namespace taskmaml {

ParameterLayout::ParameterLayout(std::vector<LayoutEntry> entries) : entries_(std::move(entries)) {
    std::size_t expected = 0;
    for (const auto& e : entries_) {
        if (e.offset != expected) {
            throw ShapeError("layout entry '" + e.name + "' is not contiguous (offset " + std::to_string(e.offset) +
                             ", expected " + std::to_string(expected) + ")");
        }
        expected += e.length;
    }
    total_ = expected;
}

std::size_t ParameterLayout::append(std::string name, std::size_t length) {
    const std::size_t offset = total_;
    entries_.push_back({std::move(name), offset, length});
    total_ += length;
    return offset;
}

const LayoutEntry& ParameterLayout::find(const std::string& name) const {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const LayoutEntry& e) { return e.name == name; });
    if (it == entries_.end()) throw ShapeError("no parameter named '" + name + "'");
    return *it;
}

std::uint32_t ParameterLayout::checksum() const {
    std::string buf;
    for (const auto& e : entries_) {
        buf += e.name;
        buf += '\0';
        buf += std::to_string(e.offset);
        buf += ':';
        buf += std::to_string(e.length);
        buf += '\n';
    }
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
}

ParameterVector::ParameterVector(LayoutPtr layout) : layout_(std::move(layout)) {
    values_.assign(layout_ ? layout_->size() : 0, 0.0);
}

ParameterVector::ParameterVector(LayoutPtr layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
    const std::size_t expected = layout_ ? layout_->size() : 0;
    if (values_.size() != expected) {
        throw ShapeError("parameter vector has " + std::to_string(values_.size()) + " values, layout expects " +
                         std::to_string(expected));
    }
}

std::span<double> ParameterVector::slice(const std::string& name) {
    const auto& e = layout_->find(name);
    return std::span<double>(values_).subspan(e.offset, e.length);
}

std::span<const double> ParameterVector::slice(const std::string& name) const {
    const auto& e = layout_->find(name);
    return std::span<const double>(values_).subspan(e.offset, e.length);
}

bool ParameterVector::same_layout(const ParameterVector& other) const {
    if (layout_ == other.layout_) return true;
    if (!layout_ || !other.layout_) return false;
    return *layout_ == *other.layout_;
}

void ParameterVector::require_same_layout(const ParameterVector& other, const char* context) const {
    if (!same_layout(other)) {
        throw ShapeError(std::string(context) + ": parameter layouts differ (" + std::to_string(size()) + " vs " +
                         std::to_string(other.size()) + " values)");
    }
}

bool ParameterVector::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

ParameterVector& ParameterVector::operator+=(const ParameterVector& other) {
    require_same_layout(other, "operator+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

ParameterVector& ParameterVector::operator-=(const ParameterVector& other) {
    require_same_layout(other, "operator-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

ParameterVector& ParameterVector::operator*=(double scale) {
    for (double& x : values_) x *= scale;
    return *this;
}

ParameterVector& ParameterVector::axpy(double scale, const ParameterVector& other) {
    require_same_layout(other, "axpy");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
    return *this;
}

bool ParameterVector::operator==(const ParameterVector& other) const {
    return same_layout(other) && values_ == other.values_;
}

double dot(const ParameterVector& a, const ParameterVector& b) {
    a.require_same_layout(b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const ParameterVector& a) { return std::sqrt(dot(a, a)); }

void LabeledBatch::push_back(std::span<const double> x, double label, std::size_t row) {
    if (example_size == 0 && labels.empty()) example_size = x.size();
    if (x.size() != example_size) {
        throw ShapeError("batch example has " + std::to_string(x.size()) + " values, expected " +
                         std::to_string(example_size));
    }
    inputs.insert(inputs.end(), x.begin(), x.end());
    labels.push_back(label);
    rows.push_back(row);
}

void LabeledBatch::push_back(std::span<const float> x, double label, std::size_t row) {
    std::vector<double> tmp(x.begin(), x.end());
    push_back(std::span<const double>(tmp), label, row);
}

std::size_t LabeledBatch::positives() const {
    return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](double y) { return y > 0.5; }));
}

}  // namespace taskmaml
