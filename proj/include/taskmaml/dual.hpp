#pragma once

#include <cmath>
#include <type_traits>

namespace taskmaml {

/// Forward-mode dual number: value plus one directional derivative.
///
/// Running the reverse-mode gradient code over Dual<T> with parameter tangents
/// set to v yields the exact Hessian-vector product in the tangent parts.
/// Comparisons look at the value only, so piecewise-linear branches (ReLU,
/// max-pool, clamping) follow the primal computation.
template <class T>
struct Dual {
    T v{};
    T d{};

    constexpr Dual() = default;
    constexpr Dual(T value, T tangent) : v(value), d(tangent) {}
    template <class U>
        requires std::is_arithmetic_v<U>
    constexpr Dual(U value) : v(static_cast<T>(value)), d(0) {}

    constexpr Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
    constexpr Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
    constexpr Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
    constexpr Dual& operator/=(const Dual& o) { *this = *this / o; return *this; }

    friend constexpr Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
    friend constexpr Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
    friend constexpr Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
    friend constexpr Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
    friend constexpr Dual operator/(const Dual& a, const Dual& b) {
        const T q = a.v / b.v;
        return {q, (a.d - q * b.d) / b.v};
    }

    friend constexpr bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
    friend constexpr bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
    friend constexpr bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
    friend constexpr bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }

    friend Dual sqrt(const Dual& a) {
        const T s = std::sqrt(a.v);
        return {s, a.d / (T(2) * s)};
    }
    friend Dual exp(const Dual& a) {
        const T e = std::exp(a.v);
        return {e, a.d * e};
    }
    friend Dual log(const Dual& a) { return {std::log(a.v), a.d / a.v}; }
    friend Dual log1p(const Dual& a) { return {std::log1p(a.v), a.d / (T(1) + a.v)}; }
};

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};

template <class S>
constexpr auto primal(const S& x) {
    if constexpr (is_dual<S>::value) {
        return x.v;
    } else {
        return x;
    }
}

}  // namespace taskmaml
