#pragma once

// Scalar-generic forward/backward pass of the detector network. Instantiated
// for float, double and Dual<float|double>; the Dual instantiation of the
// backward pass produces Hessian-vector products.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "taskmaml/backbone.hpp"
#include "taskmaml/dual.hpp"

namespace taskmaml::detail {

template <class S>
struct BlockCache {
    std::vector<S> input;   // block input, n x cin x h x w
    std::vector<S> xhat;    // normalized pre-activation
    std::vector<S> inv_std; // per channel
    std::vector<S> act;     // post-ReLU, n x cout x h x w
    std::vector<std::size_t> argmax;  // pool routing into act
};

template <class S>
S sigmoid(const S& z) {
    using std::exp;
    if (primal(z) >= 0) {
        const S e = exp(-z);
        return S(1) / (S(1) + e);
    }
    const S e = exp(z);
    return e / (S(1) + e);
}

/// log(1 + exp(x)) without overflow or cancellation.
template <class S>
S softplus(const S& x) {
    using std::exp;
    using std::log1p;
    const bool positive = primal(x) > 0;
    const S neg_abs = positive ? -x : x;
    return (positive ? x : S(0)) + log1p(exp(neg_abs));
}

template <class S>
void conv_forward(const Backbone::Plan& plan, const Backbone::Block& b, const S* theta, const S* in,
                  std::size_t n, S* out) {
    const auto k = static_cast<std::ptrdiff_t>(plan.kernel);
    const auto pad = (k - 1) / 2;
    const auto h = static_cast<std::ptrdiff_t>(b.height);
    const auto w = static_cast<std::ptrdiff_t>(b.width);
    const std::size_t hw = b.height * b.width;
    const S* weight = theta + b.weight;
    for (std::size_t e = 0; e < n; ++e) {
        for (std::size_t co = 0; co < b.out_channels; ++co) {
            S* o = out + (e * b.out_channels + co) * hw;
            const S init = plan.batchnorm ? S(0) : theta[b.bias + co];
            std::fill(o, o + hw, init);
            for (std::size_t ci = 0; ci < b.in_channels; ++ci) {
                const S* src = in + (e * b.in_channels + ci) * hw;
                const S* wk = weight + (co * b.in_channels + ci) * plan.kernel * plan.kernel;
                for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t dy = ky - pad;
                    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
                    const std::ptrdiff_t y1 = std::min(h, h - dy);
                    for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                        const std::ptrdiff_t dx = kx - pad;
                        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                        const std::ptrdiff_t x1 = std::min(w, w - dx);
                        const S wv = wk[ky * k + kx];
                        for (std::ptrdiff_t y = y0; y < y1; ++y) {
                            S* orow = o + y * w;
                            const S* irow = src + (y + dy) * w + dx;
                            for (std::ptrdiff_t x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                        }
                    }
                }
            }
        }
    }
}

template <class S>
void conv_backward(const Backbone::Plan& plan, const Backbone::Block& b, const S* theta, const S* in,
                   const S* dout, std::size_t n, S* grad, S* din) {
    const auto k = static_cast<std::ptrdiff_t>(plan.kernel);
    const auto pad = (k - 1) / 2;
    const auto h = static_cast<std::ptrdiff_t>(b.height);
    const auto w = static_cast<std::ptrdiff_t>(b.width);
    const std::size_t hw = b.height * b.width;
    const S* weight = theta + b.weight;
    S* dweight = grad + b.weight;
    for (std::size_t e = 0; e < n; ++e) {
        for (std::size_t co = 0; co < b.out_channels; ++co) {
            const S* go = dout + (e * b.out_channels + co) * hw;
            if (!plan.batchnorm) {
                S acc(0);
                for (std::size_t i = 0; i < hw; ++i) acc += go[i];
                grad[b.bias + co] += acc;
            }
            for (std::size_t ci = 0; ci < b.in_channels; ++ci) {
                const S* src = in + (e * b.in_channels + ci) * hw;
                S* gsrc = din ? din + (e * b.in_channels + ci) * hw : nullptr;
                const std::size_t wbase = (co * b.in_channels + ci) * plan.kernel * plan.kernel;
                for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t dy = ky - pad;
                    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
                    const std::ptrdiff_t y1 = std::min(h, h - dy);
                    for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                        const std::ptrdiff_t dx = kx - pad;
                        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                        const std::ptrdiff_t x1 = std::min(w, w - dx);
                        const std::size_t widx = wbase + static_cast<std::size_t>(ky * k + kx);
                        const S wv = weight[widx];
                        S acc(0);
                        for (std::ptrdiff_t y = y0; y < y1; ++y) {
                            const S* grow = go + y * w;
                            const S* irow = src + (y + dy) * w + dx;
                            for (std::ptrdiff_t x = x0; x < x1; ++x) acc += grow[x] * irow[x];
                            if (gsrc) {
                                S* drow = gsrc + (y + dy) * w + dx;
                                for (std::ptrdiff_t x = x0; x < x1; ++x) drow[x] += wv * grow[x];
                            }
                        }
                        dweight[widx] += acc;
                    }
                }
            }
        }
    }
}

/// Mean binary cross-entropy of the network; accumulates the gradient into
/// `grad` when non-null and writes probabilities (primal) into `probs`.
template <class S>
S evaluate_network(const Backbone::Plan& plan, const S* theta, const LabeledBatch& batch, S* grad,
                   double* probs) {
    using std::log;
    using std::sqrt;
    const std::size_t n = batch.size();

    std::vector<BlockCache<S>> caches(plan.blocks.size());
    std::vector<S> current(n * plan.input_size);
    if (plan.conv && !plan.blocks.empty()) {
        // payload is h x w x c; the network works channel-major
        const auto& b0 = plan.blocks.front();
        const std::size_t hw = b0.height * b0.width;
        for (std::size_t e = 0; e < n; ++e) {
            const double* src = batch.inputs.data() + e * plan.input_size;
            S* dst = current.data() + e * plan.input_size;
            for (std::size_t p = 0; p < hw; ++p) {
                for (std::size_t c = 0; c < b0.in_channels; ++c) dst[c * hw + p] = S(src[p * b0.in_channels + c]);
            }
        }
    } else {
        for (std::size_t i = 0; i < current.size(); ++i) current[i] = S(batch.inputs[i]);
    }

    for (std::size_t bi = 0; bi < plan.blocks.size(); ++bi) {
        const auto& b = plan.blocks[bi];
        auto& cache = caches[bi];
        const std::size_t hw = b.height * b.width;
        const std::size_t m = n * hw;
        cache.input = std::move(current);
        std::vector<S> z(n * b.out_channels * hw);
        conv_forward(plan, b, theta, cache.input.data(), n, z.data());

        if (plan.batchnorm) {
            cache.xhat.resize(z.size());
            cache.inv_std.resize(b.out_channels);
            for (std::size_t c = 0; c < b.out_channels; ++c) {
                S mean(0);
                for (std::size_t e = 0; e < n; ++e) {
                    const S* zc = z.data() + (e * b.out_channels + c) * hw;
                    for (std::size_t i = 0; i < hw; ++i) mean += zc[i];
                }
                mean = mean / S(static_cast<double>(m));
                S var(0);
                for (std::size_t e = 0; e < n; ++e) {
                    const S* zc = z.data() + (e * b.out_channels + c) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        const S d = zc[i] - mean;
                        var += d * d;
                    }
                }
                var = var / S(static_cast<double>(m));
                const S inv = S(1) / sqrt(var + S(kBatchNormEps));
                cache.inv_std[c] = inv;
                const S gamma = theta[b.scale + c];
                const S beta = theta[b.shift + c];
                for (std::size_t e = 0; e < n; ++e) {
                    const std::size_t base = (e * b.out_channels + c) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        const S xh = (z[base + i] - mean) * inv;
                        cache.xhat[base + i] = xh;
                        z[base + i] = gamma * xh + beta;
                    }
                }
            }
        }

        for (auto& x : z) {
            if (!(primal(x) > 0)) x = S(0);
        }
        cache.act = std::move(z);

        if (plan.pool > 1) {
            const std::size_t p = plan.pool;
            const std::size_t ohw = b.out_height * b.out_width;
            current.assign(n * b.out_channels * ohw, S(0));
            cache.argmax.resize(current.size());
            for (std::size_t e = 0; e < n; ++e) {
                for (std::size_t c = 0; c < b.out_channels; ++c) {
                    const std::size_t ibase = (e * b.out_channels + c) * hw;
                    const std::size_t obase = (e * b.out_channels + c) * ohw;
                    for (std::size_t oy = 0; oy < b.out_height; ++oy) {
                        for (std::size_t ox = 0; ox < b.out_width; ++ox) {
                            std::size_t best = ibase + (oy * p) * b.width + ox * p;
                            for (std::size_t dy = 0; dy < p; ++dy) {
                                for (std::size_t dx = 0; dx < p; ++dx) {
                                    const std::size_t idx = ibase + (oy * p + dy) * b.width + ox * p + dx;
                                    if (primal(cache.act[idx]) > primal(cache.act[best])) best = idx;
                                }
                            }
                            current[obase + oy * b.out_width + ox] = cache.act[best];
                            cache.argmax[obase + oy * b.out_width + ox] = best;
                        }
                    }
                }
            }
        } else {
            current = cache.act;
        }
    }

    // head
    const std::size_t f = plan.fc_in;
    const S* wfc = theta + plan.fc_weight;
    const S bfc = theta[plan.fc_bias];
    // -log(clamp(sigmoid(z), eps, 1 - eps)) evaluated on the clamped logit
    const double zlo = std::log(kProbClamp / (1.0 - kProbClamp));
    const double zhi = -zlo;
    const S inv_n = S(1.0 / static_cast<double>(n));
    S total(0);
    std::vector<S> dlogit(n, S(0));
    for (std::size_t e = 0; e < n; ++e) {
        S logit = bfc;
        const S* row = current.data() + e * f;
        for (std::size_t i = 0; i < f; ++i) logit += wfc[i] * row[i];
        const double zv = static_cast<double>(primal(logit));
        const double y = batch.labels[e];
        if (probs) {
            double out = static_cast<double>(primal(sigmoid(logit)));
            out = std::max(out, std::numeric_limits<double>::min());
            out = std::min(out, std::nextafter(1.0, 0.0));
            probs[e] = out;
        }
        const bool clamped = zv < zlo || zv > zhi;
        const S zc = zv < zlo ? S(zlo) : (zv > zhi ? S(zhi) : logit);
        total += y > 0.5 ? softplus(-zc) : softplus(zc);
        if (!clamped) dlogit[e] = (sigmoid(logit) - S(y)) * inv_n;
    }
    const S loss = total * inv_n;
    if (!grad) return loss;

    std::vector<S> delta(n * f, S(0));
    S* gwfc = grad + plan.fc_weight;
    for (std::size_t e = 0; e < n; ++e) {
        const S* row = current.data() + e * f;
        S* drow = delta.data() + e * f;
        const S g = dlogit[e];
        grad[plan.fc_bias] += g;
        for (std::size_t i = 0; i < f; ++i) {
            gwfc[i] += g * row[i];
            drow[i] = g * wfc[i];
        }
    }

    for (std::size_t bi = plan.blocks.size(); bi-- > 0;) {
        const auto& b = plan.blocks[bi];
        auto& cache = caches[bi];
        const std::size_t hw = b.height * b.width;
        const std::size_t m = n * hw;

        std::vector<S> dact;
        if (plan.pool > 1) {
            dact.assign(cache.act.size(), S(0));
            for (std::size_t i = 0; i < delta.size(); ++i) dact[cache.argmax[i]] += delta[i];
        } else {
            dact = std::move(delta);
        }
        for (std::size_t i = 0; i < dact.size(); ++i) {
            if (!(primal(cache.act[i]) > 0)) dact[i] = S(0);
        }

        if (plan.batchnorm) {
            for (std::size_t c = 0; c < b.out_channels; ++c) {
                const S gamma = theta[b.scale + c];
                S dgamma(0), dbeta(0), sum_dx(0), sum_dxx(0);
                for (std::size_t e = 0; e < n; ++e) {
                    const std::size_t base = (e * b.out_channels + c) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        const S du = dact[base + i];
                        const S xh = cache.xhat[base + i];
                        dgamma += du * xh;
                        dbeta += du;
                    }
                }
                sum_dx = dbeta * gamma;
                sum_dxx = dgamma * gamma;
                grad[b.scale + c] += dgamma;
                grad[b.shift + c] += dbeta;
                const S mean_dx = sum_dx / S(static_cast<double>(m));
                const S mean_dxx = sum_dxx / S(static_cast<double>(m));
                const S inv = cache.inv_std[c];
                for (std::size_t e = 0; e < n; ++e) {
                    const std::size_t base = (e * b.out_channels + c) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        const S dxh = dact[base + i] * gamma;
                        dact[base + i] = inv * (dxh - mean_dx - cache.xhat[base + i] * mean_dxx);
                    }
                }
            }
        }

        std::vector<S> dinput;
        if (bi > 0) dinput.assign(cache.input.size(), S(0));
        conv_backward(plan, b, theta, cache.input.data(), dact.data(), n, grad, bi > 0 ? dinput.data() : nullptr);
        delta = std::move(dinput);
    }
    return loss;
}

}  // namespace taskmaml::detail
