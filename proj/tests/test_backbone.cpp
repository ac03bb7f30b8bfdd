#include <cmath>
#include <random>

#include "doctest.h"
#include "taskmaml/backbone.hpp"
#include "taskmaml/errors.hpp"
#include "test_support.hpp"

using namespace taskmaml;
using namespace taskmaml::testing;

namespace {

BackboneConfig fc_only(std::size_t d) {
    BackboneConfig cfg;
    cfg.input = InputShape::vector(d);
    cfg.conv_channels.clear();
    cfg.precision = Precision::f64;
    return cfg;
}

// Straightforward loop-based forward pass over the h x w x c payload, written
// without reference to the library kernels.
std::vector<double> naive_forward(const BackboneConfig& cfg, const ParameterVector& p, const LabeledBatch& batch) {
    const std::size_t n = batch.size();
    // act[e][y][x][c]
    std::size_t h = cfg.input.height, w = cfg.input.width, c = cfg.input.channels;
    std::vector<std::vector<double>> act(n);
    for (std::size_t e = 0; e < n; ++e) {
        auto ex = batch.example(e);
        act[e].assign(ex.begin(), ex.end());
    }
    const int k = static_cast<int>(cfg.kernel_size);
    for (std::size_t b = 0; b < cfg.conv_channels.size(); ++b) {
        const std::size_t co_n = cfg.conv_channels[b];
        const std::string pre = "block" + std::to_string(b) + ".";
        auto wt = p.slice(pre + "conv.weight");
        std::vector<std::vector<double>> z(n, std::vector<double>(h * w * co_n, 0.0));
        for (std::size_t e = 0; e < n; ++e)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    for (std::size_t co = 0; co < co_n; ++co) {
                        double s = cfg.use_batchnorm ? 0.0 : p.slice(pre + "conv.bias")[co];
                        for (std::size_t ci = 0; ci < c; ++ci)
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx) {
                                    const int yy = static_cast<int>(y) + ky - k / 2;
                                    const int xx = static_cast<int>(x) + kx - k / 2;
                                    if (yy < 0 || xx < 0 || yy >= static_cast<int>(h) || xx >= static_cast<int>(w))
                                        continue;
                                    s += wt[((co * c + ci) * k + ky) * k + kx] *
                                         act[e][(yy * w + xx) * c + ci];
                                }
                        z[e][(y * w + x) * co_n + co] = s;
                    }
        if (cfg.use_batchnorm) {
            auto gamma = p.slice(pre + "bn.scale");
            auto beta = p.slice(pre + "bn.shift");
            for (std::size_t co = 0; co < co_n; ++co) {
                double mean = 0, var = 0;
                const double m = static_cast<double>(n * h * w);
                for (auto& ze : z)
                    for (std::size_t i = 0; i < h * w; ++i) mean += ze[i * co_n + co];
                mean /= m;
                for (auto& ze : z)
                    for (std::size_t i = 0; i < h * w; ++i) var += std::pow(ze[i * co_n + co] - mean, 2);
                var /= m;
                for (auto& ze : z)
                    for (std::size_t i = 0; i < h * w; ++i) {
                        double& v = ze[i * co_n + co];
                        v = gamma[co] * (v - mean) / std::sqrt(var + kBatchNormEps) + beta[co];
                    }
            }
        }
        const std::size_t ps = cfg.pool_size, oh = h / ps, ow = w / ps;
        for (std::size_t e = 0; e < n; ++e) {
            std::vector<double> pooled(oh * ow * co_n, -1e300);
            for (std::size_t y = 0; y < oh * ps; ++y)
                for (std::size_t x = 0; x < ow * ps; ++x)
                    for (std::size_t co = 0; co < co_n; ++co) {
                        const double v = std::max(0.0, z[e][(y * w + x) * co_n + co]);
                        double& dst = pooled[((y / ps) * ow + x / ps) * co_n + co];
                        dst = std::max(dst, v);
                    }
            act[e] = std::move(pooled);
        }
        h = oh;
        w = ow;
        c = co_n;
    }
    // the library flattens channel-major (c, y, x)
    auto fw = p.slice("fc.weight");
    const double fb = p.slice("fc.bias")[0];
    std::vector<double> out(n);
    for (std::size_t e = 0; e < n; ++e) {
        double s = fb;
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < h * w; ++i) s += fw[ch * h * w + i] * act[e][i * c + ch];
        out[e] = 1.0 / (1.0 + std::exp(-s));
    }
    return out;
}

}  // namespace

TEST_CASE("init_params: fc-only vector config has d weights plus one zero bias") {
    Backbone net(fc_only(3));
    auto p = net.init_params(7);
    CHECK(p.size() == 4);
    CHECK(p.slice("fc.bias")[0] == 0.0);
    CHECK(p.all_finite());
    CHECK(net.init_params(7) == p);
    CHECK_FALSE(net.init_params(8) == p);
}

TEST_CASE("init_params: default conv stack parameter count matches a hand count") {
    BackboneConfig cfg;  // 32x32x1, [64,48,32,16], k=5, batchnorm
    Backbone net(cfg);
    // conv weights: 25*cin*cout, batchnorm: 2*cout; spatial 32->16->8->4->2
    const std::size_t hand = (25 * 1 * 64 + 2 * 64) + (25 * 64 * 48 + 2 * 48) + (25 * 48 * 32 + 2 * 32) +
                             (25 * 32 * 16 + 2 * 16) + (16 * 2 * 2 + 1);
    CHECK(hand == 129985);
    CHECK(net.parameter_count() == hand);
    std::size_t sum = 0;
    for (const auto& e : net.layout()->entries()) sum += e.length;
    CHECK(sum == hand);

    auto p = net.init_params(1);
    for (const auto& e : net.layout()->entries()) {
        auto s = p.slice(e.name);
        if (e.name.find("bn.scale") != std::string::npos) {
            for (double v : s) CHECK(v == 1.0);
        } else if (e.name.find("bn.shift") != std::string::npos || e.name.find("bias") != std::string::npos) {
            for (double v : s) CHECK(v == 0.0);
        }
    }
    // layout identical for two backbones from the same config
    CHECK(*Backbone(cfg).layout() == *net.layout());
}

TEST_CASE("config validation names the collapsing pooling stage") {
    BackboneConfig cfg;
    cfg.input = InputShape::image(8, 8, 1);
    cfg.conv_channels = {4, 4, 4, 4};
    try {
        Backbone net(cfg);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("stage 3") != std::string::npos);
    }
    cfg.conv_channels.clear();
    CHECK_THROWS_AS(Backbone{cfg}, ConfigError);
}

TEST_CASE("forward: zero parameters give 0.5 everywhere") {
    std::mt19937_64 rng(3);
    for (auto cfg : {fc_only(3), BackboneConfig{}}) {
        cfg.input = cfg.input.kind == InputKind::image ? InputShape::image(8, 8, 1) : cfg.input;
        cfg.conv_channels = cfg.input.kind == InputKind::image ? std::vector<std::size_t>{3, 2}
                                                               : std::vector<std::size_t>{};
        Backbone net(cfg);
        ParameterVector zero(net.layout());
        auto batch = random_batch(cfg.input, 5, rng);
        for (double p : net.forward(zero, batch)) CHECK(p == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("forward: single fc layer is sigmoid(w.x + b)") {
    Backbone net(fc_only(3));
    ParameterVector p(net.layout(), {0.3, -1.2, 0.7, 0.1});
    LabeledBatch batch;
    batch.push_back(std::vector<double>{1.0, 2.0, -0.5}, 1.0);
    const double z = 0.3 * 1.0 - 1.2 * 2.0 + 0.7 * -0.5 + 0.1;
    CHECK(net.forward(p, batch)[0] == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-14));
}

TEST_CASE("forward: conv stack matches a naive reference implementation") {
    std::mt19937_64 rng(11);
    for (bool bn : {true, false}) {
        BackboneConfig cfg;
        cfg.precision = Precision::f64;
        cfg.input = InputShape::image(32, 32, 1);
        cfg.conv_channels = {4, 3, 3, 2};
        cfg.use_batchnorm = bn;
        Backbone net(cfg);
        auto p = random_params(net, rng, 0.2);
        auto batch = random_batch(cfg.input, 3, rng);
        auto got = net.forward(p, batch);
        auto want = naive_forward(cfg, p, batch);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
    }
    // multichannel input checks the h x w x c payload order
    BackboneConfig cfg;
    cfg.precision = Precision::f64;
    cfg.input = InputShape::image(6, 6, 3);
    cfg.conv_channels = {2};
    cfg.kernel_size = 3;
    Backbone net(cfg);
    auto p = random_params(net, rng);
    auto batch = random_batch(cfg.input, 4, rng);
    auto got = net.forward(p, batch);
    auto want = naive_forward(cfg, p, batch);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("forward: outputs stay strictly inside (0,1) when saturated") {
    Backbone net(fc_only(1));
    ParameterVector p(net.layout(), {1e6, 0.0});
    LabeledBatch batch;
    batch.push_back(std::vector<double>{1.0}, 1.0);
    batch.push_back(std::vector<double>{-1.0}, 0.0);
    auto probs = net.forward(p, batch);
    CHECK(probs[0] < 1.0);
    CHECK(probs[1] > 0.0);
}

TEST_CASE("forward: shape mismatch names expected and received shapes") {
    Backbone net(fc_only(3));
    auto p = net.init_params(0);
    LabeledBatch batch;
    batch.push_back(std::vector<double>{1.0, 2.0}, 1.0);
    try {
        net.forward(p, batch);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("vector[3]") != std::string::npos);
        CHECK(msg.find("received 2") != std::string::npos);
    }
    Backbone other(fc_only(2));
    CHECK_THROWS_AS(other.forward(p, batch), ShapeError);
}

TEST_CASE("bce_loss closed forms and clamp") {
    std::vector<double> y1{1.0};
    CHECK(bce_loss(std::vector<double>{0.5}, y1) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(bce_loss(std::vector<double>{0.8}, y1) == doctest::Approx(0.223144).epsilon(1e-6));
    const double clamped = bce_loss(std::vector<double>{1.0 - 1e-12}, y1);
    CHECK(std::isfinite(clamped));
    CHECK(clamped == doctest::Approx(-std::log(1.0 - 1e-7)).epsilon(1e-12));
    CHECK(std::isfinite(bce_loss(std::vector<double>{0.0}, y1)));
    CHECK_THROWS_AS(bce_loss(std::vector<double>{0.5, 0.5}, y1), ShapeError);
}

TEST_CASE("bce_loss is non-negative and monotone in p") {
    double prev1 = 1e300, prev0 = -1.0;
    for (int i = 1; i < 1000; ++i) {
        const double p = i / 1000.0;
        const double l1 = bce_loss(std::vector<double>{p}, std::vector<double>{1.0});
        const double l0 = bce_loss(std::vector<double>{p}, std::vector<double>{0.0});
        CHECK(l1 >= 0.0);
        CHECK(l0 >= 0.0);
        CHECK(l1 < prev1);
        CHECK(l0 > prev0);
        prev1 = l1;
        prev0 = l0;
    }
}

TEST_CASE("network loss equals bce_loss of forward") {
    std::mt19937_64 rng(5);
    BackboneConfig cfg = fc_only(4);
    cfg.conv_channels = {3};
    Backbone net(cfg);
    auto p = random_params(net, rng);
    auto batch = random_batch(cfg.input, 6, rng);
    CHECK(net.loss(p, batch) == doctest::Approx(bce_loss(net.forward(p, batch), batch.labels)).epsilon(1e-12));
}

TEST_CASE("loss_grad: single fc layer matches (p - y) x") {
    Backbone net(fc_only(3));
    ParameterVector p(net.layout(), {0.3, -1.2, 0.7, 0.1});
    LabeledBatch batch;
    const std::vector<double> x{1.0, 2.0, -0.5};
    batch.push_back(x, 1.0);
    const double prob = net.forward(p, batch)[0];
    auto g = net.gradient(p, batch);
    for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx((prob - 1.0) * x[i]).epsilon(1e-12));
    CHECK(g[3] == doctest::Approx(prob - 1.0).epsilon(1e-12));
}

TEST_CASE("loss_grad: saturated correct predictions give a zero gradient") {
    Backbone net(fc_only(1));
    ParameterVector p(net.layout(), {100.0, 0.0});
    LabeledBatch batch;
    batch.push_back(std::vector<double>{1.0}, 1.0);
    batch.push_back(std::vector<double>{-1.0}, 0.0);
    auto g = net.gradient(p, batch);
    CHECK(norm(g) <= 1e-7);
}

TEST_CASE("loss_grad matches central finite differences on random small networks") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        auto cfg = random_small_config(rng);
        Backbone net(cfg);
        auto p = random_params(net, rng);
        auto batch = random_batch(cfg.input, 6, rng);
        auto g = net.gradient(p, batch);
        auto fd = finite_difference_gradient([&](const ParameterVector& q) { return net.loss(q, batch); }, p, 1e-5);
        CAPTURE(trial);
        CHECK(worst_relative_error(g.values(), fd, 1e-8) <= 1e-4);
    }
}

TEST_CASE("hessian_vector_product: linearity, symmetry and finite differences") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        auto cfg = random_small_config(rng);
        Backbone net(cfg);
        auto p = random_params(net, rng);
        auto batch = random_batch(cfg.input, 6, rng);
        ParameterVector u(net.layout()), v(net.layout());
        for (auto& x : u.values()) x = dist(rng);
        for (auto& x : v.values()) x = dist(rng);
        CAPTURE(trial);

        CHECK(norm(net.hessian_vector_product(p, batch, ParameterVector(net.layout()))) == 0.0);

        auto hv = net.hessian_vector_product(p, batch, v);
        auto h3v = net.hessian_vector_product(p, batch, 3.0 * v);
        CHECK(worst_relative_error(h3v.values(), (3.0 * hv).values(), 1e-14) <= 1e-10);

        auto hu = net.hessian_vector_product(p, batch, u);
        const double a = dot(v, hu), b = dot(u, hv);
        CHECK(std::abs(a - b) <= 1e-8 * std::max({std::abs(a), std::abs(b), 1e-12}));

        const double h = 1e-4;
        auto gp = net.gradient(p + h * v, batch);
        auto gm = net.gradient(p - h * v, batch);
        auto fd = (1.0 / (2.0 * h)) * (gp - gm);
        CHECK(worst_relative_error(hv.values(), fd.values(), 1e-8) <= 1e-3);
    }
}

TEST_CASE("hessian_vector_product rejects a mismatched direction") {
    Backbone net(fc_only(3));
    Backbone other(fc_only(2));
    std::mt19937_64 rng(1);
    auto batch = random_batch(InputShape::vector(3), 2, rng);
    CHECK_THROWS_AS(net.hessian_vector_product(net.init_params(0), batch, other.init_params(0)), ShapeError);
}

TEST_CASE("float32 mode agrees with float64 mode") {
    std::mt19937_64 rng(9);
    BackboneConfig cfg = fc_only(5);
    cfg.conv_channels = {6, 4};
    Backbone net64(cfg);
    cfg.precision = Precision::f32;
    Backbone net32(cfg);
    auto p = random_params(net64, rng);
    auto batch = random_batch(cfg.input, 8, rng);
    auto g64 = net64.gradient(p, batch);
    auto g32 = net32.gradient(p, batch);
    CHECK(norm(g64 - g32) <= 1e-4 * (norm(g64) + 1e-6));
    CHECK(net32.gradient(p, batch) == g32);
}
