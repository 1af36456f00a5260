#include "doctest.h"
#include "support/gradcheck.hpp"

#include "selfaug/errors.hpp"
#include "selfaug/objective/contrastive.hpp"
#include "selfaug/objective/dual_stream.hpp"
#include "selfaug/objective/projection.hpp"
#include "selfaug/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace selfaug;
using selfaug::testing::grad_check;
using selfaug::testing::grad_check_params;
using selfaug::testing::random_tensor;

namespace {

Tensor gaussian(const Shape& shape, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor t(shape);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

ContrastiveResult contrast(Graph& g, const Tensor& a, const Tensor& b, double lambda = kDefaultRedundancyWeight) {
    return contrastive_loss(g.constant(a), g.constant(b), lambda);
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.vocab_size = 16;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_layers = 2;
    c.d_ff = 12;
    c.max_seq_len = 5;
    c.dropout_rate = 0.0;
    return c;
}

Batch tiny_batch() {
    const std::vector<std::vector<std::int32_t>> rows = {{2, 5, 7, 9}, {2, 11, 3, 0}, {2, 4, 0, 0}};
    Batch b;
    b.batch = rows.size();
    b.seq = 4;
    b.mask = Tensor({3, 4});
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t s = 0; s < 4; ++s) {
            b.token_ids.push_back(rows[r][s]);
            b.mask[r * 4 + s] = rows[r][s] == 0 ? 0.0 : 1.0;
        }
        b.rows.push_back(r);
    }
    b.class_targets = {0, 1, 1};
    return b;
}

EncoderModel scrambled_model(std::uint64_t seed) {
    auto m = EncoderModel::init(tiny_config(), seed);
    std::mt19937_64 rng(seed + 100);
    for (auto& p : m.params()) p.value = random_tensor(p.value.shape(), rng, -0.5, 0.5);
    return m;
}

DualStreamConfig dual_cfg(std::size_t li, std::size_t lj, AugmentGradient ag) {
    DualStreamConfig c;
    c.tap_layer = li;
    c.inject_layer = lj;
    c.augment_gradient = ag;
    c.projection_dims = {6, 4};
    return c;
}

double ce_c_value(EncoderModel& f, EncoderModel& c, const Batch& b, const DualStreamConfig& cfg) {
    Graph g;
    const auto out = dual_forward(g, f, c, b, cfg, Mode::eval);
    return classification_loss(out.c.logits, b, TaskKind::binary).value().item();
}

} // namespace

TEST_CASE("contrastive loss on a hand-normalized 2x2 pair") {
    Graph g;
    const Tensor z = Tensor::matrix({{1, -1}, {-1, 1}});
    const auto r = contrast(g, z, z, 0.005);
    const Tensor want = Tensor::matrix({{1, -1}, {-1, 1}});
    for (std::size_t k = 0; k < 4; ++k) CHECK(r.cross_correlation[k] == doctest::Approx(want[k]).epsilon(1e-11));
    CHECK(r.invariance == doctest::Approx(0.0).epsilon(1e-11));
    CHECK(r.redundancy == doctest::Approx(2.0).epsilon(1e-11));
    CHECK(r.loss.value().item() == doctest::Approx(0.01).epsilon(1e-10));
}

TEST_CASE("identical views have zero invariance term") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        Graph g;
        const Tensor z = random_tensor({2 + rng() % 30, 1 + rng() % 10}, rng);
        const auto r = contrast(g, z, z);
        CHECK(r.invariance < 1e-12); // eps in the normalization shifts M_ii by ~eps/var
    }
}

TEST_CASE("contrastive loss is symmetric under a shared column permutation") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t b = 3 + rng() % 10, d = 2 + rng() % 6;
        const Tensor za = random_tensor({b, d}, rng), zb = random_tensor({b, d}, rng);
        std::vector<std::size_t> perm(d);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Tensor pa({b, d}), pb({b, d});
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                pa[i * d + j] = za[i * d + perm[j]];
                pb[i * d + j] = zb[i * d + perm[j]];
            }
        }
        Graph g;
        const double base = contrast(g, za, zb).loss.value().item();
        const double moved = contrast(g, pa, pb).loss.value().item();
        CHECK(moved == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("cross-correlation entries stay within [-1, 1]") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Graph g;
        const std::size_t b = 2 + rng() % 20, d = 1 + rng() % 8;
        Tensor za = random_tensor({b, d}, rng, -50, 50);
        const Tensor zb = random_tensor({b, d}, rng, -1e-3, 1e-3);
        if (trial % 5 == 0) za = zb; // perfectly correlated
        const auto r = contrast(g, za, zb);
        for (double v : r.cross_correlation.values()) {
            CHECK(v >= -1.0 - 1e-6);
            CHECK(v <= 1.0 + 1e-6);
        }
    }
}

TEST_CASE("independent views give a loss near the feature count") {
    std::mt19937_64 rng(4);
    const std::size_t p = 32, batch = 4096;
    Graph g;
    const auto r = contrast(g, gaussian({batch, p}, rng), gaussian({batch, p}, rng));
    CHECK(std::abs(r.loss.value().item() - double(p)) / double(p) < 0.05);
    double mean_abs = 0.0;
    for (double v : r.cross_correlation.values()) mean_abs += std::abs(v);
    CHECK(mean_abs / double(p * p) < 0.03);
}

TEST_CASE("contrastive loss argument checks") {
    Graph g;
    std::mt19937_64 rng(5);
    CHECK_THROWS_AS(contrast(g, random_tensor({4, 3}, rng), random_tensor({4, 2}, rng)), DimensionError);
    CHECK_THROWS_AS(contrast(g, random_tensor({1, 3}, rng), random_tensor({1, 3}, rng)), ConfigError);
    CHECK_THROWS_AS(contrast(g, random_tensor({4, 3}, rng), random_tensor({4, 3}, rng), -1.0), ConfigError);
    // Constant column: eps keeps it finite.
    Tensor flat({4, 2}, 3.0);
    flat[1] = 1.0;
    flat[3] = -1.0;
    const auto r = contrast(g, flat, flat);
    CHECK(std::isfinite(r.loss.value().item()));
}

TEST_CASE("contrastive loss gradient agrees with finite differences") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t b = 3 + rng() % 5, d = 2 + rng() % 4;
        const auto r = grad_check(
            [](Graph&, const std::vector<Var>& v) { return contrastive_loss(v[0], v[1], 0.3).loss; },
            {random_tensor({b, d}, rng), random_tensor({b, d}, rng)}, rng);
        CHECK(r.rel_error < 1e-6);
    }
}

TEST_CASE("projection output width follows the configured dims") {
    auto net = ProjectionNetwork::init(8, {1024, 1024, 300}, 1);
    Graph g;
    std::mt19937_64 rng(7);
    auto x = g.constant(random_tensor({4, 8}, rng));
    CHECK(net.project(g, x, Mode::train).shape() == Shape{4, 300});
    CHECK(net.output_dim() == 300);
}

TEST_CASE("one projection instance maps identical inputs identically") {
    auto net = ProjectionNetwork::init(5, {6, 3}, 2);
    std::mt19937_64 rng(8);
    const Tensor x = random_tensor({4, 5}, rng);
    Graph g;
    const Tensor a = net.project(g, g.constant(x), Mode::eval).value();
    const Tensor b = net.project(g, g.constant(x), Mode::eval).value();
    CHECK(a == b);
    // Train mode normalizes with batch statistics, so the output does not depend on running estimates.
    const Tensor t1 = net.project(g, g.constant(x), Mode::train).value();
    const Tensor t2 = net.project(g, g.constant(x), Mode::train).value();
    CHECK(t1 == t2);
}

TEST_CASE("projection running statistics and eval normalization") {
    auto net = ProjectionNetwork::init(2, {2}, 3);
    const Tensor x = Tensor::matrix({{1, 2}, {3, 6}});
    Graph g;
    const Tensor pre = add_bcast(matmul(g.constant(x), g.constant(net.params()[0].value)),
                                 g.constant(net.params()[1].value))
                           .value();
    net.project(g, g.constant(x), Mode::train);
    const auto& stats = net.stats();
    for (std::size_t j = 0; j < 2; ++j) {
        const double mu = (pre.at(0, j) + pre.at(1, j)) / 2;
        const double var = ((pre.at(0, j) - mu) * (pre.at(0, j) - mu) + (pre.at(1, j) - mu) * (pre.at(1, j) - mu)) / 2;
        CHECK(stats[0].value[j] == doctest::Approx(0.1 * mu).epsilon(1e-12));
        CHECK(stats[1].value[j] == doctest::Approx(0.9 + 0.1 * var).epsilon(1e-12));
    }
    const Tensor out = net.project(g, g.constant(x), Mode::eval).value();
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            const double want = (pre.at(i, j) - stats[0].value[j]) / std::sqrt(stats[1].value[j] + 1e-5);
            CHECK(out.at(i, j) == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("projection batch and width checks") {
    auto net = ProjectionNetwork::init(3, {4}, 4);
    Graph g;
    CHECK_THROWS_AS(net.project(g, g.constant(Tensor({1, 3})), Mode::train), ConfigError);
    CHECK_NOTHROW(net.project(g, g.constant(Tensor({1, 3})), Mode::eval));
    CHECK_THROWS_AS(net.project(g, g.constant(Tensor({2, 5})), Mode::train), DimensionError);
    CHECK_THROWS_AS(ProjectionNetwork::init(3, {}, 1), ConfigError);
    auto copy = ProjectionNetwork(3, {4}, net.params(), net.stats());
    CHECK(copy.params().same_values(net.params()));
}

TEST_CASE("projection stack gradient agrees with finite differences") {
    auto net = ProjectionNetwork::init(5, {7, 6, 4}, 9);
    std::mt19937_64 rng(10);
    const Tensor x = random_tensor({6, 5}, rng);
    const auto rp = grad_check_params(
        [&](Graph& g) { return net.project(g, g.constant(x), Mode::train); }, net.params(), rng);
    CHECK(rp.rel_error < 1e-4);
    const auto rx = grad_check([&](Graph&, const std::vector<Var>& v) { return net.project(v[0].graph(), v[0], Mode::train); },
                               {x}, rng);
    CHECK(rx.rel_error < 1e-4);
}

TEST_CASE("composite loss substitution and boundaries") {
    const auto s = composite_loss(1.0, 0.6, 2.0, 0.4);
    CHECK(s.total == doctest::Approx(1.28).epsilon(1e-15));
    CHECK(composite_loss(1.0, 0.6, 123.0, 0.0).total == (1.0 + 0.6) / 2.0);
    CHECK(composite_loss(1.0, 0.6, 2.5, 1.0).total == 2.5);
    CHECK_THROWS_AS(composite_loss(1, 1, 1, -0.01), ConfigError);
    CHECK_THROWS_AS(composite_loss(1, 1, 1, 1.01), ConfigError);
    CHECK_THROWS_AS(composite_loss(1, 1, 1, std::nan("")), ConfigError);
}

TEST_CASE("composite loss holds to machine precision on random triples") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 5.0), a(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const double f = u(rng), c = u(rng), l = u(rng), alpha = a(rng);
        const auto s = composite_loss(f, c, l, alpha);
        const double want = (1 - alpha) / 2 * (f + c) + alpha * l;
        CHECK(std::abs(s.total - want) <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, want));
        Graph g;
        const double graph_total =
            composite_total(g.constant(Tensor::scalar(f)), g.constant(Tensor::scalar(c)),
                            g.constant(Tensor::scalar(l)), alpha)
                .value()
                .item();
        CHECK(graph_total == s.total);
    }
}

TEST_CASE("copied streams with zero injection agree") {
    auto f = scrambled_model(1);
    EncoderModel c = f;
    const Batch b = tiny_batch();
    Graph g;
    DualForwardOptions opts;
    opts.zero_injection = true;
    const auto out = dual_forward(g, f, c, b, dual_cfg(1, 2, AugmentGradient::stop), Mode::eval, opts);
    const Tensor lf = out.f.logits.value(), lc = out.c.logits.value();
    CHECK(lf == lc);
    const double ce_f = classification_loss(out.f.logits, b, TaskKind::binary).value().item();
    const double ce_c = classification_loss(out.c.logits, b, TaskKind::binary).value().item();
    CHECK(ce_f == ce_c);
}

TEST_CASE("tying at layer zero doubles the embedding output") {
    auto f = scrambled_model(2);
    const Batch b = tiny_batch();
    Graph g;
    const auto out = dual_forward(g, f, f, b, dual_cfg(0, 0, AugmentGradient::stop), Mode::eval);
    const Tensor hf = out.f.hidden[0].value(), hc = out.c.hidden[0].value();
    for (std::size_t k = 0; k < hf.size(); ++k) CHECK(hc[k] == 2.0 * hf[k]);
    const Tensor pj = out.pooled_j.value();
    const Tensor pi = out.pooled_i.value();
    for (std::size_t k = 0; k < pi.size(); ++k) CHECK(pj[k] == 2.0 * pi[k]);
}

TEST_CASE("dual forward checks") {
    auto f = scrambled_model(3);
    ModelConfig other = tiny_config();
    other.d_ff = 10;
    auto c = EncoderModel::init(other, 3);
    Graph g;
    CHECK_THROWS_AS(dual_forward(g, f, c, tiny_batch(), dual_cfg(1, 1, AugmentGradient::stop), Mode::eval),
                    ConfigError);
    EncoderModel c2 = f;
    CHECK_THROWS_AS(dual_forward(g, f, c2, tiny_batch(), dual_cfg(3, 1, AugmentGradient::stop), Mode::eval),
                    ConfigError);
}

TEST_CASE("stop mode severs the classification gradient of C from F") {
    auto f = scrambled_model(4);
    auto c = scrambled_model(5);
    const Batch b = tiny_batch();
    const auto cfg = dual_cfg(1, 1, AugmentGradient::stop);
    f.params().zero_grad();
    c.params().zero_grad();
    {
        Graph g;
        const auto out = dual_forward(g, f, c, b, cfg, Mode::eval);
        g.backward(classification_loss(out.c.logits, b, TaskKind::binary));
    }
    for (const auto& p : f.params()) {
        for (double v : p.grad.values()) CHECK(v == 0.0);
    }
    double c_norm = 0.0;
    for (const auto& p : c.params()) {
        for (double v : p.grad.values()) c_norm += v * v;
    }
    CHECK(c_norm > 0.0);

    // Probe: with the injected state held fixed, moving an F weight leaves ce_c untouched.
    Tensor held;
    {
        Graph g;
        held = f.forward(g, b, Mode::eval).hidden[1].value();
    }
    auto ce_c_held = [&] {
        Graph g;
        const auto out = c.forward(g, b, Mode::eval, Injection{1, g.constant(held)});
        return classification_loss(out.logits, b, TaskKind::binary).value().item();
    };
    const double before = ce_c_held();
    for (auto& p : f.params()) p.value[0] += 1e-3;
    CHECK(ce_c_held() == before);
}

TEST_CASE("flow mode passes the classification gradient of C into F") {
    auto f = scrambled_model(6);
    auto c = scrambled_model(7);
    const Batch b = tiny_batch();
    const auto cfg = dual_cfg(1, 1, AugmentGradient::flow);
    f.params().zero_grad();
    {
        Graph g;
        const auto out = dual_forward(g, f, c, b, cfg, Mode::eval);
        g.backward(classification_loss(out.c.logits, b, TaskKind::binary));
    }
    Parameter* probe = nullptr;
    for (auto& p : f.params()) {
        if (p.name == "layer0.attn.wv") probe = &p;
    }
    REQUIRE(probe != nullptr);
    for (std::size_t k : {0ul, 7ul, 20ul}) {
        const double analytic = probe->grad[k];
        const double orig = probe->value[k];
        const double h = 1e-5;
        probe->value[k] = orig + h;
        const double up = ce_c_value(f, c, b, cfg);
        probe->value[k] = orig - h;
        const double down = ce_c_value(f, c, b, cfg);
        probe->value[k] = orig;
        const double numeric = (up - down) / (2 * h);
        CHECK(std::abs(analytic) > 1e-6);
        CHECK(analytic == doctest::Approx(numeric).epsilon(1e-5));
    }
    // F weights above the tap layer cannot influence C.
    for (const auto& p : f.params()) {
        if (p.name.rfind("layer1.", 0) == 0 || p.name.rfind("head.", 0) == 0) {
            for (double v : p.grad.values()) CHECK(v == 0.0);
        }
    }
}

TEST_CASE("contrastive gradients reach both encoders in stop mode") {
    auto f = scrambled_model(8);
    auto c = scrambled_model(9);
    auto net = ProjectionNetwork::init(8, {6, 4}, 10);
    const Batch b = tiny_batch();
    f.params().zero_grad();
    c.params().zero_grad();
    {
        Graph g;
        const auto out = dual_forward(g, f, c, b, dual_cfg(2, 1, AugmentGradient::stop), Mode::eval);
        const auto r = contrastive_loss(net.project(g, out.pooled_i, Mode::train),
                                        net.project(g, out.pooled_j, Mode::train), 0.005);
        g.backward(r.loss);
    }
    auto norm = [](const ParamStore& ps) {
        double s = 0.0;
        for (const auto& p : ps) {
            for (double v : p.grad.values()) s += v * v;
        }
        return s;
    };
    CHECK(norm(f.params()) > 0.0);
    CHECK(norm(c.params()) > 0.0);
}

TEST_CASE("dual-stream config validation and JSON") {
    DualStreamConfig c;
    c.tap_layer = 2;
    c.inject_layer = 0;
    c.alpha = 0.3;
    c.augment_gradient = AugmentGradient::flow;
    c.pooling = Pooling::mean;
    CHECK_NOTHROW(c.validate(2));
    CHECK_THROWS_AS(c.validate(1), ConfigError);
    CHECK(DualStreamConfig::from_json(c.to_json()) == c);
    CHECK(c.to_json().contains("L_i"));

    auto bad = c;
    bad.alpha = 1.5;
    CHECK_THROWS_AS(bad.validate(2), ConfigError);
    bad = c;
    bad.lambda_offdiag = 0.0;
    CHECK_THROWS_AS(bad.validate(2), ConfigError);
    bad = c;
    bad.projection_dims = {};
    CHECK_THROWS_AS(bad.validate(2), ConfigError);
    CHECK_THROWS_AS(DualStreamConfig::from_json({{"L_k", 1}}), ConfigError);
    CHECK_THROWS_AS(DualStreamConfig::from_json({{"augment_gradient", "sideways"}}), ConfigError);

    const DualStreamConfig defaults;
    CHECK(defaults.lambda_offdiag == 0.005);
    CHECK(defaults.augment_gradient == AugmentGradient::stop);
    CHECK(defaults.pooling == Pooling::cls);
    CHECK(defaults.projection_dims == std::vector<std::size_t>{1024, 1024, 300});
}
