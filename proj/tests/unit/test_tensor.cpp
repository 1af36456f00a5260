#include "doctest.h"
#include "support/gradcheck.hpp"

#include "selfaug/errors.hpp"
#include "selfaug/tensor/ops.hpp"

#include <cmath>
#include <set>

using namespace selfaug;
using selfaug::testing::grad_check;
using selfaug::testing::random_tensor;

namespace {

void check_close(const Tensor& got, const std::vector<double>& want, double tol = 1e-12) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(tol));
}

} // namespace

TEST_CASE("matmul matches hand products") {
    Graph g;
    auto id = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    auto b = g.constant(Tensor::matrix({{3, 4}, {5, 6}}));
    const Tensor prod = matmul(id, b).value();
    CHECK(prod == b.value());
    auto row = g.constant(Tensor::matrix({{1, 2}}));
    auto col = g.constant(Tensor::matrix({{3}, {4}}));
    CHECK(matmul(row, col).value().item() == 11.0);
}

TEST_CASE("matmul gradient of sum(A B) is row sums of B") {
    Graph g;
    auto a = g.leaf(Tensor::matrix({{1, 2}, {3, 4}}));
    auto b = g.constant(Tensor::matrix({{1, 1}, {1, 1}}));
    g.backward(sum(matmul(a, b)));
    CHECK(g.grad(a) == Tensor::matrix({{2, 2}, {2, 2}}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Graph g;
    auto a = g.constant(Tensor({2, 3}));
    auto b = g.constant(Tensor({2, 3}));
    try {
        matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2, 3]") != std::string::npos);
    }
}

TEST_CASE("batched matmul broadcasts a plain matrix") {
    std::mt19937_64 rng(1);
    auto r = grad_check([](Graph&, const std::vector<Var>& x) { return matmul(x[0], x[1]); },
                        {random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng)}, rng);
    CHECK(r.rel_error < 1e-6);
    auto r2 = grad_check([](Graph&, const std::vector<Var>& x) { return matmul(x[0], x[1]); },
                         {random_tensor({3, 4}, rng), random_tensor({2, 4, 2}, rng)}, rng);
    CHECK(r2.rel_error < 1e-6);
}

TEST_CASE("elementwise ops") {
    Graph g;
    auto a = g.constant(Tensor::matrix({{1, 2}}));
    auto b = g.constant(Tensor::matrix({{0.5, -2}}));
    CHECK(add(a, b).value() == Tensor::matrix({{1.5, 0}}));
    std::mt19937_64 rng(2);
    auto h = g.constant(random_tensor({3, 4}, rng));
    const Tensor same = add(h, g.constant(Tensor::zeros_like(h.value()))).value();
    CHECK(same == h.value());
    CHECK_THROWS_AS(add(a, g.constant(Tensor({2, 1}))), DimensionError);
    auto r = grad_check([](Graph&, const std::vector<Var>& x) { return mul(x[0], x[1]); },
                        {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, rng);
    CHECK(r.rel_error < 1e-4);
}

TEST_CASE("relu values and derivative") {
    Graph g;
    auto x = g.leaf(Tensor::vector({-1, 0, 2}));
    auto y = relu(x);
    CHECK(y.value() == Tensor::vector({0, 0, 2}));
    g.backward(sum(y));
    CHECK(g.grad(x)[0] == 0.0);
    CHECK(g.grad(x)[2] == 1.0);
}

TEST_CASE("gelu uses the tanh form and passes a gradient check") {
    Graph g;
    const double x = 0.7;
    const double want = 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
    CHECK(gelu(g.constant(Tensor::vector({x}))).value()[0] == doctest::Approx(want).epsilon(1e-15));
    std::mt19937_64 rng(3);
    auto r = grad_check([](Graph&, const std::vector<Var>& v) { return gelu(v[0]); }, {random_tensor({3, 4}, rng)}, rng);
    CHECK(r.rel_error < 1e-4);
}

TEST_CASE("log and sqrt guard their domains") {
    Graph g;
    CHECK_THROWS_AS(log(g.constant(Tensor::vector({1.0, 0.0}))), NumericDomainError);
    CHECK_THROWS_AS(sqrt(g.constant(Tensor::vector({-1e-3}))), NumericDomainError);
    CHECK(sqrt(g.constant(Tensor::vector({0.0}))).value()[0] == 0.0);
}

TEST_CASE("softmax rows") {
    Graph g;
    check_close(softmax_rows(g.constant(Tensor::vector({0, 0}))).value(), {0.5, 0.5});
    check_close(softmax_rows(g.constant(Tensor::vector({1000, 1000}))).value(), {0.5, 0.5});
    // e^k / (e + e^2 + e^3), evaluated at high precision.
    check_close(softmax_rows(g.constant(Tensor::vector({1, 2, 3}))).value(),
                {0.090030573170380462, 0.24472847105479765, 0.66524095577481775}, 1e-14);

    std::mt19937_64 rng(4);
    const Tensor x = random_tensor({5, 7}, rng, -1e3, 1e3);
    const Tensor p = softmax_rows(g.constant(x)).value();
    CHECK(p.all_finite());
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 7; ++c) s += p[r * 7 + c];
        CHECK(std::abs(s - 1.0) < 1e-9);
    }
    Tensor shifted = x;
    for (double& v : shifted.values()) v += 3.25;
    const Tensor q = softmax_rows(g.constant(shifted)).value();
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
}

TEST_CASE("masked softmax gives padded keys zero weight") {
    Graph g;
    Tensor mask = Tensor::matrix({{1, 1, 0}});
    auto w = masked_softmax_rows(g.constant(Tensor({1, 2, 3}, std::vector<double>{1, 2, 50, 0, 0, -50})), mask);
    CHECK(w.value()[2] == 0.0);
    CHECK(w.value()[5] == 0.0);
    CHECK(w.value()[3] + w.value()[4] == doctest::Approx(1.0));
}

TEST_CASE("layer norm") {
    Graph g;
    auto gain = g.constant(Tensor({3}, 1.0));
    auto bias = g.constant(Tensor({3}));
    const Tensor flat = layer_norm(g.constant(Tensor::matrix({{2, 2, 2}})), gain, bias, 1e-12).value();
    CHECK(flat == Tensor::matrix({{0, 0, 0}}));

    std::mt19937_64 rng(5);
    const Tensor x = random_tensor({4, 6}, rng);
    const Tensor y = layer_norm(g.constant(x), g.constant(Tensor({6}, 1.0)), g.constant(Tensor({6})), 1e-12).value();
    for (std::size_t r = 0; r < 4; ++r) {
        double m = 0.0, v = 0.0;
        for (std::size_t c = 0; c < 6; ++c) m += y[r * 6 + c] / 6.0;
        for (std::size_t c = 0; c < 6; ++c) v += (y[r * 6 + c] - m) * (y[r * 6 + c] - m) / 6.0;
        CHECK(std::abs(m) < 1e-6);
        CHECK(std::abs(v - 1.0) < 1e-6);
    }
    auto r = grad_check([](Graph&, const std::vector<Var>& v) { return layer_norm(v[0], v[1], v[2], 1e-12); },
                        {random_tensor({3, 5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)}, rng);
    CHECK(r.rel_error < 1e-4);
}

TEST_CASE("batch norm over features") {
    Graph g;
    const Tensor y = batch_norm_features(g.constant(Tensor::matrix({{1}, {3}})), 1e-12).value();
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-11));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-11));

    std::mt19937_64 rng(6);
    const Tensor x = random_tensor({8, 3}, rng);
    const Tensor once = batch_norm_features(g.constant(x), 1e-12).value();
    const Tensor twice = batch_norm_features(g.constant(once), 1e-12).value();
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(std::abs(once[i] - twice[i]) < 1e-6);
    CHECK_THROWS_AS(batch_norm_features(g.constant(Tensor({1, 3})), 1e-5), ConfigError);
    auto r = grad_check([](Graph&, const std::vector<Var>& v) { return batch_norm_features(v[0], 1e-5); },
                        {random_tensor({5, 3}, rng)}, rng);
    CHECK(r.rel_error < 1e-4);
}

TEST_CASE("cross entropy") {
    Graph g;
    const std::vector<int> zero{0};
    CHECK(cross_entropy(g.constant(Tensor::matrix({{0, 0}})), zero).value().item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(cross_entropy(g.constant(Tensor::matrix({{1e9, 0}})), zero).value().item() < 1e-12);
    const std::vector<int> bad{2};
    CHECK_THROWS_AS(cross_entropy(g.constant(Tensor::matrix({{0, 0}})), bad), ValidationError);

    // d/dlogits = (softmax - onehot) / batch
    auto logits = g.leaf(Tensor::matrix({{0.2, -1.0, 0.5}, {1.5, 0.0, -0.3}}));
    const std::vector<int> t{2, 0};
    g.backward(cross_entropy(logits, t));
    const Tensor p = softmax_rows(g.constant(logits.value())).value();
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double want = (p[r * 3 + c] - (static_cast<int>(c) == t[r] ? 1.0 : 0.0)) / 2.0;
            CHECK(g.grad(logits)[r * 3 + c] == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("binary cross entropy with logits") {
    Graph g;
    CHECK(binary_cross_entropy_with_logits(g.constant(Tensor::matrix({{0}})), Tensor::matrix({{1}})).value().item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(binary_cross_entropy_with_logits(g.constant(Tensor::matrix({{-1e9}})), Tensor::matrix({{0}}))
              .value()
              .item() < 1e-12);
    CHECK_THROWS_AS(binary_cross_entropy_with_logits(g.constant(Tensor::matrix({{0}})), Tensor::matrix({{0.5}})),
                    ValidationError);
    std::mt19937_64 rng(7);
    Tensor targets({4, 8});
    for (double& v : targets.values()) v = static_cast<double>(rng() % 2);
    auto r = grad_check(
        [&](Graph&, const std::vector<Var>& v) { return binary_cross_entropy_with_logits(v[0], targets); },
        {random_tensor({4, 8}, rng)}, rng);
    CHECK(r.rel_error < 1e-4);
}

TEST_CASE("backward accumulation rules") {
    Graph g;
    auto x = g.leaf(Tensor::vector({1, 2, 3}));
    g.backward(sum(x));
    CHECK(g.grad(x) == Tensor::vector({1, 1, 1}));

    Graph g2;
    auto y = g2.leaf(Tensor::vector({1, 2}));
    g2.backward(sum(add(y, y)));
    CHECK(g2.grad(y) == Tensor::vector({2, 2}));

    Graph g3;
    auto z = g3.leaf(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(g3.backward(z), DimensionError);
}

TEST_CASE("shared subexpression equals the expanded graph") {
    std::mt19937_64 rng(8);
    const Tensor xv = random_tensor({3, 3}, rng);
    Graph shared;
    auto x1 = shared.leaf(xv);
    auto e = exp(x1);
    shared.backward(sum(mul(e, e)));
    Graph expanded;
    auto x2 = expanded.leaf(xv);
    expanded.backward(sum(mul(exp(x2), exp(x2))));
    for (std::size_t i = 0; i < xv.size(); ++i) {
        CHECK(shared.grad(x1)[i] == doctest::Approx(expanded.grad(x2)[i]).epsilon(1e-14));
    }
}

TEST_CASE("backward visits each node once and leaves unreachable nodes alone") {
    Graph g;
    auto a = g.leaf(Tensor::vector({1, 2}));
    auto unused = g.leaf(Tensor::vector({3, 4}));
    auto b = mul(a, a);
    auto loss = sum(add(b, a));
    g.backward(loss);
    const auto& visits = g.last_backward_visits();
    CHECK(std::set<std::size_t>(visits.begin(), visits.end()).size() == visits.size());
    CHECK(g.grad(unused).empty());
    for (std::size_t i = 1; i < visits.size(); ++i) CHECK(visits[i - 1] > visits[i]);
}

TEST_CASE("parameters accumulate into their grad buffer") {
    ParamStore store;
    store.add("w", Tensor::vector({1, 2}));
    Graph g;
    auto w = g.param(store[0]);
    g.backward(sum(mul(w, w)));
    CHECK(store[0].grad == Tensor::vector({2, 4}));
    Graph g2;
    g2.backward(sum(g2.param(store[0])));
    CHECK(store[0].grad == Tensor::vector({3, 5}));
    store.zero_grad();
    CHECK(store[0].grad == Tensor::vector({0, 0}));
}

TEST_CASE("detach stops gradients") {
    Graph g;
    auto x = g.leaf(Tensor::vector({1, 2}));
    g.backward(sum(add(x, detach(mul(x, x)))));
    CHECK(g.grad(x) == Tensor::vector({1, 1}));
}

TEST_CASE("dropout keeps the expectation and is identity at rate 0") {
    Graph g;
    std::mt19937_64 rng(9);
    auto x = g.constant(Tensor({1000}, 1.0));
    CHECK(dropout(x, 0.0, rng).value() == x.value());
    const Tensor y = dropout(x, 0.25, rng).value();
    double s = 0.0;
    for (double v : y.values()) {
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
        s += v;
    }
    CHECK(s / 1000.0 == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("shape ops round trip") {
    std::mt19937_64 rng(10);
    const Tensor x = random_tensor({2, 3, 4}, rng);
    Graph g;
    auto v = g.constant(x);
    CHECK(permute(permute(v, {2, 0, 1}), {1, 2, 0}).value() == x);
    CHECK(transpose(transpose(v)).value() == x);
    CHECK(reshape(v, {6, 4}).value().values() == x.values());
    CHECK_THROWS_AS(reshape(v, {5, 5}), DimensionError);
}

TEST_CASE("no NaN for inputs up to 1e3 in magnitude") {
    std::mt19937_64 rng(11);
    Graph g;
    auto x = g.constant(random_tensor({4, 6}, rng, -1e3, 1e3));
    CHECK(softmax_rows(x).value().all_finite());
    CHECK(gelu(x).value().all_finite());
    CHECK(layer_norm(x, g.constant(Tensor({6}, 1.0)), g.constant(Tensor({6})), 1e-12).value().all_finite());
    CHECK(batch_norm_features(x, 1e-5).value().all_finite());
    CHECK(binary_cross_entropy_with_logits(x, Tensor({4, 6})).value().all_finite());
    const std::vector<int> t{0, 1, 2, 3};
    CHECK(cross_entropy(x, t).value().all_finite());
}
