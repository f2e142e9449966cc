#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "micl/autodiff.hpp"
#include "micl/rng.hpp"

using micl::Matrix;
using micl::Rng;
using micl::Tape;
using micl::Var;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    for (auto& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

// Central finite differences of a scalar-producing graph w.r.t. one leaf.
double max_rel_error_fd(const Matrix& input,
                        const std::function<Var(Tape&, Var)>& build, double eps = 1e-5) {
    Matrix analytic;
    {
        Tape t;
        Var x = t.leaf(input);
        Var y = build(t, x);
        t.backward(y);
        analytic = t.grad(x);
    }
    double worst = 0.0;
    Matrix perturbed = input;
    for (std::size_t k = 0; k < input.size(); ++k) {
        const double saved = perturbed[k];
        auto eval = [&](double v) {
            perturbed[k] = v;
            Tape t;
            Var y = build(t, t.leaf(perturbed));
            return t.value(y)(0, 0);
        };
        const double fd = (eval(saved + eps) - eval(saved - eps)) / (2.0 * eps);
        perturbed[k] = saved;
        const double an = analytic[k];
        const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
        worst = std::max(worst, std::abs(an - fd) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("matmul and reductions against finite differences") {
    Rng rng(11);
    Matrix a = random_matrix(3, 4, rng);
    Matrix b = random_matrix(4, 5, rng);
    auto build = [&](Tape& t, Var x) {
        Var bb = t.leaf(b);
        return t.sum_all(t.square(t.matmul_(x, bb)));
    };
    CHECK(max_rel_error_fd(a, build) < 1e-6);
}

TEST_CASE("softmax rows backward") {
    Rng rng(12);
    Matrix a = random_matrix(4, 6, rng);
    auto build = [](Tape& t, Var x) {
        Var p = t.softmax_rows(x);
        return t.sum_all(t.square(p));
    };
    CHECK(max_rel_error_fd(a, build) < 1e-6);
}

TEST_CASE("masked softmax respects the mask and sums to 1") {
    Tape t;
    Matrix s(2, 3);
    s(0, 0) = 1.0; s(0, 1) = 5.0; s(0, 2) = -2.0;
    s(1, 0) = 0.0; s(1, 1) = 0.0; s(1, 2) = 0.0;
    std::vector<std::vector<bool>> mask = {{true, false, true}, {true, true, true}};
    Var p = t.masked_softmax_rows(t.leaf(s), mask);
    const Matrix& P = t.value(p);
    CHECK(P(0, 1) == 0.0);
    CHECK(P(0, 0) + P(0, 2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(P(1, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("masked softmax backward") {
    Rng rng(13);
    Matrix a = random_matrix(3, 3, rng);
    std::vector<std::vector<bool>> mask = {{true, true, false},
                                           {false, true, true},
                                           {true, true, true}};
    auto build = [&mask](Tape& t, Var x) {
        Var p = t.masked_softmax_rows(x, mask);
        return t.sum_all(t.square(p));
    };
    CHECK(max_rel_error_fd(a, build) < 1e-6);
}

TEST_CASE("unary chains: softplus sigmoid tanh log sqrt") {
    Rng rng(14);
    Matrix a = random_matrix(2, 5, rng, 0.2, 2.0);
    auto build = [](Tape& t, Var x) {
        Var y = t.softplus(x);
        y = t.sigmoid(y);
        y = t.tanh_(y);
        y = t.log_(t.add_const(y, 1.5));
        y = t.sqrt_(t.add_const(y, 2.0));
        return t.sum_all(y);
    };
    CHECK(max_rel_error_fd(a, build) < 1e-6);
}

TEST_CASE("structural ops: concat slice transpose gather") {
    Rng rng(15);
    Matrix a = random_matrix(4, 3, rng);
    auto build = [](Tape& t, Var x) {
        Var top = t.slice_rows(x, 0, 2);
        Var cat = t.concat_rows({t.transpose(t.transpose(top)), x});
        Var picked = t.gather_rows(cat, {0, 3, 3, 5});
        Var wide = t.concat_cols({picked, t.scale(picked, 2.0)});
        return t.sum_all(t.square(wide));
    };
    CHECK(max_rel_error_fd(a, build) < 1e-6);
}

TEST_CASE("broadcast ops: add_rowvec div_rowscale bcast_sum mul_scalar") {
    Rng rng(16);
    Matrix a = random_matrix(3, 3, rng, 0.5, 1.5);
    auto build = [](Tape& t, Var x) {
        Var bias = t.slice_rows(x, 0, 1);
        Var y = t.add_rowvec(x, bias);
        Var scalevec = t.add_const(t.row_sums(t.square(x)), 1.0);
        y = t.div_rowscale(y, scalevec);
        Var col = t.row_sums(y);
        Var row = t.mean_rows(y);
        Var outer = t.bcast_sum(col, row);
        Var s = t.sum_all(t.mul(outer, outer));
        return t.mul_scalar(t.scalar(1.0), s);
    };
    CHECK(max_rel_error_fd(a, build) < 1e-6);
}

TEST_CASE("leaky_relu and clamp gradients away from kinks") {
    Matrix a(1, 4);
    a[0] = -2.0; a[1] = -0.5; a[2] = 0.5; a[3] = 2.0;
    auto build = [](Tape& t, Var x) {
        Var y = t.leaky_relu(x, 0.2);
        y = t.clamp(y, -1.0, 1.0);
        return t.sum_all(t.square(y));
    };
    CHECK(max_rel_error_fd(a, build) < 1e-6);
}

TEST_CASE("gradient accumulates over reused nodes") {
    Tape t;
    Var x = t.leaf(Matrix::scalar(3.0));
    Var y = t.add(t.mul(x, x), x);  // y = x^2 + x, dy/dx = 2x + 1
    t.backward(y);
    CHECK(t.grad(x)(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("div backward") {
    Rng rng(17);
    Matrix a = random_matrix(2, 2, rng, 0.5, 2.0);
    auto build = [](Tape& t, Var x) {
        Var d = t.div(x, t.add_const(t.square(x), 1.0));
        return t.sum_all(d);
    };
    CHECK(max_rel_error_fd(a, build) < 1e-6);
}
