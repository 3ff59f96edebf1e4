#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "omtp/autodiff.hpp"
#include "omtp/dynsys.hpp"
#include "omtp/nn.hpp"
#include "omtp/tpddpg.hpp"

using namespace omtp;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

std::vector<double> grad_of(ad::Var v) { return {v.grad().begin(), v.grad().end()}; }

}  // namespace

TEST(Autodiff, DotValueAndGradient) {
    ad::Tape tape;
    const double l[] = {1, 2};
    const double r[] = {3, 4};
    auto a = tape.vector(l);
    auto b = tape.vector(r);
    auto y = ad::dot(a, b);
    EXPECT_EQ(y.scalar(), 11.0);
    tape.backward(y);
    EXPECT_EQ(grad_of(a), (std::vector<double>{3, 4}));
    EXPECT_EQ(grad_of(b), (std::vector<double>{1, 2}));
}

TEST(Autodiff, AddSameOperandTwice) {
    ad::Tape tape;
    auto x = tape.scalar(2.0);
    auto y = x + x;
    EXPECT_EQ(y.scalar(), 4.0);
    tape.backward(y);
    EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(Autodiff, SquareAdjoint) {
    ad::Tape tape;
    auto x = tape.scalar(3.0);
    tape.backward(ad::square(x));
    EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Autodiff, UnaryExamples) {
    {
        ad::Tape tape;
        auto x = tape.scalar(0.0);
        auto y = ad::tanh(x);
        tape.backward(y);
        EXPECT_EQ(y.scalar(), 0.0);
        EXPECT_EQ(x.grad()[0], 1.0);
    }
    {
        ad::Tape tape;
        auto x = tape.scalar(1.0);
        auto y = ad::atan(x);
        tape.backward(y);
        EXPECT_DOUBLE_EQ(y.scalar(), std::numbers::pi / 4);
        EXPECT_DOUBLE_EQ(x.grad()[0], 0.5);
    }
    {
        ad::Tape tape;
        const double v[] = {3, 4};
        auto x = tape.vector(v);
        auto y = ad::l2norm(x);
        tape.backward(y);
        EXPECT_DOUBLE_EQ(y.scalar(), 5.0);
        EXPECT_DOUBLE_EQ(x.grad()[0], 0.6);
        EXPECT_DOUBLE_EQ(x.grad()[1], 0.8);
    }
}

TEST(Autodiff, ReluAtZeroHasZeroDerivative) {
    ad::Tape tape;
    auto x = tape.scalar(0.0);
    tape.backward(ad::sum(ad::relu(x)));
    EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Autodiff, L2NormAtOriginHasZeroSubgradient) {
    ad::Tape tape;
    const double v[] = {0, 0, 0};
    auto x = tape.vector(v);
    auto y = ad::l2norm(x);
    tape.backward(y);
    EXPECT_EQ(y.scalar(), 0.0);
    for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Autodiff, RemainingUnaryOpsMatchClosedForm) {
    ad::Tape tape;
    const double v[] = {0.7, -1.3, 2.1};
    auto x = tape.vector(v);
    auto loss = ad::sum(-x) + ad::sum(ad::sqrt(ad::square(x) + ad::square(x))) + ad::sum(2.5 * x);
    tape.backward(loss);
    for (std::size_t i = 0; i < 3; ++i) {
        const double expected = -1.0 + std::sqrt(2.0) * (v[i] > 0 ? 1.0 : -1.0) + 2.5;
        EXPECT_NEAR(x.grad()[i], expected, 1e-14);
    }
}

TEST(Autodiff, ShapeMismatchIsRejected) {
    ad::Tape tape;
    const double a[] = {1, 2};
    const double b[] = {1, 2, 3};
    auto x = tape.vector(a);
    auto y = tape.vector(b);
    EXPECT_THROW(x + y, DimensionError);
    EXPECT_THROW(ad::dot(x, y), DimensionError);
    EXPECT_THROW(ad::matvec(x, y), DimensionError);
    EXPECT_THROW(tape.leaf(a, 3, 1), DimensionError);
}

TEST(Autodiff, NonScalarLossIsRejected) {
    ad::Tape tape;
    const double a[] = {1, 2};
    auto x = tape.vector(a);
    EXPECT_THROW(tape.backward(ad::tanh(x)), DimensionError);
}

TEST(Autodiff, RepeatedBackwardResetsAdjoints) {
    ad::Tape tape;
    auto x = tape.scalar(3.0);
    auto y = ad::square(x);
    tape.backward(y);
    tape.backward(y);
    EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Autodiff, AdjointsZeroBeforeBackward) {
    ad::Tape tape;
    auto x = tape.scalar(3.0);
    auto y = ad::square(x);
    EXPECT_EQ(x.grad()[0], 0.0);
    EXPECT_EQ(y.grad()[0], 0.0);
}

TEST(Autodiff, MatVecMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    auto m = random_vector(25, rng);
    auto x = random_vector(5, rng);
    const auto c = random_vector(5, rng);
    ad::Tape tape;
    auto mv = tape.leaf(m, 5, 5);
    auto xv = tape.vector(x);
    tape.backward(ad::dot(tape.vector(c), ad::matvec(mv, xv)));

    auto f = [&] {
        std::vector<double> y(5);
        kernels::matvec(m, x, y);
        return kernels::dot(c, y);
    };
    const double h = 1e-6;
    auto fd = [&](std::vector<double>& p) {
        std::vector<double> g;
        for (double& v : p) {
            const double s = v;
            v = s + h;
            const double up = f();
            v = s - h;
            const double down = f();
            v = s;
            g.push_back((up - down) / (2 * h));
        }
        return g;
    };
    EXPECT_LE(rel_err(grad_of(mv), fd(m)), 1e-6);
    EXPECT_LE(rel_err(grad_of(xv), fd(x)), 1e-6);
}

TEST(Autodiff, TanhOfDotMatchesFiniteDifferences) {
    std::mt19937_64 rng(9);
    auto w = random_vector(10, rng);
    const auto x = random_vector(10, rng);
    ad::Tape tape;
    auto wv = tape.vector(w);
    tape.backward(ad::tanh(ad::dot(wv, tape.vector(x))));
    std::vector<double> fd;
    const double h = 1e-6;
    for (std::size_t i = 0; i < w.size(); ++i) {
        auto up = w, down = w;
        up[i] += h;
        down[i] -= h;
        fd.push_back((std::tanh(kernels::dot(up, x)) - std::tanh(kernels::dot(down, x))) / (2 * h));
    }
    EXPECT_LE(rel_err(grad_of(wv), fd), 1e-6);
}

TEST(Autodiff, EveryOpMatchesFiniteDifferencesOverSeeds) {
    for (int seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
        auto x = random_vector(4, rng);
        auto y = random_vector(4, rng);
        auto m = random_vector(12, rng);
        auto f_plain = [&] {
            std::vector<double> t(3);
            kernels::matvec(m, x, t);
            double acc = 0.0;
            for (std::size_t i = 0; i < 3; ++i) acc += std::atan(t[i]) * std::tanh(y[i]);
            double n = 0.0;
            for (std::size_t i = 0; i < 4; ++i) n += (x[i] - y[i]) * (x[i] - y[i]);
            double r = 0.0;
            for (std::size_t i = 0; i < 4; ++i) r += std::max(0.0, x[i] * y[i]) + 0.3 * x[i] * x[i];
            return acc + std::sqrt(n) + r + std::sqrt(1.5 + y[0] * y[0]);
        };
        ad::Tape tape;
        auto xv = tape.vector(x);
        auto yv = tape.vector(y);
        auto mv = tape.leaf(m, 3, 4);
        auto t = ad::matvec(mv, xv);
        auto y3 = tape.leaf(std::span<const double>(y.data(), 3), 3, 1);
        auto loss = ad::dot(ad::atan(t), ad::tanh(y3)) + ad::l2norm(xv - yv) +
                    ad::sum(ad::relu(ad::mul(xv, yv))) + ad::sum(0.3 * ad::square(xv)) +
                    ad::sqrt(tape.scalar(1.5) + ad::square(tape.scalar(y[0])));
        tape.backward(loss);
        EXPECT_NEAR(loss.scalar(), f_plain(), 1e-12);

        const double h = 1e-6;
        auto fd = [&](std::vector<double>& p) {
            std::vector<double> g;
            for (double& v : p) {
                const double s = v;
                v = s + h;
                const double up = f_plain();
                v = s - h;
                const double down = f_plain();
                v = s;
                g.push_back((up - down) / (2 * h));
            }
            return g;
        };
        EXPECT_LE(rel_err(grad_of(xv), fd(x)), 1e-5) << "seed " << seed;
        EXPECT_LE(rel_err(grad_of(mv), fd(m)), 1e-5) << "seed " << seed;
    }
}

TEST(Autodiff, BackwardIsLinear) {
    std::mt19937_64 rng(2);
    const auto x = random_vector(6, rng);
    auto grad_for = [&](int which) {
        ad::Tape tape;
        auto xv = tape.vector(x);
        auto a = ad::sum(ad::tanh(xv));
        auto b = ad::l2norm(ad::atan(xv));
        auto loss = which == 0 ? a : which == 1 ? b : a + b;
        tape.backward(loss);
        return grad_of(xv);
    };
    const auto ga = grad_for(0);
    const auto gb = grad_for(1);
    const auto gab = grad_for(2);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(gab[i], ga[i] + gb[i], 1e-15);
}

TEST(Autodiff, HundredStepRolloutMatchesFiniteDifferences) {
    const auto spec = make_linear_potential(0.0, 2.0, 1.0, 100, 10.0);
    std::mt19937_64 rng(21);
    auto actor = nn::init_actor(1, 15, 1, 5.0, 4);
    for (double& b : actor.hidden.biases) b = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    ad::Tape tape;
    const auto bound = nn::bind(tape, actor);
    tape.backward(terminal_predict(spec, bound, tape.vector(spec.x_start), 0).loss);
    const auto g = nn::gradient(bound.parameters());
    std::vector<double> fd;
    const double h = 1e-6;
    for (auto block : actor.parameters()) {
        for (double& p : block) {
            const double s = p;
            p = s + h;
            const double up = terminal_predict(spec, actor, spec.x_start, 0).loss;
            p = s - h;
            const double down = terminal_predict(spec, actor, spec.x_start, 0).loss;
            p = s;
            fd.push_back((up - down) / (2 * h));
        }
    }
    EXPECT_LE(rel_err(g, fd), 1e-4);
}

TEST(Autodiff, TapeGrowsLinearlyWithRolloutLength) {
    const auto actor = nn::init_actor(1, 15, 1, 5.0, 1);
    auto nodes_for = [&](int steps) {
        const auto spec = make_linear_potential(0.0, 2.0, 1.0, steps, 10.0);
        ad::Tape tape;
        static_cast<void>(terminal_predict(spec, nn::bind(tape, actor), tape.vector(spec.x_start), 0));
        return tape.node_count();
    };
    const auto n10 = nodes_for(10);
    const auto n20 = nodes_for(20);
    const auto n40 = nodes_for(40);
    EXPECT_EQ(n40 - n20, 2 * (n20 - n10));
}
