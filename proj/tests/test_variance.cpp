#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "stratkit/design.hpp"
#include "stratkit/moments.hpp"
#include "stratkit/rng.hpp"
#include "stratkit/stats.hpp"
#include "stratkit/variance.hpp"

using namespace stratkit;
using namespace stratkit::variance;

namespace {

ExperimentData make(std::vector<int> a, std::vector<double> y, double eta = 0.5) {
    ExperimentData d;
    const auto n = static_cast<Eigen::Index>(a.size());
    d.a = std::move(a);
    d.eta = eta;
    d.x = RowMatrix::Zero(n, 1);
    d.r = RowMatrix(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) d.r(i, 0) = y[static_cast<std::size_t>(i)];
    return d;
}

ThetaVec scalar(double v) {
    ThetaVec t(1);
    t(0) = v;
    return t;
}

// Straight transcription of the plug-in formula with explicit index sets.
double reference_vhat(const std::vector<double>& m, const std::vector<int>& a, const BlockPartition& p, double eta,
                      double jac) {
    const double n = static_cast<double>(m.size());
    double mu1 = 0, mu0 = 0;
    for (std::size_t i = 0; i < m.size(); ++i) (a[i] ? mu1 : mu0) += m[i];
    mu1 /= eta * n;
    mu0 /= (1 - eta) * n;
    double s1 = 0;
    for (std::size_t i = 0; i < m.size(); ++i) s1 += std::pow(m[i] - (a[i] ? mu1 : mu0), 2);
    s1 /= n;

    auto arm_product = [&](int arm) {
        const std::size_t l = arm ? p.shape.l : p.shape.k - p.shape.l;
        double total = 0;
        std::size_t terms = 0;
        if (l > 1) {
            for (const auto& b : p.blocks) {
                double s = 0;
                std::size_t c = 0;
                for (auto i : b) {
                    for (auto j : b) {
                        if (i < j && a[i] == arm && a[j] == arm) {
                            s += m[i] * m[j];
                            ++c;
                        }
                    }
                }
                total += s / static_cast<double>(c);
                ++terms;
            }
        } else {
            for (std::size_t j = 0; j + 1 < p.blocks.size(); j += 2) {
                double u = 0, w = 0;
                for (auto i : p.blocks[j]) if (a[i] == arm) u = m[i];
                for (auto i : p.blocks[j + 1]) if (a[i] == arm) w = m[i];
                total += u * w;
                ++terms;
            }
        }
        return total / static_cast<double>(terms);
    };
    double cross = 0;
    for (const auto& b : p.blocks) {
        double s = 0, c = 0;
        for (auto i : b) {
            for (auto j : b) {
                if (a[i] == 1 && a[j] == 0) {
                    s += m[i] * m[j];
                    c += 1;
                }
            }
        }
        cross += s / c;
    }
    cross /= static_cast<double>(p.blocks.size());
    const double s2 = -eta * (1 - eta) * (arm_product(1) + arm_product(0) - 2 * cross - (mu1 - mu0) * (mu1 - mu0));
    return (s1 + s2) / (jac * jac);
}

struct Fixture {
    ExperimentData data;
    BlockPartition partition;
};

Fixture random_fixture(std::size_t n, BlockShape shape, Rng& rng) {
    RowMatrix x(static_cast<Eigen::Index>(n), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = rng.uniform();
    Fixture f;
    f.partition = design::block_sorted(x, 0, shape);
    const auto a = design::assign_fine(f.partition, rng);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = x(static_cast<Eigen::Index>(i), 0) * (1 + a[i]) + rng.normal();
    f.data = make(a, y, shape.eta());
    f.data.x = x;
    return f;
}

std::vector<double> moments_at(const ExperimentData& d, double theta) {
    std::vector<double> m(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m[i] = moments::m_ate(d.a[i], d.y(i), theta, d.eta);
    return m;
}

// Y(1) = c0 + c1 X + c2 X^2 + s1 e, Y(0) = d0 + d1 X + s0 e', X ~ U(0, 1)
class PolySampler final : public PotentialSampler {
  public:
    PolySampler(double c0, double c1, double c2, double d0, double d1, double s1, double s0)
        : c0_(c0), c1_(c1), c2_(c2), d0_(d0), d1_(d1), s1_(s1), s0_(s0) {}
    int x_dim() const override { return 1; }
    int response_dim() const override { return 1; }
    int x_uniforms() const override { return 1; }
    int noise_uniforms() const override { return 1; }
    void draw_x(std::span<const double> u, std::span<double> x) const override { x[0] = u[0]; }
    void draw_responses(std::span<const double> x, std::span<const double> u, std::span<double> r1,
                        std::span<double> r0) const override {
        const double e = normal_quantile(u[0]);
        r1[0] = c0_ + c1_ * x[0] + c2_ * x[0] * x[0] + s1_ * e;
        r0[0] = d0_ + d1_ * x[0] + s0_ * e;
    }
    AteMoments moments() const {
        // E X^k = 1 / (k + 1)
        AteMoments m;
        m.e_mu1 = c0_ + c1_ / 2 + c2_ / 3;
        m.e_mu0 = d0_ + d1_ / 2;
        m.e_mu1_sq = c0_ * c0_ + c1_ * c1_ / 3 + c2_ * c2_ / 5 + c0_ * c1_ + 2 * c0_ * c2_ / 3 + c1_ * c2_ / 2;
        m.e_mu0_sq = d0_ * d0_ + d0_ * d1_ + d1_ * d1_ / 3;
        m.e_mu1_mu0 = c0_ * d0_ + (c0_ * d1_ + c1_ * d0_) / 2 + (c1_ * d1_ + c2_ * d0_) / 3 + c2_ * d1_ / 4;
        m.e_sigma1_sq = s1_ * s1_;
        m.e_sigma0_sq = s0_ * s0_;
        return m;
    }

  private:
    double c0_, c1_, c2_, d0_, d1_, s1_, s0_;
};

}  // namespace

TEST_CASE("vhat_fine hand example with n = 4") {
    const auto d = make({1, 0, 0, 1}, {3, 1, 2, 0});
    const BlockPartition p{{{0, 1}, {2, 3}}, {1, 2}};
    const auto b = vhat_fine(d, p, moments::AteModel(), scalar(0.0));
    CHECK(b.m_hat == -1.0);
    CHECK(b.mu1 == 3.0);
    CHECK(b.mu0 == -3.0);
    CHECK(b.sigma1 == 5.0);
    CHECK(b.varsigma11 == 0.0);
    CHECK(b.varsigma00 == 8.0);
    CHECK(b.varsigma01 == -6.0);
    CHECK(b.sigma2 == 4.0);
    CHECK(b.vhat == 9.0);
    CHECK(b.variant11 == VarsigmaVariant::between);
    CHECK(b.variant00 == VarsigmaVariant::between);
    CHECK_FALSE(b.odd_block_dropped);
}

TEST_CASE("vhat_fine is zero when every moment is zero") {
    const auto d = make({1, 0, 0, 1, 1, 0}, {0, 0, 0, 0, 0, 0});
    const BlockPartition p{{{0, 1}, {2, 3}, {4, 5}}, {1, 2}};
    const auto b = vhat_fine(d, p, moments::AteModel(), scalar(0.0));
    CHECK(b.vhat == 0.0);
    CHECK(b.odd_block_dropped);
}

TEST_CASE("vhat_fine agrees with an index-set transcription") {
    Rng rng(41);
    for (BlockShape shape : {BlockShape{1, 2}, BlockShape{2, 4}, BlockShape{1, 4}, BlockShape{2, 3}}) {
        for (int rep = 0; rep < 5; ++rep) {
            const auto f = random_fixture(48, shape, rng);
            const double theta = moments::AteModel().solve(f.data)(0);
            const auto b = vhat_fine(f.data, f.partition, moments::AteModel(), scalar(theta));
            const double ref = reference_vhat(moments_at(f.data, theta), f.data.a, f.partition, shape.eta(), -1.0);
            CHECK(b.vhat == doctest::Approx(ref).epsilon(1e-12));
        }
    }
}

TEST_CASE("(2, 4) blocks use within-block products") {
    // m = 2y - theta for treated, -2y + theta for control
    const auto d = make({1, 1, 0, 0, 0, 1, 0, 1}, {1, 2, 3, 4, 5, 6, 7, 8});
    const BlockPartition p{{{0, 1, 2, 3}, {4, 5, 6, 7}}, {2, 4}};
    const auto b = vhat_fine(d, p, moments::AteModel(), scalar(0.0));
    CHECK(b.variant11 == VarsigmaVariant::within);
    CHECK(b.variant00 == VarsigmaVariant::within);
    CHECK(b.varsigma11 == doctest::Approx((2.0 * 4.0 + 12.0 * 16.0) / 2.0));
    CHECK(b.varsigma00 == doctest::Approx((6.0 * 8.0 + 10.0 * 14.0) / 2.0));
    CHECK(b.varsigma01 == doctest::Approx((-(2 + 4) * (6 + 8) / 4.0 - (12 + 16) * (10 + 14) / 4.0) / 2.0));
}

TEST_CASE("vhat_fine is invariant to unit order inside blocks") {
    Rng rng(5);
    for (BlockShape shape : {BlockShape{1, 2}, BlockShape{2, 4}}) {
        const auto f = random_fixture(40, shape, rng);
        auto shuffled = f.partition;
        for (auto& blk : shuffled.blocks) std::reverse(blk.begin(), blk.end());
        const auto a = vhat_fine(f.data, f.partition, moments::AteModel(), scalar(0.3));
        const auto b = vhat_fine(f.data, shuffled, moments::AteModel(), scalar(0.3));
        CHECK(a.vhat == doctest::Approx(b.vhat).epsilon(1e-13));
    }
}

TEST_CASE("within-block estimates do not depend on block order") {
    Rng rng(6);
    const auto f = random_fixture(40, {2, 4}, rng);
    auto reordered = f.partition;
    std::reverse(reordered.blocks.begin(), reordered.blocks.end());
    const auto a = vhat_fine(f.data, f.partition, moments::AteModel(), scalar(0.0));
    const auto b = vhat_fine(f.data, reordered, moments::AteModel(), scalar(0.0));
    CHECK(a.vhat == doctest::Approx(b.vhat).epsilon(1e-13));
}

TEST_CASE("LATE variance uses the first-stage Jacobian") {
    ExperimentData d = make({1, 0, 1, 0}, {3, 1, 2, 0});
    d.r.conservativeResize(4, 2);
    d.r.col(1) << 1, 0, 1, 1;
    const BlockPartition p{{{0, 1}, {2, 3}}, {1, 2}};
    const auto b = vhat_fine(d, p, moments::LateModel(), scalar(4.0));
    CHECK(b.m_hat == doctest::Approx(-0.5));
}

TEST_CASE("vhat_fine rejects vector parameters and mismatched blocks") {
    const auto d = make({1, 0, 0, 1}, {3, 1, 2, 0});
    const BlockPartition p{{{0, 1}, {2, 3}}, {1, 2}};
    ThetaVec t(2);
    t << 0.0, 0.0;
    try {
        vhat_fine(d, p, moments::QteModel(0.5), t);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonScalarParameter);
    }
    const BlockPartition wrong{{{0, 3}, {1, 2}}, {1, 2}};
    CHECK_THROWS_AS(vhat_fine(d, wrong, moments::AteModel(), scalar(0.0)), Error);
}

TEST_CASE("confidence_interval") {
    const auto ci = confidence_interval(2.0, 9.0, 4, 0.95);
    CHECK(ci.lo == doctest::Approx(2.0 - 1.959963984540054 * 1.5).epsilon(1e-12));
    CHECK(ci.hi == doctest::Approx(2.0 + 1.959963984540054 * 1.5).epsilon(1e-12));
    try {
        confidence_interval(0.0, -1e-3, 10, 0.95);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NegativeVariance);
    }
}

TEST_CASE("empirical_variance") {
    const std::vector<double> two{0.0, 2.0};
    CHECK(empirical_variance(two, 1) == 2.0);
    CHECK(empirical_variance(two, 10) == 20.0);
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS(empirical_variance(one, 1), Error);
}

TEST_CASE("closed-form oracle on a constant-mean model") {
    AteMoments m;
    m.e_mu1 = 1.0;
    m.e_mu1_sq = 1.0;
    m.e_sigma1_sq = 1.0;
    m.e_sigma0_sq = 1.0;
    const auto o = ate_closed_form(m, 0.5);
    CHECK(o.theta0 == 1.0);
    CHECK(o.v == doctest::Approx(5.0));
    CHECK(o.v_star == doctest::Approx(4.0));
    CHECK(o.ratio == doctest::Approx(0.8));
}

TEST_CASE("radical_inverse") {
    CHECK(radical_inverse(1, 2) == 0.5);
    CHECK(radical_inverse(3, 2) == 0.75);
    CHECK(radical_inverse(5, 3) == doctest::Approx(7.0 / 9.0).epsilon(1e-15));
}

TEST_CASE("quasi-MC oracle matches the closed form and V >= V*") {
    Rng rng(314);
    QuasiMcOptions opts;
    opts.draws = 200000;
    opts.threads = 1;
    for (int rep = 0; rep < 4; ++rep) {
        const PolySampler s(rng.normal(), rng.normal(), rng.normal(), rng.normal(), rng.normal(), 0.5 + rng.uniform(),
                            0.5 + rng.uniform());
        for (double eta : {0.5, 1.0 / 3.0}) {
            const auto exact = ate_closed_form(s.moments(), eta);
            const auto qmc = quasi_mc(s, moments::AteModel(), eta, opts);
            CHECK(exact.v >= exact.v_star);
            CHECK(exact.v_star >= 0.0);
            CHECK(qmc.v >= qmc.v_star);
            CHECK(qmc.theta0 == doctest::Approx(exact.theta0).epsilon(1e-3));
            CHECK(qmc.v == doctest::Approx(exact.v).epsilon(5e-3));
            CHECK(qmc.v_star == doctest::Approx(exact.v_star).epsilon(5e-3));
        }
    }
}

TEST_CASE("quasi-MC oracle is thread-count invariant") {
    const PolySampler s(1.0, 2.0, -1.0, 0.5, 1.0, 1.0, 1.0);
    QuasiMcOptions one;
    one.draws = 150000;
    one.threads = 1;
    QuasiMcOptions three = one;
    three.threads = 3;
    const auto a = quasi_mc(s, moments::AteModel(), 0.5, one);
    const auto b = quasi_mc(s, moments::AteModel(), 0.5, three);
    CHECK(a.v == b.v);
    CHECK(a.v_star == b.v_star);
}
