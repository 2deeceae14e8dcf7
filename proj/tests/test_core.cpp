#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stratkit/core.hpp"
#include "stratkit/rng.hpp"
#include "stratkit/stats.hpp"

using namespace stratkit;

namespace {

ExperimentData toy(std::vector<int> a, double eta = 0.5) {
    ExperimentData d;
    const auto n = static_cast<Eigen::Index>(a.size());
    d.x = RowMatrix::Zero(n, 1);
    d.r = RowMatrix::Zero(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        d.x(i, 0) = static_cast<double>(i);
        d.r(i, 0) = 2.0 * static_cast<double>(i);
    }
    d.a = std::move(a);
    d.eta = eta;
    return d;
}

template <typename F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("validate accepts well-formed data") {
    const auto d = toy({1, 0, 1, 0});
    CHECK(&validate(d) == &d);
}

TEST_CASE("validate names the offending row") {
    const auto d = toy({1, 2, 0, 0});
    try {
        validate(d);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonBinaryTreatment);
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
}

TEST_CASE("validate rejects bad eta, lengths and non-finite values") {
    CHECK(kind_of([] { validate(toy({1, 0, 1, 0}, 1.0)); }) == ErrorKind::EtaOutOfRange);
    CHECK(kind_of([] { validate(toy({1, 0, 1, 0}, 0.0)); }) == ErrorKind::EtaOutOfRange);
    auto d = toy({1, 0, 1, 0});
    d.r(2, 0) = std::nan("");
    CHECK(kind_of([&] { validate(d); }) == ErrorKind::NonFiniteValue);
    auto e = toy({1, 0, 1, 0});
    e.x = RowMatrix::Zero(3, 1);
    CHECK(kind_of([&] { validate(e); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("reveal follows the observed/potential relation exactly") {
    Rng rng(11);
    PotentialData p;
    p.x = RowMatrix::Zero(50, 2);
    p.r1 = RowMatrix::Zero(50, 2);
    p.r0 = RowMatrix::Zero(50, 2);
    std::vector<int> a(50);
    for (Eigen::Index i = 0; i < 50; ++i) {
        for (Eigen::Index j = 0; j < 2; ++j) {
            p.x(i, j) = rng.normal();
            p.r1(i, j) = rng.normal();
            p.r0(i, j) = rng.normal();
        }
        a[static_cast<std::size_t>(i)] = rng.bernoulli(0.5) ? 1 : 0;
    }
    const auto d = p.reveal(a, 0.5);
    for (Eigen::Index i = 0; i < 50; ++i) {
        const int ai = a[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < 2; ++j) CHECK(d.r(i, j) == p.r1(i, j) * ai + p.r0(i, j) * (1 - ai));
    }
}

TEST_CASE("check_partition") {
    BlockPartition p{{{0, 1}, {2, 3}}, {1, 2}};
    CHECK_NOTHROW(check_partition(p, 4));
    BlockPartition overlap{{{0, 1}, {1, 3}}, {1, 2}};
    CHECK_THROWS_AS(check_partition(overlap, 4), Error);
    BlockPartition short_block{{{0, 1}, {2}}, {1, 2}};
    CHECK_THROWS_AS(check_partition(short_block, 3), Error);
}

TEST_CASE("weighted_quantile uses the inf convention") {
    const std::vector<double> a{1, 3, 5};
    CHECK(weighted_quantile(a, 0.5) == 3.0);
    const std::vector<double> b{7};
    CHECK(weighted_quantile(b, 0.9) == 7.0);
    const std::vector<double> c{2, 2, 2, 2};
    CHECK(weighted_quantile(c, 0.25) == 2.0);
    // F(2) = 0.5 exactly, so the median of {1,2,3,4} is 2
    const std::vector<double> d{4, 1, 3, 2};
    CHECK(weighted_quantile(d, 0.5) == 2.0);
    CHECK(weighted_quantile(d, 0.5000001) == 3.0);
    CHECK_THROWS_AS(weighted_quantile(std::vector<double>{}, 0.5), Error);
}

TEST_CASE("weighted_quantile is monotone in tau and returns a data point") {
    Rng rng(3);
    std::vector<double> v(37);
    for (auto& x : v) x = rng.normal();
    double prev = -1e300;
    for (int t = 1; t < 100; ++t) {
        const double q = weighted_quantile(v, t / 100.0);
        CHECK(q >= prev);
        CHECK(std::find(v.begin(), v.end(), q) != v.end());
        prev = q;
    }
}

TEST_CASE("weighted_quantile with weights and an external mass") {
    const std::vector<double> v{1, 2, 3};
    const std::vector<double> w{1, 1, 2};
    CHECK(weighted_quantile(v, w, 0.5) == 2.0);
    CHECK(weighted_quantile(v, w, 0.6) == 3.0);
    CHECK(weighted_quantile(v, w, 0.25) == 1.0);
    // total mass 8: F tops out at 0.5
    CHECK(weighted_quantile(v, w, 0.5, 8.0) == 3.0);
    CHECK(kind_of([&] { weighted_quantile(v, w, 0.6, 8.0); }) == ErrorKind::QuantileUnreachable);
}

TEST_CASE("normal quantile and cdf") {
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
    for (double p : {1e-10, 0.001, 0.2, 0.7, 0.999999}) CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
    CHECK(normal_cdf(-1.0) == doctest::Approx(0.15865525393145707).epsilon(1e-14));
}

TEST_CASE("expit and logit") {
    CHECK(expit(0.0) == 0.5);
    CHECK(logit(0.75) == doctest::Approx(std::log(3.0)));
    CHECK(std::isfinite(expit(-800.0)));
    CHECK(expit(800.0) == 1.0);
    for (double z : {-5.0, -0.3, 2.0}) CHECK(logit(expit(z)) == doctest::Approx(z).epsilon(1e-12));
}

TEST_CASE("RunningStats matches the two-pass formulas and merges") {
    const std::vector<double> v{1.5, -2.0, 4.25, 0.0, 3.0, 10.0};
    RunningStats all, left, right;
    for (std::size_t i = 0; i < v.size(); ++i) {
        all.push(v[i]);
        (i < 2 ? left : right).push(v[i]);
    }
    left.merge(right);
    double m = 0.0;
    for (double x : v) m += x;
    m /= 6.0;
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    CHECK(all.mean() == doctest::Approx(m).epsilon(1e-14));
    CHECK(all.variance() == doctest::Approx(ss / 5.0).epsilon(1e-14));
    CHECK(left.mean() == doctest::Approx(m).epsilon(1e-14));
    CHECK(left.variance() == doctest::Approx(ss / 5.0).epsilon(1e-14));
    CHECK(sample_variance(v) == doctest::Approx(ss / 5.0).epsilon(1e-14));
}

TEST_CASE("Rng streams are reproducible and path-keyed") {
    Rng a = Rng::derive(5, {1, 2, 3});
    Rng b = Rng::derive(5, {1, 2, 3});
    Rng c = Rng::derive(5, {1, 2, 4});
    bool differ = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.uniform();
        CHECK(x == b.uniform());
        if (x != c.uniform()) differ = true;
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    CHECK(differ);
}

TEST_CASE("Rng::below is unbiased over a small range") {
    Rng rng(99);
    std::vector<int> counts(3, 0);
    const int draws = 90000;
    for (int i = 0; i < draws; ++i) ++counts[rng.below(3)];
    // chi-square with 2 df, alpha = 0.001
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - draws / 3.0) * (c - draws / 3.0) / (draws / 3.0);
    CHECK(chi2 < 13.816);
}
