#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "stratkit/design.hpp"

using namespace stratkit;
using namespace stratkit::design;

namespace {

RowMatrix column(const std::vector<double>& v) {
    RowMatrix x(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = v[i];
    return x;
}

RowMatrix uniform_x(std::size_t n, Rng& rng, int dims = 1) {
    RowMatrix x(static_cast<Eigen::Index>(n), dims);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < dims; ++j) x(i, j) = rng.uniform();
    }
    return x;
}

using Blocks = std::vector<std::vector<std::size_t>>;

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

TEST_CASE("block_sorted chunks the sorted order") {
    const auto p = block_sorted(column({0.3, 0.9, 0.1, 0.5}), 0, {1, 2});
    CHECK(p.blocks == Blocks{{2, 0}, {3, 1}});
    const auto ties = block_sorted(column({5, 5, 5, 5}), 0, {1, 2});
    CHECK(ties.blocks == Blocks{{0, 1}, {2, 3}});
}

TEST_CASE("block_sorted picks the coordinate and checks divisibility") {
    RowMatrix x(4, 2);
    x << 0, 4, 1, 3, 2, 2, 3, 1;
    CHECK(block_sorted(x, 1, {1, 2}).blocks == Blocks{{3, 2}, {1, 0}});
    try {
        block_sorted(column({1, 2, 3, 4, 5}), 0, {1, 2});
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotDivisible);
    }
}

TEST_CASE("block_greedy on identical rows and n = k") {
    RowMatrix same = RowMatrix::Constant(6, 2, 1.5);
    CHECK(block_greedy(same, {1, 3}).blocks == Blocks{{0, 1, 2}, {3, 4, 5}});
    auto whole = block_greedy(column({3, 1, 2}), {1, 3}).blocks;
    REQUIRE(whole.size() == 1);
    std::sort(whole[0].begin(), whole[0].end());
    CHECK(whole[0] == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("block_greedy groups nearest neighbours") {
    const auto p = block_greedy(column({0.0, 10.0, 0.1, 10.2, 0.3, 9.9}), {1, 2});
    CHECK(p.blocks == Blocks{{0, 2}, {1, 5}, {3, 4}});
}

TEST_CASE("greedy blocking beats an arbitrary partition") {
    Rng rng(2024);
    for (int rep = 0; rep < 20; ++rep) {
        const auto x = uniform_x(100, rng);
        const double greedy = max_block_discrepancy(x, block_greedy(x, {1, 2}));
        BlockPartition arbitrary;
        arbitrary.shape = {1, 2};
        for (std::size_t i = 0; i < 100; i += 2) arbitrary.blocks.push_back({i, i + 1});
        const double naive = max_block_discrepancy(x, arbitrary);
        CHECK(greedy < 0.1 * naive);
    }
}

TEST_CASE("max_block_discrepancy") {
    CHECK(max_block_discrepancy(column({2, 2, 2, 2}), block_sorted(column({2, 2, 2, 2}), 0, {1, 2})) == 0.0);
    BlockPartition one{{{0, 1}}, {1, 2}};
    CHECK(max_block_discrepancy(column({0, 1}), one) == 0.5);
    BlockPartition swapped{{{1, 0}}, {1, 2}};
    CHECK(max_block_discrepancy(column({0, 1}), swapped) == 0.5);
}

TEST_CASE("sorted blocking discrepancy shrinks with n") {
    Rng rng(77);
    double previous = 1e300;
    for (std::size_t n : {100u, 1000u, 10000u}) {
        std::vector<double> stats;
        for (int rep = 0; rep < 50; ++rep) {
            const auto x = uniform_x(n, rng);
            stats.push_back(max_block_discrepancy(x, block_sorted(x, 0, {1, 2})));
        }
        const double med = median(stats);
        CHECK(med < previous);
        previous = med;
    }
}

TEST_CASE("assign_fine: exactly l per block and marginals l/k") {
    Rng rng(5);
    for (BlockShape shape : {BlockShape{1, 2}, BlockShape{2, 4}, BlockShape{1, 3}}) {
        const std::size_t n = 12;
        const auto p = block_sorted(uniform_x(n, rng), 0, shape);
        std::vector<int> treated(n, 0);
        const int draws = 100000;
        for (int d = 0; d < draws; ++d) {
            const auto a = assign_fine(p, rng);
            for (const auto& b : p.blocks) {
                std::size_t s = 0;
                for (auto i : b) s += static_cast<std::size_t>(a[i]);
                REQUIRE(s == shape.l);
            }
            for (std::size_t i = 0; i < n; ++i) treated[i] += a[i];
        }
        const double eta = shape.eta();
        const double sd = std::sqrt(eta * (1 - eta) / draws);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(treated[i] / double(draws) - eta) < 3.0 * sd);
    }
}

TEST_CASE("assign_fine on one pair is a fair coin") {
    Rng rng(8);
    BlockPartition p{{{0, 1}}, {1, 2}};
    int first = 0;
    for (int d = 0; d < 100000; ++d) first += assign_fine(p, rng)[0];
    CHECK(std::abs(first / 1e5 - 0.5) < 0.01);
}

TEST_CASE("assign_iid fraction and determinism") {
    Rng rng(1);
    const auto a = assign_iid(100000, 0.5, rng);
    double s = 0;
    for (int v : a) s += v;
    CHECK(std::abs(s / 1e5 - 0.5) < 0.005);
    Rng r1(42), r2(42);
    CHECK(assign_iid(50, 0.3, r1) == assign_iid(50, 0.3, r2));
    CHECK_THROWS_AS(assign_iid(5, 1.0, r1), Error);
}

TEST_CASE("assign_complete is uniform over arrangements") {
    Rng rng(13);
    std::map<std::vector<int>, int> counts;
    const int draws = 60000;
    for (int d = 0; d < draws; ++d) {
        const auto a = assign_complete(4, 0.5, rng);
        REQUIRE(a[0] + a[1] + a[2] + a[3] == 2);
        ++counts[a];
    }
    REQUIRE(counts.size() == 6);
    double chi2 = 0.0;
    for (const auto& [k, c] : counts) chi2 += (c - draws / 6.0) * (c - draws / 6.0) / (draws / 6.0);
    CHECK(chi2 < 20.515);  // 5 df, alpha 0.001

    const auto two = assign_complete(2, 0.5, rng);
    CHECK(two[0] + two[1] == 1);
    try {
        assign_complete(5, 0.5, rng);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonIntegralCount);
    }
}

TEST_CASE("assign_coarse exact and randomized counts") {
    Rng rng(21);
    std::vector<int> strata(20);
    for (std::size_t i = 0; i < 20; ++i) strata[i] = i < 10 ? 0 : 1;
    const auto a = assign_coarse(strata, 0.5, rng);
    int s0 = 0, s1 = 0;
    for (std::size_t i = 0; i < 20; ++i) (strata[i] == 0 ? s0 : s1) += a[i];
    CHECK(s0 == 5);
    CHECK(s1 == 5);

    const std::vector<int> three{4, 4, 4};
    double total = 0.0;
    const int draws = 100000;
    for (int d = 0; d < draws; ++d) {
        const auto b = assign_coarse(three, 0.5, rng);
        const int t = b[0] + b[1] + b[2];
        REQUIRE((t == 1 || t == 2));
        total += t;
    }
    // count is 1 + Bernoulli(1/2): sd 0.5 per draw
    CHECK(std::abs(total / draws - 1.5) < 3.0 * 0.5 / std::sqrt(double(draws)));
}

TEST_CASE("assign_coarse with one stratum matches complete randomization counts") {
    Rng rng(4);
    const std::vector<int> one(8, 3);
    const auto a = assign_coarse(one, 0.5, rng);
    int t = 0;
    for (int v : a) t += v;
    CHECK(t == 4);
}

TEST_CASE("assign_fine_discrete_eta: per-stratum shapes and marginals") {
    // units 0..5 have eta 1/2, units 6..11 have eta 1/3
    RowMatrix x(12, 2);
    for (Eigen::Index i = 0; i < 12; ++i) {
        x(i, 0) = static_cast<double>((i * 7) % 12);
        x(i, 1) = i < 6 ? 0.0 : 1.0;
    }
    auto eta_of = [](std::span<const double> r) { return r[1] == 0.0 ? 0.5 : 1.0 / 3.0; };
    const std::vector<BlockShape> shapes{{1, 2}, {1, 3}};
    Rng rng(31);
    std::vector<int> treated(12, 0);
    const int draws = 60000;
    for (int d = 0; d < draws; ++d) {
        const auto res = assign_fine_discrete_eta(x, eta_of, shapes, BlockingMethod::sorted_scalar, 0, rng);
        REQUIRE(res.partitions.size() == 2);
        for (std::size_t s = 0; s < 2; ++s) {
            for (const auto& b : res.partitions[s].blocks) {
                int sum = 0;
                for (auto i : b) sum += res.assignment[i];
                REQUIRE(sum == 1);
            }
        }
        for (std::size_t i = 0; i < 12; ++i) treated[i] += res.assignment[i];
    }
    for (std::size_t i = 0; i < 12; ++i) {
        const double eta = i < 6 ? 0.5 : 1.0 / 3.0;
        CHECK(std::abs(treated[i] / double(draws) - eta) < 3.0 * std::sqrt(eta * (1 - eta) / draws));
    }
}

TEST_CASE("assign_fine_discrete_eta names the stratum that does not divide") {
    RowMatrix x(5, 1);
    x << 0, 1, 2, 3, 4;
    Rng rng(1);
    const std::vector<BlockShape> shapes{{1, 2}};
    try {
        assign_fine_discrete_eta(x, [](std::span<const double>) { return 0.5; }, shapes, BlockingMethod::sorted_scalar,
                                 0, rng);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotDivisible);
        CHECK(std::string(e.what()).find("stratum 1") != std::string::npos);
    }
}

TEST_CASE("single-valued eta map reduces to assign_fine") {
    Rng gen(3);
    const auto x = uniform_x(10, gen);
    const std::vector<BlockShape> shapes{{1, 2}};
    Rng r1(9), r2(9);
    const auto res = assign_fine_discrete_eta(x, [](std::span<const double>) { return 0.5; }, shapes,
                                              BlockingMethod::sorted_scalar, 0, r1);
    CHECK(res.assignment == assign_fine(block_sorted(x, 0, {1, 2}), r2));
}

TEST_CASE("draw_design is deterministic for every kind") {
    Rng gen(10);
    const auto x = uniform_x(40, gen);
    std::vector<DesignSpec> specs(4);
    specs[0].kind = DesignKind::iid;
    specs[1].kind = DesignKind::complete;
    specs[2].kind = DesignKind::coarse_stratified;
    specs[2].strata_fn = [](std::span<const double> r) { return r[0] < 0.5 ? 0 : 1; };
    specs[3].kind = DesignKind::fine_stratified;
    for (const auto& spec : specs) {
        Rng a(77), b(77);
        const auto da = draw_design(spec, x, a);
        const auto db = draw_design(spec, x, b);
        CHECK(da.assignment == db.assignment);
        CHECK(da.partition.has_value() == (spec.kind == DesignKind::fine_stratified));
    }
    DesignSpec bad;
    bad.shape = {1, 3};
    Rng r(1);
    CHECK_THROWS_AS(draw_design(bad, x, r), Error);
}
