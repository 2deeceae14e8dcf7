#include "stratkit/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace stratkit::design {
namespace {

void require_divisible(std::size_t n, std::size_t k) {
    if (k == 0 || n % k != 0) {
        throw Error(ErrorKind::NotDivisible,
                    "n=" + std::to_string(n) + " is not divisible by k=" + std::to_string(k));
    }
}

void require_shape(BlockShape shape) {
    if (shape.k < 2 || shape.l < 1 || shape.l >= shape.k) {
        throw Error(ErrorKind::InvalidArgument, "block shape requires 1 <= l < k");
    }
}

double squared_distance(const RowMatrix& x, std::size_t i, std::size_t j) {
    return (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).squaredNorm();
}

// Partial Fisher-Yates: the first `take` entries become a uniform subset.
void shuffle_prefix(std::vector<std::size_t>& items, std::size_t take, Rng& rng) {
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
        std::swap(items[i], items[j]);
    }
}

}  // namespace

BlockPartition block_sorted(const RowMatrix& x, std::size_t coordinate, BlockShape shape) {
    require_shape(shape);
    const auto n = static_cast<std::size_t>(x.rows());
    if (coordinate >= static_cast<std::size_t>(x.cols())) {
        throw Error(ErrorKind::InvalidArgument, "coordinate " + std::to_string(coordinate) + " out of range");
    }
    require_divisible(n, shape.k);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto col = static_cast<Eigen::Index>(coordinate);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return x(static_cast<Eigen::Index>(i), col) < x(static_cast<Eigen::Index>(j), col);
    });
    BlockPartition out;
    out.shape = shape;
    out.blocks.reserve(n / shape.k);
    for (std::size_t start = 0; start < n; start += shape.k) {
        out.blocks.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                order.begin() + static_cast<std::ptrdiff_t>(start + shape.k));
    }
    return out;
}

BlockPartition block_greedy(const RowMatrix& x, BlockShape shape) {
    require_shape(shape);
    const auto n = static_cast<std::size_t>(x.rows());
    require_divisible(n, shape.k);
    std::vector<char> used(n, 0);
    std::vector<std::pair<double, std::size_t>> candidates;
    candidates.reserve(n);

    BlockPartition out;
    out.shape = shape;
    std::size_t seed = 0;
    for (std::size_t made = 0; made < n / shape.k; ++made) {
        while (used[seed]) ++seed;
        candidates.clear();
        for (std::size_t j = seed + 1; j < n; ++j) {
            if (!used[j]) candidates.emplace_back(squared_distance(x, seed, j), j);
        }
        const std::size_t need = shape.k - 1;
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(need), candidates.end());
        std::vector<std::size_t> block{seed};
        used[seed] = 1;
        for (std::size_t c = 0; c < need; ++c) {
            block.push_back(candidates[c].second);
            used[candidates[c].second] = 1;
        }
        out.blocks.push_back(std::move(block));
    }
    return out;
}

double max_block_discrepancy(const RowMatrix& x, const BlockPartition& partition) {
    const auto n = static_cast<std::size_t>(x.rows());
    check_partition(partition, n);
    double total = 0.0;
    for (const auto& block : partition.blocks) {
        double worst = 0.0;
        for (std::size_t p = 0; p < block.size(); ++p) {
            for (std::size_t q = p + 1; q < block.size(); ++q) {
                worst = std::max(worst, squared_distance(x, block[p], block[q]));
            }
        }
        total += worst;
    }
    return total / static_cast<double>(n);
}

std::vector<int> assign_fine(const BlockPartition& partition, Rng& rng) {
    require_shape(partition.shape);
    std::vector<int> a(partition.unit_count(), 0);
    std::vector<std::size_t> scratch;
    for (const auto& block : partition.blocks) {
        if (block.size() != partition.shape.k) {
            throw Error(ErrorKind::InvalidArgument, "block size differs from k");
        }
        scratch.assign(block.begin(), block.end());
        shuffle_prefix(scratch, partition.shape.l, rng);
        for (std::size_t t = 0; t < partition.shape.l; ++t) {
            if (scratch[t] >= a.size()) throw Error(ErrorKind::InvalidArgument, "unit index out of range");
            a[scratch[t]] = 1;
        }
    }
    return a;
}

std::vector<int> assign_iid(std::size_t n, double eta, Rng& rng) {
    if (!(eta > 0.0 && eta < 1.0)) throw Error(ErrorKind::EtaOutOfRange, "eta must lie in (0, 1)");
    std::vector<int> a(n);
    for (auto& ai : a) ai = rng.bernoulli(eta) ? 1 : 0;
    return a;
}

std::vector<int> assign_complete(std::size_t n, double eta, Rng& rng) {
    if (!(eta > 0.0 && eta < 1.0)) throw Error(ErrorKind::EtaOutOfRange, "eta must lie in (0, 1)");
    const double target = eta * static_cast<double>(n);
    const double rounded = std::round(target);
    if (std::abs(target - rounded) > 1e-9) {
        throw Error(ErrorKind::NonIntegralCount,
                    "eta*n=" + std::to_string(target) + " is not an integer for n=" + std::to_string(n));
    }
    std::vector<std::size_t> units(n);
    std::iota(units.begin(), units.end(), std::size_t{0});
    const auto treated = static_cast<std::size_t>(rounded);
    shuffle_prefix(units, treated, rng);
    std::vector<int> a(n, 0);
    for (std::size_t t = 0; t < treated; ++t) a[units[t]] = 1;
    return a;
}

std::vector<int> assign_coarse(std::span<const int> strata, double eta, Rng& rng) {
    if (!(eta > 0.0 && eta < 1.0)) throw Error(ErrorKind::EtaOutOfRange, "eta must lie in (0, 1)");
    if (strata.empty()) throw Error(ErrorKind::EmptyStratum, "no units to stratify");
    std::vector<int> labels(strata.begin(), strata.end());
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());

    std::vector<int> a(strata.size(), 0);
    std::vector<std::size_t> members;
    for (int label : labels) {
        members.clear();
        for (std::size_t i = 0; i < strata.size(); ++i) {
            if (strata[i] == label) members.push_back(i);
        }
        if (members.empty()) throw Error(ErrorKind::EmptyStratum, "stratum " + std::to_string(label));
        const double target = eta * static_cast<double>(members.size());
        double whole = std::floor(target + 1e-9);
        const double frac = target - whole;
        if (frac > 1e-9 && rng.bernoulli(frac)) whole += 1.0;
        const auto treated = static_cast<std::size_t>(whole);
        shuffle_prefix(members, treated, rng);
        for (std::size_t t = 0; t < treated; ++t) a[members[t]] = 1;
    }
    return a;
}

DiscreteEtaAssignment assign_fine_discrete_eta(const RowMatrix& x,
                                               const std::function<double(std::span<const double>)>& eta_of,
                                               std::span<const BlockShape> shapes, BlockingMethod method,
                                               std::size_t coordinate, Rng& rng) {
    const auto n = static_cast<std::size_t>(x.rows());
    std::vector<std::vector<std::size_t>> members(shapes.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double eta_i = eta_of(row_span(x, static_cast<Eigen::Index>(i)));
        std::size_t s = 0;
        while (s < shapes.size() && std::abs(shapes[s].eta() - eta_i) > 1e-12) ++s;
        if (s == shapes.size()) {
            throw Error(ErrorKind::InvalidArgument,
                        "unit " + std::to_string(i + 1) + " has eta=" + std::to_string(eta_i) +
                            " matching no block shape");
        }
        members[s].push_back(i);
    }

    DiscreteEtaAssignment out;
    out.assignment.assign(n, 0);
    for (std::size_t s = 0; s < shapes.size(); ++s) {
        const auto& idx = members[s];
        if (idx.size() % shapes[s].k != 0) {
            throw Error(ErrorKind::NotDivisible, "eta-stratum " + std::to_string(s + 1) + " has " +
                                                     std::to_string(idx.size()) + " units, not divisible by k=" +
                                                     std::to_string(shapes[s].k));
        }
        RowMatrix sub(static_cast<Eigen::Index>(idx.size()), x.cols());
        for (std::size_t t = 0; t < idx.size(); ++t) sub.row(static_cast<Eigen::Index>(t)) = x.row(static_cast<Eigen::Index>(idx[t]));
        BlockPartition local = idx.empty() ? BlockPartition{{}, shapes[s]}
                               : method == BlockingMethod::sorted_scalar ? block_sorted(sub, coordinate, shapes[s])
                                                                         : block_greedy(sub, shapes[s]);
        const auto draw = assign_fine(local, rng);
        for (std::size_t t = 0; t < idx.size(); ++t) out.assignment[idx[t]] = draw[t];
        for (auto& block : local.blocks) {
            for (auto& unit : block) unit = idx[unit];
        }
        out.partitions.push_back(std::move(local));
    }
    return out;
}

DesignDraw draw_design(const DesignSpec& spec, const RowMatrix& x, Rng& rng) {
    const auto n = static_cast<std::size_t>(x.rows());
    DesignDraw out;
    switch (spec.kind) {
        case DesignKind::iid:
            out.assignment = assign_iid(n, spec.eta, rng);
            break;
        case DesignKind::complete:
            out.assignment = assign_complete(n, spec.eta, rng);
            break;
        case DesignKind::coarse_stratified: {
            if (!spec.strata_fn) throw Error(ErrorKind::InvalidArgument, "coarse design needs a strata map");
            std::vector<int> strata(n);
            for (std::size_t i = 0; i < n; ++i) strata[i] = spec.strata_fn(row_span(x, static_cast<Eigen::Index>(i)));
            out.assignment = assign_coarse(strata, spec.eta, rng);
            break;
        }
        case DesignKind::fine_stratified: {
            if (std::abs(spec.shape.eta() - spec.eta) > 1e-12) {
                throw Error(ErrorKind::InvalidArgument, "fine stratification needs l/k == eta");
            }
            BlockPartition p = spec.blocking == BlockingMethod::sorted_scalar
                                   ? block_sorted(x, spec.coordinate, spec.shape)
                                   : block_greedy(x, spec.shape);
            out.assignment = assign_fine(p, rng);
            out.partition = std::move(p);
            break;
        }
    }
    return out;
}

}  // namespace stratkit::design
