#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "stratkit/parallel.hpp"
#include "stratkit/variance.hpp"

namespace stratkit::variance {
namespace {

constexpr std::array<unsigned, 16> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
constexpr std::uint64_t kChunk = 1 << 16;

struct Sums {
    double f_lo = 0.0;   // averaged moment at theta - h (or at theta_a in the bracketing sweep)
    double f_mid = 0.0;  // at theta
    double f_hi = 0.0;   // at theta + h
    double second = 0.0;
    double gap = 0.0;

    void add(const Sums& o) {
        f_lo += o.f_lo;
        f_mid += o.f_mid;
        f_hi += o.f_hi;
        second += o.second;
        gap += o.gap;
    }
};

class Sweep {
  public:
    Sweep(const PotentialSampler& sampler, const moments::MomentModel& model, double eta, const QuasiMcOptions& opt)
        : sampler_(sampler), model_(model), eta_(eta), opt_(opt) {
        const int dims = sampler.x_uniforms() + 2 * sampler.noise_uniforms();
        if (dims > static_cast<int>(kPrimes.size())) {
            throw Error(ErrorKind::InvalidArgument, "sampler needs more Halton dimensions than supported");
        }
        if (sampler.response_dim() != model.response_dim()) {
            throw Error(ErrorKind::LengthMismatch, "sampler and moment disagree on the response dimension");
        }
    }

    // Averages over the point set. With `full`, also second moments at `mid`.
    Sums run(double lo, double mid, double hi, bool full) const {
        const std::uint64_t chunks = (opt_.draws + kChunk - 1) / kChunk;
        std::vector<Sums> parts(chunks);
        parallel_for(chunks, resolve_threads(opt_.threads), [&](std::size_t c) {
            parts[c] = chunk(c, lo, mid, hi, full);
        });
        Sums total;
        for (const auto& p : parts) total.add(p);
        const double inv = 1.0 / static_cast<double>(opt_.draws);
        total.f_lo *= inv;
        total.f_mid *= inv;
        total.f_hi *= inv;
        total.second *= inv;
        total.gap *= inv;
        return total;
    }

  private:
    double averaged(std::span<const double> x, std::span<const double> r1, std::span<const double> r0,
                    double theta) const {
        ThetaVec t(1);
        t(0) = theta;
        return eta_ * model_.evaluate(x, 1, r1, t, eta_)(0) + (1.0 - eta_) * model_.evaluate(x, 0, r0, t, eta_)(0);
    }

    Sums chunk(std::size_t c, double lo, double mid, double hi, bool full) const {
        const int xu = sampler_.x_uniforms();
        const int nu = sampler_.noise_uniforms();
        const auto rd = static_cast<std::size_t>(sampler_.response_dim());
        std::vector<double> u(static_cast<std::size_t>(xu + 2 * nu));
        std::vector<double> x(static_cast<std::size_t>(sampler_.x_dim()));
        std::vector<double> r1(rd), r0(rd), s1(rd), s0(rd);
        const std::span<const double> us(u);
        ThetaVec t(1);
        t(0) = mid;

        Sums s;
        const std::uint64_t first = c * kChunk;
        const std::uint64_t last = std::min<std::uint64_t>(first + kChunk, opt_.draws);
        for (std::uint64_t i = first; i < last; ++i) {
            const std::uint64_t index = opt_.start + i;
            for (std::size_t d = 0; d < u.size(); ++d) u[d] = radical_inverse(index, kPrimes[d]);
            sampler_.draw_x(us.subspan(0, static_cast<std::size_t>(xu)), x);
            sampler_.draw_responses(x, us.subspan(static_cast<std::size_t>(xu), static_cast<std::size_t>(nu)), r1, r0);
            s.f_lo += averaged(x, r1, r0, lo);
            s.f_hi += averaged(x, r1, r0, hi);
            if (!full) continue;
            const double m1 = model_.evaluate(x, 1, r1, t, eta_)(0);
            const double m0 = model_.evaluate(x, 0, r0, t, eta_)(0);
            s.f_mid += eta_ * m1 + (1.0 - eta_) * m0;
            s.second += eta_ * m1 * m1 + (1.0 - eta_) * m0 * m0;
            sampler_.draw_responses(
                x, us.subspan(static_cast<std::size_t>(xu + nu), static_cast<std::size_t>(nu)), s1, s0);
            const double n1 = model_.evaluate(x, 1, s1, t, eta_)(0);
            const double n0 = model_.evaluate(x, 0, s0, t, eta_)(0);
            s.gap += (m1 - m0) * (n1 - n0);
        }
        return s;
    }

    const PotentialSampler& sampler_;
    const moments::MomentModel& model_;
    double eta_;
    QuasiMcOptions opt_;
};

}  // namespace

double radical_inverse(std::uint64_t index, unsigned base) {
    const double inv = 1.0 / static_cast<double>(base);
    double scale = inv;
    double result = 0.0;
    while (index > 0) {
        result += static_cast<double>(index % base) * scale;
        index /= base;
        scale *= inv;
    }
    return result;
}

OracleVariances quasi_mc(const PotentialSampler& sampler, const moments::MomentModel& model, double eta,
                         const QuasiMcOptions& options) {
    if (model.dim() != 1) throw Error(ErrorKind::NonScalarParameter, "oracle needs a scalar parameter");
    if (!(eta > 0.0 && eta < 1.0)) throw Error(ErrorKind::EtaOutOfRange, "eta must lie in (0, 1)");
    if (options.draws < 2) throw Error(ErrorKind::InvalidArgument, "oracle needs at least two draws");
    const Sweep sweep(sampler, model, eta, options);

    // Secant on the averaged moment; exact after one step for affine moments.
    double a = 0.0, b = 1.0;
    Sums first = sweep.run(a, 0.0, b, false);
    double fa = first.f_lo, fb = first.f_hi;
    double theta = 0.0;
    Sums final;
    double h = 0.0;
    for (int iter = 0;; ++iter) {
        if (fb == fa) throw Error(ErrorKind::NoConvergence, "oracle moment is flat in theta");
        theta = b - fb * (b - a) / (fb - fa);
        h = 1e-4 * std::max(1.0, std::abs(theta));
        final = sweep.run(theta - h, theta, theta + h, true);
        const double scale = std::abs(fa) + std::abs(fb) + 1.0;
        if (std::abs(final.f_mid) <= 1e-8 * scale || iter >= 50) {
            if (iter >= 50) throw Error(ErrorKind::NoConvergence, "oracle secant did not converge");
            break;
        }
        a = b;
        fa = fb;
        b = theta;
        fb = final.f_mid;
    }

    OracleVariances out;
    out.method = OracleMethod::quasi_mc;
    out.draws = options.draws;
    out.theta0 = theta;
    out.m = (final.f_hi - final.f_lo) / (2.0 * h);
    const double m2 = out.m * out.m;
    out.v = final.second / m2;
    out.v_star = out.v - eta * (1.0 - eta) * final.gap / m2;
    out.ratio = out.v_star / out.v;
    return out;
}

}  // namespace stratkit::variance
