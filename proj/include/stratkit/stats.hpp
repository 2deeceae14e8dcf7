#pragma once

#include <cstddef>
#include <span>

namespace stratkit {

double normal_cdf(double z);

/// Standard normal quantile. Acklam's rational approximation followed by one
/// Halley step, accurate to roughly machine precision on (0, 1).
double normal_quantile(double p);

double expit(double z);
double logit(double p);

/// Welford accumulator for mean and variance.
class RunningStats {
  public:
    void push(double value);
    void merge(const RunningStats& other);

    std::size_t count() const { return count_; }
    double mean() const { return mean_; }
    /// Unbiased sample variance; 0 for fewer than two observations.
    double variance() const;

  private:
    std::size_t count_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

double mean(std::span<const double> values);
double sample_variance(std::span<const double> values);

}  // namespace stratkit
