#pragma once

#include <limits>
#include <stdexcept>

namespace grudw {

// Times below this floor (years) are clamped before any log or power is taken.
inline constexpr double kTauEps = 1e-6;

class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Two-parameter Weibull distribution over remaining time in years.
/// Shape and scale must be finite and strictly positive.
class WeibullParams {
 public:
  WeibullParams(double kappa, double lambda);

  double kappa() const { return kappa_; }
  double lambda() const { return lambda_; }

 private:
  double kappa_;
  double lambda_;
};

// d(value)/d(kappa), d(value)/d(lambda)
struct ParamGrad {
  double d_kappa = 0.0;
  double d_lambda = 0.0;
};

double log_pdf(const WeibullParams& p, double tau);
double survival(const WeibullParams& p, double tau);
double hazard(const WeibullParams& p, double tau);
double cumulative_hazard(const WeibullParams& p, double tau);

/// Time at which survival drops to `s`. The median is quantile_time(p, 0.5).
double quantile_time(const WeibullParams& p, double s);
inline double median_time(const WeibullParams& p) { return quantile_time(p, 0.5); }

/// -ln(F(upper) - F(c)). With the default infinite upper bound this is (c/lambda)^kappa.
double censored_neg_log_tail(const WeibullParams& p, double c,
                             double upper = std::numeric_limits<double>::infinity());

ParamGrad log_pdf_grad(const WeibullParams& p, double tau);
ParamGrad censored_neg_log_tail_grad(const WeibullParams& p, double c,
                                     double upper = std::numeric_limits<double>::infinity());
ParamGrad quantile_time_grad(const WeibullParams& p, double s);

}  // namespace grudw
