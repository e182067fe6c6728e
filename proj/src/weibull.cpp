#include "grudw/weibull.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace grudw {

namespace {

void check_time(double t, const char* what) {
  if (!(t >= 0.0) || std::isnan(t)) {
    throw DomainError(std::string(what) + " must be nonnegative, got " + std::to_string(t));
  }
}

double floored(double t) { return t < kTauEps ? kTauEps : t; }

// exp saturating at the largest finite double instead of overflowing.
double sat_exp(double x) {
  static const double cap = std::log(std::numeric_limits<double>::max());
  return x >= cap ? std::numeric_limits<double>::max() : std::exp(x);
}

// (t/lambda)^kappa evaluated as exp(kappa * (ln t - ln lambda)).
double scaled_power(const WeibullParams& p, double t) {
  return sat_exp(p.kappa() * (std::log(t) - std::log(p.lambda())));
}

}  // namespace

WeibullParams::WeibullParams(double kappa, double lambda) : kappa_(kappa), lambda_(lambda) {
  if (!std::isfinite(kappa) || !(kappa > 0.0)) {
    throw InvalidParameter("Weibull shape must be finite and positive, got " + std::to_string(kappa));
  }
  if (!std::isfinite(lambda) || !(lambda > 0.0)) {
    throw InvalidParameter("Weibull scale must be finite and positive, got " + std::to_string(lambda));
  }
}

double log_pdf(const WeibullParams& p, double tau) {
  check_time(tau, "tau");
  const double t = floored(tau);
  const double log_ratio = std::log(t) - std::log(p.lambda());
  return std::log(p.kappa()) - std::log(p.lambda()) + (p.kappa() - 1.0) * log_ratio -
         sat_exp(p.kappa() * log_ratio);
}

double survival(const WeibullParams& p, double tau) {
  check_time(tau, "tau");
  if (tau == 0.0) return 1.0;
  return std::exp(-scaled_power(p, tau));
}

double hazard(const WeibullParams& p, double tau) {
  check_time(tau, "tau");
  const double t = floored(tau);
  const double log_ratio = std::log(t) - std::log(p.lambda());
  return sat_exp(std::log(p.kappa()) - std::log(p.lambda()) + (p.kappa() - 1.0) * log_ratio);
}

double cumulative_hazard(const WeibullParams& p, double tau) {
  check_time(tau, "tau");
  if (tau == 0.0) return 0.0;
  return scaled_power(p, tau);
}

double quantile_time(const WeibullParams& p, double s) {
  if (!(s > 0.0 && s < 1.0)) {
    throw DomainError("survival probability must lie in (0,1), got " + std::to_string(s));
  }
  return sat_exp(std::log(p.lambda()) + std::log(-std::log(s)) / p.kappa());
}

double censored_neg_log_tail(const WeibullParams& p, double c, double upper) {
  check_time(c, "censoring time");
  if (c == 0.0 && std::isinf(upper)) return 0.0;
  const double zc = c == 0.0 ? 0.0 : scaled_power(p, floored(c));
  if (std::isinf(upper)) return zc;
  if (!(upper > c)) throw DomainError("tail upper bound must exceed the censoring time");
  const double zu = scaled_power(p, upper);
  // -ln(e^{-zc} - e^{-zu}) = zc - ln(1 - e^{-(zu - zc)})
  return zc - std::log(-std::expm1(-(zu - zc)));
}

ParamGrad log_pdf_grad(const WeibullParams& p, double tau) {
  check_time(tau, "tau");
  const double t = floored(tau);
  const double k = p.kappa();
  const double l = p.lambda();
  const double u = std::log(t) - std::log(l);
  const double z = std::exp(k * u);
  return {1.0 / k + u - z * u, -k * (1.0 - z) / l};
}

ParamGrad censored_neg_log_tail_grad(const WeibullParams& p, double c, double upper) {
  check_time(c, "censoring time");
  const double k = p.kappa();
  const double l = p.lambda();
  if (c == 0.0 && std::isinf(upper)) return {};
  const double cc = floored(c);
  const double uc = std::log(cc) - std::log(l);
  const double zc = std::exp(k * uc);
  ParamGrad gc{zc * uc, -k * zc / l};
  if (std::isinf(upper)) return gc;
  if (!(upper > c)) throw DomainError("tail upper bound must exceed the censoring time");
  const double uu = std::log(upper) - std::log(l);
  const double zu = std::exp(k * uu);
  ParamGrad gu{zu * uu, -k * zu / l};
  // d/dθ [zc - ln(1 - e^{-(zu-zc)})] = dzc - e^{-(zu-zc)}/(1-e^{-(zu-zc)}) * (dzu - dzc)
  const double ratio = std::exp(-(zu - zc)) / (-std::expm1(-(zu - zc)));
  return {gc.d_kappa - ratio * (gu.d_kappa - gc.d_kappa),
          gc.d_lambda - ratio * (gu.d_lambda - gc.d_lambda)};
}

ParamGrad quantile_time_grad(const WeibullParams& p, double s) {
  const double q = quantile_time(p, s);
  const double k = p.kappa();
  return {-q * std::log(-std::log(s)) / (k * k), q / p.lambda()};
}

}  // namespace grudw
