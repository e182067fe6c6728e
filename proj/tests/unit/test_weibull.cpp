#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "grudw/weibull.hpp"
#include "helpers.hpp"

using namespace grudw;
using testing::rel_err;

TEST_CASE("weibull params reject invalid shape and scale") {
  CHECK_THROWS_AS(WeibullParams(0.0, 1.0), InvalidParameter);
  CHECK_THROWS_AS(WeibullParams(1.0, -1.0), InvalidParameter);
  CHECK_THROWS_AS(WeibullParams(std::nan(""), 1.0), InvalidParameter);
  CHECK_THROWS_AS(WeibullParams(1.0, std::numeric_limits<double>::infinity()), InvalidParameter);
}

TEST_CASE("log_pdf closed forms") {
  CHECK(log_pdf({2, 1}, 1) == doctest::Approx(std::log(2.0) - 1.0).epsilon(1e-12));
  // exponential density at the floored origin
  CHECK(log_pdf({1, 1}, 0) == doctest::Approx(-kTauEps).epsilon(1e-12));
}

TEST_CASE("log_pdf matches the numerical derivative of the cdf") {
  const WeibullParams p(0.5, 2.0);
  const double h = 1e-5;
  const auto cdf = [&](double t) { return 1.0 - std::exp(-std::pow(t / 2.0, 0.5)); };
  const double numeric = (cdf(3.0 + h) - cdf(3.0 - h)) / (2 * h);
  CHECK(rel_err(std::exp(log_pdf(p, 3.0)), numeric) < 1e-6);
}

TEST_CASE("survival closed forms") {
  CHECK(survival({0.7, 3.1}, 0) == 1.0);
  CHECK(survival({1, 2}, 2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(survival({2, 3}, 6) == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));
}

TEST_CASE("quantile_time closed forms and domain") {
  CHECK(quantile_time({1, 1}, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(median_time({2, 3}) == doctest::Approx(3.0 * std::sqrt(std::log(2.0))).epsilon(1e-12));
  CHECK_THROWS_AS(quantile_time({1, 1}, 0.0), DomainError);
  CHECK_THROWS_AS(quantile_time({1, 1}, 1.0), DomainError);
  CHECK_THROWS_AS(quantile_time({1, 1}, 1.5), DomainError);
}

TEST_CASE("quantile_time agrees with bisection on survival") {
  const WeibullParams p(0.8, 5.0);
  double lo = 0.0, hi = 1000.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (survival(p, mid) > 0.25) lo = mid; else hi = mid;
  }
  CHECK(rel_err(quantile_time(p, 0.25), 0.5 * (lo + hi)) < 1e-8);
}

TEST_CASE("hazard closed forms") {
  for (double t : {0.1, 1.0, 7.0}) CHECK(hazard({1, 2}, t) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(hazard({2, 1}, 3) == doctest::Approx(6.0).epsilon(1e-12));
  const WeibullParams p(1.5, 2.0);
  CHECK(rel_err(hazard(p, 1.0), std::exp(log_pdf(p, 1.0)) / survival(p, 1.0)) < 1e-10);
}

TEST_CASE("cumulative hazard and censored tail closed forms") {
  CHECK(cumulative_hazard({1, 1}, 2) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(cumulative_hazard({1.3, 0.4}, 0) == 0.0);
  CHECK(cumulative_hazard({2, 4}, 2) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(censored_neg_log_tail({1, 1}, 2) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(censored_neg_log_tail({0.6, 2.2}, 0) == 0.0);
  CHECK(censored_neg_log_tail({3, 2}, 1) == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("finite upper bound on the censored tail") {
  const WeibullParams p(1.4, 2.0);
  const double c = 1.0, u = 3.0;
  const double direct = -std::log(survival(p, c) - survival(p, u));
  CHECK(rel_err(censored_neg_log_tail(p, c, u), direct) < 1e-12);
  CHECK(censored_neg_log_tail(p, c, u) > censored_neg_log_tail(p, c));
}

TEST_CASE("distribution identities over random points") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lk(std::log(0.05), std::log(20.0));
  std::uniform_real_distribution<double> lt(std::log(1e-3), std::log(50.0));
  std::uniform_real_distribution<double> us(1e-6, 1.0 - 1e-6);
  for (int i = 0; i < 1000; ++i) {
    const WeibullParams p(std::exp(lk(rng)), std::exp(lk(rng)));
    const double tau = std::exp(lt(rng));
    const double s = us(rng);
    CHECK(rel_err(std::exp(log_pdf(p, tau)), hazard(p, tau) * survival(p, tau)) < 1e-10);
    CHECK(rel_err(survival(p, quantile_time(p, s)), s) < 1e-8);
    // -ln S loses digits to cancellation once S rounds near 1
    const double H = cumulative_hazard(p, tau);
    if (H > 1e-5 && H < 700.0) CHECK(rel_err(H, -std::log(survival(p, tau))) < 1e-10);
    else if (H <= 1e-5) CHECK(std::abs(H + std::log(survival(p, tau))) < 1e-15);
    CHECK(censored_neg_log_tail(p, tau) == cumulative_hazard(p, tau));
    CHECK(survival(p, tau * 1.1) <= survival(p, tau));
    CHECK(survival(WeibullParams(p.kappa(), p.lambda() * 1.1), tau) >= survival(p, tau));
  }
}

TEST_CASE("derived quantities stay finite across the supported range") {
  for (double k : {1e-6, 1e-3, 1.0, 1e3, 1e6}) {
    for (double l : {1e-6, 1.0, 1e6}) {
      for (double t : {1e-6, 1.0, 1e3}) {
        const WeibullParams p(k, l);
        CHECK(std::isfinite(log_pdf(p, t)));
        CHECK(std::isfinite(survival(p, t)));
        CHECK(std::isfinite(cumulative_hazard(p, t)));
        CHECK(std::isfinite(hazard(p, t)));
        CHECK(std::isfinite(censored_neg_log_tail(p, t)));
        CHECK(std::isfinite(quantile_time(p, 0.5)));
      }
    }
  }
}

namespace {

template <typename F>
ParamGrad numeric_grad(F f, const WeibullParams& p) {
  const double hk = 1e-5 * p.kappa();
  const double hl = 1e-5 * p.lambda();
  return {(f(WeibullParams(p.kappa() + hk, p.lambda())) - f(WeibullParams(p.kappa() - hk, p.lambda()))) / (2 * hk),
          (f(WeibullParams(p.kappa(), p.lambda() + hl)) - f(WeibullParams(p.kappa(), p.lambda() - hl))) / (2 * hl)};
}

void check_grad(const ParamGrad& a, const ParamGrad& n, double tol) {
  CHECK(rel_err(a.d_kappa, n.d_kappa, 1e-8) < tol);
  CHECK(rel_err(a.d_lambda, n.d_lambda, 1e-8) < tol);
}

}  // namespace

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> k(0.3, 4.0), l(0.3, 5.0), t(0.05, 6.0), s(0.05, 0.95);
  for (int i = 0; i < 100; ++i) {
    const WeibullParams p(k(rng), l(rng));
    const double tau = t(rng);
    check_grad(log_pdf_grad(p, tau), numeric_grad([&](const WeibullParams& q) { return log_pdf(q, tau); }, p), 1e-5);
    check_grad(censored_neg_log_tail_grad(p, tau),
               numeric_grad([&](const WeibullParams& q) { return censored_neg_log_tail(q, tau); }, p), 1e-5);
    const double upper = tau * 1.7;
    check_grad(censored_neg_log_tail_grad(p, tau, upper),
               numeric_grad([&](const WeibullParams& q) { return censored_neg_log_tail(q, tau, upper); }, p), 1e-5);
    const double sv = s(rng);
    check_grad(quantile_time_grad(p, sv),
               numeric_grad([&](const WeibullParams& q) { return quantile_time(q, sv); }, p), 1e-5);
  }
}
