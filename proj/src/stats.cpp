#include "minegp/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace minegp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112353;
constexpr double kSqrt2 = 1.4142135623730950488016887242096981;
}  // namespace

double norm_pdf(double z) { return std::exp(-0.5 * z * z - 0.5 * kLog2Pi); }

double log_norm_pdf(double z) { return -0.5 * z * z - 0.5 * kLog2Pi; }

double norm_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

double norm_cdf_log(double z) {
  if (z > -20.0) {
    // erfc is accurate here and 0.5*erfc(20/sqrt2) ~ 2.8e-89 does not underflow
    return std::log(0.5 * std::erfc(-z / kSqrt2));
  }
  // log Phi(z) = log phi(z) - log(-z) + log(1 - 1/z^2 + 3/z^4 - 15/z^6 + 105/z^8 - ...)
  const double z2 = z * z;
  const double inv2 = 1.0 / z2;
  const double series = 1.0 + inv2 * (-1.0 + inv2 * (3.0 + inv2 * (-15.0 + inv2 * 105.0)));
  return log_norm_pdf(z) - std::log(-z) + std::log(series);
}

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("norm_quantile: p outside [0,1]");
  }
  // Wichura's PPND16 rational approximations.
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        q * (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                   6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
               1.3314166789178437745e2) * r + 3.3871328727963666080e0);
    const double den =
        (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
              3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
            5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
          4.2313330701600911252e1) * r + 1.0);
    return num / den;
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
    val = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    val = num / den;
  }
  return (q < 0.0) ? -val : val;
}

double norm_quantile_from_log(double logp) {
  if (logp > 0.0) throw std::invalid_argument("norm_quantile_from_log: logp > 0");
  if (logp == 0.0) return std::numeric_limits<double>::infinity();
  if (logp > -36.0) return norm_quantile(std::exp(logp));
  // Deep lower tail. Asymptotic seed from logp ~ -z^2/2 - log(-z) - log(2pi)/2,
  // then Newton on F(z) = log Phi(z) - logp (F' = phi/Phi).
  double z = -std::sqrt(-2.0 * (logp + 0.5 * kLog2Pi));
  for (int pass = 0; pass < 4; ++pass) {
    z = -std::sqrt(std::max(1.0, -2.0 * (logp + 0.5 * kLog2Pi + std::log(-z))));
  }
  for (int it = 0; it < 64; ++it) {
    const double f = norm_cdf_log(z) - logp;
    const double fprime = std::exp(log_norm_pdf(z) - norm_cdf_log(z));
    const double step = f / fprime;
    z -= step;
    if (std::fabs(step) < 1e-12 * std::max(1.0, std::fabs(z))) break;
  }
  return z;
}

}  // namespace minegp
