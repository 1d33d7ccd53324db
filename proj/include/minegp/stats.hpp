#pragma once

// Standard-normal pdf/cdf/quantile with tail-safe log-scale variants.
// Everything here is deterministic scalar math; no global state.

namespace minegp {

double norm_pdf(double z);
double log_norm_pdf(double z);

// Phi(z), accurate in both tails (erfc-based).
double norm_cdf(double z);

// log Phi(z); switches to an asymptotic Mills-ratio expansion deep in the
// lower tail where erfc underflows, so it is finite for all finite z.
double norm_cdf_log(double z);

// Phi^{-1}(p), p in (0,1). Wichura-style rational approximation, |err| ~ 1e-15.
double norm_quantile(double p);

// Phi^{-1}(exp(logp)) for logp <= 0, usable far beyond where exp(logp)
// underflows (Newton refinement on log Phi).
double norm_quantile_from_log(double logp);

}  // namespace minegp
