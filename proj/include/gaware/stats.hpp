#pragma once

namespace gaware {

/// Inverse standard normal CDF (Wichura's AS 241, double precision).
double normal_quantile(double p);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace gaware
