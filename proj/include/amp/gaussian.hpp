#pragma once

// Standard normal density, distribution and quantile. Every module that needs
// phi or Phi goes through these so constants agree bit-for-bit.

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace amp::gauss {

template <typename Scalar>
inline Scalar pdf(Scalar z) {
    return std::exp(-z * z / Scalar(2)) * std::numbers::inv_sqrtpi_v<Scalar> / std::numbers::sqrt2_v<Scalar>;
}

// Phi(z) via erfc keeps full relative accuracy in the lower tail.
template <typename Scalar>
inline Scalar cdf(Scalar z) {
    return Scalar(0.5) * std::erfc(-z / std::numbers::sqrt2_v<Scalar>);
}

// Upper tail 1 - Phi(z) = Phi(-z).
template <typename Scalar>
inline Scalar sf(Scalar z) {
    return cdf(-z);
}

template <typename Scalar>
inline Scalar quantile(Scalar p) {
    return -std::numbers::sqrt2_v<Scalar> * boost::math::erfc_inv(Scalar(2) * p);
}

// Phi^{-1}(3/4): median of |Z|.
inline const double kMedianAbsNormal = quantile(0.75);

} // namespace amp::gauss
