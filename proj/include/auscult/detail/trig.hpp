#pragma once

#include <cmath>

namespace auscult::detail {

// Polynomial sin/cos and atan2 for the phase-vocoder inner loop. Octant
// range reduction plus degree-7/8 minimax kernels; absolute error stays
// below ~1e-10, far tighter than resynthesis needs, at a fraction of the
// libm cost.

inline void fast_sincos(double x, double& s, double& c) {
  constexpr double kTwoOverPi = 0.6366197723675814;
  constexpr double kPiOver2Hi = 1.5707963267948966;
  constexpr double kPiOver2Lo = 6.123233995736766e-17;
  const double kd = std::nearbyint(x * kTwoOverPi);
  const int k = static_cast<int>(kd) & 3;
  const double y = (x - kd * kPiOver2Hi) - kd * kPiOver2Lo;  // y in [-pi/4, pi/4]
  const double y2 = y * y;
  // sin kernel on [-pi/4, pi/4]
  const double sp = y * (1.0 + y2 * (-1.6666666666666632e-01 +
                         y2 * (8.3333333333224895e-03 +
                         y2 * (-1.9841269829837758e-04 +
                         y2 * (2.7557313621385676e-06 +
                         y2 * (-2.5050747762850355e-08 + y2 * 1.5896910175455765e-10))))));
  // cos kernel
  const double cp = 1.0 + y2 * (-5.0000000000000000e-01 +
                     y2 * (4.1666666666666019e-02 +
                     y2 * (-1.3888888888873056e-03 +
                     y2 * (2.4801587288851704e-05 +
                     y2 * (-2.7557314284120030e-07 +
                     y2 * (2.0875723212981748e-09 - y2 * 1.1359647557788195e-11))))));
  switch (k) {
    case 0: s = sp; c = cp; break;
    case 1: s = cp; c = -sp; break;
    case 2: s = -sp; c = -cp; break;
    default: s = -cp; c = sp; break;
  }
}

inline double fast_atan(double z) {
  // |z| <= 1; least-squares fit in z^2 on Chebyshev nodes, max error ~8e-12
  const double z2 = z * z;
  return z * (9.99999999996503353e-01 +
         z2 * (-3.33333331035057245e-01 +
         z2 * (1.99999845624406536e-01 +
         z2 * (-1.42853315943849174e-01 +
         z2 * (1.11062642592676952e-01 +
         z2 * (-9.05436301698576002e-02 +
         z2 * (7.51323369233709293e-02 +
         z2 * (-6.06349744850700062e-02 +
         z2 * (4.42830421900274537e-02 +
         z2 * (-2.66563541288538618e-02 +
         z2 * (1.18503795830424714e-02 +
         z2 * (-3.35367565277011831e-03 +
         z2 * 4.45197911121945238e-04))))))))))));
}

inline double fast_atan2(double y, double x) {
  constexpr double kPiLocal = 3.14159265358979323846;
  constexpr double kPiOver2 = 1.5707963267948966;
  if (x == 0.0 && y == 0.0) return 0.0;
  const double ax = std::fabs(x), ay = std::fabs(y);
  double r;
  if (ax >= ay) {
    r = fast_atan(ay / ax);
  } else {
    r = kPiOver2 - fast_atan(ax / ay);
  }
  if (x < 0.0) r = kPiLocal - r;
  return (y < 0.0) ? -r : r;
}

}  // namespace auscult::detail
