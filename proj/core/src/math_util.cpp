#include "blipvar/math_util.hpp"

#include "blipvar/errors.hpp"

namespace blipvar {

double sample_sd(const VectorXd& x) {
  const Eigen::Index n = x.size();
  if (n < 2) return 0.0;
  const double m = x.mean();
  const double ss = (x.array() - m).square().sum();
  return std::sqrt(ss / static_cast<double>(n - 1));
}

double sample_skewness(const VectorXd& x) {
  const Eigen::Index n = x.size();
  if (n < 3) return 0.0;
  const double m = x.mean();
  const auto c = (x.array() - m);
  const double m2 = c.square().mean();
  const double m3 = c.cube().mean();
  if (m2 <= 0.0) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

double sample_correlation(const VectorXd& x, const VectorXd& y) {
  const Eigen::Index n = x.size();
  if (n < 2 || y.size() != n) return 0.0;
  const double mx = x.mean(), my = y.mean();
  const auto cx = x.array() - mx;
  const auto cy = y.array() - my;
  const double sx = std::sqrt(cx.square().sum());
  const double sy = std::sqrt(cy.square().sum());
  if (sx <= 0.0 || sy <= 0.0) return 0.0;
  return (cx * cy).sum() / (sx * sy);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// AS 241 algorithm PPND16.
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ValidationError("normal_quantile: p must be in (0,1)");
  }
  const double q = p - 0.5;
  double r;
  if (std::abs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) *
                    r +
                4.5921953931549871457e+4) *
                   r +
               1.3731693765509461125e+4) *
                  r +
              1.9715909503065514427e+3) *
                 r +
             1.3314166789178437745e+2) *
                r +
            3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) *
                    r +
                2.1213794301586595867e+4) *
                   r +
               5.3941960214247511077e+3) *
                  r +
              6.8718700749205790830e+2) *
                 r +
             4.2313330701600911252e+1) *
                r +
            1.0);
  }
  r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) *
                   r +
               1.27045825245236838258e+0) *
                  r +
              3.64784832476320460504e+0) *
                 r +
             5.76949722146069140550e+0) *
                r +
            4.63033784615654529590e+0) *
               r +
           1.42343711074968357734e+0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) *
                   r +
               1.48103976427480074590e-1) *
                  r +
              6.89767334985100004550e-1) *
                 r +
             1.67638483018380384940e+0) *
                r +
            2.05319162663775882187e+0) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) *
                   r +
               2.65321895265761230930e-2) *
                  r +
              2.96560571828504891230e-1) *
                 r +
             1.78482653991729133580e+0) *
                r +
            5.46378491116411436990e+0) *
               r +
           6.65790464350110377720e+0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) *
                   r +
               7.86869131145613259100e-4) *
                  r +
              1.48753612908506148525e-2) *
                 r +
             1.36929880922735805310e-1) *
                r +
            5.99832206555887937690e-1) *
               r +
           1.0);
  }
  return (q < 0.0) ? -val : val;
}

double quasibinomial_loss(const VectorXd& y, const VectorXd& q) {
  if (y.size() != q.size()) {
    throw ValidationError("quasibinomial_loss: size mismatch");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double qi = clip_prob(q[i]);
    total -= y[i] * std::log(qi) + (1.0 - y[i]) * std::log(1.0 - qi);
  }
  return total / static_cast<double>(y.size());
}

}  // namespace blipvar
