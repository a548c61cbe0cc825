#include "krlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace krlab::numerics {

void softmax_inplace(std::span<double> z) {
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - peak);
    total += v;
  }
  const double inv = 1.0 / total;
  for (double& v : z) v *= inv;
}

Simplex softmax(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("softmax: empty input");
  Simplex out{std::vector<double>(z.begin(), z.end())};
  softmax_inplace(out.probs);
  return out;
}

Eigen::MatrixXd softmax_jacobian(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("softmax_jacobian: empty input");
  const auto alpha = softmax(z).probs;
  const Eigen::Map<const Eigen::VectorXd> a(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  Eigen::MatrixXd jac = -a * a.transpose();
  jac.diagonal() += a;
  return jac;
}

Eigen::MatrixXd clip_frobenius(const Eigen::MatrixXd& a, double bound) {
  if (!(bound > 0.0)) throw std::invalid_argument("clip_frobenius: bound must be positive");
  const double norm = a.norm();
  // a rescaled matrix can overshoot by an ulp; accept that so clipping is idempotent
  if (norm <= bound * (1.0 + 1e-14)) return a;
  return a * (bound / norm);
}

Eigen::MatrixXd clip_token_norms(Eigen::MatrixXd x) {
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    const double norm = x.col(t).norm();
    if (norm > 1.0) x.col(t) /= norm;
  }
  return x;
}

PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw std::invalid_argument("fit_power_law: need at least two points");
  std::vector<double> lx, ly;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) throw std::invalid_argument("fit_power_law: coordinates must be positive");
    lx.push_back(std::log(x));
    ly.push_back(std::log(y));
  }
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_power_law: x values must be distinct");
  PowerLawFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  // Constant y is fit exactly by a flat line.
  fit.r_squared = syy == 0.0 ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
  return fit;
}

ConfidenceInterval mean_ci(std::span<const double> samples, double level) {
  if (samples.size() < 2) throw std::invalid_argument("mean_ci: need at least two samples");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("mean_ci: level must lie in (0,1)");
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double sem = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  const boost::math::students_t dist(n - 1.0);
  const double t = boost::math::quantile(dist, 0.5 + level / 2.0);
  return {mean, mean - t * sem, mean + t * sem};
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace krlab::numerics
