#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "difflab/core/errors.hpp"
#include "difflab/scaling/fits.hpp"

namespace difflab {

namespace {

// Solves the 3x3 system A x = b by Gaussian elimination with partial pivoting.
void solve3(double a[3][3], double b[3], double x[3]) {
  int perm[3] = {0, 1, 2};
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::abs(a[perm[r]][col]) > std::abs(a[perm[pivot]][col])) pivot = r;
    }
    std::swap(perm[col], perm[pivot]);
    const double diag = a[perm[col]][col];
    if (diag == 0.0) throw NumericalError("fit_isoflop: singular normal equations");
    for (int r = col + 1; r < 3; ++r) {
      const double f = a[perm[r]][col] / diag;
      for (int c = col; c < 3; ++c) a[perm[r]][c] -= f * a[perm[col]][c];
      b[perm[r]] -= f * b[perm[col]];
    }
  }
  for (int col = 2; col >= 0; --col) {
    double acc = b[perm[col]];
    for (int c = col + 1; c < 3; ++c) acc -= a[perm[col]][c] * x[c];
    x[col] = acc / a[perm[col]][col];
  }
}

}  // namespace

IsoFit fit_isoflop(std::span<const SweepRecord> records) {
  std::set<double> distinct;
  for (const auto& r : records) {
    if (!(r.params_n > 0.0) || !(r.val_loss > 0.0)) {
      throw std::invalid_argument("fit_isoflop: params and loss must be positive");
    }
    distinct.insert(r.params_n);
  }
  if (distinct.size() < 3) {
    throw std::invalid_argument("fit_isoflop: need at least 3 distinct parameter counts");
  }
  // Normal equations for least squares on (u = log N, v = log loss),
  // v = a u^2 + b u + c.
  double s[5] = {0, 0, 0, 0, 0};  // sums of u^k
  double t0 = 0, t1 = 0, t2 = 0;  // sums of v u^k
  for (const auto& r : records) {
    const double u = std::log(r.params_n);
    const double v = std::log(r.val_loss);
    double up = 1.0;
    for (int k = 0; k <= 4; ++k) {
      s[k] += up;
      if (k <= 2) {
        (k == 0 ? t0 : k == 1 ? t1 : t2) += v * up;
      }
      up *= u;
    }
  }
  double a_mat[3][3] = {{s[4], s[3], s[2]}, {s[3], s[2], s[1]}, {s[2], s[1], s[0]}};
  double b_vec[3] = {t2, t1, t0};
  double coef[3];
  solve3(a_mat, b_vec, coef);
  IsoFit fit{coef[0], coef[1], coef[2], coef[0] > 0.0,
             std::numeric_limits<double>::quiet_NaN(),
             std::numeric_limits<double>::quiet_NaN()};
  if (fit.has_interior) {
    fit.n_star = std::exp(-fit.b_c / (2.0 * fit.a_c));
    fit.loss_star = std::exp(fit.c_c - fit.b_c * fit.b_c / (4.0 * fit.a_c));
  }
  return fit;
}

PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw std::invalid_argument("fit_power_law: need at least 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) {
      throw std::invalid_argument("fit_power_law: inputs must be positive");
    }
    const double lx = std::log(x);
    const double ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(points.size());
  const double denom = n * sxx - sx * sx;
  double exponent = 0.0;
  if (denom != 0.0) {
    exponent = (n * sxy - sx * sy) / denom;
  }
  const double intercept = (sy - exponent * sx) / n;
  double residual = 0.0;
  for (const auto& [x, y] : points) {
    const double r = std::log(y) - exponent * std::log(x) - intercept;
    residual += r * r;
  }
  return {exponent, intercept, residual};
}

double compute_multiplier(const PowerLawFit& reference, const PowerLawFit& other, double loss) {
  if (!(loss > 0.0)) throw std::invalid_argument("compute_multiplier: loss must be positive");
  if (reference.exponent == 0.0 || other.exponent == 0.0) {
    throw NumericalError("compute_multiplier: flat power law cannot be inverted");
  }
  const double log_c_ref = (std::log(loss) - reference.intercept) / reference.exponent;
  const double log_c_other = (std::log(loss) - other.intercept) / other.exponent;
  return std::exp(log_c_other - log_c_ref);
}

namespace {

double curve_residual(std::span<const std::pair<double, double>> points, double alpha, double beta,
                      double gamma) {
  double sum = 0.0;
  for (const auto& [t, y] : points) {
    const double r = y - (alpha + beta * std::pow(t, gamma));
    sum += r * r;
  }
  return sum;
}

// Levenberg-Marquardt on (alpha, beta, gamma) from one start; returns the
// refined fit (best-effort, caller keeps the best over starts).
CurveFit lm_refine(std::span<const std::pair<double, double>> points, double alpha, double beta,
                   double gamma) {
  double lambda = 1e-3;
  double resid = curve_residual(points, alpha, beta, gamma);
  for (int iter = 0; iter < 200; ++iter) {
    // Build J^T J and J^T r with residuals r = y - f.
    double jtj[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    double jtr[3] = {0, 0, 0};
    for (const auto& [t, y] : points) {
      const double tg = std::pow(t, gamma);
      const double f = alpha + beta * tg;
      const double r = y - f;
      const double j[3] = {1.0, tg, beta * tg * std::log(t)};
      for (int a = 0; a < 3; ++a) {
        jtr[a] += j[a] * r;
        for (int b = 0; b < 3; ++b) jtj[a][b] += j[a] * j[b];
      }
    }
    double a_mat[3][3];
    double b_vec[3];
    double delta[3];
    bool improved = false;
    for (int attempt = 0; attempt < 24 && !improved; ++attempt) {
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) a_mat[a][b] = jtj[a][b];
        a_mat[a][a] += lambda * (jtj[a][a] > 0 ? jtj[a][a] : 1.0);
        b_vec[a] = jtr[a];
      }
      try {
        solve3(a_mat, b_vec, delta);
      } catch (const NumericalError&) {
        lambda *= 10.0;
        continue;
      }
      const double na = alpha + delta[0];
      const double nb = beta + delta[1];
      const double ng = gamma + delta[2];
      const double nr = curve_residual(points, na, nb, ng);
      if (std::isfinite(nr) && nr < resid) {
        alpha = na;
        beta = nb;
        gamma = ng;
        if (resid - nr < 1e-15 * (1.0 + resid)) {
          return {alpha, beta, gamma, nr};
        }
        resid = nr;
        lambda = std::max(lambda * 0.25, 1e-12);
        improved = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  return {alpha, beta, gamma, resid};
}

}  // namespace

CurveFit fit_power_offset(std::span<const std::pair<double, double>> points) {
  std::set<double> distinct;
  for (const auto& [t, y] : points) {
    (void)y;
    if (!(t > 0.0)) throw std::invalid_argument("fit_power_offset: T values must be positive");
    distinct.insert(t);
  }
  if (distinct.size() < 4) {
    throw std::invalid_argument("fit_power_offset: need at least 4 distinct T values");
  }
  double y_min = std::numeric_limits<double>::infinity();
  for (const auto& [t, y] : points) {
    (void)t;
    y_min = std::min(y_min, y);
  }

  const double gamma_grid[] = {-2.0, -1.5, -1.0, -0.5, -0.25};
  CurveFit best{0, 0, 0, std::numeric_limits<double>::infinity()};
  for (double gamma0 : gamma_grid) {
    const double alpha0 = y_min - 1.0;
    // beta by linear least squares of (y - alpha0) on T^gamma0.
    double num = 0.0, den = 0.0;
    for (const auto& [t, y] : points) {
      const double tg = std::pow(t, gamma0);
      num += (y - alpha0) * tg;
      den += tg * tg;
    }
    const double beta0 = den > 0.0 ? num / den : 1.0;
    const CurveFit fit = lm_refine(points, alpha0, beta0, gamma0);
    if (fit.residual < best.residual) best = fit;
  }
  if (!std::isfinite(best.residual)) {
    throw NumericalError("fit_power_offset: no start converged (best residual " +
                         std::to_string(best.residual) + ")");
  }
  return best;
}

SpeedQualityFit fit_speed_quality(std::span<const std::pair<double, double>> quality_points,
                                  std::span<const std::pair<double, double>> throughput_points) {
  return {fit_power_offset(quality_points), fit_power_offset(throughput_points)};
}

InvertResult invert_quality_for_steps(const CurveFit& quality, double target_genppl) {
  const double ratio = (target_genppl - quality.alpha) / quality.beta;
  if (!(ratio > 0.0)) return {false, std::numeric_limits<double>::quiet_NaN()};
  return {true, std::pow(ratio, 1.0 / quality.gamma)};
}

ParetoResult pareto_frontier(std::span<const SpeedQualityFit> models,
                             std::span<const double> targets) {
  ParetoResult result;
  for (double target : targets) {
    int best_model = -1;
    double best_throughput = -std::numeric_limits<double>::infinity();
    double best_steps = 0.0;
    for (std::size_t m = 0; m < models.size(); ++m) {
      const InvertResult inv = invert_quality_for_steps(models[m].quality, target);
      if (!inv.reachable) continue;
      // Quality improves as T grows (gamma < 0): one step is the fastest
      // admissible operating point when even T = 1 beats the target.
      const double steps = std::max(1.0, inv.steps);
      const CurveFit& th = models[m].throughput;
      const double throughput = th.alpha + th.beta * std::pow(steps, th.gamma);
      if (throughput > best_throughput) {
        best_throughput = throughput;
        best_model = static_cast<int>(m);
        best_steps = steps;
      }
    }
    if (best_model < 0) {
      result.unreached_targets.push_back(target);
    } else {
      result.points.push_back({target, best_throughput, best_model, best_steps});
    }
  }
  return result;
}

}  // namespace difflab
