#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace difflab {

// One sweep observation: validation loss of a (family, size) cell trained at
// an approximately fixed compute budget.
struct SweepRecord {
  double flops_c;
  double params_n;   // non-embedding parameter count
  double tokens_d;
  double val_loss;   // nats per token
  std::string family;
};

// Quadratic model log L = a (log N)^2 + b log N + c at one budget, plus the
// interior optimum when a > 0.
struct IsoFit {
  double a_c;
  double b_c;
  double c_c;
  bool has_interior;   // a_c > 0
  double n_star;       // exp(-b / 2a)
  double loss_star;    // exp(c - b^2 / 4a)
};

// Least squares in (log N, log loss); needs >= 3 distinct N values.
IsoFit fit_isoflop(std::span<const SweepRecord> records);

// Ordinary least squares of log y on log x: y = exp(intercept) x^exponent.
struct PowerLawFit {
  double exponent;
  double intercept;
  double residual_sum;
};

PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points);

// Budget ratio C_b / C_a at which family b's fitted law reaches the same
// loss family a reaches at budget C_a... expressed as a pure function of the
// two fits and the target loss. Identical fits give exactly 1.
double compute_multiplier(const PowerLawFit& reference, const PowerLawFit& other, double loss);

// Three-parameter speed/quality curve y = alpha + beta * T^gamma fitted by
// deterministic multi-start Levenberg-Marquardt. Start grid: gamma in
// {-2, -1.5, -1, -0.5, -0.25} with alpha started at min(y) - 1.
struct CurveFit {
  double alpha;
  double beta;
  double gamma;
  double residual;  // sum of squared residuals
};

CurveFit fit_power_offset(std::span<const std::pair<double, double>> points);

struct SpeedQualityFit {
  CurveFit quality;     // Gen PPL vs T
  CurveFit throughput;  // throughput vs T
};

SpeedQualityFit fit_speed_quality(std::span<const std::pair<double, double>> quality_points,
                                  std::span<const std::pair<double, double>> throughput_points);

// Closed-form inversion T = ((target - alpha)/beta)^(1/gamma); targets at or
// below the asymptote alpha are unreachable.
struct InvertResult {
  bool reachable;
  double steps;
};

InvertResult invert_quality_for_steps(const CurveFit& quality, double target_genppl);

struct ParetoPoint {
  double target_genppl;
  double best_throughput;
  int model_index;
  double steps;
};

struct ParetoResult {
  std::vector<ParetoPoint> points;
  std::vector<double> unreached_targets;  // frontier gaps
};

// For each target: steps via inversion (floored at T = 1 when the target is
// worse than the model's single-step quality), throughput via the fitted
// curve, maximum across models.
ParetoResult pareto_frontier(std::span<const SpeedQualityFit> models,
                             std::span<const double> targets);

}  // namespace difflab
