#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "difflab/core/errors.hpp"
#include "difflab/objectives/gradients.hpp"
#include "difflab/objectives/losses.hpp"
#include "difflab/processes/posterior.hpp"

namespace difflab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Accumulates parameter gradients scaled by `scale` (typically 1/batch).
struct GradSink {
  std::span<double> grad;
  double scale;
};

thread_local std::vector<double> row_probs_buffer;
thread_local std::vector<double> row_grad_buffer;

// Gradient of a term coeff*log(p_row[target]) through the model.
void accumulate_log_prob_row(const DenoiserView& view, const TokenSequence& z, int row, double t,
                             const VisibilitySpec& vis, int target, double coeff, double prob,
                             GradSink& sink) {
  if (!(prob > 0.0)) {
    throw NumericalError("loss gradient: zero model probability at position " +
                         std::to_string(row));
  }
  const int k = view.model->vocab().size_k;
  row_grad_buffer.assign(static_cast<std::size_t>(k), 0.0);
  row_grad_buffer[static_cast<std::size_t>(target)] = coeff * sink.scale / prob;
  view.model->accumulate_row_gradient(z, row, t, vis, row_grad_buffer, sink.grad);
}

double ar_core(const DenoiserView& view, const TokenSequence& x, int active, GradSink* sink) {
  const VisibilitySpec vis = VisibilitySpec::causal();
  const int k = view.model->vocab().size_k;
  row_probs_buffer.assign(static_cast<std::size_t>(k), 0.0);
  double nll = 0.0;
  for (int l = 0; l < active; ++l) {
    view.model->predict_row_into(x, l, 0.0, vis, row_probs_buffer);
    const double p = row_probs_buffer[static_cast<std::size_t>(x[l])];
    if (p <= 0.0) {
      if (sink != nullptr) {
        throw NumericalError("ar_nll gradient: zero probability at position " + std::to_string(l));
      }
      return kInf;
    }
    nll -= std::log(p);
    if (sink != nullptr) {
      accumulate_log_prob_row(view, x, l, 0.0, vis, x[l], -1.0, p, *sink);
    }
  }
  return nll;
}

enum class MaskedWeight { nelbo, low_variance };

// Shared masked-diffusion core: draws z_t position-wise on the active prefix,
// then sums the weighted masked cross entropy. For the permuted-causal mode
// the visibility order is drawn after the corruption draws, in this order, on
// the same stream.
LossSample masked_core(const DenoiserView& view, const NoiseSchedule& schedule,
                       const TokenSequence& x, double t, RngStream& rng, MaskedWeight mode,
                       int active, GradSink* sink) {
  const Vocab& vocab = x.vocab();
  const AlphaValue av = schedule.at(t);
  double weight = -1.0;
  if (mode == MaskedWeight::nelbo) {
    if (1.0 - av.alpha == 0.0) {
      throw NumericalError("mdlm_nelbo_sample: weight singularity (alpha_t = 1)");
    }
    weight = av.alpha_prime / (1.0 - av.alpha);
  }

  std::vector<int> corrupted(static_cast<std::size_t>(x.length()), vocab.mask_index);
  for (int l = 0; l < active; ++l) {
    corrupted[static_cast<std::size_t>(l)] =
        corrupt_token(KernelFamily::masked, vocab, x[l], av.alpha, rng);
  }
  TokenSequence z(std::move(corrupted), vocab);

  VisibilitySpec vis = VisibilitySpec::bidirectional();
  if (view.vis_mode == VisMode::permuted_causal) {
    vis = clean_first_visibility(z, rng);
  } else if (view.vis_mode != VisMode::bidirectional) {
    throw ConfigError("masked objectives require bidirectional or permuted_causal visibility");
  }

  const int k = vocab.size_k;
  row_probs_buffer.assign(static_cast<std::size_t>(k), 0.0);
  std::vector<double> per_position(static_cast<std::size_t>(x.length()), 0.0);
  double value = 0.0;
  for (int l = 0; l < active; ++l) {
    if (!vocab.is_mask(z[l])) continue;
    view.model->predict_row_into(z, l, t, vis, row_probs_buffer);
    const double p = row_probs_buffer[static_cast<std::size_t>(x[l])];
    const double term = weight * (p > 0.0 ? std::log(p) : -kInf);
    per_position[static_cast<std::size_t>(l)] = term;
    value += term;
    if (sink != nullptr) {
      accumulate_log_prob_row(view, z, l, t, vis, x[l], weight, p, *sink);
    }
  }
  return {value, std::move(per_position), t, std::move(z)};
}

struct DuoContext {
  double alpha;
  double alpha_prime;
  double kappa;
  double log_kappa;
  int k;
  int seq_limit;  // inner-sum upper index under the literal sequence reading
  DuoSumReading reading;
};

DuoContext make_duo_context(const NoiseSchedule& schedule, double t, int k, int length,
                            DuoSumReading reading) {
  const AlphaValue av = schedule.at(t);
  const double kappa = PosteriorParams::kappa(av.alpha, k);
  if (!(kappa > 0.0 && kappa < 1.0)) {
    throw std::domain_error("duo objective: kappa_t outside (0, 1)");
  }
  if (reading == DuoSumReading::sequence && length > k) {
    throw ConfigError("duo sequence-sum reading needs L <= K to be evaluable");
  }
  return {av.alpha, av.alpha_prime, kappa, std::log(kappa), k, length, reading};
}

// Token-level uniform-state loss for one position given the model row.
// i = latent token index, m = clean token index. The leading factor is
// alpha'/(K alpha): the printed leading minus is dropped, which is the
// discrete-time-ELBO-consistent sign. Optionally writes d(value)/d(probs)
// into grad_out (length K).
double duo_position_value(const DuoContext& ctx, std::span<const double> probs, int i, int m,
                          double* grad_out) {
  const double a = ctx.alpha;
  const double one_minus = 1.0 - a;
  const int k = ctx.k;
  const double xbar_i = k * a * (i == m ? 1.0 : 0.0) + one_minus;

  thread_local std::vector<double> xbt;
  xbt.assign(static_cast<std::size_t>(k), 0.0);
  for (int c = 0; c < k; ++c) {
    xbt[static_cast<std::size_t>(c)] = k * a * probs[static_cast<std::size_t>(c)] + one_minus;
  }

  const double log_xbt_i = std::log(xbt[static_cast<std::size_t>(i)]);
  const int sum_limit = ctx.reading == DuoSumReading::vocabulary ? k : ctx.seq_limit;
  double sum_term = 0.0;
  for (int c = 0; c < sum_limit; ++c) {
    sum_term += log_xbt_i - std::log(xbt[static_cast<std::size_t>(c)]);
  }

  const bool same = i == m;
  const double a_coeff = same ? ctx.kappa : 1.0;
  const double ratio_coeff = same ? 0.0 : k * a / one_minus;
  const double ratio_term =
      same ? 0.0 : ratio_coeff * (log_xbt_i - std::log(xbt[static_cast<std::size_t>(m)]));
  const double kappa_term =
      (same ? (k - 1) * ctx.kappa : -1.0 / ctx.kappa) * ctx.log_kappa;

  const double bracket = k / xbar_i - k / xbt[static_cast<std::size_t>(i)] - a_coeff * sum_term -
                         ratio_term - kappa_term;
  const double lead = ctx.alpha_prime / (k * a);
  const double value = lead * bracket;

  if (grad_out != nullptr) {
    // d(value)/d(p_c) = lead * d(bracket)/d(xbt_c) * K alpha = alpha' * d(bracket)/d(xbt_c)
    for (int c = 0; c < k; ++c) {
      double d = 0.0;
      const double inv_c = 1.0 / xbt[static_cast<std::size_t>(c)];
      if (c == i) {
        const double inv_i = 1.0 / xbt[static_cast<std::size_t>(i)];
        d += k * inv_i * inv_i;
        d -= a_coeff * sum_limit * inv_i;
        if (!same) d -= ratio_coeff * inv_i;
      }
      if (c < sum_limit) d += a_coeff * inv_c;
      if (!same && c == m) d += ratio_coeff / xbt[static_cast<std::size_t>(m)];
      grad_out[c] = ctx.alpha_prime * d;
    }
  }
  return value;
}

void check_duo_preconditions(const DenoiserView& view) {
  if (!view.model->time_conditioned()) {
    throw std::invalid_argument("duo objective requires a time-conditioned model");
  }
  if (view.vis_mode != VisMode::bidirectional) {
    throw ConfigError("duo objective requires bidirectional visibility");
  }
}

LossSample duo_core(const DenoiserView& view, const NoiseSchedule& schedule,
                    const TokenSequence& x, double t, RngStream& rng, DuoSumReading reading,
                    int active, GradSink* sink) {
  check_duo_preconditions(view);
  const Vocab& vocab = x.vocab();
  const int k = vocab.size_k;
  const DuoContext ctx = make_duo_context(schedule, t, k, x.length(), reading);

  std::vector<int> corrupted(static_cast<std::size_t>(x.length()), vocab.mask_index);
  for (int l = 0; l < active; ++l) {
    corrupted[static_cast<std::size_t>(l)] =
        corrupt_token(KernelFamily::uniform, vocab, x[l], ctx.alpha, rng);
  }
  TokenSequence z(std::move(corrupted), vocab);

  const VisibilitySpec vis = VisibilitySpec::bidirectional();
  row_probs_buffer.assign(static_cast<std::size_t>(k), 0.0);
  std::vector<double> grad_row(static_cast<std::size_t>(k), 0.0);
  std::vector<double> per_position(static_cast<std::size_t>(x.length()), 0.0);
  double value = 0.0;
  for (int l = 0; l < active; ++l) {
    view.model->predict_row_into(z, l, t, vis, row_probs_buffer);
    const double term = duo_position_value(ctx, row_probs_buffer, z[l], x[l],
                                           sink != nullptr ? grad_row.data() : nullptr);
    if (!std::isfinite(term)) {
      throw NumericalError("duo_nelbo_sample: non-finite term at position " + std::to_string(l));
    }
    per_position[static_cast<std::size_t>(l)] = term;
    value += term;
    if (sink != nullptr) {
      for (auto& g : grad_row) g *= sink->scale;
      view.model->accumulate_row_gradient(z, l, t, vis, grad_row, sink->grad);
    }
  }
  return {value, std::move(per_position), t, std::move(z)};
}

LossSample eso_core(const DenoiserView& view, const NoiseSchedule& base, const TokenSequence& x,
                    const EsoConfig& config, double t, RngStream& rng, int active,
                    GradSink* sink) {
  if (!(config.alpha_0 >= 0.0 && config.alpha_0 <= 1.0)) {
    throw std::invalid_argument("EsoConfig: alpha_0 must lie in [0, 1]");
  }
  const Vocab& vocab = x.vocab();
  const NoiseSchedule scaled = base.scaled(config.alpha_0);
  RngStream rng_z0 = rng.split(1);
  RngStream rng_diff = rng.split(2);

  // z_0 ~ q_0(.|x): per-token survival probability alpha_0.
  std::vector<int> z0_tokens(static_cast<std::size_t>(x.length()), vocab.mask_index);
  for (int l = 0; l < active; ++l) {
    z0_tokens[static_cast<std::size_t>(l)] =
        corrupt_token(KernelFamily::masked, vocab, x[l], config.alpha_0, rng_z0);
  }
  const TokenSequence z0(std::move(z0_tokens), vocab);

  // Sequential term: left-to-right over the masked positions of z_0, with
  // mask tokens left of the current position replaced by their clean tokens.
  const VisibilitySpec ar_vis = clean_first_visibility_canonical(z0);
  const int k = vocab.size_k;
  row_probs_buffer.assign(static_cast<std::size_t>(k), 0.0);
  std::vector<double> per_position(static_cast<std::size_t>(x.length()), 0.0);
  double ar_value = 0.0;
  TokenSequence context = z0;
  for (int l = 0; l < active; ++l) {
    if (!vocab.is_mask(z0[l])) continue;
    view.model->predict_row_into(context, l, 0.0, ar_vis, row_probs_buffer);
    const double p = row_probs_buffer[static_cast<std::size_t>(x[l])];
    const double term = p > 0.0 ? -std::log(p) : kInf;
    per_position[static_cast<std::size_t>(l)] += term;
    ar_value += term;
    if (sink != nullptr) {
      accumulate_log_prob_row(view, context, l, 0.0, ar_vis, x[l], -1.0, p, *sink);
    }
    context.set(l, x[l]);
  }

  LossSample diffusion =
      masked_core(view, scaled, x, t, rng_diff, MaskedWeight::nelbo, active, sink);
  for (int l = 0; l < x.length(); ++l) {
    per_position[static_cast<std::size_t>(l)] += diffusion.per_position[static_cast<std::size_t>(l)];
  }
  return {ar_value + diffusion.value, std::move(per_position), t, std::move(diffusion.z_t)};
}

void require_clean(const TokenSequence& x, const char* op) {
  if (!x.is_clean()) {
    throw std::invalid_argument(std::string(op) + ": input sequence must be clean");
  }
}

}  // namespace

double ar_nll(const DenoiserView& view, const TokenSequence& x) {
  require_clean(x, "ar_nll");
  return ar_core(view, x, x.length(), nullptr);
}

LossSample mdlm_nelbo_sample(const DenoiserView& view, const NoiseSchedule& schedule,
                             const TokenSequence& x, double t, RngStream& rng) {
  require_clean(x, "mdlm_nelbo_sample");
  return masked_core(view, schedule, x, t, rng, MaskedWeight::nelbo, x.length(), nullptr);
}

LossSample mdlm_low_variance_loss(const DenoiserView& view, const NoiseSchedule& schedule,
                                  const TokenSequence& x, double t, RngStream& rng) {
  require_clean(x, "mdlm_low_variance_loss");
  return masked_core(view, schedule, x, t, rng, MaskedWeight::low_variance, x.length(), nullptr);
}

LossSample duo_nelbo_sample(const DenoiserView& view, const NoiseSchedule& schedule,
                            const TokenSequence& x, double t, RngStream& rng,
                            DuoSumReading reading) {
  require_clean(x, "duo_nelbo_sample");
  return duo_core(view, schedule, x, t, rng, reading, x.length(), nullptr);
}

double duo_nelbo_exact_z(const DenoiserView& view, const NoiseSchedule& schedule,
                         const TokenSequence& x, double t, DuoSumReading reading) {
  require_clean(x, "duo_nelbo_exact_z");
  check_duo_preconditions(view);
  const Vocab& vocab = x.vocab();
  const int k = vocab.size_k;
  const int length = x.length();
  const DuoContext ctx = make_duo_context(schedule, t, k, length, reading);

  double states = 1.0;
  for (int l = 0; l < length; ++l) states *= k;
  if (states > 1e6) {
    throw ConfigError("duo_nelbo_exact_z: latent space too large to enumerate");
  }

  const VisibilitySpec vis = VisibilitySpec::bidirectional();
  std::vector<double> probs(static_cast<std::size_t>(k), 0.0);
  std::vector<int> z_tokens(static_cast<std::size_t>(length), 0);
  double expectation = 0.0;
  const auto total = static_cast<std::uint64_t>(states);
  for (std::uint64_t enc = 0; enc < total; ++enc) {
    std::uint64_t rest = enc;
    double pz = 1.0;
    for (int l = 0; l < length; ++l) {
      const int tok = static_cast<int>(rest % static_cast<std::uint64_t>(k));
      rest /= static_cast<std::uint64_t>(k);
      z_tokens[static_cast<std::size_t>(l)] = tok;
      pz *= ctx.alpha * (tok == x[l] ? 1.0 : 0.0) + (1.0 - ctx.alpha) / k;
    }
    if (pz <= 0.0) continue;
    const TokenSequence z(z_tokens, vocab);
    double value = 0.0;
    for (int l = 0; l < length; ++l) {
      view.model->predict_row_into(z, l, t, vis, probs);
      value += duo_position_value(ctx, probs, z[l], x[l], nullptr);
    }
    expectation += pz * value;
  }
  return expectation;
}

LossSample esolm_nelbo_sample(const DenoiserView& view, const NoiseSchedule& base_schedule,
                              const TokenSequence& x, const EsoConfig& config, double t,
                              RngStream& rng) {
  require_clean(x, "esolm_nelbo_sample");
  return eso_core(view, base_schedule, x, config, t, rng, x.length(), nullptr);
}

const char* objective_name(Objective objective) {
  switch (objective) {
    case Objective::ar: return "ar";
    case Objective::mdlm: return "mdlm";
    case Objective::low_var: return "low_var";
    case Objective::duo: return "duo";
    case Objective::eso: return "eso";
  }
  return "unknown";
}

Objective parse_objective(const std::string& name) {
  if (name == "ar") return Objective::ar;
  if (name == "mdlm") return Objective::mdlm;
  if (name == "low_var") return Objective::low_var;
  if (name == "duo") return Objective::duo;
  if (name == "eso") return Objective::eso;
  throw ConfigError("unknown objective: " + name);
}

KernelFamily objective_family(Objective objective) {
  return objective == Objective::duo ? KernelFamily::uniform : KernelFamily::masked;
}

LossSample objective_sample(const LossSpec& spec, const DenoiserView& view,
                            const TrainingExample& example, double t, RngStream& rng) {
  const int active = example.active_length;
  const NoiseSchedule schedule(spec.schedule);
  switch (spec.objective) {
    case Objective::ar: {
      const double value = ar_core(view, example.x, active, nullptr);
      return {value, {}, 0.0, example.x};
    }
    case Objective::mdlm:
      return masked_core(view, schedule, example.x, t, rng, MaskedWeight::nelbo, active, nullptr);
    case Objective::low_var:
      return masked_core(view, schedule, example.x, t, rng, MaskedWeight::low_variance, active,
                         nullptr);
    case Objective::duo:
      return duo_core(view, schedule, example.x, t, rng, spec.duo_reading, active, nullptr);
    case Objective::eso:
      return eso_core(view, schedule, example.x, spec.eso, t, rng, active, nullptr);
  }
  throw std::logic_error("objective_sample: unknown objective");
}

namespace {

double batch_dispatch(const LossSpec& spec, const DenoiserView& view,
                      std::span<const TrainingExample> batch, std::span<const double> t_draws,
                      std::uint64_t draw_seed, GradSink* sink) {
  if (batch.empty()) throw std::invalid_argument("loss_gradient: empty batch");
  if (t_draws.size() != batch.size()) {
    throw std::invalid_argument("loss_gradient: need one t draw per batch item");
  }
  const NoiseSchedule schedule(spec.schedule);
  const RngStream root(draw_seed);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    RngStream rng = root.split(i);
    const TrainingExample& example = batch[i];
    const int active = example.active_length;
    const double t = t_draws[i];
    double value = 0.0;
    switch (spec.objective) {
      case Objective::ar:
        value = ar_core(view, example.x, active, sink);
        break;
      case Objective::mdlm:
        value = masked_core(view, schedule, example.x, t, rng, MaskedWeight::nelbo, active, sink)
                    .value;
        break;
      case Objective::low_var:
        value = masked_core(view, schedule, example.x, t, rng, MaskedWeight::low_variance, active,
                            sink)
                    .value;
        break;
      case Objective::duo:
        value = duo_core(view, schedule, example.x, t, rng, spec.duo_reading, active, sink).value;
        break;
      case Objective::eso:
        value = eso_core(view, schedule, example.x, spec.eso, t, rng, active, sink).value;
        break;
    }
    total += value;
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace

LossGrad loss_gradient(const LossSpec& spec, const DenoiserView& view,
                       std::span<const TrainingExample> batch, std::span<const double> t_draws,
                       std::uint64_t draw_seed) {
  LossGrad result{0.0, std::vector<double>(view.model->parameter_count(), 0.0)};
  GradSink sink{result.grad, 1.0 / static_cast<double>(batch.size())};
  result.loss = batch_dispatch(spec, view, batch, t_draws, draw_seed, &sink);
  for (std::size_t i = 0; i < result.grad.size(); ++i) {
    if (!std::isfinite(result.grad[i])) {
      throw NumericalError("loss_gradient: non-finite gradient at parameter " + std::to_string(i));
    }
  }
  return result;
}

double batch_loss(const LossSpec& spec, const DenoiserView& view,
                  std::span<const TrainingExample> batch, std::span<const double> t_draws,
                  std::uint64_t draw_seed) {
  return batch_dispatch(spec, view, batch, t_draws, draw_seed, nullptr);
}

}  // namespace difflab
