#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "difflab/denoisers/denoiser.hpp"
#include "difflab/objectives/gradients.hpp"
#include "difflab/training/language.hpp"

namespace difflab::testing {

// Central-difference gradient of the Monte Carlo batch loss; the z draws are
// seeded identically on every evaluation, so this differentiates exactly the
// function loss_gradient differentiates.
std::vector<double> finite_difference_gradient(const LossSpec& spec, Denoiser& model,
                                               VisMode vis_mode,
                                               std::span<const TrainingExample> batch,
                                               std::span<const double> t_draws,
                                               std::uint64_t draw_seed, double h = 1e-5);

// Exact expectation of the masked-diffusion objective over t ~ U[t_min, 1]
// (midpoint quadrature with t_points nodes) and full enumeration of mask
// patterns; for the permuted-causal mode the masked-subset orderings are
// enumerated exactly as well. low_variance switches the weight to -1.
double expected_masked_objective(const DenoiserView& view, const NoiseSchedule& schedule,
                                 const TokenSequence& x, bool low_variance, double t_min,
                                 int t_points);

// Exact expectation of the interpolating bound: enumerated z_0 patterns for
// the sequential term plus the scaled-schedule diffusion expectation.
double expected_eso_bound(const DenoiserView& view, const NoiseSchedule& base,
                          const TokenSequence& x, const EsoConfig& config, double t_min,
                          int t_points);

// Exact expectation of the uniform-state loss over t ~ U(0,1) by midpoint
// quadrature of the exact-in-z integrand.
double expected_duo_nelbo(const DenoiserView& view, const NoiseSchedule& schedule,
                          const TokenSequence& x, int t_points,
                          DuoSumReading reading = DuoSumReading::vocabulary);

// Discrete-time uniform-state NELBO on a T-step grid, every expectation
// enumerated exactly: prior KL + per-step posterior KLs + reconstruction.
double duo_discrete_elbo(const DenoiserView& view, const NoiseSchedule& schedule,
                         const TokenSequence& x, int steps_t);

// Exact -log p_theta(x) of the masked reverse process on a T-step grid,
// summing over all latent paths by dynamic programming over K^L states.
double masked_reverse_log_likelihood(const DenoiserView& view, const NoiseSchedule& schedule,
                                     const TokenSequence& x, int steps_t);

// Exact sequence law of an enumerable language indexed by base-K encoding.
std::vector<double> language_sequence_law(const SyntheticLanguage& language);

std::uint64_t encode_tokens(std::span<const int> tokens, int k);

// Total variation between empirical counts (indexed by encoding) and a law.
double total_variation(std::span<const double> counts, std::span<const double> law, double total);

}  // namespace difflab::testing
