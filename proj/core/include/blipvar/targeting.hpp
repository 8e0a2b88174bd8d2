#pragma once

#include <utility>
#include <vector>

#include "blipvar/dataset.hpp"
#include "blipvar/eic.hpp"
#include "blipvar/nuisance.hpp"

namespace blipvar {

enum class StopReason { tolerance_met, loss_increased, max_iter };

struct TargetedFit {
  VectorXd qbar1_star;
  VectorXd qbar0_star;
  VectorXd qbarA_star;
  int iterations = 0;
  std::vector<double> loss_trace;      // accepted losses; [0] is the initial loss
  std::vector<double> eic_norm_trace;  // ||Pn D*||_2 at every visited iterate
  StopReason stopped_reason = StopReason::tolerance_met;
};

struct TargetingOptions {
  double d_eps = 1e-4;
  int max_iter = 20000;
};

// One fluctuation of both counterfactual arms along the canonical least
// favorable submodel: for each arm a', the logit moves by
// d_eps * <(h1(a',w), h2(a',w)), Pn D* / ||Pn D*||_2>, with h evaluated at
// that arm and (b, bbar) from the current iterate. This is the direction in
// which the empirical loss falls at rate ||Pn D*||_2.
std::pair<VectorXd, VectorXd> targeting_step(const VectorXd& qbar1,
                                             const VectorXd& qbar0,
                                             const VectorXd& g1, const VectorXd& a,
                                             const VectorXd& y, double d_eps);

// Iterates targeting_step until both EIC components satisfy
// |Pn D*_j| < sd_j / n, or the loss would rise (revert to the previous
// iterate), or max_iter is reached. TMLE and CV-TMLE share this loop
// unchanged; only the provenance of the initial predictions differs.
TargetedFit run_targeting(const ObservedDataset& data,
                          const NuisancePredictions& nuisance,
                          const TargetingOptions& options = {});

struct ClfmCheck {
  double loss_slope = 0.0;  // central difference along the submodel at 0
  double eic_norm = 0.0;    // ||Pn D*||_2
};

// Numerically differentiates the empirical loss along the submodel path and
// returns it with the EIC norm; the two agree by the submodel's defining
// identity. The path is parametrized so that the slope is +||Pn D*||_2 and
// the update direction (-d_eps) decreases loss at that rate.
ClfmCheck clfm_derivative_check(const VectorXd& qbar1, const VectorXd& qbar0,
                                const VectorXd& g1, const VectorXd& a,
                                const VectorXd& y, double d_eps);

// Mean quasibinomial loss at the observed arms, predictions clipped.
double empirical_loss(const VectorXd& y, const VectorXd& qbarA);

}  // namespace blipvar
