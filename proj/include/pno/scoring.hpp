#pragma once

#include <Eigen/Core>
#include <vector>

#include "pno/grid.hpp"
#include "pno/tape.hpp"

namespace pno {

// Sample-based score of an ensemble against one observation: the mean
// member-to-observation distance minus half the mean pairwise member
// distance, the pairwise mean taken over the M(M-1) ordered pairs with
// j != h so the estimate is unbiased in the members. Distances are
// quadrature-weighted grid norms. Requires M >= 2.
double energy_score_estimator(const PredictiveEnsemble& forecast,
                              const GridFunction& obs);

// Exact score of a finitely supported measure against a point in R^d; the
// pairwise sum here runs over all pairs including j = h (which contribute
// zero).
double energy_score_population(const DiscreteMeasure& p,
                               const Eigen::VectorXd& x);

// Score induced by the kernel k(a, b) = |a-z0| + |b-z0| - |a-b| through
// S_k(P, x) = 0.5 E k(X, X') - E k(X, x) + 0.5 k(x, x). Coincides with the
// energy score for every anchor z0.
double kernel_score_induced(const DiscreteMeasure& p, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& z0);

// Expected score of forecast q under verification distribution p.
double expected_energy_score(const DiscreteMeasure& q, const DiscreteMeasure& p);

// Two pairwise normalizations for the scalar ensemble score: "fair" divides
// the pairwise sum by M(M-1) (unbiased), "nrg" by M^2 (the score of the
// empirical measure). Computed in O(M log M) via the sorted-pair identity.
enum class CrpsKind { fair, nrg };
double crps_ensemble(const Eigen::VectorXd& samples, double obs, CrpsKind kind);

// 2 (alpha - 1{obs < q}) (obs - q); nonnegative, minimized by the true
// alpha-quantile.
double quantile_score(double q, double obs, double alpha);

// Linear interpolation between order statistics at rank p*(M-1)+1 (1-based).
double empirical_quantile(const Eigen::VectorXd& samples, double p);
// Same, for an already ascending-sorted array.
double quantile_sorted(const double* sorted, Eigen::Index m, double p);

// Mean over grid points of 0.5*(log(2 pi var) + (mean-obs)^2/var), variances
// floored at 1e-12; floored_count (optional) reports how many hit the floor.
double gaussian_nll(const GridFunction& mean, const GridFunction& variance,
                    const GridFunction& obs,
                    Eigen::Index* floored_count = nullptr);

struct CoverageWidth {
  double coverage = 0.0;
  double width = 0.0;
};

// Pointwise central (1-alpha) interval from empirical quantiles: coverage is
// the fraction of grid points whose observation lies inside the closed
// interval, width the mean interval length.
CoverageWidth coverage_and_width(const PredictiveEnsemble& forecast,
                                 const GridFunction& obs, double alpha);

// Grid norm of (ensemble mean - observation).
double l2_metric(const PredictiveEnsemble& forecast, const GridFunction& obs);
// Same, divided by the observation norm (absolute value if that norm is 0).
double l2_relative(const PredictiveEnsemble& forecast, const GridFunction& obs);

// Differentiable ensemble score: members and obs are ids of real (c, n)
// values on the tape, weight the quadrature weight of the flattened grid.
Tape::Id energy_score_on_tape(Tape& tape, const std::vector<Tape::Id>& members,
                              Tape::Id obs, double weight);

}  // namespace pno
