#pragma once

#include <Eigen/Core>
#include <cmath>

#include "pno/errors.hpp"

namespace pno {

// Real-valued function sampled on a uniform grid over a periodic domain of
// length L. The quadrature weight w = L/N makes discrete norms approximate
// their continuum counterparts; multi-channel fields are flattened onto a
// normalized domain (L = 1) before scoring.
struct GridFunction {
  Eigen::VectorXd values;
  double domain_length = 1.0;

  GridFunction() = default;
  GridFunction(Eigen::VectorXd v, double length)
      : values(std::move(v)), domain_length(length) {
    if (values.size() < 1) throw config_error("grid function needs >= 1 point");
    if (!(domain_length > 0.0))
      throw config_error("grid function needs positive domain length");
    if (!values.allFinite())
      throw config_error("grid function values must be finite");
  }

  Eigen::Index size() const { return values.size(); }
  double weight() const {
    return domain_length / static_cast<double>(values.size());
  }
};

inline double grid_norm(const GridFunction& f) {
  return std::sqrt(f.weight() * f.values.squaredNorm());
}

// Row-major flattening of a (channels, points) field, used to score
// multi-channel outputs as one long grid on a normalized domain.
inline Eigen::VectorXd flatten_rowwise(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v(m.size());
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v[i++] = m(r, c);
  return v;
}

// M forecast draws on a common grid, one member per row.
struct PredictiveEnsemble {
  Eigen::MatrixXd members;  // (M, N)
  double domain_length = 1.0;

  PredictiveEnsemble() = default;
  PredictiveEnsemble(Eigen::MatrixXd m, double length)
      : members(std::move(m)), domain_length(length) {
    if (members.rows() < 1) throw config_error("ensemble needs >= 1 member");
    if (members.cols() < 1) throw config_error("ensemble needs >= 1 grid point");
    if (!(domain_length > 0.0))
      throw config_error("ensemble needs positive domain length");
    if (!members.allFinite())
      throw config_error("ensemble members must be finite");
  }

  Eigen::Index size() const { return members.rows(); }
  Eigen::Index grid_points() const { return members.cols(); }
  double weight() const {
    return domain_length / static_cast<double>(members.cols());
  }
  GridFunction member(Eigen::Index j) const {
    return GridFunction(members.row(j).transpose(), domain_length);
  }
  GridFunction mean() const {
    return GridFunction(members.colwise().mean().transpose(), domain_length);
  }
};

// Finitely supported probability measure on R^d, one atom per row.
struct DiscreteMeasure {
  Eigen::MatrixXd atoms;    // (n, d)
  Eigen::VectorXd weights;  // nonnegative, sums to one

  DiscreteMeasure() = default;
  DiscreteMeasure(Eigen::MatrixXd a, Eigen::VectorXd w)
      : atoms(std::move(a)), weights(std::move(w)) {
    if (atoms.rows() < 1 || atoms.cols() < 1)
      throw config_error("measure needs >= 1 atom in >= 1 dimension");
    if (weights.size() != atoms.rows())
      throw config_error("measure needs one weight per atom");
    if (!atoms.allFinite() || !weights.allFinite())
      throw config_error("measure entries must be finite");
    if ((weights.array() < 0.0).any())
      throw config_error("measure weights must be nonnegative");
    if (std::abs(weights.sum() - 1.0) > 1e-12)
      throw config_error("measure weights must sum to one");
  }
};

}  // namespace pno
