#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "relanom/errors.hpp"

namespace relanom {

/// Profiled REML criterion for y = X beta + sum_k Z_k b_k + e with independent
/// random intercepts b_k ~ N(0, theta_k sigma^2 I) and e ~ N(0, sigma^2 I).
///
/// With Lambda = diag(sqrt(theta)) over the stacked Z columns and
/// M = Lambda Z'Z Lambda + I, the marginal covariance is sigma^2 H with
/// |H| = |M| and H^-1 = I - Z Lambda M^-1 Lambda Z', so every evaluation
/// works in the q-dimensional random-effect space.
template <typename Scalar>
class RemlCriterion {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Sparse = Eigen::SparseMatrix<Scalar>;

  struct Evaluation {
    Scalar deviance = 0;
    Vector beta;
    Scalar sigma2 = 0;
    Matrix xthx_inverse;  // (X' H^-1 X)^-1, so Cov(beta) = sigma2 * xthx_inverse
  };

  /// `levels[k][i]` is the level index of row i in grouping k, in [0, n_levels[k]).
  RemlCriterion(Matrix X, Vector y, std::vector<std::vector<int>> levels, std::vector<int> n_levels)
      : X_(std::move(X)), y_(std::move(y)), levels_(std::move(levels)), n_levels_(std::move(n_levels)) {
    const Eigen::Index n = y_.size();
    offsets_.assign(n_levels_.size() + 1, 0);
    for (std::size_t k = 0; k < n_levels_.size(); ++k) offsets_[k + 1] = offsets_[k] + n_levels_[k];
    q_ = offsets_.back();

    std::vector<Eigen::Triplet<Scalar>> trip;
    ztx_ = Matrix::Zero(q_, X_.cols());
    zty_ = Vector::Zero(q_);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < levels_.size(); ++k) {
        const int a = offsets_[k] + levels_[k][i];
        ztx_.row(a) += X_.row(i);
        zty_(a) += y_(i);
        for (std::size_t l = 0; l < levels_.size(); ++l) trip.emplace_back(a, offsets_[l] + levels_[l][i], Scalar(1));
      }
    }
    for (int a = 0; a < q_; ++a) trip.emplace_back(a, a, Scalar(0));  // keep the diagonal structurally present
    ztz_.resize(q_, q_);
    ztz_.setFromTriplets(trip.begin(), trip.end());
    ztz_.makeCompressed();
    xtx_ = X_.transpose() * X_;
    xty_ = X_.transpose() * y_;
    yty_ = y_.squaredNorm();
  }

  Eigen::Index n_obs() const { return y_.size(); }
  Eigen::Index n_fixed() const { return X_.cols(); }
  std::size_t n_groupings() const { return n_levels_.size(); }
  const Matrix& X() const { return X_; }
  const Vector& y() const { return y_; }
  const std::vector<std::vector<int>>& levels() const { return levels_; }
  const std::vector<int>& n_levels() const { return n_levels_; }

  /// Throws RankDeficient when X' H^-1 X is not positive definite.
  Evaluation evaluate(std::span<const Scalar> ratios) const {
    const Eigen::Index n = n_obs(), p = n_fixed();
    Vector lam(q_);
    for (std::size_t k = 0; k < n_levels_.size(); ++k)
      lam.segment(offsets_[k], n_levels_[k]).setConstant(std::sqrt(std::max(ratios[k], Scalar(0))));

    Scalar logdet_m = 0;
    Matrix xthx = xtx_;
    Vector xthy = xty_;
    Scalar ythy = yty_;
    if (q_ > 0) {
      Sparse m = ztz_;
      for (int j = 0; j < m.outerSize(); ++j)
        for (typename Sparse::InnerIterator it(m, j); it; ++it)
          it.valueRef() = lam(it.row()) * it.value() * lam(j) + (it.row() == j ? Scalar(1) : Scalar(0));
      Eigen::SimplicialLDLT<Sparse> ldlt(m);
      if (ldlt.info() != Eigen::Success) throw Error("REML: random-effect system factorization failed");
      logdet_m = ldlt.vectorD().array().log().sum();
      const Matrix u = lam.asDiagonal() * ztx_;
      const Vector v = lam.cwiseProduct(zty_);
      const Matrix mu = ldlt.solve(u);
      const Vector mv = ldlt.solve(v);
      xthx.noalias() -= u.transpose() * mu;
      xthy.noalias() -= u.transpose() * mv;
      ythy -= v.dot(mv);
    }

    Eigen::LLT<Matrix> xllt(xthx);
    if (xllt.info() != Eigen::Success) throw RankDeficient("fixed-effect design is rank deficient");
    Evaluation ev;
    ev.beta = xllt.solve(xthy);
    const Scalar rss = std::max(ythy - ev.beta.dot(xthy), std::numeric_limits<Scalar>::min());
    const Scalar dof = static_cast<Scalar>(n - p);
    Scalar logdet_x = 0;
    for (Eigen::Index i = 0; i < p; ++i) logdet_x += Scalar(2) * std::log(xllt.matrixL()(i, i));
    ev.sigma2 = rss / dof;
    ev.deviance = logdet_m + logdet_x + dof * (Scalar(1) + std::log(Scalar(2) * std::numbers::pi_v<Scalar> * rss / dof));
    ev.xthx_inverse = xllt.solve(Matrix::Identity(p, p));
    return ev;
  }

  Scalar deviance(std::span<const Scalar> ratios) const { return evaluate(ratios).deviance; }

 private:
  Matrix X_;
  Vector y_;
  std::vector<std::vector<int>> levels_;
  std::vector<int> n_levels_;
  std::vector<int> offsets_;
  int q_ = 0;
  Sparse ztz_;
  Matrix ztx_;
  Vector zty_;
  Matrix xtx_;
  Vector xty_;
  Scalar yty_ = 0;
};

/// Dense indicator matrix of one grouping (n x n_levels).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> indicator_matrix(const std::vector<int>& levels, int n_levels) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> z =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(static_cast<Eigen::Index>(levels.size()), n_levels);
  for (std::size_t i = 0; i < levels.size(); ++i) z(static_cast<Eigen::Index>(i), levels[i]) = Scalar(1);
  return z;
}

}  // namespace relanom
