#pragma once

// Closed-form Gaussian information quantities. Rates and entropies are in
// bits; the KL divergence is in nats.

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "distacc/errors.hpp"

namespace distacc {

inline constexpr double kLog2e = std::numbers::log2e;

// Multivariate normal with a symmetric positive-definite covariance.
struct GaussianSpec {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  static GaussianSpec make(Eigen::VectorXd mean, Eigen::MatrixXd covariance) {
    const auto n = mean.size();
    if (covariance.rows() != n || covariance.cols() != n) {
      throw InputError("gaussian: covariance must be " + std::to_string(n) + "x" + std::to_string(n));
    }
    const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw InputError("gaussian: covariance is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
    if (n > 0 && eig.eigenvalues().minCoeff() <= 0.0) {
      throw InputError("gaussian: covariance is not positive definite");
    }
    return {std::move(mean), std::move(covariance)};
  }

  Eigen::Index dimension() const { return mean.size(); }
};

// Per-sample differential entropy 0.5*log2(2*pi*e*variance).
inline double gaussian_entropy_bits(double variance) {
  if (!(variance > 0.0)) throw InputError("entropy: variance must be positive");
  return 0.5 * std::log2(2.0 * std::numbers::pi * std::numbers::e * variance);
}

inline constexpr double kKlRoundoff = 1e-12;

// D(p || q) in nats.
inline double gaussian_kl_nats(const GaussianSpec& p, const GaussianSpec& q) {
  if (p.dimension() != q.dimension()) throw InputError("kl: dimension mismatch");
  const auto n = static_cast<double>(p.dimension());
  Eigen::LLT<Eigen::MatrixXd> q_chol(q.covariance);
  if (q_chol.info() != Eigen::Success) throw InputError("kl: q covariance is singular");
  Eigen::LLT<Eigen::MatrixXd> p_chol(p.covariance);
  if (p_chol.info() != Eigen::Success) throw InputError("kl: p covariance is singular");

  const Eigen::VectorXd diff = q.mean - p.mean;
  const double trace_term = q_chol.solve(p.covariance).trace();
  const double mahalanobis = diff.dot(q_chol.solve(diff));
  auto log_det = [](const Eigen::LLT<Eigen::MatrixXd>& chol) {
    return 2.0 * chol.matrixLLT().diagonal().array().log().sum();
  };
  const double value = 0.5 * (trace_term - n + mahalanobis + log_det(q_chol) - log_det(p_chol));
  if (value < -kKlRoundoff) {
    throw ConsistencyError("kl: negative divergence " + std::to_string(value));
  }
  return std::max(value, 0.0);
}

inline void require_test_channel_range(double source_variance, double distortion) {
  if (!(source_variance > 0.0)) throw InfeasibleError("test channel: source variance must be positive");
  if (!(distortion > 0.0) || distortion > source_variance) {
    throw InfeasibleError("test channel: distortion " + std::to_string(distortion) + " outside (0, " +
                          std::to_string(source_variance) + "]");
  }
}

// I(U;V) of the Gaussian test channel, 0.5*log2(var/d).
inline double test_channel_rate_bits(double source_variance, double distortion) {
  require_test_channel_range(source_variance, distortion);
  return 0.5 * std::log2(source_variance / distortion);
}

// Forward form of the backward channel U = V + Z, Z ~ N(0, d) independent of V:
// V | U ~ N(gain * U, conditional_variance).
struct TestChannelLaw {
  double source_variance = 0.0;
  double distortion = 0.0;
  double gain = 0.0;
  double conditional_variance = 0.0;

  double description_variance() const { return gain * gain * source_variance + conditional_variance; }
};

inline TestChannelLaw test_channel_law(double source_variance, double distortion) {
  require_test_channel_range(source_variance, distortion);
  const double gain = 1.0 - distortion / source_variance;
  return {source_variance, distortion, gain, gain * distortion};
}

// Jointly Gaussian (x, y) stacked as one 2N-dimensional vector. The joint
// covariance only has to be positive semidefinite (x == y is allowed).
struct JointGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Margin RHS - LHS of D(P_{x+sqrt(t)z} || P_{y+sqrt(t)z}) <= E||x-y||^2 / (2t),
// with z standard normal independent of (x, y). Both sides in nats.
inline double verify_smoothing_inequality(const JointGaussian& joint, double t) {
  if (!(t > 0.0)) throw InputError("smoothing: t must be positive");
  const auto dim2 = joint.mean.size();
  if (dim2 == 0 || dim2 % 2 != 0) throw InputError("smoothing: joint dimension must be even and positive");
  if (joint.covariance.rows() != dim2 || joint.covariance.cols() != dim2) {
    throw InputError("smoothing: covariance shape mismatch");
  }
  const double scale = std::max(1.0, joint.covariance.cwiseAbs().maxCoeff());
  if ((joint.covariance - joint.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InputError("smoothing: joint covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(joint.covariance);
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw InputError("smoothing: joint covariance is not positive semidefinite");
  }

  const auto n = dim2 / 2;
  const Eigen::VectorXd mx = joint.mean.head(n);
  const Eigen::VectorXd my = joint.mean.tail(n);
  const Eigen::MatrixXd sxx = joint.covariance.topLeftCorner(n, n);
  const Eigen::MatrixXd syy = joint.covariance.bottomRightCorner(n, n);
  const Eigen::MatrixXd sxy = joint.covariance.topRightCorner(n, n);
  const Eigen::MatrixXd smooth = t * Eigen::MatrixXd::Identity(n, n);

  const GaussianSpec px{mx, sxx + smooth};
  const GaussianSpec py{my, syy + smooth};
  const double lhs = gaussian_kl_nats(px, py);
  const double mean_sq_diff = sxx.trace() + syy.trace() - 2.0 * sxy.trace() + (mx - my).squaredNorm();
  const double rhs = mean_sq_diff / (2.0 * t);
  return rhs - lhs;
}

}  // namespace distacc
