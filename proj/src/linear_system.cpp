#include "closeness/linear_system.hpp"

#include "closeness/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace closeness {

namespace {

using cd = std::complex<double>;

constexpr double kConditionLimit = 1e12;
constexpr double kRealTolerance = 1e-9;

bool is_imaginary(cd lambda) {
  return std::abs(lambda.real()) <= 1e-9 * std::max(1.0, std::abs(lambda));
}

void check_distinct(const Eigen::VectorXcd& eigs) {
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    for (Eigen::Index j = i + 1; j < eigs.size(); ++j) {
      const double scale = std::max({1.0, std::abs(eigs[i]), std::abs(eigs[j])});
      if (std::abs(eigs[i] - eigs[j]) <= 1e-10 * scale) {
        throw ValidationError(fmt::format("repeated eigenvalue ({}, {})", eigs[i].real(), eigs[i].imag()));
      }
    }
  }
}

void check_conditioning(const Eigen::MatrixXcd& modes) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(modes);
  const auto& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  if (!(smin > 0.0) || smax / smin > kConditionLimit) {
    throw ConditioningError(fmt::format("mode matrix is numerically singular (cond = {:g})",
                                        smin > 0.0 ? smax / smin : INFINITY));
  }
}

/// Number of columns whose rows [row0, row0+rows) are exactly zero.
std::size_t count_zero_blocks(const Eigen::MatrixXcd& modes, Eigen::Index row0, Eigen::Index rows) {
  std::size_t count = 0;
  for (Eigen::Index c = 0; c < modes.cols(); ++c) {
    if (rows > 0 && (modes.col(c).segment(row0, rows).array() == cd(0.0, 0.0)).all()) ++count;
  }
  return count;
}

}  // namespace

LinearSystemAd LinearSystemAd::build(const Eigen::MatrixXcd& V, const std::vector<double>& thetas,
                                     const std::vector<ExtraMode>& extras, std::size_t n_x,
                                     std::size_t n_y) {
  const auto n = static_cast<Eigen::Index>(n_x + n_y);
  const auto d = thetas.size();
  if (d == 0) throw ValidationError("at least one oscillatory pair is required");
  if (V.rows() != n || V.cols() != static_cast<Eigen::Index>(2 * d)) {
    throw ValidationError(fmt::format("mode matrix is {}x{}, expected {}x{}", V.rows(), V.cols(), n, 2 * d));
  }
  if (2 * d > static_cast<std::size_t>(n)) throw ValidationError("d must not exceed n/2");
  for (std::size_t i = 0; i < d; ++i) {
    if (!(thetas[i] > 0.0) || !std::isfinite(thetas[i])) {
      throw ValidationError(fmt::format("theta_{} = {} is not positive", i + 1, thetas[i]));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(thetas[i] - thetas[j]) <= 1e-12 * std::max(thetas[i], thetas[j])) {
        throw ValidationError(fmt::format("theta_{} and theta_{} coincide ({})", j + 1, i + 1, thetas[i]));
      }
    }
    const auto v = V.col(static_cast<Eigen::Index>(2 * i));
    const auto w = V.col(static_cast<Eigen::Index>(2 * i + 1));
    if ((w - v.conjugate()).norm() > 1e-12 * std::max(1.0, v.norm())) {
      throw ValidationError(fmt::format("columns {} and {} are not a conjugate pair", 2 * i, 2 * i + 1));
    }
  }
  if (2 * d + extras.size() != static_cast<std::size_t>(n)) {
    throw ValidationError(fmt::format("{} oscillatory columns and {} extra modes do not fill n = {}", 2 * d,
                                      extras.size(), n));
  }

  LinearSystemAd sys;
  sys.n_x_ = n_x;
  sys.n_y_ = n_y;
  sys.thetas_ = thetas;
  sys.modes_.resize(n, n);
  sys.eigenvalues_.resize(n);
  sys.modes_.leftCols(static_cast<Eigen::Index>(2 * d)) = V;
  for (std::size_t i = 0; i < d; ++i) {
    sys.eigenvalues_[static_cast<Eigen::Index>(2 * i)] = cd(0.0, thetas[i]);
    sys.eigenvalues_[static_cast<Eigen::Index>(2 * i + 1)] = cd(0.0, -thetas[i]);
  }
  for (std::size_t e = 0; e < extras.size(); ++e) {
    const auto col = static_cast<Eigen::Index>(2 * d + e);
    if (!(extras[e].eigenvalue.real() < 0.0)) {
      throw ValidationError(fmt::format("extra eigenvalue ({}, {}) does not have a strictly negative real part",
                                        extras[e].eigenvalue.real(), extras[e].eigenvalue.imag()));
    }
    if (extras[e].vector.size() != n) throw ValidationError("extra mode vector has the wrong dimension");
    sys.modes_.col(col) = extras[e].vector;
    sys.eigenvalues_[col] = extras[e].eigenvalue;
  }
  check_distinct(sys.eigenvalues_);
  check_conditioning(sys.modes_);

  const Eigen::MatrixXcd inv = sys.modes_.fullPivLu().inverse();
  const Eigen::MatrixXcd A = sys.modes_ * sys.eigenvalues_.asDiagonal() * inv;
  const double scale = 1.0 + A.cwiseAbs().maxCoeff();
  if (A.imag().cwiseAbs().maxCoeff() > kRealTolerance * scale) {
    throw ValidationError("assembled system matrix is not real; extra modes must come in conjugate pairs");
  }
  sys.A_ = A.real();
  // Invariant subspaces spanned by mode columns imply exact zero blocks.
  const auto nx = static_cast<Eigen::Index>(n_x);
  const auto ny = static_cast<Eigen::Index>(n_y);
  sys.zero_xy_ = count_zero_blocks(sys.modes_, 0, nx) == n_y && n_y > 0;
  sys.zero_yx_ = count_zero_blocks(sys.modes_, nx, ny) == n_x && n_x > 0;
  sys.finalize();
  return sys;
}

LinearSystemAd LinearSystemAd::from_matrix(const Eigen::MatrixXd& A, std::size_t n_x, std::size_t n_y) {
  const auto n = static_cast<Eigen::Index>(n_x + n_y);
  if (A.rows() != n || A.cols() != n) throw ValidationError("system matrix has the wrong shape");
  if (!A.allFinite()) throw ValidationError("system matrix is not finite");

  Eigen::EigenSolver<Eigen::MatrixXd> solver(A);
  if (solver.info() != Eigen::Success) throw ConditioningError("eigendecomposition failed");
  const Eigen::VectorXcd eigs = solver.eigenvalues();
  const Eigen::MatrixXcd vecs = solver.eigenvectors();

  struct Mode {
    cd lambda;
    Eigen::VectorXcd v;
  };
  std::vector<Mode> oscillatory;
  std::vector<Mode> stable;
  for (Eigen::Index i = 0; i < n; ++i) {
    const cd lambda = eigs[i];
    Eigen::VectorXcd v = vecs.col(i);
    v /= v.norm();
    if (is_imaginary(lambda)) {
      if (std::abs(lambda.imag()) <= 1e-12) {
        throw ValidationError("system matrix is singular (zero eigenvalue)");
      }
      if (lambda.imag() > 0.0) oscillatory.push_back({cd(0.0, lambda.imag()), v});
    } else if (lambda.real() < 0.0) {
      stable.push_back({lambda, v});
    } else {
      throw ValidationError(fmt::format("eigenvalue ({}, {}) has a nonnegative real part outside the imaginary pairs",
                                        lambda.real(), lambda.imag()));
    }
  }
  if (oscillatory.empty()) throw ValidationError("no purely imaginary eigenvalue pair");
  std::sort(oscillatory.begin(), oscillatory.end(),
            [](const Mode& a, const Mode& b) { return a.lambda.imag() > b.lambda.imag(); });

  LinearSystemAd sys;
  sys.n_x_ = n_x;
  sys.n_y_ = n_y;
  sys.A_ = A;
  sys.modes_.resize(n, n);
  sys.eigenvalues_.resize(n);
  Eigen::Index col = 0;
  for (const auto& mode : oscillatory) {
    sys.thetas_.push_back(mode.lambda.imag());
    sys.modes_.col(col) = mode.v;
    sys.eigenvalues_[col++] = mode.lambda;
    sys.modes_.col(col) = mode.v.conjugate();
    sys.eigenvalues_[col++] = std::conj(mode.lambda);
  }
  for (const auto& mode : stable) {
    sys.modes_.col(col) = mode.v;
    sys.eigenvalues_[col++] = mode.lambda;
  }
  if (col != n) throw ValidationError("unpaired imaginary eigenvalue");
  check_distinct(sys.eigenvalues_);
  check_conditioning(sys.modes_);
  const auto nx = static_cast<Eigen::Index>(n_x);
  const auto ny = static_cast<Eigen::Index>(n_y);
  sys.zero_xy_ = n_x > 0 && n_y > 0 && (A.topRightCorner(nx, ny).array() == 0.0).all();
  sys.zero_yx_ = n_x > 0 && n_y > 0 && (A.bottomLeftCorner(ny, nx).array() == 0.0).all();
  sys.finalize();
  return sys;
}

void LinearSystemAd::finalize() {
  const auto nx = static_cast<Eigen::Index>(n_x_);
  const auto ny = static_cast<Eigen::Index>(n_y_);
  if (zero_xy_) A_.topRightCorner(nx, ny).setZero();
  if (zero_yx_) A_.bottomLeftCorner(ny, nx).setZero();
  modes_inv_ = modes_.fullPivLu().inverse();
}

Eigen::MatrixXd LinearSystemAd::propagator(double t) const {
  Eigen::VectorXcd growth(eigenvalues_.size());
  for (Eigen::Index i = 0; i < growth.size(); ++i) growth[i] = std::exp(eigenvalues_[i] * t);
  Eigen::MatrixXd P = (modes_ * growth.asDiagonal() * modes_inv_).real();
  // Block-triangular A has a block-triangular exponential.
  const auto nx = static_cast<Eigen::Index>(n_x_);
  const auto ny = static_cast<Eigen::Index>(n_y_);
  if (zero_xy_) P.topRightCorner(nx, ny).setZero();
  if (zero_yx_) P.bottomLeftCorner(ny, nx).setZero();
  return P;
}

LinearSystemAd LinearSystemAd::x_subsystem() const {
  if (!zero_xy_) throw ValidationError("x subsystem is not autonomous (A_xy != 0)");
  const auto nx = static_cast<Eigen::Index>(n_x_);
  std::vector<Eigen::Index> cols;
  for (Eigen::Index c = 0; c < modes_.cols(); ++c) {
    if (modes_.col(c).head(nx).norm() > 1e-8 * modes_.col(c).norm()) cols.push_back(c);
  }
  if (cols.size() != n_x_) throw ValidationError("could not isolate the x modes");

  std::vector<double> thetas;
  std::vector<Eigen::Index> osc_cols;
  std::vector<ExtraMode> extras;
  for (auto c : cols) {
    const cd lambda = eigenvalues_[c];
    if (is_imaginary(lambda)) {
      if (lambda.imag() > 0.0) {
        thetas.push_back(lambda.imag());
        osc_cols.push_back(c);
      }
    } else {
      extras.push_back({lambda, modes_.col(c).head(nx)});
    }
  }
  Eigen::MatrixXcd V(nx, static_cast<Eigen::Index>(2 * thetas.size()));
  for (std::size_t i = 0; i < osc_cols.size(); ++i) {
    const Eigen::VectorXcd v = modes_.col(osc_cols[i]).head(nx);
    V.col(static_cast<Eigen::Index>(2 * i)) = v;
    V.col(static_cast<Eigen::Index>(2 * i + 1)) = v.conjugate();
  }
  return build(V, thetas, extras, n_x_, 0);
}

LinearSystemAd LinearSystemAd::with_coupling_block(const Eigen::MatrixXd& A_yx) const {
  const auto nx = static_cast<Eigen::Index>(n_x_);
  const auto ny = static_cast<Eigen::Index>(n_y_);
  if (A_yx.rows() != ny || A_yx.cols() != nx) throw ValidationError("coupling block has the wrong shape");
  Eigen::MatrixXd A = A_;
  A.bottomLeftCorner(ny, nx) = A_yx;
  return from_matrix(A, n_x_, n_y_);
}

double LinearSystemAd::eigen_residual() const {
  const Eigen::MatrixXcd lhs = A_.cast<cd>() * modes_;
  const Eigen::MatrixXcd rhs = modes_ * eigenvalues_.asDiagonal();
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

ForcedLinearBenchmark example1_system(std::uint64_t seed, std::size_t m, double coupling) {
  if (m == 0) throw ValidationError("embedding dimension must be positive");
  if (!(coupling >= 0.0)) throw ValidationError("coupling must be nonnegative");
  const double s = 1.0 / std::sqrt(2.0);
  Eigen::Vector2cd v(cd(s, 0.0), cd(0.0, s));

  Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(4, 4);
  V.block(0, 0, 2, 1) = s * v;
  V.block(0, 1, 2, 1) = s * v.conjugate();
  V.block(2, 0, 2, 1) = coupling * s * v;
  V.block(2, 1, 2, 1) = coupling * s * v.conjugate();
  V.block(2, 2, 2, 1) = v;
  V.block(2, 3, 2, 1) = v.conjugate();

  auto system = LinearSystemAd::build(V, {kExample1Theta1, kExample1Theta2}, {}, 2, 2);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.1);
  std::vector<double> r(4);
  for (auto& ri : r) ri = normal(rng);

  const Eigen::VectorXcd V1 = V.col(0);
  const Eigen::VectorXcd V3 = V.col(2);
  const Vector c = (1 + r[0]) * V1.real() + (1 + r[1]) * V1.imag() + (1 + r[2]) * V3.real() +
                   (1 + r[3]) * V3.imag();

  auto normalized = [](const Vector& x, double sq_norm) -> Vector {
    return std::sqrt(sq_norm) * x / x.norm();
  };
  const double md = static_cast<double>(m);
  MeasurementSet meas;
  Vector cx = Vector::Zero(4);
  cx.head(2) = c.head(2);
  Vector cy = Vector::Zero(4);
  cy.tail(2) = c.tail(2);
  meas.phi_xy = normalized(c, 4.0 / md);
  meas.phi_x = normalized(cx, 4.0 / md);
  meas.phi_y = normalized(cy, 4.0 / md);
  meas.gamma_x = normalized(c.head(2), 2.0 / md);
  meas.gamma_y = normalized(c.tail(2), 2.0 / md);

  Vector z0 = (V * Eigen::VectorXcd::Ones(4)).real();
  return {std::move(system), std::move(meas), std::move(z0), std::move(r)};
}

}  // namespace closeness
