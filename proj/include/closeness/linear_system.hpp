#pragma once

#include "closeness/types.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <vector>

namespace closeness {

/// A non-oscillatory mode appended to the imaginary pairs. Its eigenvalue
/// must have strictly negative real part.
struct ExtraMode {
  std::complex<double> eigenvalue;
  Eigen::VectorXcd vector;
};

/// Linear system dz/dt = A z whose persistent dynamics are d undamped
/// oscillatory eigen-pairs {+j theta_i, -j theta_i}; every other eigenvalue
/// is strictly stable. The state is split into an x block (first n_x
/// coordinates) and a y block (remaining n_y).
///
/// Mode columns are stored as [v_1, conj(v_1), ..., v_d, conj(v_d), extras...].
/// When the mode matrix leaves an off-diagonal block of A structurally zero
/// (for instance the forced form with A_xy = 0), that block is stored as an
/// exact zero and every propagator inherits the zero.
class LinearSystemAd {
 public:
  /// Assembles A = V_full Lambda_full V_full^{-1} from the oscillatory mode
  /// matrix V (n x 2d), the frequencies, and optional stable extras.
  ///
  /// Throws ValidationError on repeated/non-positive frequencies, unpaired
  /// columns, non-stable extras or a non-real A; ConditioningError when
  /// V_full is numerically singular.
  static LinearSystemAd build(const Eigen::MatrixXcd& V, const std::vector<double>& thetas,
                              const std::vector<ExtraMode>& extras, std::size_t n_x,
                              std::size_t n_y);

  /// Eigendecomposes a real matrix and classifies it into the same form.
  static LinearSystemAd from_matrix(const Eigen::MatrixXd& A, std::size_t n_x, std::size_t n_y);

  const Eigen::MatrixXd& matrix() const { return A_; }
  /// n x 2d oscillatory modes.
  Eigen::MatrixXcd oscillatory_modes() const { return modes_.leftCols(2 * d()); }
  /// n x n full mode matrix.
  const Eigen::MatrixXcd& modes() const { return modes_; }
  const Eigen::VectorXcd& eigenvalues() const { return eigenvalues_; }
  const std::vector<double>& thetas() const { return thetas_; }

  std::size_t d() const { return thetas_.size(); }
  std::size_t n() const { return n_x_ + n_y_; }
  std::size_t n_x() const { return n_x_; }
  std::size_t n_y() const { return n_y_; }

  Eigen::MatrixXd block_xx() const { return A_.topLeftCorner(n_x_, n_x_); }
  Eigen::MatrixXd block_xy() const { return A_.topRightCorner(n_x_, n_y_); }
  Eigen::MatrixXd block_yx() const { return A_.bottomLeftCorner(n_y_, n_x_); }
  Eigen::MatrixXd block_yy() const { return A_.bottomRightCorner(n_y_, n_y_); }

  /// e^{A t}, evaluated through the eigendecomposition.
  Eigen::MatrixXd propagator(double t) const;

  /// The autonomous x subsystem (A_xx alone). Requires A_xy == 0.
  LinearSystemAd x_subsystem() const;

  /// Same A_xx, A_xy, A_yy with the coupling block replaced.
  LinearSystemAd with_coupling_block(const Eigen::MatrixXd& A_yx) const;

  /// max |A V - V Lambda| over the full mode matrix.
  double eigen_residual() const;

 private:
  LinearSystemAd() = default;
  void finalize();

  Eigen::MatrixXd A_;
  Eigen::MatrixXcd modes_;
  Eigen::MatrixXcd modes_inv_;
  Eigen::VectorXcd eigenvalues_;
  std::vector<double> thetas_;
  std::size_t n_x_ = 0;
  std::size_t n_y_ = 0;
  bool zero_xy_ = false;
  bool zero_yx_ = false;
};

/// The five linear measurement vectors of the forced benchmark.
struct MeasurementSet {
  Vector phi_xy;   ///< joint, ||.||^2 = 4/m
  Vector phi_x;    ///< joint with zeroed y block, ||.||^2 = 4/m
  Vector phi_y;    ///< joint with zeroed x block, ||.||^2 = 4/m
  Vector gamma_x;  ///< x block only, ||.||^2 = 2/m
  Vector gamma_y;  ///< y block only, ||.||^2 = 2/m
};

struct ForcedLinearBenchmark {
  LinearSystemAd system;
  MeasurementSet measurements;
  Vector initial_state;  ///< V * 1, which has no transient
  std::vector<double> perturbations;  ///< r_1..r_4
};

inline constexpr double kExample1Theta1 = 2.3129;
inline constexpr double kExample1Theta2 = 0.1765;

/// Four-dimensional forced oscillator pair in which x drives y. `coupling`
/// scales the y-rows of the x modes: 1 gives the reference system, 0 gives
/// two independent oscillators with A_yx exactly zero. The measurement
/// perturbations r_i ~ Normal(0, 0.1) come from `seed`.
ForcedLinearBenchmark example1_system(std::uint64_t seed, std::size_t m, double coupling = 1.0);

}  // namespace closeness
