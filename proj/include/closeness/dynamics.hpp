#pragma once

#include "closeness/linear_system.hpp"
#include "closeness/types.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace closeness {

/// Time-indexed state sequence on the attractor. Row k is the state at time
/// (transient_discarded + k + 1) * dt relative to the initial condition.
struct Trajectory {
  Matrix samples;
  double dt = 1.0;
  std::size_t transient_discarded = 0;
  std::size_t n_x = 0;
  std::size_t n_y = 0;

  std::size_t length() const { return static_cast<std::size_t>(samples.rows()); }
  Matrix x_block() const { return samples.leftCols(static_cast<Eigen::Index>(n_x)); }
  Matrix y_block() const { return samples.rightCols(static_cast<Eigen::Index>(n_y)); }
  /// Throws ValidationError if empty, non-finite or the split is inconsistent.
  void validate() const;
};

enum class SystemKind { HenonHenon, RosslerLorenz, RosslerRossler, LinearForced };

std::string to_string(SystemKind kind);
/// Throws ValidationError on unknown names.
SystemKind parse_system_kind(const std::string& name);

struct RosslerParams {
  double omega1 = 1.015;
  double omega2 = 0.985;
};

/// One of the benchmark coupled systems; x drives y with strength `coupling`.
class SystemModel {
 public:
  static SystemModel henon_henon(double coupling);
  static SystemModel rossler_lorenz(double coupling);
  static SystemModel rossler_rossler(double coupling, RosslerParams params = {});
  static SystemModel linear_forced(LinearSystemAd system);

  SystemKind kind() const { return kind_; }
  double coupling() const { return coupling_; }
  const RosslerParams& rossler_params() const { return rossler_; }
  const LinearSystemAd& linear() const;

  std::size_t n_x() const { return n_x_; }
  std::size_t n_y() const { return n_y_; }
  std::size_t dim() const { return n_x_ + n_y_; }
  bool is_discrete() const { return kind_ == SystemKind::HenonHenon; }

  /// Initial condition stated for each benchmark.
  Vector default_initial_condition() const;
  /// Sampling period used for each benchmark.
  double default_dt() const;

  /// One application of the discrete map.
  void step_map(std::span<const double> z, std::span<double> out) const;
  /// Vector field of a continuous system.
  void vector_field(std::span<const double> z, std::span<double> dz) const;

 private:
  SystemModel(SystemKind kind, double coupling, std::size_t n_x, std::size_t n_y);

  SystemKind kind_;
  double coupling_;
  std::size_t n_x_;
  std::size_t n_y_;
  RosslerParams rossler_;
  std::shared_ptr<const LinearSystemAd> linear_;
};

inline constexpr double kDivergenceGuard = 1e10;

/// Iterates a discrete map, discarding the first n_transient iterates and
/// returning the following n_samples. The initial condition itself is not
/// part of the output.
Trajectory iterate_map(const SystemModel& model, const Vector& x0, std::size_t n_samples,
                       std::size_t n_transient);

using OdeRhs = std::function<void(double t, std::span<const double> z, std::span<double> dz)>;

struct OdeOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double initial_step = 0.0;  ///< 0 picks a starting step automatically
  std::size_t max_steps = 50'000'000;
};

/// Adaptive Dormand-Prince 5(4) integration sampled on the uniform grid
/// t_k = k * dt (k >= 1) through the continuous extension. The first
/// n_transient grid samples are discarded.
Matrix integrate_ode(const OdeRhs& rhs, const Vector& x0, double dt, std::size_t n_samples,
                     std::size_t n_transient, const OdeOptions& options = {});

Trajectory integrate_ode(const SystemModel& model, const Vector& x0, double dt,
                         std::size_t n_samples, std::size_t n_transient,
                         double rel_tol = 1e-8, double abs_tol = 1e-10);

/// Fixed-step Dormand-Prince (fifth-order solution) from t=0 to t_end.
Vector integrate_fixed_step(const OdeRhs& rhs, const Vector& x0, double t_end, std::size_t n_steps);

/// Exact propagation z_k = e^{A k T_s} z0 for k = 1..n_samples.
Trajectory simulate_linear(const LinearSystemAd& sys, const Vector& z0, double sample_period,
                           std::size_t n_samples);

/// Full simulation settings of a benchmark run.
struct SimulationSpec {
  SystemKind kind = SystemKind::HenonHenon;
  RosslerParams rossler;
  std::optional<Vector> initial_condition;  ///< defaults per system
  std::size_t n_samples = 10'000;
  std::size_t n_transient = 1'000;
  std::optional<double> dt;  ///< defaults per system
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  std::uint64_t linear_seed = 0;  ///< perturbation seed of the forced linear benchmark
};

/// Builds the model at the given coupling and simulates it. For the linear
/// benchmark `m` selects the measurement normalisation (returned alongside).
struct SimulationResult {
  Trajectory trajectory;
  std::optional<MeasurementSet> linear_measurements;
};
SimulationResult simulate(const SimulationSpec& spec, double coupling, std::size_t m);

}  // namespace closeness
