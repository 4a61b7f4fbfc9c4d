#include "closeness/dynamics.hpp"

#include "closeness/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>

namespace closeness {

void Trajectory::validate() const {
  if (samples.rows() == 0) throw ValidationError("trajectory is empty");
  if (static_cast<std::size_t>(samples.cols()) != n_x + n_y) {
    throw ValidationError(fmt::format("trajectory has {} columns but split ({}, {})", samples.cols(), n_x, n_y));
  }
  if (!samples.allFinite()) throw ValidationError("trajectory contains non-finite samples");
  if (!(dt > 0.0)) throw ValidationError("sampling period must be positive");
}

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::HenonHenon: return "HenonHenon";
    case SystemKind::RosslerLorenz: return "RosslerLorenz";
    case SystemKind::RosslerRossler: return "RosslerRossler";
    case SystemKind::LinearForced: return "LinearForced";
  }
  return "?";
}

SystemKind parse_system_kind(const std::string& name) {
  for (auto k : {SystemKind::HenonHenon, SystemKind::RosslerLorenz, SystemKind::RosslerRossler,
                 SystemKind::LinearForced}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError(fmt::format("unknown system kind '{}'", name));
}

SystemModel::SystemModel(SystemKind kind, double coupling, std::size_t n_x, std::size_t n_y)
    : kind_(kind), coupling_(coupling), n_x_(n_x), n_y_(n_y) {
  if (!(coupling >= 0.0) || !std::isfinite(coupling)) {
    throw ValidationError(fmt::format("coupling strength {} must be finite and nonnegative", coupling));
  }
}

SystemModel SystemModel::henon_henon(double coupling) { return {SystemKind::HenonHenon, coupling, 2, 2}; }

SystemModel SystemModel::rossler_lorenz(double coupling) {
  return {SystemKind::RosslerLorenz, coupling, 3, 3};
}

SystemModel SystemModel::rossler_rossler(double coupling, RosslerParams params) {
  SystemModel model{SystemKind::RosslerRossler, coupling, 3, 3};
  model.rossler_ = params;
  return model;
}

SystemModel SystemModel::linear_forced(LinearSystemAd system) {
  SystemModel model{SystemKind::LinearForced, 0.0, system.n_x(), system.n_y()};
  model.linear_ = std::make_shared<const LinearSystemAd>(std::move(system));
  return model;
}

const LinearSystemAd& SystemModel::linear() const {
  if (!linear_) throw ValidationError("model is not a linear system");
  return *linear_;
}

Vector SystemModel::default_initial_condition() const {
  switch (kind_) {
    case SystemKind::HenonHenon: return (Vector(4) << 0.7, 0.0, 0.91, 0.7).finished();
    case SystemKind::RosslerLorenz: return (Vector(6) << 0.0, 0.0, 0.4, 0.3, 0.3, 0.3).finished();
    case SystemKind::RosslerRossler: return (Vector(6) << 0.0, 0.0, 0.4, 0.0, 0.0, 0.4).finished();
    case SystemKind::LinearForced: {
      const auto& sys = linear();
      return (sys.modes() * Eigen::VectorXcd::Ones(static_cast<Eigen::Index>(sys.n()))).real();
    }
  }
  return {};
}

double SystemModel::default_dt() const {
  switch (kind_) {
    case SystemKind::HenonHenon: return 1.0;
    case SystemKind::RosslerLorenz: return 0.025;
    // No sampling period is given for this pair; 0.1 resolves each ~6 time-unit orbit with ~60 samples.
    case SystemKind::RosslerRossler: return 0.1;
    case SystemKind::LinearForced: return 1.0;
  }
  return 1.0;
}

void SystemModel::step_map(std::span<const double> z, std::span<double> out) const {
  if (kind_ != SystemKind::HenonHenon) throw ValidationError("model is not a discrete map");
  const double C = coupling_;
  const double x1 = z[0], x2 = z[1], y1 = z[2], y2 = z[3];
  out[0] = 1.4 - x1 * x1 + 0.3 * x2;
  out[1] = x1;
  // C x y + (1-C) y^2 written so the coupling term vanishes exactly when x1 == y1,
  // keeping the synchronisation manifold invariant in floating point.
  out[2] = 1.4 - (y1 * y1 + C * y1 * (x1 - y1)) + 0.3 * y2;
  out[3] = y1;
}

void SystemModel::vector_field(std::span<const double> z, std::span<double> dz) const {
  const double C = coupling_;
  switch (kind_) {
    case SystemKind::RosslerLorenz: {
      const double x1 = z[0], x2 = z[1], x3 = z[2], y1 = z[3], y2 = z[4], y3 = z[5];
      dz[0] = -6.0 * (x2 + x3);
      dz[1] = 6.0 * (x1 + 0.2 * x2);
      dz[2] = 6.0 * (0.2 + x3 * (x1 - 5.7));
      dz[3] = 10.0 * (-y1 + y2);
      dz[4] = 28.0 * y1 - y2 - y1 * y3 + C * x2 * x2;
      dz[5] = y1 * y2 - (8.0 / 3.0) * y3;
      return;
    }
    case SystemKind::RosslerRossler: {
      const double w1 = rossler_.omega1, w2 = rossler_.omega2;
      const double x1 = z[0], x2 = z[1], x3 = z[2], y1 = z[3], y2 = z[4], y3 = z[5];
      dz[0] = -w1 * x2 - x3;
      dz[1] = w1 * x1 + 0.15 * x2;
      dz[2] = 0.2 + x3 * (x1 - 10.0);
      dz[3] = -w2 * y2 - y3 + C * (x1 - y1);
      dz[4] = w2 * y1 + 0.15 * y2;
      dz[5] = 0.2 + y3 * (y1 - 10.0);
      return;
    }
    case SystemKind::LinearForced: {
      const auto& A = linear().matrix();
      for (Eigen::Index i = 0; i < A.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < A.cols(); ++j) s += A(i, j) * z[static_cast<std::size_t>(j)];
        dz[static_cast<std::size_t>(i)] = s;
      }
      return;
    }
    case SystemKind::HenonHenon: break;
  }
  throw ValidationError("model is not a continuous system");
}

namespace {

void guard(std::span<const double> z, std::size_t step) {
  for (double v : z) {
    if (!std::isfinite(v) || std::abs(v) > kDivergenceGuard) {
      throw DivergenceError(fmt::format("state diverged at step {} (|z| > {:g})", step, kDivergenceGuard), step);
    }
  }
}

void check_initial(const Vector& x0, std::size_t dim) {
  if (static_cast<std::size_t>(x0.size()) != dim) {
    throw ValidationError(fmt::format("initial condition has {} entries, expected {}", x0.size(), dim));
  }
  if (!x0.allFinite()) throw ValidationError("initial condition is not finite");
}

// Dormand-Prince 5(4) tableau with Hairer's continuous extension.
namespace dp {
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
}  // namespace dp

/// One Dormand-Prince stage sweep. k1 = f(t, y) must be filled; on return
/// y_new holds the 5th-order solution and k7 = f(t+h, y_new).
struct DpStepper {
  const OdeRhs& rhs;
  std::size_t n;
  Vector k2, k3, k4, k5, k6, k7, tmp;

  DpStepper(const OdeRhs& f, std::size_t dim)
      : rhs(f), n(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim), tmp(dim) {}

  void eval(double t, const Vector& y, Vector& out) {
    rhs(t, std::span<const double>(y.data(), n), std::span<double>(out.data(), n));
  }

  void step(double t, double h, const Vector& y, const Vector& k1, Vector& y_new) {
    using namespace dp;
    tmp = y + h * a21 * k1;
    eval(t + c2 * h, tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    eval(t + c3 * h, tmp, k3);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    eval(t + c4 * h, tmp, k4);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    eval(t + c5 * h, tmp, k5);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    eval(t + h, tmp, k6);
    y_new = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    eval(t + h, y_new, k7);
  }

  Vector error(double h, const Vector& k1) const {
    using namespace dp;
    return h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
  }
};

}  // namespace

Trajectory iterate_map(const SystemModel& model, const Vector& x0, std::size_t n_samples,
                       std::size_t n_transient) {
  if (!model.is_discrete()) throw ValidationError("iterate_map requires a discrete map");
  if (n_samples + n_transient < 1) throw ValidationError("nothing to iterate");
  if (n_samples == 0) throw ValidationError("n_samples must be positive");
  const std::size_t dim = model.dim();
  check_initial(x0, dim);

  Trajectory traj;
  traj.samples.resize(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(dim));
  traj.dt = 1.0;
  traj.transient_discarded = n_transient;
  traj.n_x = model.n_x();
  traj.n_y = model.n_y();

  Vector z = x0;
  Vector next(static_cast<Eigen::Index>(dim));
  for (std::size_t step = 1; step <= n_transient + n_samples; ++step) {
    model.step_map(std::span<const double>(z.data(), dim), std::span<double>(next.data(), dim));
    guard(std::span<const double>(next.data(), dim), step);
    z.swap(next);
    if (step > n_transient) traj.samples.row(static_cast<Eigen::Index>(step - n_transient - 1)) = z;
  }
  return traj;
}

Matrix integrate_ode(const OdeRhs& rhs, const Vector& x0, double dt, std::size_t n_samples,
                     std::size_t n_transient, const OdeOptions& options) {
  if (!(dt > 0.0)) throw ValidationError("dt must be positive");
  if (!(options.rel_tol > 0.0) || !(options.abs_tol > 0.0)) throw ValidationError("tolerances must be positive");
  if (n_samples == 0) throw ValidationError("n_samples must be positive");
  const auto n = static_cast<std::size_t>(x0.size());
  if (n == 0 || !x0.allFinite()) throw ValidationError("initial condition is empty or not finite");

  Matrix out(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(n));
  DpStepper stepper(rhs, n);
  Vector y = x0, y_new(n), k1(n);
  double t = 0.0;
  stepper.eval(t, y, k1);

  const std::size_t total = n_transient + n_samples;
  const double t_final = static_cast<double>(total) * dt;
  double h = options.initial_step > 0.0 ? options.initial_step
                                        : std::min(dt, 1e-3 * std::max(1.0, t_final));
  std::size_t next_grid = 1;
  Vector r2(n), r3(n), r4(n), r5(n);

  for (std::size_t steps = 0; next_grid <= total; ++steps) {
    if (steps >= options.max_steps) throw StiffnessError("maximum number of integration steps exceeded");
    if (h < 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
      throw StiffnessError(fmt::format("step size underflow at t = {:g}", t));
    }
    stepper.step(t, h, y, k1, y_new);
    const Vector err = stepper.error(h, k1);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sk = options.abs_tol + options.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      const double e = err[i] / sk;
      acc += e * e;
    }
    const double err_norm = std::sqrt(acc / static_cast<double>(n));
    if (!std::isfinite(err_norm)) {
      h *= 0.2;
      continue;
    }
    if (err_norm > 1.0) {
      h *= std::max(0.2, 0.9 * std::pow(err_norm, -0.2));
      continue;
    }

    // Accepted: emit every grid point in (t, t + h] through the continuous extension.
    const double t_new = t + h;
    const double grid_time = static_cast<double>(next_grid) * dt;
    if (grid_time <= t_new) {
      using namespace dp;
      r2 = y_new - y;
      r3 = h * k1 - r2;
      r4 = r2 - h * stepper.k7 - r3;
      r5 = h * (d1 * k1 + d3 * stepper.k3 + d4 * stepper.k4 + d5 * stepper.k5 + d6 * stepper.k6 +
                d7 * stepper.k7);
      while (next_grid <= total && static_cast<double>(next_grid) * dt <= t_new) {
        const double theta = (static_cast<double>(next_grid) * dt - t) / h;
        const double theta1 = 1.0 - theta;
        const Vector value = y + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)));
        guard(std::span<const double>(value.data(), n), next_grid);
        if (next_grid > n_transient) out.row(static_cast<Eigen::Index>(next_grid - n_transient - 1)) = value;
        ++next_grid;
      }
    }
    guard(std::span<const double>(y_new.data(), n), next_grid);
    t = t_new;
    y.swap(y_new);
    k1 = stepper.k7;
    const double factor = err_norm == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err_norm, -0.2)));
    h *= factor;
  }
  return out;
}

Trajectory integrate_ode(const SystemModel& model, const Vector& x0, double dt, std::size_t n_samples,
                         std::size_t n_transient, double rel_tol, double abs_tol) {
  if (model.is_discrete()) throw ValidationError("integrate_ode requires a continuous system");
  check_initial(x0, model.dim());
  OdeRhs rhs = [&model](double, std::span<const double> z, std::span<double> dz) { model.vector_field(z, dz); };
  Trajectory traj;
  traj.samples = integrate_ode(rhs, x0, dt, n_samples, n_transient, OdeOptions{rel_tol, abs_tol});
  traj.dt = dt;
  traj.transient_discarded = n_transient;
  traj.n_x = model.n_x();
  traj.n_y = model.n_y();
  return traj;
}

Vector integrate_fixed_step(const OdeRhs& rhs, const Vector& x0, double t_end, std::size_t n_steps) {
  if (n_steps == 0 || !(t_end > 0.0)) throw ValidationError("fixed-step integration needs t_end > 0 and steps > 0");
  const auto n = static_cast<std::size_t>(x0.size());
  const double h = t_end / static_cast<double>(n_steps);
  DpStepper stepper(rhs, n);
  Vector y = x0, y_new(n), k1(n);
  stepper.eval(0.0, y, k1);
  for (std::size_t s = 0; s < n_steps; ++s) {
    stepper.step(static_cast<double>(s) * h, h, y, k1, y_new);
    y.swap(y_new);
    k1 = stepper.k7;
  }
  return y;
}

Trajectory simulate_linear(const LinearSystemAd& sys, const Vector& z0, double sample_period,
                           std::size_t n_samples) {
  if (!(sample_period > 0.0)) throw ValidationError("sample period must be positive");
  if (n_samples == 0) throw ValidationError("n_samples must be positive");
  check_initial(z0, sys.n());

  const auto& modes = sys.modes();
  const auto& eigs = sys.eigenvalues();
  const Eigen::VectorXcd amplitudes = modes.fullPivLu().solve(z0.cast<std::complex<double>>());
  const double scale = 1.0 + z0.cwiseAbs().maxCoeff() + amplitudes.cwiseAbs().maxCoeff();

  Trajectory traj;
  traj.samples.resize(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(sys.n()));
  traj.dt = sample_period;
  traj.n_x = sys.n_x();
  traj.n_y = sys.n_y();
  const Eigen::MatrixXd A = sys.matrix();
  const auto nx = static_cast<Eigen::Index>(sys.n_x());
  const bool autonomous_x = sys.n_y() > 0 && (A.topRightCorner(nx, A.cols() - nx).array() == 0.0).all();

  Eigen::VectorXcd modal(eigs.size());
  for (std::size_t k = 1; k <= n_samples; ++k) {
    const double t = static_cast<double>(k) * sample_period;
    for (Eigen::Index i = 0; i < eigs.size(); ++i) modal[i] = amplitudes[i] * std::exp(eigs[i] * t);
    const Eigen::VectorXcd z = modes * modal;
    if (z.imag().cwiseAbs().maxCoeff() > 1e-9 * scale) {
      throw ConditioningError(fmt::format("imaginary residue above 1e-9 at sample {}", k));
    }
    Vector state = z.real();
    if (autonomous_x) {
      // The x block evolves under A_xx alone.
      const Eigen::MatrixXd P = sys.propagator(t);
      state.head(nx) = P.topLeftCorner(nx, nx) * z0.head(nx);
    }
    guard(std::span<const double>(state.data(), sys.n()), k);
    traj.samples.row(static_cast<Eigen::Index>(k - 1)) = state;
  }
  return traj;
}

SimulationResult simulate(const SimulationSpec& spec, double coupling, std::size_t m) {
  SimulationResult result;
  switch (spec.kind) {
    case SystemKind::HenonHenon: {
      auto model = SystemModel::henon_henon(coupling);
      const Vector x0 = spec.initial_condition.value_or(model.default_initial_condition());
      result.trajectory = iterate_map(model, x0, spec.n_samples, spec.n_transient);
      break;
    }
    case SystemKind::RosslerLorenz:
    case SystemKind::RosslerRossler: {
      auto model = spec.kind == SystemKind::RosslerLorenz ? SystemModel::rossler_lorenz(coupling)
                                                          : SystemModel::rossler_rossler(coupling, spec.rossler);
      const Vector x0 = spec.initial_condition.value_or(model.default_initial_condition());
      result.trajectory = integrate_ode(model, x0, spec.dt.value_or(model.default_dt()), spec.n_samples,
                                        spec.n_transient, spec.rel_tol, spec.abs_tol);
      break;
    }
    case SystemKind::LinearForced: {
      auto bench = example1_system(spec.linear_seed, m, coupling);
      const double Ts = spec.dt.value_or(1.0);
      const Vector z0 = spec.initial_condition.value_or(bench.initial_state);
      // Propagating n_transient extra samples and dropping them keeps time stamps consistent.
      Trajectory full = simulate_linear(bench.system, z0, Ts, spec.n_transient + spec.n_samples);
      result.trajectory = full;
      result.trajectory.samples = full.samples.bottomRows(static_cast<Eigen::Index>(spec.n_samples));
      result.trajectory.transient_discarded = spec.n_transient;
      result.linear_measurements = bench.measurements;
      break;
    }
  }
  return result;
}

}  // namespace closeness
