#pragma once

#include "closeness/dynamics.hpp"

#include <filesystem>
#include <iosfwd>

namespace closeness {

/// Header "t,x1..xn"; t is the absolute sample time.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

/// Raw little-endian float64 rows in `path` plus `path`.json describing
/// dt, rows, cols, n_x, n_y and transient.
void write_trajectory_cache(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory_cache(const std::filesystem::path& path);

}  // namespace closeness
