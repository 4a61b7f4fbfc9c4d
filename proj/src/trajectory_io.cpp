#include "closeness/trajectory_io.hpp"

#include "closeness/error.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace closeness {

static_assert(std::endian::native == std::endian::little, "binary cache assumes a little-endian host");

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << 't';
  for (Eigen::Index c = 0; c < traj.samples.cols(); ++c) fmt::print(out, ",x{}", c + 1);
  out << '\n';
  for (Eigen::Index r = 0; r < traj.samples.rows(); ++r) {
    const double t = static_cast<double>(traj.transient_discarded + static_cast<std::size_t>(r) + 1) * traj.dt;
    fmt::print(out, "{}", t);
    for (Eigen::Index c = 0; c < traj.samples.cols(); ++c) fmt::print(out, ",{}", traj.samples(r, c));
    out << '\n';
  }
}

namespace {
std::filesystem::path sidecar(const std::filesystem::path& path) {
  auto s = path;
  s += ".json";
  return s;
}
}  // namespace

void write_trajectory_cache(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw Error(fmt::format("cannot write {}", path.string()));
  bin.write(reinterpret_cast<const char*>(traj.samples.data()),
            static_cast<std::streamsize>(traj.samples.size() * static_cast<Eigen::Index>(sizeof(double))));
  nlohmann::ordered_json meta;
  meta["dt"] = traj.dt;
  meta["rows"] = traj.samples.rows();
  meta["cols"] = traj.samples.cols();
  meta["n_x"] = traj.n_x;
  meta["n_y"] = traj.n_y;
  meta["transient"] = traj.transient_discarded;
  meta["layout"] = "f64-le-row-major";
  std::ofstream js(sidecar(path));
  js << meta.dump(2) << '\n';
}

Trajectory read_trajectory_cache(const std::filesystem::path& path) {
  std::ifstream js(sidecar(path));
  if (!js) throw Error(fmt::format("missing sidecar for {}", path.string()));
  const auto meta = nlohmann::json::parse(js);
  Trajectory traj;
  traj.dt = meta.at("dt").get<double>();
  traj.n_x = meta.at("n_x").get<std::size_t>();
  traj.n_y = meta.at("n_y").get<std::size_t>();
  traj.transient_discarded = meta.at("transient").get<std::size_t>();
  const auto rows = meta.at("rows").get<Eigen::Index>();
  const auto cols = meta.at("cols").get<Eigen::Index>();
  traj.samples.resize(rows, cols);
  std::ifstream bin(path, std::ios::binary);
  const auto bytes = static_cast<std::streamsize>(rows * cols * static_cast<Eigen::Index>(sizeof(double)));
  if (!bin.read(reinterpret_cast<char*>(traj.samples.data()), bytes)) {
    throw Error(fmt::format("{} is shorter than its sidecar declares", path.string()));
  }
  return traj;
}

}  // namespace closeness
