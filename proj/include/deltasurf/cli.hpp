#pragma once

// Subcommand orchestration behind the command-line front end. Every artifact
// is written as soon as it is computed; a failure leaves the finished files
// in place next to error.json.

#include "deltasurf/asymptotics.hpp"
#include "deltasurf/config.hpp"

#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace deltasurf {

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"geometry", "surface-modes", "transverse", "bs-solve", "sweep"};
  return names;
}

struct RunRequest {
  std::string subcommand;
  std::string config_path;
  std::filesystem::path out_dir = ".";
  int jobs = 1;
  std::optional<std::uint64_t> seed;
};

class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path dir, std::string hash, std::uint64_t seed)
      : dir_(std::move(dir)), hash_(std::move(hash)), seed_(seed) {
    std::filesystem::create_directories(dir_);
  }

  /// CSV with a leading `# config_hash=... seed=...` line.
  void csv(const std::string& name, const std::function<void(std::ostream&)>& body) {
    write(name, [&](std::ostream& os) {
      os << "# config_hash=" << hash_ << " seed=" << seed_ << '\n';
      body(os);
    });
  }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ofstream os(dir_ / name);
    if (!os) throw Error(ErrorKind::InvalidArgument, "cannot write " + (dir_ / name).string());
    body(os);
    files_.push_back(name);
  }

  const std::vector<std::string>& files() const { return files_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::string hash_;
  std::uint64_t seed_;
  std::vector<std::string> files_;
};

namespace detail {

inline void run_geometry(const RunConfig& rc, const Surface& surface, ArtifactWriter& out) {
  const SurfaceMesh mesh = build_mesh(surface, rc.mesh);
  out.write("mesh.txt", [&](std::ostream& os) { write_mesh(os, mesh); });
  out.csv("geometry.csv", [&](std::ostream& os) {
    os << "vertex,patch,u,v,x,y,z,K,M,W,boundary\n";
    os.precision(15);
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      const MeshVertex& v = mesh.vertices[i];
      os << i << ',' << v.patch << ',' << v.param.x() << ',' << v.param.y() << ',' << v.point.x() << ','
         << v.point.y() << ',' << v.point.z() << ',' << v.jet.gauss << ',' << v.jet.mean << ','
         << curvature_potential(v.jet) << ',' << (v.boundary ? 1 : 0) << '\n';
    }
  });
}

inline void run_surface_modes(const RunConfig& rc, const Surface& surface, ArtifactWriter& out) {
  const SpectralResult r = dirichlet_modes(surface, rc.modes, rc.fem);
  out.csv("modes.csv", [&](std::ostream& os) { write_spectral_csv(os, r); });
}

inline void run_transverse(const RunConfig& rc, ArtifactWriter& out) {
  std::vector<TransverseSpec> rows;
  for (double a : rc.transverse_widths)
    for (double b : rc.transverse_betas) rows.push_back({a, b, TransverseBoundary::Dirichlet, std::nullopt});
  out.csv("transverse.csv", [&](std::ostream& os) { write_transverse_csv(os, rows); });
}

inline void run_bs_solve(const RunConfig& rc, const Surface& surface, std::uint64_t seed, ArtifactWriter& out) {
  auto geo = std::make_shared<LayerGeometry>(std::make_shared<SurfaceMesh>(build_mesh(surface, rc.mesh)));
  BoundStateOptions bo = rc.bound;
  bo.normalize = true;
  const BoundStateResult r = solve_bound_states(geo, rc.beta, rc.bound_states, bo);
  std::vector<double> defects;
  for (int j = 0; j < rc.bound_states; ++j)
    defects.push_back(r.eigenvalues[j] ? trace_consistency(r, j) : std::numeric_limits<double>::quiet_NaN());
  out.csv("bound_states.csv", [&](std::ostream& os) { write_bound_states_csv(os, {r}, {defects}); });
  out.csv("density.csv", [&](std::ostream& os) { write_density_csv(os, r); });
  if (rc.field_points == 0 || !r.eigenvalues[0]) return;

  // ground-state field at seeded points on a sphere around the surface
  Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
  for (const auto& v : geo->mesh().vertices) {
    lo = lo.cwiseMin(v.point);
    hi = hi.cwiseMax(v.point);
  }
  const Vec3 centre = 0.5 * (lo + hi);
  const double radius = 0.5 * (hi - lo).norm() + 0.5;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  out.csv("field.csv", [&](std::ostream& os) {
    os << "x,y,z,distance,value,grad_x,grad_y,grad_z\n";
    os.precision(15);
    for (int i = 0; i < rc.field_points; ++i) {
      Vec3 d(normal(rng), normal(rng), normal(rng));
      const Vec3 x = centre + radius * d.normalized();
      const FieldValue f = reconstruct_eigenfunction(r, 0, x);
      os << x.x() << ',' << x.y() << ',' << x.z() << ',' << distance_to_surface(*geo, x) << ',' << f.value << ','
         << f.gradient.x() << ',' << f.gradient.y() << ',' << f.gradient.z() << '\n';
    }
  });
}

inline void run_sweep(const RunConfig& rc, const Surface& surface, ArtifactWriter& out) {
  const SweepResult s = sweep(surface, rc.sweep);
  out.csv("sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, s.records); });
  out.csv("fit.csv", [&](std::ostream& os) {
    os << "j,boundary,fitted_c,max_rel_misfit,monotone,tail_nonincreasing,doubling_nonincreasing,status\n";
    os.precision(15);
    for (int j = 1; j <= rc.sweep.j_max; ++j) {
      os << j << ',' << to_string(s.boundary) << ',';
      std::string status = "ok";
      std::optional<RateFit> fit;
      try {
        fit = gated_rate_fit(s, j);
        if (!fit) status = "withheld for lipschitz boundary";
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::InsufficientData) throw;
        status = "insufficient data";
      }
      if (fit) os << fit->fitted_c << ',' << fit->max_rel_misfit << ',' << (fit->monotone_flag ? 1 : 0);
      else os << ",,";
      os << ',' << (tail_nonincreasing(s.records, j) ? 1 : 0) << ',' << (doubling_nonincreasing(s.records, j) ? 1 : 0)
         << ',' << status << '\n';
    }
  });
  if (!s.dropped.empty())
    out.csv("dropped.csv", [&](std::ostream& os) {
      os << "beta,reason\n";
      for (const auto& [b, why] : s.dropped) os << b << ',' << why << '\n';
    });
  if (rc.sweep.geometry_constant)
    out.csv("bounds.csv", [&](std::ostream& os) {
      os << "beta,j,E_j,upper_bound,status,reason\n";
      os.precision(15);
      const auto checks = cross_check_bounds(s.records, *rc.sweep.geometry_constant, rc.sweep.xi);
      for (std::size_t i = 0; i < checks.size(); ++i) {
        const BoundCheck& c = checks[i];
        os << c.beta << ',' << c.j << ',';
        if (s.records[i].energy) os << *s.records[i].energy;
        os << ',';
        if (c.bound) os << *c.bound;
        os << ',' << to_string(c.status) << ',' << c.reason << '\n';
      }
    });
  if (rc.write_svg)
    for (int j = 1; j <= rc.sweep.j_max; ++j) {
      std::optional<double> c;
      try {
        if (auto fit = gated_rate_fit(s, j)) c = fit->fitted_c;
      } catch (const Error&) {
      }
      out.write("sweep_j" + std::to_string(j) + ".svg", [&](std::ostream& os) { write_sweep_svg(os, s.records, j, c); });
    }
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::ImmersionFailure: return "immersion_failure";
    case ErrorKind::OutOfTube: return "out_of_tube";
    case ErrorKind::OutsideDomain: return "outside_domain";
    case ErrorKind::MeshGeneration: return "mesh_generation";
    case ErrorKind::MeshQuality: return "mesh_quality";
    case ErrorKind::IterationLimit: return "iteration_limit";
    case ErrorKind::ChartDomain: return "chart_domain";
    case ErrorKind::Validity: return "validity";
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::Quadrature: return "quadrature";
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

}  // namespace detail

/// Run one subcommand. Artifacts go to `req.out_dir`; manifest.json records
/// the run (with a timestamp) and error.json is added on numerical failure.
inline int run(const RunRequest& req, std::ostream& err = std::cerr) {
  if (std::find(subcommands().begin(), subcommands().end(), req.subcommand) == subcommands().end()) {
    err << "unknown subcommand '" << req.subcommand << "'\n";
    return kExitConfig;
  }
  ConfigText text;
  RunConfig rc;
  Surface surface;
  try {
    text = load_config(req.config_path);
    rc = read_run_config(text);
    surface = make_surface(rc.surface_name, rc.surface_params);
  } catch (const Error& e) {
    err << e.what() << '\n';
    return kExitConfig;
  }
  if (req.jobs < 1) {
    err << "--jobs must be at least 1\n";
    return kExitConfig;
  }
#ifdef _OPENMP
  omp_set_num_threads(req.jobs);
#endif
  const std::uint64_t seed = req.seed.value_or(rc.seed);
  const std::string hash = config_hash(text);
  ArtifactWriter out(req.out_dir, hash, seed);

  nlohmann::json manifest{{"subcommand", req.subcommand}, {"config", req.config_path}, {"config_hash", hash},
                          {"seed", seed}, {"jobs", req.jobs}, {"started", detail::utc_timestamp()}};
  auto finish = [&](const char* status) {
    manifest["status"] = status;
    manifest["finished"] = detail::utc_timestamp();
    manifest["artifacts"] = out.files();
    std::ofstream(out.dir() / "manifest.json") << manifest.dump(2) << '\n';
  };

  try {
    if (req.subcommand == "geometry") detail::run_geometry(rc, surface, out);
    else if (req.subcommand == "surface-modes") detail::run_surface_modes(rc, surface, out);
    else if (req.subcommand == "transverse") detail::run_transverse(rc, out);
    else if (req.subcommand == "bs-solve") detail::run_bs_solve(rc, surface, seed, out);
    else detail::run_sweep(rc, surface, out);
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << '\n';
    nlohmann::json error{{"kind", detail::kind_name(e.kind())}, {"message", e.what()}, {"partial", out.files()}};
    std::ofstream(out.dir() / "error.json") << error.dump(2) << '\n';
    finish("failed");
    return kExitNumerical;
  }
  finish("ok");
  return kExitSuccess;
}

}  // namespace deltasurf
