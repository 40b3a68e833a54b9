#pragma once

// Orchestration: builds the discrete problem a validated configuration
// describes, runs the requested solver, and emits the run artifacts —
// `diagnostics.csv` (one streamed row per time step), `snapshot_<n>.csv`
// (sampled fields), `state_final.csv` (restartable coefficients), and
// `report.json` (canonical config echo plus summary statistics).  Failures
// from guarded solver paths become structured reports with the machine
// failure class, never half-written NaN output.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "chmech/config.hpp"
#include "chmech/dense_reference.hpp"
#include "chmech/dispersion.hpp"
#include "chmech/dynamics.hpp"
#include "chmech/fd.hpp"
#include "chmech/statics.hpp"

namespace chmech {

struct RunReport {
  int exit_code = 0;  // 0 success, 2 config error, 3 solver failure, 4 I/O error
  std::string failure_class;
  std::string message;
  std::string out_dir;
  std::vector<std::string> artifacts;  // file names relative to out_dir
  nlohmann::json summary;
};

namespace rundet {

using configdet::fmt;

inline int env_threads() {
  const char* v = std::getenv("CHMECH_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 0)
    throw InvalidConfig("CHMECH_THREADS must be a nonnegative integer");
  return static_cast<int>(n);
}

inline void apply_env(ProblemConfig& cfg) {
  if (const char* v = std::getenv("CHMECH_OUT_DIR"); v && *v) cfg.out_dir = v;
}

// Streams one CSV row at a time and refuses non-finite values, so a crashed
// run leaves a valid prefix and no file ever contains NaN or Inf.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header) {
    out_.open(path);
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
    out_ << header << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed on '" + path.string() + "'");
  }

  void row(const std::vector<double>& values) {
    for (double v : values)
      if (!std::isfinite(v))
        throw NonFiniteEvaluation("refusing to write a non-finite value to CSV output");
    for (std::size_t i = 0; i < values.size(); ++i)
      out_ << (i ? "," : "") << fmt(values[i]);
    out_ << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed while streaming CSV output");
  }

 private:
  std::ofstream out_;
};

template <int d>
SplineSpace<d> make_space(const ProblemConfig& cfg) {
  std::array<double, d> lo{}, hi{};
  std::array<int, d> el{};
  for (int ax = 0; ax < d; ++ax) {
    lo[ax] = cfg.lo[ax];
    hi[ax] = cfg.hi[ax];
    el[ax] = cfg.elements[ax];
  }
  return SplineSpace<d>(lo, hi, el, cfg.degree, cfg.quadrature);
}

template <int d>
double hat(const ProblemConfig& cfg, const std::array<double, d>& x, int ax) {
  return (x[ax] - cfg.lo[ax]) / (cfg.hi[ax] - cfg.lo[ax]);
}

template <int d>
LoadSpec<d> make_loads(const ProblemConfig& cfg) {
  LoadSpec<d> loads;
  if (cfg.body_force_profile == "constant") {
    loads.body_force = [&cfg](const std::array<double, d>&, double) {
      Vec<d> f;
      for (int i = 0; i < d; ++i) f[i] = cfg.body_force[i];
      return f;
    };
  } else if (cfg.body_force_profile == "sine") {
    loads.body_force = [&cfg](const std::array<double, d>& x, double) {
      Vec<d> f;
      const double s = std::sin(2.0 * M_PI * hat<d>(cfg, x, 0));
      for (int i = 0; i < d; ++i) f[i] = cfg.body_force[i] * s;
      return f;
    };
  }
  if (!cfg.traction_faces.empty()) {
    loads.traction_faces = cfg.traction_faces;
    loads.traction = [&cfg](const std::array<double, d>&, double) {
      Vec<d> g;
      for (int i = 0; i < d; ++i) g[i] = cfg.traction[i];
      return g;
    };
  }
  if (!cfg.exchange_faces.empty()) {
    loads.alpha = cfg.material.permeability;
    loads.robin_faces = cfg.exchange_faces;
    loads.mu_external = [&cfg](const std::array<double, d>&, double t) {
      if (cfg.mu_switch_time >= 0 && t >= cfg.mu_switch_time) return cfg.mu_external_late;
      return cfg.mu_external;
    };
  }
  return loads;
}

// Initial fields from the named profiles.
template <int d>
void initial_fields(const ProblemConfig& cfg, const SplineSpace<d>& space, Eigen::VectorXd& y,
                    Eigen::VectorXd& v, Eigen::VectorXd& zeta) {
  const int N = space.n_scalar();
  y = space.identity_coefficients();
  for (int c = 0; c < d; ++c) {
    if (cfg.bump_amplitude == 0.0) break;
    const Eigen::VectorXd bump = space.interpolate([&](const std::array<double, d>& x) {
      return cfg.bump_amplitude * std::sin(cfg.bump_mode * M_PI * hat<d>(cfg, x, c));
    });
    y.segment(c * N, N) += bump;
  }

  v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d) * N);
  if (cfg.velocity_profile == "sine") {
    for (int c = 0; c < d; ++c)
      v.segment(c * N, N) = space.interpolate([&](const std::array<double, d>& x) {
        return cfg.velocity_amplitude * std::sin(cfg.velocity_mode * M_PI * hat<d>(cfg, x, c));
      });
  } else if (cfg.velocity_profile == "compressive") {
    for (int c = 0; c < d; ++c)
      v.segment(c * N, N) = space.interpolate(
          [&](const std::array<double, d>& x) { return -cfg.velocity_amplitude * x[c]; });
  }

  zeta = space.interpolate([&](const std::array<double, d>& x) {
    return cfg.concentration +
           cfg.perturbation_amplitude *
               std::sin(cfg.perturbation_mode * M_PI * hat<d>(cfg, x, 0));
  });
}

// Restart file: one row per scalar coefficient, columns y(d), v(d), zeta, mu.
template <int d>
void load_state_file(const std::string& path, int N, Eigen::VectorXd& y, Eigen::VectorXd& v,
                     Eigen::VectorXd& zeta, Eigen::VectorXd& mu) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open coefficients file '" + path + "'");
  y.resize(static_cast<Eigen::Index>(d) * N);
  v.resize(static_cast<Eigen::Index>(d) * N);
  zeta.resize(N);
  mu.resize(N);
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= N) throw IoError("coefficients file '" + path + "' has too many rows");
    std::istringstream ls(line);
    std::array<double, 2 * 2 + 2> vals{};
    const int ncol = 2 * d + 2;
    for (int c = 0; c < ncol; ++c) {
      std::string cell;
      if (!std::getline(ls, cell, ','))
        throw IoError("coefficients file '" + path + "' row " + std::to_string(row + 1) +
                      " has fewer than " + std::to_string(ncol) + " columns");
      char* end = nullptr;
      vals[c] = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || !std::isfinite(vals[c]))
        throw IoError("coefficients file '" + path + "' row " + std::to_string(row + 1) +
                      ": bad number '" + cell + "'");
    }
    for (int c = 0; c < d; ++c) y[c * N + row] = vals[c];
    for (int c = 0; c < d; ++c) v[c * N + row] = vals[d + c];
    zeta[row] = vals[2 * d];
    mu[row] = vals[2 * d + 1];
    ++row;
  }
  if (row != N)
    throw IoError("coefficients file '" + path + "' has " + std::to_string(row) +
                  " rows; the mesh needs " + std::to_string(N));
}

template <int d>
void write_state_file(const std::filesystem::path& path, const SplineSpace<d>& space,
                      const Eigen::VectorXd& y, const Eigen::VectorXd& v,
                      const Eigen::VectorXd& zeta, const Eigen::VectorXd& mu) {
  const int N = space.n_scalar();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (int i = 0; i < N; ++i) {
    for (int c = 0; c < d; ++c) out << (c ? "," : "") << fmt(y[c * N + i]);
    for (int c = 0; c < d; ++c) out << "," << fmt(v[c * N + i]);
    out << "," << fmt(zeta[i]) << "," << fmt(mu[i]) << '\n';
  }
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

// Sample grid along one axis: samples_per_element points per element plus the
// far endpoint, nudged inside the closed domain for evaluation.
inline std::vector<double> axis_samples(double lo, double hi, int n_elem, int spe) {
  const int n = n_elem * spe;
  std::vector<double> xs(n + 1);
  for (int i = 0; i <= n; ++i) xs[i] = lo + (hi - lo) * i / n;
  return xs;
}

template <int d>
std::string write_snapshot(const ProblemConfig& cfg, const SplineSpace<d>& space,
                           const std::filesystem::path& dir, int index,
                           const Eigen::VectorXd& y, const Eigen::VectorXd& zeta,
                           const Eigen::VectorXd& mu, double* min_det_out = nullptr) {
  std::string header;
  for (int c = 0; c < d; ++c) header += (c ? ",x" : "x") + std::to_string(c);
  for (int c = 0; c < d; ++c) header += ",y" + std::to_string(c);
  header += ",det_F,zeta,mu";
  const std::string name = "snapshot_" + std::to_string(index) + ".csv";
  CsvWriter csv(dir / name, header);

  double min_det = std::numeric_limits<double>::infinity();
  const auto emit_point = [&](const std::array<double, d>& x) {
    const auto yd = space.evaluate_vector(y, x, 1);
    const double det = determinant<d>(yd.grad);
    min_det = std::min(min_det, det);
    const auto zd = space.evaluate_scalar(zeta, x, 0);
    const auto md = space.evaluate_scalar(mu, x, 0);
    std::vector<double> row;
    for (int c = 0; c < d; ++c) row.push_back(x[c]);
    for (int c = 0; c < d; ++c) row.push_back(yd.value[c]);
    row.push_back(det);
    row.push_back(zd.value);
    row.push_back(md.value);
    csv.row(row);
  };

  const auto xs0 = axis_samples(cfg.lo[0], cfg.hi[0], cfg.elements[0],
                                cfg.samples_per_element);
  if constexpr (d == 1) {
    for (double x0 : xs0) emit_point({x0});
  } else {
    const auto xs1 = axis_samples(cfg.lo[1], cfg.hi[1], cfg.elements[1],
                                  cfg.samples_per_element);
    for (double x0 : xs0)
      for (double x1 : xs1) emit_point({x0, x1});
  }
  if (min_det_out) *min_det_out = min_det;
  return name;
}

// --- static runs -----------------------------------------------------------

template <int d>
void run_static_impl(const ProblemConfig& cfg, const std::filesystem::path& dir,
                     RunReport& rep) {
  const SplineSpace<d> space = make_space<d>(cfg);
  const DefaultLaw<d> law(cfg.material);
  const int threads = env_threads();

  StaticProblem<d> prob(space, law, cfg.material, cfg.total_content());
  const LoadSpec<d> loads = make_loads<d>(cfg);
  if (loads.body_force)
    prob.body_force = [&loads](const std::array<double, d>& x) {
      return loads.body_force(x, 0.0);
    };
  for (int face : cfg.dirichlet_faces)
    prob.dirichlet.push_back({face, [&cfg](const std::array<double, d>& x) {
                                Vec<d> p;
                                for (int i = 0; i < d; ++i) p[i] = cfg.dirichlet_stretch * x[i];
                                return p;
                              }});

  StaticOptions opts;
  opts.g_tol = cfg.g_tol;
  opts.max_iter = cfg.max_iter;
  opts.det_floor = cfg.det_floor;
  opts.n_threads = threads;

  const int N = space.n_scalar();
  const Eigen::VectorXd y0 = cfg.dirichlet_stretch * space.identity_coefficients();
  const Eigen::VectorXd z0 =
      Eigen::VectorXd::Constant(N, cfg.total_content() / cfg.volume());

  StaticSolution<d> sol = minimize_energy(prob, y0, z0, opts);
  const PotentialField<d> mu_field =
      chemical_potential_field(space, law, cfg.material, sol.y, sol.zeta, threads);
  sol.cn = check_ciarlet_necas(space, sol.y, cfg.cn_samples, cfg.seed);

  rep.artifacts.push_back(
      write_snapshot<d>(cfg, space, dir, 0, sol.y, sol.zeta, mu_field.coefficients));
  write_state_file<d>(dir / "state_final.csv", space, sol.y,
                      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d) * N), sol.zeta,
                      mu_field.coefficients);
  rep.artifacts.push_back("state_final.csv");

  rep.summary = {
      {"energy", sol.energy},
      {"mu_bar", sol.mu_bar},
      {"mu_field_mean", mu_field.mean},
      {"mu_field_stddev", mu_field.stddev},
      {"iterations", sol.iterations},
      {"projected_gradient", sol.projected_gradient},
      {"mass_residual", sol.mass_residual},
      {"zeta_quad_min", sol.zeta_quad_min},
      {"min_det", sol.min_det},
      {"injectivity",
       {{"verdict", to_string(sol.cn->verdict)},
        {"volume_integral", sol.cn->volume_integral},
        {"image_estimate", sol.cn->image_estimate},
        {"sigma", sol.cn->sigma},
        {"n_samples", sol.cn->n_samples},
        {"n_inside", sol.cn->n_inside}}},
  };
}

// --- dynamic / rate-relaxation runs ---------------------------------------

template <int d>
void run_dynamic_impl(const ProblemConfig& cfg, const std::filesystem::path& dir,
                      RunReport& rep) {
  const SplineSpace<d> space = make_space<d>(cfg);
  const DefaultLaw<d> law(cfg.material);
  const ConstantMobility<d> mobility(cfg.material);
  const LoadSpec<d> loads = make_loads<d>(cfg);

  DynamicOptions opts;
  opts.dt = cfg.dt;
  opts.scheme = cfg.scheme == "midpoint" ? TimeScheme::midpoint : TimeScheme::backward_euler;
  opts.newton_tol = cfg.newton_tol;
  opts.max_newton = cfg.max_newton;
  opts.max_halvings = cfg.max_halvings;
  opts.dirichlet_faces = cfg.dirichlet_faces;
  opts.allen_cahn = cfg.mode == RunMode::allen_cahn;
  opts.relaxation_time = cfg.relaxation_time;
  opts.n_threads = env_threads();

  DynamicSolver<d> solver(space, law, mobility, cfg.material, loads, opts);
  const int N = space.n_scalar();

  DynamicState<d> s;
  s.t = 0.0;
  if (!cfg.coefficients_file.empty()) {
    load_state_file<d>(cfg.coefficients_file, N, s.y, s.v, s.zeta, s.mu);
  } else {
    initial_fields<d>(cfg, space, s.y, s.v, s.zeta);
    s.mu = solver.consistent_potential(s.y, s.zeta);
  }

  const long n_steps = std::max<long>(1, static_cast<long>(std::ceil(cfg.T / cfg.dt - 1e-12)));

  CsvWriter diag(dir / "diagnostics.csv",
                 "t,kinetic,stored,dissipated_step,work_step,balance_residual,mass,min_det");
  rep.artifacts.push_back("diagnostics.csv");

  int snap = 0;
  double snap_min_det = 0.0;
  rep.artifacts.push_back(
      write_snapshot<d>(cfg, space, dir, snap++, s.y, s.zeta, s.mu, &snap_min_det));

  const double kinetic0 = solver.kinetic_energy(s);
  const double stored0 = solver.stored_energy(s.y, s.zeta);
  const double mass0 =
      (solver.ops().mass_scalar * Eigen::VectorXd::Ones(N)).dot(s.zeta);
  diag.row({0.0, kinetic0, stored0, 0.0, 0.0, 0.0, mass0, snap_min_det});

  double dissipated = 0.0, work = 0.0, grad_mu_sq = 0.0;
  double max_balance = std::numeric_limits<double>::lowest();  // signed: >0 creates energy
  double sup_grad_zeta = 0.0, min_det = snap_min_det;
  int max_halving_seen = 0;
  long substeps = 0;

  for (long step = 1; step <= n_steps; ++step) {
    const StepReport r = solver.step(s);
    diag.row({s.t, r.kinetic, r.stored, r.dissipated, r.work, r.balance_residual, r.mass,
              r.min_det});
    dissipated += r.dissipated;
    work += r.work;
    max_balance = std::max(max_balance, r.balance_residual);
    grad_mu_sq += r.grad_mu_sq_dt;
    sup_grad_zeta = std::max(sup_grad_zeta, r.sup_grad_zeta);
    min_det = std::min(min_det, r.min_det);
    max_halving_seen = std::max(max_halving_seen, r.deepest_halving);
    substeps += r.substeps;

    const bool last = step == n_steps;
    if (last || (cfg.snapshot_stride > 0 && step % cfg.snapshot_stride == 0))
      rep.artifacts.push_back(write_snapshot<d>(cfg, space, dir, snap++, s.y, s.zeta, s.mu));

    if (last) {
      rep.summary = {
          {"steps", n_steps},
          {"substeps", substeps},
          {"deepest_halving", max_halving_seen},
          {"t_final", s.t},
          {"energy_initial", kinetic0 + stored0},
          {"energy_final", r.energy_end},
          {"kinetic_final", r.kinetic},
          {"stored_final", r.stored},
          {"dissipated_total", dissipated},
          {"work_total", work},
          {"max_balance_residual", max_balance},
          {"mass_initial", mass0},
          {"mass_final", r.mass},
          {"mass_drift", std::abs(r.mass - mass0)},
          {"min_det", min_det},
          {"grad_mu_l2_spacetime", std::sqrt(grad_mu_sq)},
          {"sup_grad_zeta", sup_grad_zeta},
      };
    }
  }

  write_state_file<d>(dir / "state_final.csv", space, s.y, s.v, s.zeta, s.mu);
  rep.artifacts.push_back("state_final.csv");
}

// --- dispersion runs -------------------------------------------------------

inline void run_dispersion_impl(const ProblemConfig& cfg, const std::filesystem::path& dir,
                                RunReport& rep) {
  const DefaultLaw<1> law(cfg.material);
  const ConstantMobility<1> mobility(cfg.material);

  DispersionOptions opts;
  opts.length = cfg.hi[0] - cfg.lo[0];
  opts.n_elem = cfg.elements[0];
  opts.degree = cfg.degree;
  opts.modes = cfg.modes;
  opts.amplitude = cfg.amplitude;
  opts.steps_per_period = cfg.steps_per_period;
  opts.periods = cfg.periods;
  opts.n_threads = env_threads();

  const DispersionResult res = dispersion_probe(law, mobility, cfg.material, opts);

  CsvWriter csv(dir / "dispersion.csv", "wavenumber,omega,omega_dft,omega_model,velocity");
  for (const auto& p : res.points)
    csv.row({p.wavenumber, p.omega, p.omega_dft, p.omega_model, p.velocity});
  rep.artifacts.push_back("dispersion.csv");

  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : res.points)
    pts.push_back({{"wavenumber", p.wavenumber},
                   {"omega", p.omega},
                   {"omega_dft", p.omega_dft},
                   {"omega_model", p.omega_model},
                   {"velocity", p.velocity}});
  rep.summary = {{"verdict", to_string(res.verdict)},
                 {"speed_spread", res.speed_spread},
                 {"points", pts}};
}

// --- cross-validation battery (`check` subcommand) ------------------------

inline MaterialParams reference_check_params() {
  MaterialParams mp;
  mp.shear_modulus = 1.0;
  mp.volumetric_modulus = 0.5;
  mp.barrier_coefficient = 1e-3;
  mp.barrier_exponent = 6.0;
  mp.coupling = 0.2;
  mp.chemical_stiffness = 1.0;
  mp.equilibrium_concentration = 0.7;
  mp.capillarity = 0.02;
  mp.hypergradient_scale = 1e-4;
  mp.static_exponent = 4.0;
  mp.density = 1.0;
  mp.mobility = 1.0;
  return mp;
}

template <int d>
double material_fd_mismatch(const MaterialParams& mp, unsigned long long seed) {
  const DefaultLaw<d> law(mp);
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-0.25, 0.25), uz(0.3, 1.4);
  double worst = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    Mat<d> F = Mat<d>::Identity();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) F(i, j) += u(gen);
    if (!(determinant<d>(F) > 0.3)) continue;
    const double z = uz(gen);
    const auto ev = law.eval(F, z);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const auto slice = [&](const Eigen::VectorXd& v) {
          Mat<d> Fp = F;
          Fp(i, j) = v[0];
          return law.eval(Fp, z).value;
        };
        Eigen::VectorXd at(1);
        at << F(i, j);
        const double fd = fd_partial(slice, at, 0);
        worst = std::max(worst,
                         std::abs(fd - ev.dF(i, j)) / (1.0 + std::abs(ev.dF(i, j))));
      }
    const auto in_z = [&](const Eigen::VectorXd& v) { return law.eval(F, v[0]).value; };
    Eigen::VectorXd zz(1);
    zz << z;
    worst = std::max(worst, std::abs(fd_partial(in_z, zz, 0) - ev.dz) /
                                (1.0 + std::abs(ev.dz)));

    Vec<d> g;
    for (int i = 0; i < d; ++i) g[i] = u(gen) * 2.0;
    const auto cap = capillarity_density<d>(F, g, mp.capillarity);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const auto slice = [&](const Eigen::VectorXd& v) {
          Mat<d> Fp = F;
          Fp(i, j) = v[0];
          return capillarity_density<d>(Fp, g, mp.capillarity).value;
        };
        Eigen::VectorXd at(1);
        at << F(i, j);
        const double fd = fd_partial(slice, at, 0);
        worst = std::max(worst,
                         std::abs(fd - cap.dF(i, j)) / (1.0 + std::abs(cap.dF(i, j))));
      }
  }
  return worst;
}

inline void run_check_impl(const ProblemConfig& cfg, RunReport& rep) {
  nlohmann::json checks = nlohmann::json::array();
  bool all_pass = true;
  const auto record = [&](const std::string& name, bool pass, const std::string& detail) {
    checks.push_back({{"name", name}, {"pass", pass}, {"detail", detail}});
    all_pass = all_pass && pass;
  };

  // 1. Analytic derivatives of the configured material against finite
  // differences, in the configured dimension.
  {
    const double worst = cfg.dimension == 1
                             ? material_fd_mismatch<1>(cfg.material, cfg.seed)
                             : material_fd_mismatch<2>(cfg.material, cfg.seed);
    record("material_derivatives_fd", worst < 1e-6,
           "max relative mismatch " + fmt(worst));
  }

  const MaterialParams mp = reference_check_params();
  const DefaultLaw<1> law(mp);
  const ConstantMobility<1> mob(mp);

  // 2. Constrained statics against the dense multi-start reference.
  {
    const SplineSpace<1> space({0.0}, {1.0}, {4}, 3);
    StaticProblem<1> prob(space, law, mp, 0.65);
    prob.body_force = [](const std::array<double, 1>& x) {
      Vec<1> f;
      f[0] = 0.25 * std::sin(2.0 * M_PI * x[0]);
      return f;
    };
    prob.dirichlet.push_back({0, [](const std::array<double, 1>&) {
                                Vec<1> p;
                                p[0] = 0.0;
                                return p;
                              }});
    StaticOptions sopt;
    sopt.g_tol = 1e-7;
    const StaticSolution<1> main_sol =
        minimize_energy(prob, space.identity_coefficients(),
                        Eigen::VectorXd::Constant(space.n_scalar(), 0.65), sopt);

    DenseConfig dcfg;
    dcfg.n_elem = 4;
    dcfg.degree = 3;
    dcfg.mp = mp;
    dcfg.Z_total = 0.65;
    dcfg.pin_left = 0.0;
    dcfg.body_force = [](double x) { return 0.25 * std::sin(2.0 * M_PI * x); };
    const DenseStaticResult ref = dense_static_solve(dcfg, law, 32, cfg.seed);

    const double de = std::abs(main_sol.energy - ref.energy);
    const double dy = (main_sol.y - ref.y).cwiseAbs().maxCoeff();
    record("static_dense_cross", de < 1e-7 && dy < 1e-4,
           "|dE| " + fmt(de) + ", sup|dy| " + fmt(dy));
  }

  // 3. Implicit dynamics against the dense finite-difference reference.
  {
    const SplineSpace<1> space({0.0}, {1.0}, {4}, 3);
    const Eigen::VectorXd y0 = space.interpolate(
        [](const std::array<double, 1>& x) { return x[0] + 0.02 * std::sin(M_PI * x[0]); });
    const Eigen::VectorXd v0 = space.interpolate(
        [](const std::array<double, 1>& x) { return 0.1 * std::sin(2.0 * M_PI * x[0]); });
    const Eigen::VectorXd z0 = space.interpolate([&](const std::array<double, 1>& x) {
      return mp.equilibrium_concentration + 0.1 * std::cos(M_PI * x[0]);
    });
    LoadSpec<1> loads;
    DynamicOptions dopt;
    dopt.dt = 2e-3;
    dopt.newton_tol = 1e-12;
    DynamicSolver<1> solver(space, law, mob, mp, loads, dopt);
    const Eigen::VectorXd mu0 = solver.consistent_potential(y0, z0);
    DynamicState<1> s;
    s.y = y0;
    s.v = v0;
    s.zeta = z0;
    s.mu = mu0;
    for (int i = 0; i < 10; ++i) solver.step(s);

    DenseConfig dcfg;
    dcfg.n_elem = 4;
    dcfg.degree = 3;
    dcfg.mp = mp;
    const DenseDynamicResult ref = dense_dynamic_steps(dcfg, law, y0, v0, z0, mu0, 2e-3, 10);
    const double dy = (s.y - ref.y).cwiseAbs().maxCoeff();
    const double dz = (s.zeta - ref.zeta).cwiseAbs().maxCoeff();
    const double dm = (s.mu - ref.mu).cwiseAbs().maxCoeff();
    record("dynamic_dense_cross", dy < 1e-7 && dz < 1e-7 && dm < 1e-6,
           "sup|dy| " + fmt(dy) + ", sup|dzeta| " + fmt(dz) + ", sup|dmu| " + fmt(dm));
  }

  // 4. Wave-speed probe: flat without the regularizer, anomalous with it.
  {
    MaterialParams flat = mp;
    flat.hypergradient_scale = 0.0;
    const DefaultLaw<1> flat_law(flat);
    DispersionOptions dops;
    dops.n_elem = 32;
    const DispersionResult a = dispersion_probe(flat_law, mob, flat, dops);
    double worst = 0.0;
    for (const auto& p : a.points)
      worst = std::max(worst, std::abs(p.omega - p.omega_model) / p.omega_model);
    record("dispersion_flat",
           a.verdict == DispersionVerdict::nondispersive && worst < 0.01,
           std::string("verdict ") + to_string(a.verdict) + ", max modal mismatch " +
               fmt(worst));

    MaterialParams hyper = mp;
    hyper.hypergradient_scale = 1e-3;
    const DefaultLaw<1> hyper_law(hyper);
    const DispersionResult b = dispersion_probe(hyper_law, mob, hyper, dops);
    record("dispersion_anomalous", b.verdict == DispersionVerdict::anomalous,
           std::string("verdict ") + to_string(b.verdict) + ", speed spread " +
               fmt(b.speed_spread));
  }

  rep.summary = {{"checks", checks}, {"all_pass", all_pass}};
  if (!all_pass) {
    rep.exit_code = 3;
    rep.failure_class = "CrossValidationFailed";
    rep.message = "one or more cross-validation checks failed";
  }
}

}  // namespace rundet

// Runs the configured problem, streaming artifacts into the output directory
// (after environment overrides).  Solver failures are captured as structured
// reports; report.json is always written when the directory is reachable.
inline RunReport run_problem(ProblemConfig cfg) {
  RunReport rep;
  rundet::apply_env(cfg);
  rep.out_dir = cfg.out_dir;

  std::filesystem::path dir(cfg.out_dir);
  try {
    std::filesystem::create_directories(dir);
  } catch (const std::exception& e) {
    rep.exit_code = 4;
    rep.failure_class = "IoError";
    rep.message = std::string("cannot create output directory: ") + e.what();
    return rep;
  }

  try {
    switch (cfg.mode) {
      case RunMode::statics:
        if (cfg.dimension == 1)
          rundet::run_static_impl<1>(cfg, dir, rep);
        else
          rundet::run_static_impl<2>(cfg, dir, rep);
        break;
      case RunMode::dynamic:
      case RunMode::allen_cahn:
        if (cfg.dimension == 1)
          rundet::run_dynamic_impl<1>(cfg, dir, rep);
        else
          rundet::run_dynamic_impl<2>(cfg, dir, rep);
        break;
      case RunMode::dispersion:
        rundet::run_dispersion_impl(cfg, dir, rep);
        break;
      case RunMode::check:
        rundet::run_check_impl(cfg, rep);
        break;
    }
  } catch (const ConfigError& e) {
    rep.exit_code = 2;
    rep.failure_class = e.failure_class();
    rep.message = e.what();
  } catch (const IoError& e) {
    rep.exit_code = 4;
    rep.failure_class = e.failure_class();
    rep.message = e.what();
  } catch (const Error& e) {
    rep.exit_code = 3;
    rep.failure_class = e.failure_class();
    rep.message = e.what();
  }

  nlohmann::json report = {
      {"mode", to_string(cfg.mode)},
      {"dimension", cfg.dimension},
      {"outcome", rep.exit_code == 0 ? "success" : "failure"},
      {"failure_class", rep.failure_class},
      {"message", rep.message},
      {"output_directory", cfg.out_dir},
      {"artifacts", rep.artifacts},
      {"summary", rep.summary},
      {"config", emit_config(cfg)},
  };
  try {
    std::ofstream out(dir / "report.json");
    if (!out) throw IoError("cannot open report.json for writing");
    out << report.dump(2) << '\n';
    if (!out) throw IoError("write failed on report.json");
    rep.artifacts.push_back("report.json");
  } catch (const std::exception& e) {
    if (rep.exit_code == 0) {
      rep.exit_code = 4;
      rep.failure_class = "IoError";
      rep.message = e.what();
    }
  }
  return rep;
}

}  // namespace chmech
