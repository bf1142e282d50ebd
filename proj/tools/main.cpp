#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "mfclab/chaos.hpp"
#include "mfclab/config.hpp"
#include "mfclab/meanfield.hpp"
#include "mfclab/model.hpp"
#include "mfclab/nash.hpp"
#include "mfclab/particle.hpp"
#include "mfclab/report.hpp"

using json = nlohmann::ordered_json;
using namespace mfclab;

namespace {

struct RunContext {
  SolverConfig cfg;
  std::string out_dir;
  std::uint64_t seed = 1;
  std::uint64_t hash = 0;
  int threads = 1;
  bool quiet = false;
  std::chrono::steady_clock::time_point started;

  json base_report(const std::string& subcommand) const {
    json j;
    j["version"] = artifact_version();
    j["subcommand"] = subcommand;
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(hash));
    j["config_hash"] = hex;
    j["seed"] = seed;
    return j;
  }

  void finish(json& j, const std::string& subcommand) const {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
    j["wall_clock_sec"] = secs;
    write_file_atomic(out_dir + "/" + subcommand + ".json", j.dump(2) + "\n");
    if (!quiet) std::cout << subcommand << ": report written to " << out_dir << "\n";
  }
};

EmpiricalMeasure1D mu0_from_config(const RunContext& ctx) {
  const std::string spec = ctx.cfg.get_string("meanfield.mu0", "");
  if (!spec.empty()) {
    std::vector<Atom1D> atoms;
    std::istringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const std::size_t colon = tok.find(':');
      if (colon == std::string::npos)
        throw InvalidInput("config: meanfield.mu0 entries must be x:w");
      atoms.push_back(
          {std::stod(tok.substr(0, colon)), std::stod(tok.substr(colon + 1))});
    }
    return EmpiricalMeasure1D(std::move(atoms));
  }
  const int n = static_cast<int>(ctx.cfg.get_long("meanfield.mu0_atoms", 16));
  const double scale = ctx.cfg.get_double("meanfield.mu0_scale", 1.0);
  return gaussian_quantile_family(n, scale, ctx.cfg.box());
}

std::vector<double> x0_from_config(const RunContext& ctx, int N) {
  std::vector<double> xs = ctx.cfg.get_doubles("nparticle.x0");
  if (!xs.empty()) return xs;
  const double scale = ctx.cfg.get_double("nparticle.family_scale", 1.0);
  const EmpiricalMeasure1D mu = gaussian_quantile_family(N, scale, ctx.cfg.box());
  std::vector<double> out(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) out[i] = mu.atoms()[i].x;
  return out;
}

int run_check_assumptions(RunContext& ctx) {
  const ModelSpec model = ctx.cfg.model();
  const int count = static_cast<int>(ctx.cfg.get_long("verify.probes", 50));
  const double tol = ctx.cfg.get_double("verify.tol", 1e-8);
  const auto probes = random_probes(count, ctx.seed, model.box.half_width);
  const AssumptionReport rep =
      check_displacement(model, probes, default_test_functions(), tol);

  json j = ctx.base_report("check-assumptions");
  j["model"] = model.name;
  j["tolerance"] = tol;
  j["pass"] = rep.all_pass();
  j["conditions"] = json::array();
  std::string csv = "condition,worst_violation,pass\n";
  for (const auto& c : rep.conditions) {
    j["conditions"].push_back(
        {{"name", c.name}, {"worst_violation", c.worst_violation}, {"pass", c.pass}});
    csv += c.name + "," + format17(c.worst_violation) + "," +
           (c.pass ? "1" : "0") + "\n";
  }
  j["notes"] = rep.notes;
  write_file_atomic(ctx.out_dir + "/check-assumptions.csv", csv);
  ctx.finish(j, "check-assumptions");
  if (!ctx.quiet)
    std::cout << (rep.all_pass() ? "all conditions pass\n"
                                 : "condition violations found\n");
  return rep.all_pass() ? 0 : 2;
}

int run_solve_nparticle(RunContext& ctx) {
  const ModelSpec model = ctx.cfg.model();
  const int N = static_cast<int>(ctx.cfg.get_long("nparticle.N", 4));
  const std::vector<double> x0 = x0_from_config(ctx, N);
  if (static_cast<int>(x0.size()) != N)
    throw InvalidInput("config: nparticle.x0 must have N entries");
  const bool dump = ctx.cfg.get_bool("nparticle.dump_trajectories", false);
  NoiseConfig noise = ctx.cfg.noise();
  noise.seed = ctx.seed;
  const ParticleSolution sol = solve_pontryagin(N, x0, model, ctx.cfg.grid(),
                                                noise, ctx.cfg.picard(), dump);

  const TimeGrid grid = ctx.cfg.grid();
  const double grad_bound =
      model.lipschitz_bound * (grid.T - grid.t0) + model.lipschitz_bound;
  bool grad_ok = true;
  for (double g : sol.grad)
    if (std::abs(g) > grad_bound) grad_ok = false;

  json j = ctx.base_report("solve-nparticle");
  j["N"] = N;
  j["V_N"] = sol.V_N;
  j["grad"] = sol.grad;
  j["picard_iterations"] = sol.picard_iterations;
  j["converged"] = sol.converged;
  j["residual"] = sol.residual;
  j["left_box"] = sol.left_box;
  j["window_splits"] = sol.window_splits;
  j["gradient_bound"] = grad_bound;
  j["gradient_bound_ok"] = grad_ok;
  if (dump) {
    std::string csv = "path,step,particle,X,Y\n";
    const int paths = static_cast<int>(sol.X.front().size()) / N;
    for (int m = 0; m < paths; ++m)
      for (std::size_t k = 0; k < sol.X.size(); ++k)
        for (int i = 0; i < N; ++i) {
          const std::size_t idx = static_cast<std::size_t>(m) * N + i;
          csv += std::to_string(m) + "," + std::to_string(k) + "," +
                 std::to_string(i) + "," + format17(sol.X[k][idx]) + "," +
                 format17(sol.Y[k][idx]) + "\n";
        }
    write_file_atomic(ctx.out_dir + "/nparticle-trajectories.csv", csv);
  }
  ctx.finish(j, "solve-nparticle");
  return grad_ok ? 0 : 2;
}

int run_solve_meanfield(RunContext& ctx) {
  const ModelSpec model = ctx.cfg.model();
  const EmpiricalMeasure1D mu0 = mu0_from_config(ctx);
  NoiseConfig noise = ctx.cfg.noise();
  noise.seed = ctx.seed;
  const MeanFieldSolution sol =
      solve_mkv(mu0, model, ctx.cfg.grid(), noise, ctx.cfg.picard());

  json j = ctx.base_report("solve-meanfield");
  j["V"] = sol.V;
  j["residual"] = sol.residual;
  j["converged"] = sol.converged;
  j["sweeps"] = sol.sweeps;
  j["window_splits"] = sol.window_splits;
  j["left_box"] = sol.left_box;
  if (ctx.cfg.get_bool("meanfield.dump_flow", false)) {
    const int stride =
        std::max(1, static_cast<int>(ctx.cfg.get_long("meanfield.flow_stride", 1)));
    std::string csv = "time,sample,X,Y\n";
    for (std::size_t k = 0; k < sol.flow.mutilde.size(); k += stride) {
      const auto& cloud = sol.flow.mutilde[k];
      for (std::size_t s = 0; s < cloud.size(); ++s)
        csv += format17(sol.flow.grid.time(static_cast<int>(k))) + "," +
               std::to_string(s) + "," + format17(cloud.atoms()[s].x) + "," +
               format17(cloud.atoms()[s].p) + "\n";
    }
    write_file_atomic(ctx.out_dir + "/meanfield-flow.csv", csv);
  }
  ctx.finish(j, "solve-meanfield");
  return 0;
}

ChaosConfig chaos_from_config(const RunContext& ctx) {
  ChaosConfig cc;
  const std::vector<int> Ns = ctx.cfg.get_ints("sweep.Ns");
  if (!Ns.empty()) cc.Ns = Ns;
  cc.reference_factor =
      static_cast<int>(ctx.cfg.get_long("sweep.reference_factor", 64));
  cc.reference_replications =
      static_cast<int>(ctx.cfg.get_long("sweep.reference_replications", 48));
  cc.paths_budget = ctx.cfg.get_long("sweep.paths_budget", 480000);
  cc.min_paths = static_cast<int>(ctx.cfg.get_long("sweep.min_paths", 2000));
  cc.pinned_paths = static_cast<int>(ctx.cfg.get_long("sweep.pinned_paths", 4000));
  return cc;
}

json fit_to_json(const RateFit& fit) {
  json j;
  j["Ns"] = fit.Ns;
  j["gaps"] = fit.gaps;
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["r2"] = fit.r2;
  j["conclusive"] = fit.conclusive;
  if (!fit.conclusive)
    j["note"] = "inconclusive - increase N range or paths";
  return j;
}

std::string fit_to_csv(const RateFit& fit) {
  std::string csv = "N,gap,stderr\n";
  for (std::size_t i = 0; i < fit.Ns.size(); ++i)
    csv += std::to_string(fit.Ns[i]) + "," + format17(fit.gaps[i]) + ",0\n";
  return csv;
}

int run_chaos_sweep(RunContext& ctx) {
  const ModelSpec model = ctx.cfg.model();
  NoiseConfig noise = ctx.cfg.noise();
  noise.seed = ctx.seed;
  const ChaosConfig cc = chaos_from_config(ctx);
  const MuFamily family =
      gaussian_family(ctx.cfg.get_double("sweep.family_scale", 1.0), ctx.cfg.box());
  json j = ctx.base_report("chaos-sweep");
  try {
    RateFit vfit, gfit;
    if (ctx.threads >= 2) {
      std::thread tv([&] {
        vfit = value_gap_sweep(model, family, cc, ctx.cfg.grid(), noise,
                               ctx.cfg.picard());
      });
      gfit = gradient_gap_sweep(model, family, cc, ctx.cfg.grid(), noise,
                                ctx.cfg.picard());
      tv.join();
    } else {
      vfit = value_gap_sweep(model, family, cc, ctx.cfg.grid(), noise,
                             ctx.cfg.picard());
      gfit = gradient_gap_sweep(model, family, cc, ctx.cfg.grid(), noise,
                                ctx.cfg.picard());
    }
    j["value_gap"] = fit_to_json(vfit);
    j["gradient_gap"] = fit_to_json(gfit);
    write_file_atomic(ctx.out_dir + "/chaos-value-gaps.csv", fit_to_csv(vfit));
    write_file_atomic(ctx.out_dir + "/chaos-gradient-gaps.csv", fit_to_csv(gfit));
    ctx.finish(j, "chaos-sweep");
    return 0;
  } catch (const DivergenceError& e) {
    j["error"] = e.what();
    j["residual_trace"] = e.residual_trace;
    ctx.finish(j, "chaos-sweep");
    return 3;
  }
}

int run_hessian_sweep(RunContext& ctx) {
  const ModelSpec model = ctx.cfg.model();
  NoiseConfig noise = ctx.cfg.noise();
  noise.seed = ctx.seed;
  std::vector<int> Ns = ctx.cfg.get_ints("sweep.Ns");
  if (Ns.empty()) Ns = {2, 4, 8};
  const double h = ctx.cfg.get_double("sweep.hessian_h", 0.05);
  const MuFamily family =
      gaussian_family(ctx.cfg.get_double("sweep.family_scale", 1.0), ctx.cfg.box());
  const HessianSweepReport rep = hessian_bound_sweep(
      model, family, Ns, ctx.cfg.grid(), noise, ctx.cfg.picard(), h);

  bool ok = rep.max_rel_dev <= 0.25;
  std::string csv = "N,min_eig,max_eig_scaled\n";
  json entries = json::array();
  for (const auto& e : rep.entries) {
    if (e.min_eig < -1e-3) ok = false;
    csv += std::to_string(e.N) + "," + format17(e.min_eig) + "," +
           format17(e.max_eig_scaled) + "\n";
    entries.push_back({{"N", e.N},
                       {"min_eig", e.min_eig},
                       {"max_eig_scaled", e.max_eig_scaled}});
  }
  json j = ctx.base_report("hessian-sweep");
  j["entries"] = entries;
  j["fitted_C"] = rep.fitted_C;
  j["max_rel_dev"] = rep.max_rel_dev;
  j["bounds_ok"] = ok;
  write_file_atomic(ctx.out_dir + "/hessian-sweep.csv", csv);
  ctx.finish(j, "hessian-sweep");
  return ok ? 0 : 2;
}

int run_nash_sweep(RunContext& ctx) {
  const LqParams prm = ctx.cfg.lq_params();
  const ModelSpec model = builtin_lq(prm);
  const MfgcSpec mfgc = lq_mfgc(prm);
  NoiseConfig noise = ctx.cfg.noise();
  noise.seed = ctx.seed;
  std::vector<int> Ns = ctx.cfg.get_ints("nash.Ns");
  if (Ns.empty()) Ns = {2, 4, 8, 16};
  BRConfig br;
  br.mode = ctx.cfg.get_string("nash.mode", "parametric");
  br.sweeps = static_cast<int>(ctx.cfg.get_long("nash.sweeps", 4));
  br.search_paths = static_cast<int>(ctx.cfg.get_long("nash.search_paths", 1000));
  br.report_paths = static_cast<int>(ctx.cfg.get_long("nash.report_paths", 4000));
  const MuFamily family =
      gaussian_family(ctx.cfg.get_double("nash.family_scale", 1.0), ctx.cfg.box());

  json j = ctx.base_report("nash-sweep");
  try {
    const NashSweepResult res = nash_sweep(model, mfgc, Ns, family, ctx.cfg.grid(),
                                           noise, ctx.cfg.picard(), br);
    bool ok = true;
    std::string csv = "N,k,J,Jstar_lb,epsilon,spread\n";
    json entries = json::array();
    for (const auto& e : res.entries) {
      if (e.epsilon < -3 * e.mc_stderr) ok = false;
      csv += std::to_string(e.N) + "," + std::to_string(e.player) + "," +
             format17(e.J_k) + "," + format17(e.J_star_lb) + "," +
             format17(e.epsilon) + "," + format17(e.spread) + "\n";
      entries.push_back({{"N", e.N},
                         {"k", e.player},
                         {"J", e.J_k},
                         {"Jstar_lb", e.J_star_lb},
                         {"epsilon", e.epsilon},
                         {"mc_stderr", e.mc_stderr},
                         {"spread", e.spread}});
    }
    j["entries"] = entries;
    j["fit"] = fit_to_json(res.fit);
    j["epsilon_nonnegative_ok"] = ok;
    write_file_atomic(ctx.out_dir + "/nash-sweep.csv", csv);
    ctx.finish(j, "nash-sweep");
    return ok ? 0 : 2;
  } catch (const DivergenceError& e) {
    j["error"] = e.what();
    ctx.finish(j, "nash-sweep");
    return 3;
  }
}

int run_verify_hjb(RunContext& ctx) {
  const ModelSpec model = ctx.cfg.model();
  NoiseConfig noise = ctx.cfg.noise();
  noise.seed = ctx.seed;
  const int nprobes = static_cast<int>(ctx.cfg.get_long("verify.probes", 5));
  const int atoms = static_cast<int>(ctx.cfg.get_long("verify.probe_atoms", 8));
  const double t_eval = ctx.cfg.get_double("verify.t_eval", 0.5);
  const double tol = ctx.cfg.get_double("verify.residual_tol", 5e-2);
  std::vector<EmpiricalMeasure1D> probes;
  for (int p = 0; p < nprobes; ++p) {
    const double scale = 0.4 + 0.25 * p;
    probes.push_back(gaussian_quantile_family(atoms, scale, ctx.cfg.box()));
  }
  const double resid = hjb_residual(probes, t_eval, model, ctx.cfg.grid(), noise,
                                    ctx.cfg.picard());
  json j = ctx.base_report("verify-hjb");
  j["t_eval"] = t_eval;
  j["max_residual"] = resid;
  j["tolerance"] = tol;
  j["pass"] = resid <= tol;
  ctx.finish(j, "verify-hjb");
  return resid <= tol ? 0 : 2;
}

int run_fk_eval(RunContext& ctx) {
  const std::string preset = ctx.cfg.get_string("fk.preset", "quadratic");
  const double c = ctx.cfg.get_double("fk.c", 2.5);
  const double rho = ctx.cfg.get_double("fk.rho", 0.7);
  const double s = ctx.cfg.get_double("fk.s", 0.7);
  const double x = ctx.cfg.get_double("fk.x", 0.8);
  const int msamples = static_cast<int>(ctx.cfg.get_long("fk.msamples", 2000));
  const int paths = static_cast<int>(ctx.cfg.get_long("fk.fk_paths", 20000));
  const TimeGrid grid = ctx.cfg.grid();
  const EmpiricalMeasure1D mu = gaussian_quantile_family(16, 1.0, ctx.cfg.box());

  LinearMasterCoeffs co;
  auto zero = [](double, const EmpiricalMeasure1D&) { return 0.0; };
  co.b = co.b_tilde = co.phi2 = co.phi3 = zero;
  co.sigma = co.sigma_tilde = [s](double, const EmpiricalMeasure1D&) { return s; };
  double expected = 0;
  if (preset == "const") {
    co.phi1 = [c](double, const EmpiricalMeasure1D&) { return c; };
    expected = c;
  } else if (preset == "discount") {
    co.phi1 = [c](double, const EmpiricalMeasure1D&) { return c; };
    co.phi2 = [rho](double, const EmpiricalMeasure1D&) { return rho; };
    expected = c * std::exp(-rho * (grid.T - grid.t0));
  } else if (preset == "quadratic") {
    co.phi1 = [](double y, const EmpiricalMeasure1D&) { return y * y; };
    expected = x * x + s * s * (grid.T - grid.t0);
  } else {
    throw InvalidInput("config: unknown fk.preset " + preset);
  }
  const FkResult r =
      linear_master_fk(co, grid.t0, x, mu, msamples, grid, ctx.seed, paths);
  const bool pass = std::abs(r.value - expected) <= 3 * std::max(r.stderr_est, 1e-12);
  json j = ctx.base_report("fk-eval");
  j["preset"] = preset;
  j["value"] = r.value;
  j["stderr"] = r.stderr_est;
  j["expected"] = expected;
  j["pass"] = pass;
  ctx.finish(j, "fk-eval");
  return pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mean-field control laboratory"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  long seed_override = -1;
  int threads = 0;
  bool quiet = false;
  app.add_option("--config", config_path, "configuration file")->required();
  app.add_option("--out", out_dir, "output directory (overrides run.out_dir)");
  app.add_option("--seed", seed_override, "seed override");
  app.add_option("--threads", threads, "worker threads (default MFCLAB_THREADS)");
  app.add_flag("--quiet", quiet, "suppress progress output");

  const std::vector<std::pair<std::string, int (*)(RunContext&)>> commands = {
      {"check-assumptions", run_check_assumptions},
      {"solve-nparticle", run_solve_nparticle},
      {"solve-meanfield", run_solve_meanfield},
      {"chaos-sweep", run_chaos_sweep},
      {"hessian-sweep", run_hessian_sweep},
      {"nash-sweep", run_nash_sweep},
      {"verify-hjb", run_verify_hjb},
      {"fk-eval", run_fk_eval},
  };
  for (const auto& [name, fn] : commands)
    app.add_subcommand(name, name)->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    RunContext ctx;
    ctx.started = std::chrono::steady_clock::now();
    ctx.cfg = SolverConfig::parse_file(config_path);
    ctx.out_dir = !out_dir.empty() ? out_dir
                                   : ctx.cfg.get_string("run.out_dir", "out");
    ctx.seed = seed_override >= 0
                   ? static_cast<std::uint64_t>(seed_override)
                   : static_cast<std::uint64_t>(ctx.cfg.get_long("noise.seed", 1));
    ctx.hash = config_hash(ctx.cfg, ctx.seed);
    if (threads > 0) {
      ctx.threads = threads;
    } else if (const char* env = std::getenv("MFCLAB_THREADS")) {
      ctx.threads = std::max(1, std::atoi(env));
    }
    ctx.quiet = quiet;
    // a config-level model sanity pass so bad parameters fail fast
    (void)ctx.cfg.model();

    for (const auto& [name, fn] : commands)
      if (app.get_subcommand(name)->parsed()) return fn(ctx);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "solver divergence: " << e.what() << "\n";
    return 3;
  } catch (const InvalidInput& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
