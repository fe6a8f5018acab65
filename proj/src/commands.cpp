#include "adp2/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <limits>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "adp2/analysis.hpp"
#include "adp2/engine.hpp"
#include "adp2/errors.hpp"
#include "adp2/log.hpp"
#include "adp2/privacy.hpp"
#include "adp2/trace.hpp"

namespace adp2 {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string num(double v, const char* spec = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return std::string(buf);
}

void print_feasibility(const std::vector<FeasibilityCheck>& checks) {
  std::printf("  %-12s %-62s %14s %14s  %s\n", "check", "constraint", "lhs", "rhs",
              "status");
  for (const auto& chk : checks)
    std::printf("  %-12s %-62s %14.6g %14.6g  %s\n", chk.name.c_str(),
                chk.inequality.c_str(), chk.lhs, chk.rhs, chk.ok ? "pass" : "FAIL");
}

struct TraceMetrics {
  double final_loss = 0.0;
  double mean_grad_norm_sq = 0.0;
  double wall_time = 0.0;
  double updates_per_time = 0.0;
};

TraceMetrics trace_metrics(const ParsedTrace& t, const std::string& label) {
  if (t.rows.empty()) throw std::invalid_argument(label + ": trace has no rows");
  TraceMetrics m;
  long updates = 0;
  double grad_sum = 0.0;
  long probes = 0;
  for (const auto& r : t.rows) {
    if (r.event == TraceEvent::update) ++updates;
    if (r.has_metrics) {
      m.final_loss = r.loss;
      grad_sum += r.grad_norm_sq;
      ++probes;
    }
  }
  if (probes == 0) throw std::invalid_argument(label + ": trace has no probe rows");
  m.mean_grad_norm_sq = grad_sum / static_cast<double>(probes);
  m.wall_time = t.rows.back().virtual_time;
  m.updates_per_time = m.wall_time > 0.0
                           ? static_cast<double>(updates) / m.wall_time
                           : std::numeric_limits<double>::quiet_NaN();
  return m;
}

// b/a with the self-comparison pinned to exactly 1 (covers 0/0 and NaN/NaN).
double ratio(double a, double b) {
  if (a == b || (std::isnan(a) && std::isnan(b))) return 1.0;
  return b / a;
}

std::string suffixed(const std::string& path, std::uint64_t seed) {
  fs::path p(path);
  fs::path out = p.parent_path() / (p.stem().string() + "_s" + std::to_string(seed) +
                                    p.extension().string());
  return out.string();
}

ojson report_json(const ExperimentConfig& c, const Task& task, const CommGraph& graph,
                  const RunOptions& opts, const TrainingTrace& trace,
                  const ConvergenceReport& rep) {
  const auto& s = trace.summary;
  const ThroughputSummary thr = throughput_summary(trace);
  const double rho = estimate_spectral_gap(graph, SpectralMode::exact).rho;

  ojson out;
  out["schema_version"] = 1;
  out["config_hash"] = config_hash(c);
  out["seed"] = c.seed;
  out["mode"] = to_string(c.mode);
  out["activation"] = to_string(c.activation);
  out["eta"] = s.eta;
  out["eta_rule"] = s.eta_rule;

  ojson jt;
  jt["kind"] = to_string(task.kind());
  jt["d"] = task.d();
  jt["K"] = task.K();
  jt["n1"] = task.min_shard_size();
  if (task.clip_enabled())
    jt["clip"] = task.clip_bound();
  else
    jt["clip"] = nullptr;
  jt["L"] = task.lipschitz();
  jt["L_estimated"] = task.lipschitz_estimated();
  jt["grad_var"] = task.variance().grad_var;
  jt["worker_var"] = task.variance().worker_var;
  jt["var_estimated"] = task.variance().estimated;
  out["task"] = jt;

  ojson jg;
  jg["kind"] = to_string(c.graph.kind);
  jg["rho"] = rho;
  out["graph"] = jg;

  out["scenario"] = to_string(c.scenario.kind);
  out["noise_sigma2"] = s.noise_sigma2;

  if (opts.privacy) {
    const auto& p = *opts.privacy;
    ojson jp;
    jp["eps"] = p.eps;
    jp["delta"] = p.delta;
    jp["mu"] = p.mu;
    jp["alpha"] = p.alpha;
    jp["sigma2"] = p.sigma2;
    jp["gamma"] = p.gamma;
    jp["delta2"] = p.delta2;
    jp["final_eps_spent"] = s.final_eps_spent;
    ojson jl;
    jl["steps"] = s.ledger_steps;
    jl["rdp_total"] = s.ledger_rdp_total;
    jl["converted_eps"] = s.ledger_eps;
    jp["ledger"] = jl;
    out["privacy"] = jp;
  } else {
    out["privacy"] = nullptr;
  }

  ojson jthr;
  jthr["updates"] = thr.updates;
  jthr["wall_time"] = thr.wall_time;
  jthr["updates_per_time"] = thr.updates_per_time;
  jthr["mean_staleness"] = thr.mean_staleness;
  jthr["max_staleness"] = thr.max_staleness;
  jthr["mean_compute_per_update"] = thr.mean_compute_per_update;
  out["throughput"] = jthr;

  ojson jc;
  jc["final_loss"] = rep.final_loss;
  jc["final_grad_norm_sq"] = rep.final_grad_norm_sq;
  jc["running_mean_grad_norm_sq"] = rep.running_mean_grad_norm_sq;
  ojson probes = ojson::array();
  for (const auto& p : rep.probes) {
    ojson jp;
    jp["t"] = p.t;
    jp["virtual_time"] = p.virtual_time;
    jp["loss"] = p.loss;
    jp["grad_norm_sq"] = p.grad_norm_sq;
    jp["running_mean_grad_norm_sq"] = p.running_mean_grad_norm_sq;
    jp["eps_spent"] = p.eps_spent;
    probes.push_back(jp);
  }
  jc["probes"] = probes;
  out["convergence"] = jc;

  // Descent-inequality constants at the measured staleness and exact rho.
  {
    const double tau = static_cast<double>(s.max_staleness);
    const auto cc = convergence_constants(s.eta, static_cast<double>(s.batch_size),
                                          task.lipschitz(), tau,
                                          static_cast<double>(task.K()), rho);
    ojson jcc;
    jcc["eta"] = s.eta;
    jcc["B"] = s.batch_size;
    jcc["L"] = task.lipschitz();
    jcc["tau"] = tau;
    jcc["rho"] = rho;
    jcc["rho_bar"] = cc.rho_bar;
    jcc["c1"] = cc.c1;
    jcc["c2"] = cc.c2;
    jcc["c3"] = cc.c3;
    jcc["admissible"] = cc.admissible;
    jcc["t_min"] = iteration_threshold(task.lipschitz(), static_cast<double>(task.K()),
                                       tau, rho);
    out["constants"] = jcc;
  }

  if (task.has_optimum() && s.eta_rule == "auto") {
    const BoundComparison b = bound_comparison(trace, task, rho);
    ojson jb;
    jb["tau_measured"] = b.tau_measured;
    jb["rho"] = b.rho;
    jb["rho_bar"] = b.rho_bar;
    jb["t_min"] = b.t_min;
    jb["rhs"] = b.rhs;
    jb["measured_mean_grad_norm_sq"] = b.measured_mean;
    jb["satisfied"] = b.satisfied;
    jb["t_at_least_t_min"] = b.t_at_least_t_min;
    out["bound"] = jb;
  } else {
    out["bound"] = nullptr;
  }
  return out;
}

}  // namespace

ExperimentConfig load_config(const std::string& path, const CliOverrides& overrides) {
  ExperimentConfig c = parse_config(path);
  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.mu) {
    if (c.privacy.mode != PrivacyConfig::Mode::calibrated)
      throw ConfigError("--mu only applies to configs with a calibrated privacy block");
    if (*overrides.mu == "auto") {
      c.privacy.mu_auto = true;
    } else {
      char* end = nullptr;
      const double v = std::strtod(overrides.mu->c_str(), &end);
      if (end == nullptr || *end != '\0' || !(v > 0.0) || !(v < 1.0))
        throw ConfigError("--mu must be \"auto\" or a number in (0, 1)");
      c.privacy.mu_auto = false;
      c.privacy.mu = v;
    }
  }
  if (overrides.output) {
    const fs::path dir(*overrides.output);
    c.output.trace = (dir / c.output.trace).string();
    c.output.report = (dir / c.output.report).string();
  }
  return c;
}

int cmd_calibrate(const ExperimentConfig& c) {
  if (c.privacy.mode != PrivacyConfig::Mode::calibrated)
    throw ConfigError("calibrate needs a privacy block with eps and delta targets");

  const int n1 = *std::min_element(c.task.shard_sizes.begin(), c.task.shard_sizes.end());
  const int b_eff = effective_batch(c);
  const double G = c.task.clip_bound;

  PrivacyParams p;
  std::vector<FeasibilityCheck> checks;
  bool feasible = false;
  bool auto_mu = c.privacy.mu_auto;
  if (auto_mu) {
    const MuSearchResult r =
        find_mu(c.privacy.eps, c.privacy.delta, c.task.K, n1, b_eff, c.T, G);
    if (r.params) {
      p = *r.params;
      checks = feasibility_checks(p);
      feasible = true;
    } else {
      std::tie(p, checks) = calibration_attempt(c.privacy.eps, c.privacy.delta,
                                                r.best_mu, c.task.K, n1, b_eff, c.T, G);
    }
  } else {
    std::tie(p, checks) = calibration_attempt(c.privacy.eps, c.privacy.delta,
                                              c.privacy.mu, c.task.K, n1, b_eff, c.T, G);
    feasible = true;
    for (const auto& chk : checks) feasible = feasible && chk.ok;
  }

  std::printf("privacy calibration\n");
  std::printf("  target      eps = %s, delta = %s\n", num(p.eps).c_str(),
              num(p.delta).c_str());
  std::printf("  population  K = %d, n1 = %d, B = %d, T = %ld, G = %s\n", p.K, p.n1, p.B,
              p.T, num(p.G).c_str());
  std::printf("  mu          %s%s\n", num(p.mu).c_str(),
              auto_mu ? (feasible ? " (grid-selected)" : " (closest grid point)") : "");
  std::printf("  alpha       %s\n", num(p.alpha).c_str());
  std::printf("  sigma2      %s\n", num(p.sigma2).c_str());
  std::printf("  gamma       %s\n", num(p.gamma).c_str());
  std::printf("  delta2      %s\n", num(p.delta2).c_str());
  std::printf("feasibility\n");
  print_feasibility(checks);
  if (feasible) {
    std::printf("budget is feasible\n");
    return 0;
  }
  std::printf("budget is INFEASIBLE\n");
  return 3;
}

int cmd_run(const ExperimentConfig& c) {
  const Task task = build_task(c);
  const CommGraph graph = build_graph(c);
  const RunOptions opts = build_run_options(c, task);

  log_info("run: mode=%s activation=%s K=%d d=%d T=%ld B=%d seed=%llu",
           to_string(c.mode).c_str(), to_string(c.activation).c_str(), task.K(),
           task.d(), c.T, c.B, static_cast<unsigned long long>(c.seed));

  const TrainingTrace trace = run(task, graph, opts);
  const ConvergenceReport rep =
      convergence_report(trace, task, static_cast<int>(c.probe_stride));

  write_trace_csv(trace, c.output.trace, config_hash(c), c.seed);
  const ojson report = report_json(c, task, graph, opts, trace, rep);
  write_file_atomic(c.output.report, report.dump(2) + "\n");

  const ThroughputSummary thr = throughput_summary(trace);
  std::printf("run complete: %ld updates in %s virtual time\n", thr.updates,
              num(thr.wall_time).c_str());
  std::printf("  final loss          %s\n", num(rep.final_loss).c_str());
  std::printf("  final |grad F|^2    %s\n", num(rep.final_grad_norm_sq).c_str());
  std::printf("  mean |grad F|^2     %s\n", num(rep.running_mean_grad_norm_sq).c_str());
  std::printf("  staleness           mean %s, max %ld\n",
              num(thr.mean_staleness).c_str(), thr.max_staleness);
  if (opts.privacy)
    std::printf("  privacy             eps spent %s of %s (delta = %s)\n",
                num(trace.summary.final_eps_spent).c_str(),
                num(opts.privacy->eps).c_str(), num(opts.privacy->delta).c_str());
  std::printf("  trace               %s\n", c.output.trace.c_str());
  std::printf("  report              %s\n", c.output.report.c_str());
  return 0;
}

int cmd_compare(const std::string& trace_a, const std::string& trace_b) {
  const ParsedTrace ta = read_trace_csv(trace_a);
  const ParsedTrace tb = read_trace_csv(trace_b);
  const TraceMetrics ma = trace_metrics(ta, trace_a);
  const TraceMetrics mb = trace_metrics(tb, trace_b);

  std::printf("metric,a,b,ratio\n");
  const auto row = [](const char* name, double a, double b) {
    std::printf("%s,%s,%s,%s\n", name, num(a).c_str(), num(b).c_str(),
                num(ratio(a, b)).c_str());
  };
  row("final_loss", ma.final_loss, mb.final_loss);
  row("mean_grad_norm_sq", ma.mean_grad_norm_sq, mb.mean_grad_norm_sq);
  row("wall_time", ma.wall_time, mb.wall_time);
  row("updates_per_time", ma.updates_per_time, mb.updates_per_time);
  return 0;
}

int cmd_sweep(const ExperimentConfig& c, int runs) {
  if (runs < 1) throw ConfigError("sweep needs at least one run");

  const Task task = build_task(c);
  const CommGraph graph = build_graph(c);

  struct SweepSlot {
    std::uint64_t seed = 0;
    std::string trace_path;
    double final_loss = 0.0;
    double wall_time = 0.0;
    std::exception_ptr error;
  };
  std::vector<SweepSlot> slots(static_cast<std::size_t>(runs));
  std::vector<std::thread> threads;
  threads.reserve(slots.size());

  for (int i = 0; i < runs; ++i) {
    SweepSlot& slot = slots[static_cast<std::size_t>(i)];
    slot.seed = c.seed + static_cast<std::uint64_t>(i);
    threads.emplace_back([&c, &task, &graph, &slot]() {
      try {
        ExperimentConfig cs = c;
        cs.seed = slot.seed;
        cs.output.trace = suffixed(c.output.trace, slot.seed);
        cs.output.report = suffixed(c.output.report, slot.seed);
        const RunOptions opts = build_run_options(cs, task);
        const TrainingTrace trace = run(task, graph, opts);
        const ConvergenceReport rep =
            convergence_report(trace, task, static_cast<int>(cs.probe_stride));
        write_trace_csv(trace, cs.output.trace, config_hash(cs), cs.seed);
        const ojson report = report_json(cs, task, graph, opts, trace, rep);
        write_file_atomic(cs.output.report, report.dump(2) + "\n");
        slot.trace_path = cs.output.trace;
        slot.final_loss = rep.final_loss;
        slot.wall_time = trace.summary.total_virtual_time;
      } catch (...) {
        slot.error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();

  int failures = 0;
  for (const auto& slot : slots) {
    if (slot.error) {
      ++failures;
      try {
        std::rethrow_exception(slot.error);
      } catch (const std::exception& e) {
        std::fprintf(stderr, "seed %llu failed: %s\n",
                     static_cast<unsigned long long>(slot.seed), e.what());
      }
      continue;
    }
    std::printf("seed %llu: final_loss=%s wall_time=%s trace=%s\n",
                static_cast<unsigned long long>(slot.seed),
                num(slot.final_loss).c_str(), num(slot.wall_time).c_str(),
                slot.trace_path.c_str());
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace adp2
