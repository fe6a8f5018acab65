#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "adp2/analysis.hpp"
#include "adp2/commands.hpp"
#include "adp2/config.hpp"
#include "adp2/engine.hpp"
#include "adp2/errors.hpp"
#include "adp2/privacy.hpp"
#include "adp2/task.hpp"
#include "adp2/topology.hpp"
#include "adp2/trace.hpp"

namespace py = pybind11;
using namespace adp2;

namespace {

py::dict params_dict(const PrivacyParams& p) {
  py::dict d;
  d["eps"] = p.eps;
  d["delta"] = p.delta;
  d["mu"] = p.mu;
  d["alpha"] = p.alpha;
  d["sigma2"] = p.sigma2;
  d["gamma"] = p.gamma;
  d["delta2"] = p.delta2;
  d["G"] = p.G;
  d["K"] = p.K;
  d["n1"] = p.n1;
  d["B"] = p.B;
  d["T"] = p.T;
  return d;
}

py::list checks_list(const std::vector<FeasibilityCheck>& checks) {
  py::list out;
  for (const auto& c : checks) {
    py::dict d;
    d["name"] = c.name;
    d["inequality"] = c.inequality;
    d["lhs"] = c.lhs;
    d["rhs"] = c.rhs;
    d["ok"] = c.ok;
    out.append(d);
  }
  return out;
}

py::dict constants_dict(const ConvergenceConstants& cc) {
  py::dict d;
  d["rho_bar"] = cc.rho_bar;
  d["c1"] = cc.c1;
  d["c2"] = cc.c2;
  d["c3"] = cc.c3;
  d["c1_positive"] = cc.c1_positive;
  d["c2_nonnegative"] = cc.c2_nonnegative;
  d["c3_at_most_one"] = cc.c3_at_most_one;
  d["admissible"] = cc.admissible;
  return d;
}

CommGraph graph_by_name(const std::string& kind, int K) {
  if (kind == "ring") return CommGraph::ring(K);
  if (kind == "full_bipartite") return CommGraph::full_bipartite(K);
  throw std::invalid_argument("graph kind must be \"ring\" or \"full_bipartite\"");
}

}  // namespace

PYBIND11_MODULE(adp2, m) {
  m.doc() = "differentially private asynchronous decentralized SGD: accountant, "
            "gossip spectra, convergence constants and the event-driven simulator";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<RegimeError>(m, "RegimeError");
  py::register_exception<InfeasibleError>(m, "InfeasibleError");
  py::register_exception<StalenessError>(m, "StalenessError");

  m.def(
      "gaussian_rdp",
      [](double alpha, double delta2, double sigma2) {
        return gaussian_rdp(alpha, delta2, sigma2).eps;
      },
      py::arg("alpha"), py::arg("delta2"), py::arg("sigma2"),
      "Renyi-DP epsilon of the Gaussian mechanism at order alpha.");

  m.def(
      "subsampled_gaussian_rdp",
      [](double alpha, double gamma, double delta2, double sigma2) {
        return subsampled_gaussian_rdp(alpha, gamma, delta2, sigma2).eps;
      },
      py::arg("alpha"), py::arg("gamma"), py::arg("delta2"), py::arg("sigma2"),
      "Renyi-DP epsilon of the subsampled Gaussian mechanism; raises RegimeError "
      "outside the bound's validity regime.");

  m.def(
      "compose",
      [](const std::vector<std::pair<double, double>>& points) {
        std::vector<RdpPoint> pts;
        pts.reserve(points.size());
        for (const auto& [a, e] : points) pts.push_back(RdpPoint{a, e});
        const RdpPoint r = compose(pts);
        return std::make_pair(r.alpha, r.eps);
      },
      py::arg("points"), "Additive composition of (alpha, eps) RDP points.");

  m.def(
      "rdp_to_dp",
      [](double alpha, double eps_rdp, double delta) {
        return rdp_to_dp(RdpPoint{alpha, eps_rdp}, delta);
      },
      py::arg("alpha"), py::arg("eps_rdp"), py::arg("delta"),
      "Convert an RDP guarantee to (eps, delta)-DP.");

  m.def(
      "calibrate_sigma",
      [](double eps, double delta, double mu, int K, int n1, int B, long T, double G) {
        return params_dict(calibrate_sigma(eps, delta, mu, K, n1, B, T, G));
      },
      py::arg("eps"), py::arg("delta"), py::arg("mu"), py::arg("K"), py::arg("n1"),
      py::arg("B"), py::arg("T"), py::arg("G"),
      "Noise calibration for an (eps, delta) budget; raises InfeasibleError when "
      "the budget cannot be met.");

  m.def(
      "feasibility_checks",
      [](double eps, double delta, double mu, int K, int n1, int B, long T, double G) {
        return checks_list(calibration_attempt(eps, delta, mu, K, n1, B, T, G).second);
      },
      py::arg("eps"), py::arg("delta"), py::arg("mu"), py::arg("K"), py::arg("n1"),
      py::arg("B"), py::arg("T"), py::arg("G"),
      "The three feasibility checks of a calibration attempt, without enforcement.");

  m.def(
      "find_mu",
      [](double eps, double delta, int K, int n1, int B, long T, double G, int grid) {
        const MuSearchResult r = find_mu(eps, delta, K, n1, B, T, G, grid);
        py::dict d;
        d["feasible"] = r.params.has_value();
        d["mu"] = r.best_mu;
        d["params"] =
            r.params ? py::object(params_dict(*r.params)) : py::object(py::none());
        d["checks"] = checks_list(r.best_checks);
        return d;
      },
      py::arg("eps"), py::arg("delta"), py::arg("K"), py::arg("n1"), py::arg("B"),
      py::arg("T"), py::arg("G"), py::arg("grid") = 99,
      "Grid search over the budget split mu, minimizing sigma2 among feasible points.");

  m.def(
      "per_iteration_epsilon",
      [](long t, long T, double eps) { return per_iteration_epsilon(t, T, eps); },
      py::arg("t"), py::arg("T"), py::arg("eps"),
      "Budget spent by the t-th intermediate model: sqrt(t/T) * eps.");

  m.def("rho_bar", &rho_bar, py::arg("K"), py::arg("rho"),
        "Staleness-mixing constant of the averaging analysis.");

  m.def(
      "spectral_gap",
      [](const std::string& kind, int K) {
        return estimate_spectral_gap(graph_by_name(kind, K), SpectralMode::exact).rho;
      },
      py::arg("kind"), py::arg("K"),
      "Exact rho = max(|lambda_2|, |lambda_K|) of E[A] for a built-in graph.");

  m.def(
      "spectral_gap_monte_carlo",
      [](const std::string& kind, int K, long n_samples, std::uint64_t seed) {
        return estimate_spectral_gap(graph_by_name(kind, K), SpectralMode::monte_carlo,
                                     n_samples, seed)
            .rho;
      },
      py::arg("kind"), py::arg("K"), py::arg("n_samples"), py::arg("seed") = 0,
      "Monte-Carlo estimate of rho from sampled gossip matrices.");

  m.def(
      "convergence_constants",
      [](double eta, double B, double L, double tau, double K, double rho) {
        return constants_dict(convergence_constants(eta, B, L, tau, K, rho));
      },
      py::arg("eta"), py::arg("B"), py::arg("L"), py::arg("tau"), py::arg("K"),
      py::arg("rho"), "Descent-inequality constants c1, c2, c3 and admissibility flags.");

  m.def("iteration_threshold", &iteration_threshold, py::arg("L"), py::arg("K"),
        py::arg("tau"), py::arg("rho"),
        "Smallest T for which the 1/sqrt(T) rate statement applies.");

  m.def("rate_bound", &rate_bound, py::arg("f0_minus_fstar"), py::arg("L"),
        py::arg("grad_var"), py::arg("worker_var"), py::arg("d"), py::arg("sigma2"),
        py::arg("B"), py::arg("T"),
        "Right-hand side of the mean squared gradient norm bound.");

  m.def(
      "private_utility",
      [](double f0_minus_fstar, double L, double grad_var, double worker_var, double B,
         double mu, double K, double n1, double eps, double delta, double d, double G) {
        const PrivateUtility u = private_utility(f0_minus_fstar, L, grad_var, worker_var,
                                                 B, mu, K, n1, eps, delta, d, G);
        py::dict out;
        out["iterations"] = u.iterations;
        out["c4"] = u.c4;
        out["bound"] = u.bound;
        return out;
      },
      py::arg("f0_minus_fstar"), py::arg("L"), py::arg("grad_var"),
      py::arg("worker_var"), py::arg("B"), py::arg("mu"), py::arg("K"), py::arg("n1"),
      py::arg("eps"), py::arg("delta"), py::arg("d"), py::arg("G"),
      "Utility bound at the privacy-matched iteration count.");

  m.def("auto_learning_rate", &auto_learning_rate, py::arg("K"), py::arg("B"),
        py::arg("T"), "The eta = K/(B sqrt(T)) rule.");

  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        const ExperimentConfig c = parse_config_text(config_json, "<config>");
        const Task task = build_task(c);
        const CommGraph graph = build_graph(c);
        const RunOptions opts = build_run_options(c, task);
        const TrainingTrace trace = run(task, graph, opts);
        const ConvergenceReport rep =
            convergence_report(trace, task, static_cast<int>(c.probe_stride));
        const ThroughputSummary thr = throughput_summary(trace);
        py::dict out;
        out["updates"] = thr.updates;
        out["wall_time"] = thr.wall_time;
        out["mean_staleness"] = thr.mean_staleness;
        out["max_staleness"] = thr.max_staleness;
        out["final_loss"] = rep.final_loss;
        out["final_grad_norm_sq"] = rep.final_grad_norm_sq;
        out["running_mean_grad_norm_sq"] = rep.running_mean_grad_norm_sq;
        out["eta"] = trace.summary.eta;
        out["eta_rule"] = trace.summary.eta_rule;
        out["eps_spent"] = trace.summary.final_eps_spent;
        out["final_theta"] = trace.summary.final_theta;
        return out;
      },
      py::arg("config_json"),
      "Parse a config document, run the experiment in memory and return summary "
      "metrics (no files are written).");

  m.def(
      "validate_config",
      [](const std::string& config_json) {
        return serialize_config(parse_config_text(config_json, "<config>"));
      },
      py::arg("config_json"),
      "Validate a config document and return its canonical serialized form; raises "
      "ConfigError listing every problem.");

  m.attr("__version__") = "1.0.0";
}
