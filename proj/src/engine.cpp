#include "adp2/engine.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

#include "adp2/errors.hpp"
#include "adp2/log.hpp"

namespace adp2 {

std::string to_string(RunMode m) { return m == RunMode::adpsgd ? "adpsgd" : "sync"; }

std::string to_string(ActivationMode m) {
  return m == ActivationMode::physical ? "physical" : "logical";
}

std::string to_string(ScenarioSpec::Kind k) {
  switch (k) {
    case ScenarioSpec::Kind::none: return "none";
    case ScenarioSpec::Kind::random_slow: return "random_slow";
    case ScenarioSpec::Kind::fixed_straggler: return "fixed_straggler";
    case ScenarioSpec::Kind::large_batch: return "large_batch";
  }
  throw std::logic_error("unreachable scenario kind");
}

double compute_multiplier(const ScenarioSpec& scenario, int K, int worker, long iteration,
                          std::uint64_t seed) {
  switch (scenario.kind) {
    case ScenarioSpec::Kind::none:
    case ScenarioSpec::Kind::large_batch:
      return 1.0;
    case ScenarioSpec::Kind::fixed_straggler:
      return worker == scenario.worker ? scenario.factor : 1.0;
    case ScenarioSpec::Kind::random_slow: {
      const long slot = scenario.per_iteration ? iteration : 0;
      SeededRng pick(SeededRng::derive(seed, "scenario_slow", static_cast<std::uint64_t>(slot)));
      const int slow = static_cast<int>(pick.below(static_cast<std::uint64_t>(K)));
      return worker == slow ? scenario.factor : 1.0;
    }
  }
  throw std::logic_error("unreachable scenario kind");
}

RunOptions apply_scenario(RunOptions opts) {
  if (opts.scenario.kind == ScenarioSpec::Kind::large_batch) {
    opts.B = static_cast<int>(std::lround(opts.B * opts.scenario.batch_mult));
    if (opts.B < 1) throw std::invalid_argument("large_batch scenario shrank B below 1");
    opts.eta *= opts.scenario.lr_mult;
  }
  return opts;
}

namespace {

struct EngineCommon {
  const Task& task;
  const CommGraph& graph;
  const RunOptions& opts;
  std::vector<Vec> models;
  std::vector<SeededRng> batch_rng;
  std::vector<SeededRng> noise_rng;
  std::vector<SeededRng> timing_rng;
  SeededRng gossip_rng;
  SpendLedger ledger;
  double per_step_rdp = 0.0;
  TrainingTrace trace;
  long staleness_sum = 0;

  EngineCommon(const Task& t, const CommGraph& g, const RunOptions& o)
      : task(t), graph(g), opts(o), gossip_rng(SeededRng(o.seed).stream("gossip")) {
    if (g.K() != t.K()) throw std::invalid_argument("graph and task disagree on K");
    if (!(o.eta > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (o.T < 1) throw std::invalid_argument("iteration budget must be >= 1");
    if (o.probe_stride < 1) throw std::invalid_argument("probe stride must be >= 1");
    if (!(o.noise_sigma2 >= 0.0)) throw std::invalid_argument("noise variance must be >= 0");

    const SeededRng root(o.seed);
    const std::size_t d = static_cast<std::size_t>(t.d());
    Vec init = o.init.empty() ? zeros(d) : o.init;
    if (init.size() != d) throw std::invalid_argument("init vector dimension mismatch");
    models.assign(static_cast<std::size_t>(t.K()), init);
    for (int k = 0; k < t.K(); ++k) {
      batch_rng.push_back(root.stream("worker_batch", static_cast<std::uint64_t>(k)));
      noise_rng.push_back(root.stream("worker_noise", static_cast<std::uint64_t>(k)));
      timing_rng.push_back(root.stream("worker_timing", static_cast<std::uint64_t>(k)));
    }
    if (o.privacy) {
      const auto& p = *o.privacy;
      // Refuse to run on a bundle that fails its own feasibility checks.
      for (const auto& c : feasibility_checks(p))
        if (!c.ok)
          throw InfeasibleError("refusing to run: privacy bundle fails the " + c.name +
                                " constraint (" + c.inequality + ")");
      if (p.T != o.T)
        throw std::invalid_argument("privacy bundle was calibrated for T = " +
                                    std::to_string(p.T) + " but the run has T = " +
                                    std::to_string(o.T));
      per_step_rdp = subsampled_gaussian_rdp(p.alpha, p.gamma, p.delta2, p.sigma2).eps;
    }
    trace.summary.initial_theta = init;
    trace.summary.batch_size = o.B;
    trace.summary.noise_sigma2 = o.noise_sigma2;
    trace.summary.eta = o.eta;
    trace.summary.eta_rule = o.eta_rule;
    trace.summary.calibrated = o.privacy.has_value();
  }

  double duration(int worker, long iteration) {
    double mult = compute_multiplier(opts.scenario, task.K(), worker, iteration, opts.seed);
    double jitter = 0.0;
    if (opts.timing.jitter > 0.0)
      jitter = opts.timing.jitter * timing_rng[static_cast<std::size_t>(worker)].uniform();
    return opts.timing.base_compute * mult * (1.0 + jitter);
  }

  Vec theta() const {
    Vec m = zeros(models.front().size());
    for (const auto& w : models) axpy(1.0, w, m);
    scale(m, 1.0 / static_cast<double>(models.size()));
    return m;
  }

  double eps_at(long t) const {
    return opts.privacy ? per_iteration_epsilon(t, *opts.privacy) : 0.0;
  }

  void record_spend(long t) {
    if (opts.privacy) ledger.record(t, per_step_rdp);
  }

  // Probe rows carry metrics for the averaged model; the theta snapshot is
  // kept for the analysis pass.
  void add_probe(TraceRow& row, double vtime, long t) {
    const Vec th = theta();
    row.has_metrics = true;
    row.loss = task.loss(th);
    row.grad_norm_sq = norm_sq(task.full_gradient(th));
    trace.probes.push_back(TraceProbe{t, vtime, th, row.eps_spent});
  }

  void finish(double total_time) {
    trace.summary.final_theta = theta();
    trace.summary.total_virtual_time = total_time;
    trace.summary.updates = opts.T;
    trace.summary.mean_staleness =
        opts.T > 0 ? static_cast<double>(staleness_sum) / static_cast<double>(opts.T) : 0.0;
    trace.summary.final_eps_spent = eps_at(opts.T);
    if (opts.privacy) {
      trace.summary.ledger_steps = ledger.steps();
      trace.summary.ledger_rdp_total = ledger.total_rdp();
      trace.summary.ledger_eps = ledger.converted_eps(opts.privacy->alpha, opts.privacy->delta);
    }
  }
};

struct PendingComputation {
  Vec snapshot;
  long tag = 0;  // completed updates when the snapshot was read
  std::vector<int> batch;
  double duration = 0.0;
};

// (time, seq) lexicographic order; seq breaks ties deterministically.
struct QueuedEvent {
  double time;
  long seq;
  int worker;
  bool operator>(const QueuedEvent& o) const {
    if (time != o.time) return time > o.time;
    return seq > o.seq;
  }
};

TrainingTrace run_adpsgd_impl(const Task& task, const CommGraph& graph, const RunOptions& opts) {
  EngineCommon eng(task, graph, opts);
  const int K = task.K();
  const bool logical = opts.activation == ActivationMode::logical;
  SeededRng activation_rng = SeededRng(opts.seed).stream("activation");

  std::vector<PendingComputation> pending(static_cast<std::size_t>(K));
  std::priority_queue<QueuedEvent, std::vector<QueuedEvent>, std::greater<QueuedEvent>> queue;
  long seq = 0;

  auto start_computation = [&](int k, long iteration, double now) {
    auto& p = pending[static_cast<std::size_t>(k)];
    p.snapshot = eng.models[static_cast<std::size_t>(k)];
    p.tag = iteration;
    p.batch = task.draw_minibatch(k, opts.B, eng.batch_rng[static_cast<std::size_t>(k)]);
    if (logical) {
      p.duration = 0.0;
    } else {
      p.duration = eng.duration(k, iteration);
      queue.push(QueuedEvent{now + p.duration, seq++, k});
    }
  };

  if (!logical) {
    for (int k = 0; k < K; ++k) start_computation(k, 0, 0.0);
  }

  long t = 0;
  double now = 0.0;
  while (t < opts.T) {
    int k;
    if (logical) {
      // i.i.d. uniform activation with zero-duration events: snapshot, batch
      // and update all happen at the same instant, so staleness is zero.
      k = static_cast<int>(activation_rng.below(static_cast<std::uint64_t>(K)));
      start_computation(k, t, now);
    } else {
      k = queue.top().worker;
      now = queue.top().time;
      queue.pop();
    }
    auto& p = pending[static_cast<std::size_t>(k)];
    eng.trace.summary.total_compute_time += p.duration;

    const long staleness = t - p.tag;
    if (opts.tau_max && staleness > *opts.tau_max)
      throw StalenessError("staleness guard tripped: tau = " + std::to_string(staleness) +
                           " > tau_max = " + std::to_string(*opts.tau_max) +
                           " at update " + std::to_string(t + 1));
    eng.staleness_sum += staleness;
    eng.trace.summary.max_staleness = std::max(eng.trace.summary.max_staleness, staleness);

    Vec grad = task.minibatch_gradient(p.snapshot, k, p.batch);
    Vec noisy = add_noise(grad, opts.noise_sigma2, eng.noise_rng[static_cast<std::size_t>(k)]);

    const GossipMatrix A = sample_gossip_matrix(graph, k, eng.gossip_rng);
    if (opts.interleave) {
      // Local update races ahead of the exchange.
      axpy(-opts.eta, noisy, eng.models[static_cast<std::size_t>(k)]);
      apply_averaging(eng.models, A);
    } else {
      apply_averaging(eng.models, A);
      axpy(-opts.eta, noisy, eng.models[static_cast<std::size_t>(k)]);
    }

    ++t;
    eng.record_spend(t);

    TraceRow row;
    row.virtual_time = now;
    row.global_iter = t;
    row.worker = k;
    row.event = TraceEvent::update;
    row.staleness = staleness;
    row.eps_spent = eng.eps_at(t);
    if (t % opts.probe_stride == 0 || t == opts.T) eng.add_probe(row, now, t);
    eng.trace.rows.push_back(std::move(row));

    if (t < opts.T && !logical) start_computation(k, t, now + opts.timing.comm_time);
  }

  eng.finish(now);
  return eng.trace;
}

TrainingTrace run_sync_impl(const Task& task, const CommGraph& graph, const RunOptions& opts) {
  EngineCommon eng(task, graph, opts);
  const int K = task.K();
  if (opts.T % K != 0)
    throw std::invalid_argument("sync mode needs T divisible by K (one round = K updates); got T = " +
                                std::to_string(opts.T) + ", K = " + std::to_string(K));
  const long rounds = opts.T / K;
  const bool logical = opts.activation == ActivationMode::logical;
  // Probe cadence in rounds, chosen so probes land roughly every probe_stride
  // counter increments (the counter advances K per round).
  const long round_stride = std::max<long>(1, opts.probe_stride / K);

  double now = 0.0;
  for (long r = 0; r < rounds; ++r) {
    const Vec theta = eng.models.front();  // all equal after the previous barrier

    struct Finish {
      double time;
      int worker;
    };
    std::vector<Finish> order;
    order.reserve(static_cast<std::size_t>(K));
    double max_duration = 0.0;
    for (int k = 0; k < K; ++k) {
      const double dur = logical ? 0.0 : eng.duration(k, r);
      eng.trace.summary.total_compute_time += dur;
      max_duration = std::max(max_duration, dur);
      order.push_back(Finish{now + dur, k});
    }
    std::stable_sort(order.begin(), order.end(), [](const Finish& a, const Finish& b) {
      if (a.time != b.time) return a.time < b.time;
      return a.worker < b.worker;
    });

    for (std::size_t i = 0; i < order.size(); ++i) {
      const int k = order[i].worker;
      const auto batch = task.draw_minibatch(k, opts.B, eng.batch_rng[static_cast<std::size_t>(k)]);
      Vec grad = task.minibatch_gradient(theta, k, batch);
      Vec noisy = add_noise(grad, opts.noise_sigma2, eng.noise_rng[static_cast<std::size_t>(k)]);
      Vec& w = eng.models[static_cast<std::size_t>(k)];
      w = theta;
      axpy(-opts.eta, noisy, w);

      const long t = r * K + static_cast<long>(i) + 1;
      eng.record_spend(t);
      TraceRow row;
      row.virtual_time = order[i].time;
      row.global_iter = t;
      row.worker = k;
      row.event = TraceEvent::update;
      row.staleness = 0;
      row.eps_spent = eng.eps_at(t);
      eng.trace.rows.push_back(row);
    }

    now += max_duration + (logical ? 0.0 : opts.timing.allreduce_time);

    // Barrier: every local model becomes the average.
    Vec avg = eng.theta();
    for (auto& w : eng.models) w = avg;

    const long counter = (r + 1) * K;
    TraceRow barrier;
    barrier.virtual_time = now;
    barrier.global_iter = counter;
    barrier.worker = -1;
    barrier.event = TraceEvent::barrier;
    barrier.staleness = 0;
    barrier.eps_spent = eng.eps_at(counter);
    if ((r + 1) % round_stride == 0 || r + 1 == rounds) eng.add_probe(barrier, now, counter);
    eng.trace.rows.push_back(std::move(barrier));
  }

  eng.finish(now);
  return eng.trace;
}

}  // namespace

TrainingTrace run_adpsgd(const Task& task, const CommGraph& graph, const RunOptions& opts) {
  return run_adpsgd_impl(task, graph, apply_scenario(opts));
}

TrainingTrace run_sync(const Task& task, const CommGraph& graph, const RunOptions& opts) {
  return run_sync_impl(task, graph, apply_scenario(opts));
}

TrainingTrace run(const Task& task, const CommGraph& graph, const RunOptions& opts) {
  log_debug("run mode=%s activation=%s T=%ld B=%d eta=%g sigma2=%g seed=%llu",
            to_string(opts.mode).c_str(), to_string(opts.activation).c_str(), opts.T, opts.B,
            opts.eta, opts.noise_sigma2, static_cast<unsigned long long>(opts.seed));
  return opts.mode == RunMode::adpsgd ? run_adpsgd(task, graph, opts)
                                      : run_sync(task, graph, opts);
}

}  // namespace adp2
