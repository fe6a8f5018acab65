#include "adp2/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

#include "adp2/analysis.hpp"
#include "adp2/errors.hpp"
#include "adp2/privacy.hpp"

namespace adp2 {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string to_string(GraphConfig::Kind k) {
  switch (k) {
    case GraphConfig::Kind::ring: return "ring";
    case GraphConfig::Kind::full_bipartite: return "full_bipartite";
    case GraphConfig::Kind::custom: return "custom";
  }
  throw std::logic_error("unreachable graph kind");
}

namespace {

struct Issues {
  std::vector<std::string> list;
  void add(const std::string& path, const std::string& msg) {
    list.push_back(path + ": " + msg);
  }
  bool any() const { return !list.empty(); }
};

const json* field(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &(*it);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed, Issues& iss) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) iss.add(path + "." + it.key(), "unknown key");
  }
}

bool is_integer(const json& j) { return j.is_number_integer() || j.is_number_unsigned(); }

bool get_double(const json* f, const std::string& path, Issues& iss, double& out) {
  if (!f) return false;
  if (!f->is_number()) {
    iss.add(path, "expected a number");
    return false;
  }
  out = f->get<double>();
  return true;
}

bool get_long(const json* f, const std::string& path, Issues& iss, long& out) {
  if (!f) return false;
  if (!is_integer(*f)) {
    iss.add(path, "expected an integer");
    return false;
  }
  out = f->get<long>();
  return true;
}

bool get_u64(const json* f, const std::string& path, Issues& iss, std::uint64_t& out) {
  if (!f) return false;
  if (!is_integer(*f) || (f->is_number_integer() && f->get<std::int64_t>() < 0)) {
    iss.add(path, "expected a nonnegative integer");
    return false;
  }
  out = f->get<std::uint64_t>();
  return true;
}

bool get_bool(const json* f, const std::string& path, Issues& iss, bool& out) {
  if (!f) return false;
  if (!f->is_boolean()) {
    iss.add(path, "expected true or false");
    return false;
  }
  out = f->get<bool>();
  return true;
}

bool get_string(const json* f, const std::string& path, Issues& iss, std::string& out) {
  if (!f) return false;
  if (!f->is_string()) {
    iss.add(path, "expected a string");
    return false;
  }
  out = f->get<std::string>();
  return true;
}

void parse_task(const json& jt, ExperimentConfig& c, bool& k_valid, Issues& iss) {
  check_keys(jt, "$.task",
             {"kind", "d", "K", "shard_size", "shard_sizes", "gen_seed", "clip",
              "center_base", "center_spread", "sample_spread", "input_dim", "label_noise",
              "weights"},
             iss);
  TaskSpec& t = c.task;

  bool kind_known = false;
  std::string kind_str;
  if (const json* f = field(jt, "kind")) {
    if (get_string(f, "$.task.kind", iss, kind_str)) {
      try {
        t.kind = task_kind_from_string(kind_str);
        kind_known = true;
      } catch (const std::exception&) {
        iss.add("$.task.kind", "must be \"quadratic\", \"logistic\" or \"mlp\"");
      }
    }
  } else {
    iss.add("$.task.kind", "missing required key");
  }

  bool k_ok = false;
  if (const json* f = field(jt, "K")) {
    long v = 0;
    if (get_long(f, "$.task.K", iss, v)) {
      if (v < 2)
        iss.add("$.task.K", "need at least 2 workers");
      else {
        t.K = static_cast<int>(v);
        k_ok = true;
        k_valid = true;
      }
    }
  } else {
    iss.add("$.task.K", "missing required key");
  }

  const bool is_mlp = kind_known && t.kind == TaskKind::mlp;
  if (const json* f = field(jt, "d")) {
    long v = 0;
    if (is_mlp)
      iss.add("$.task.d", "mlp dimension is derived from input_dim, do not set d");
    else if (get_long(f, "$.task.d", iss, v)) {
      if (v < 1)
        iss.add("$.task.d", "must be >= 1");
      else
        t.d = static_cast<int>(v);
    }
  } else if (kind_known && !is_mlp) {
    iss.add("$.task.d", "missing required key");
  }

  if (const json* f = field(jt, "input_dim")) {
    long v = 0;
    if (kind_known && !is_mlp)
      iss.add("$.task.input_dim", "only applies to mlp tasks");
    else if (get_long(f, "$.task.input_dim", iss, v)) {
      if (v < 1)
        iss.add("$.task.input_dim", "must be >= 1");
      else
        t.input_dim = static_cast<int>(v);
    }
  }

  const json* jsingle = field(jt, "shard_size");
  const json* jlist = field(jt, "shard_sizes");
  if (jsingle && jlist) {
    iss.add("$.task", "give shard_size or shard_sizes, not both");
  } else if (jsingle) {
    long v = 0;
    if (get_long(jsingle, "$.task.shard_size", iss, v)) {
      if (v < 1)
        iss.add("$.task.shard_size", "must be >= 1");
      else if (k_ok)
        t.shard_sizes.assign(static_cast<std::size_t>(t.K), static_cast<int>(v));
    }
  } else if (jlist) {
    if (!jlist->is_array()) {
      iss.add("$.task.shard_sizes", "expected an array of integers");
    } else {
      std::vector<int> sizes;
      bool ok = true;
      for (std::size_t i = 0; i < jlist->size(); ++i) {
        const json& e = (*jlist)[i];
        if (!is_integer(e) || e.get<long>() < 1) {
          iss.add("$.task.shard_sizes[" + std::to_string(i) + "]",
                  "expected an integer >= 1");
          ok = false;
        } else {
          sizes.push_back(static_cast<int>(e.get<long>()));
        }
      }
      if (ok && k_ok && static_cast<int>(sizes.size()) != t.K)
        iss.add("$.task.shard_sizes", "length " + std::to_string(sizes.size()) +
                                          " does not match K = " + std::to_string(t.K));
      else if (ok)
        t.shard_sizes = std::move(sizes);
    }
  } else {
    iss.add("$.task", "missing shard_size or shard_sizes");
  }

  if (const json* f = field(jt, "gen_seed")) get_u64(f, "$.task.gen_seed", iss, t.gen_seed);

  if (const json* f = field(jt, "clip")) {
    if (f->is_null()) {
      t.clip_enabled = false;
    } else if (f->is_number()) {
      const double g = f->get<double>();
      if (!(g > 0.0))
        iss.add("$.task.clip", "clip bound must be positive");
      else {
        t.clip_enabled = true;
        t.clip_bound = g;
      }
    } else {
      iss.add("$.task.clip", "expected a positive number or null");
    }
  }

  if (const json* f = field(jt, "center_base"))
    get_double(f, "$.task.center_base", iss, t.center_base);
  double spread = 0.0;
  if (const json* f = field(jt, "center_spread")) {
    if (get_double(f, "$.task.center_spread", iss, spread)) {
      if (spread < 0.0)
        iss.add("$.task.center_spread", "must be >= 0");
      else
        t.center_spread = spread;
    }
  }
  if (const json* f = field(jt, "sample_spread")) {
    if (get_double(f, "$.task.sample_spread", iss, spread)) {
      if (spread < 0.0)
        iss.add("$.task.sample_spread", "must be >= 0");
      else
        t.sample_spread = spread;
    }
  }

  if (const json* f = field(jt, "label_noise")) {
    double v = 0.0;
    if (kind_known && t.kind == TaskKind::quadratic)
      iss.add("$.task.label_noise", "only applies to logistic and mlp tasks");
    else if (get_double(f, "$.task.label_noise", iss, v)) {
      if (v < 0.0)
        iss.add("$.task.label_noise", "must be >= 0");
      else
        t.label_noise = v;
    }
  }

  if (const json* f = field(jt, "weights")) {
    if (!f->is_array()) {
      iss.add("$.task.weights", "expected an array of numbers");
    } else {
      std::vector<double> w;
      bool ok = true;
      double sum = 0.0;
      for (std::size_t i = 0; i < f->size(); ++i) {
        const json& e = (*f)[i];
        if (!e.is_number() || !(e.get<double>() > 0.0)) {
          iss.add("$.task.weights[" + std::to_string(i) + "]",
                  "expected a positive number");
          ok = false;
        } else {
          w.push_back(e.get<double>());
          sum += e.get<double>();
        }
      }
      if (ok && k_ok && static_cast<int>(w.size()) != t.K)
        iss.add("$.task.weights", "length must match K");
      else if (ok && std::abs(sum - 1.0) > 1e-12)
        iss.add("$.task.weights", "must sum to 1 within 1e-12");
      else if (ok)
        t.weights = std::move(w);
    }
  }
}

void parse_graph(const json& jg, ExperimentConfig& c, bool k_ok, Issues& iss) {
  check_keys(jg, "$.graph", {"kind", "edges"}, iss);
  std::string kind_str;
  bool kind_known = false;
  if (const json* f = field(jg, "kind")) {
    if (get_string(f, "$.graph.kind", iss, kind_str)) {
      if (kind_str == "ring")
        c.graph.kind = GraphConfig::Kind::ring;
      else if (kind_str == "full_bipartite")
        c.graph.kind = GraphConfig::Kind::full_bipartite;
      else if (kind_str == "custom")
        c.graph.kind = GraphConfig::Kind::custom;
      else {
        iss.add("$.graph.kind", "must be \"ring\", \"full_bipartite\" or \"custom\"");
        return;
      }
      kind_known = true;
    }
  } else {
    iss.add("$.graph.kind", "missing required key");
    return;
  }

  if (kind_known && c.graph.kind == GraphConfig::Kind::ring && k_ok && c.task.K % 2 != 0)
    iss.add("$.graph.kind", "ring needs an even worker count, K = " +
                                std::to_string(c.task.K) + " cannot be bipartitioned");

  const json* je = field(jg, "edges");
  if (c.graph.kind != GraphConfig::Kind::custom) {
    if (je) iss.add("$.graph.edges", "only applies to custom graphs");
    return;
  }
  if (!je) {
    iss.add("$.graph.edges", "custom graphs need an edge list");
    return;
  }
  if (!je->is_array() || je->empty()) {
    iss.add("$.graph.edges", "expected a nonempty array of [i, j] pairs");
    return;
  }
  for (std::size_t i = 0; i < je->size(); ++i) {
    const json& e = (*je)[i];
    const std::string path = "$.graph.edges[" + std::to_string(i) + "]";
    if (!e.is_array() || e.size() != 2 || !is_integer(e[0]) || !is_integer(e[1])) {
      iss.add(path, "expected a pair of worker indices");
      continue;
    }
    const long a = e[0].get<long>();
    const long b = e[1].get<long>();
    if (a == b) {
      iss.add(path, "self-loops are not allowed");
      continue;
    }
    if (k_ok && (a < 0 || b < 0 || a >= c.task.K || b >= c.task.K)) {
      iss.add(path, "worker index out of range [0, K)");
      continue;
    }
    c.graph.edges.emplace_back(static_cast<int>(a), static_cast<int>(b));
  }
}

void parse_train(const json& jt, ExperimentConfig& c, Issues& iss) {
  check_keys(jt, "$.train", {"eta", "B", "T", "probe_stride", "tau_max", "interleave"},
             iss);

  if (const json* f = field(jt, "eta")) {
    if (f->is_string()) {
      if (f->get<std::string>() == "auto") {
        c.eta_auto = true;
      } else {
        iss.add("$.train.eta", "expected a positive number or \"auto\"");
      }
    } else if (f->is_number()) {
      const double v = f->get<double>();
      if (!(v > 0.0))
        iss.add("$.train.eta", "must be positive");
      else {
        c.eta_auto = false;
        c.eta = v;
      }
    } else {
      iss.add("$.train.eta", "expected a positive number or \"auto\"");
    }
  } else {
    iss.add("$.train.eta", "missing required key");
  }

  if (const json* f = field(jt, "B")) {
    long v = 0;
    if (get_long(f, "$.train.B", iss, v)) {
      if (v < 1)
        iss.add("$.train.B", "must be >= 1");
      else
        c.B = static_cast<int>(v);
    }
  } else {
    iss.add("$.train.B", "missing required key");
  }

  if (const json* f = field(jt, "T")) {
    long v = 0;
    if (get_long(f, "$.train.T", iss, v)) {
      if (v < 1)
        iss.add("$.train.T", "must be >= 1");
      else
        c.T = v;
    }
  } else {
    iss.add("$.train.T", "missing required key");
  }

  if (const json* f = field(jt, "probe_stride")) {
    long v = 0;
    if (get_long(f, "$.train.probe_stride", iss, v)) {
      if (v < 1)
        iss.add("$.train.probe_stride", "must be >= 1");
      else
        c.probe_stride = v;
    }
  }

  if (const json* f = field(jt, "tau_max")) {
    if (!f->is_null()) {
      long v = 0;
      if (get_long(f, "$.train.tau_max", iss, v)) {
        if (v < 0)
          iss.add("$.train.tau_max", "must be >= 0");
        else
          c.tau_max = v;
      }
    }
  }

  if (const json* f = field(jt, "interleave")) get_bool(f, "$.train.interleave", iss, c.interleave);
}

void parse_privacy(const json& jp, ExperimentConfig& c, Issues& iss) {
  check_keys(jp, "$.privacy", {"sigma", "eps", "delta", "mu"}, iss);
  const json* jsigma = field(jp, "sigma");
  const json* jeps = field(jp, "eps");
  const json* jdelta = field(jp, "delta");
  const json* jmu = field(jp, "mu");

  if (jsigma && (jeps || jdelta || jmu)) {
    iss.add("$.privacy", "mixes raw noise (sigma) with calibration keys (eps, delta, mu)");
    return;
  }
  if (!jsigma && !jeps && !jdelta && !jmu) return;  // empty block, privacy off

  if (jsigma) {
    double v = 0.0;
    if (get_double(jsigma, "$.privacy.sigma", iss, v)) {
      if (v < 0.0)
        iss.add("$.privacy.sigma", "must be >= 0");
      else {
        c.privacy.mode = PrivacyConfig::Mode::raw;
        c.privacy.sigma = v;
      }
    }
    return;
  }

  c.privacy.mode = PrivacyConfig::Mode::calibrated;
  if (!jeps) iss.add("$.privacy.eps", "calibration needs an eps target");
  if (!jdelta) iss.add("$.privacy.delta", "calibration needs a delta target");
  double v = 0.0;
  if (get_double(jeps, "$.privacy.eps", iss, v)) {
    if (!(v > 0.0))
      iss.add("$.privacy.eps", "must be positive");
    else
      c.privacy.eps = v;
  }
  if (get_double(jdelta, "$.privacy.delta", iss, v)) {
    if (!(v > 0.0) || v >= 1.0)
      iss.add("$.privacy.delta", "must lie in (0, 1)");
    else
      c.privacy.delta = v;
  }
  if (jmu) {
    if (jmu->is_string()) {
      if (jmu->get<std::string>() == "auto")
        c.privacy.mu_auto = true;
      else
        iss.add("$.privacy.mu", "expected a number in (0, 1) or \"auto\"");
    } else if (jmu->is_number()) {
      const double m = jmu->get<double>();
      if (!(m > 0.0) || !(m < 1.0))
        iss.add("$.privacy.mu", "must lie in (0, 1)");
      else {
        c.privacy.mu_auto = false;
        c.privacy.mu = m;
      }
    } else {
      iss.add("$.privacy.mu", "expected a number in (0, 1) or \"auto\"");
    }
  }
  if (!c.task.clip_enabled)
    iss.add("$.privacy", "calibration needs gradient clipping; set task.clip to a bound");
}

void parse_scenario(const json& js, ExperimentConfig& c, bool k_ok, Issues& iss) {
  check_keys(js, "$.scenario",
             {"kind", "factor", "per_iteration", "worker", "batch_mult", "lr_mult",
              "base_compute", "comm_time", "allreduce_time", "jitter"},
             iss);
  ScenarioSpec& s = c.scenario;

  bool kind_known = true;
  if (const json* f = field(js, "kind")) {
    std::string v;
    if (get_string(f, "$.scenario.kind", iss, v)) {
      if (v == "none")
        s.kind = ScenarioSpec::Kind::none;
      else if (v == "random_slow")
        s.kind = ScenarioSpec::Kind::random_slow;
      else if (v == "fixed_straggler")
        s.kind = ScenarioSpec::Kind::fixed_straggler;
      else if (v == "large_batch")
        s.kind = ScenarioSpec::Kind::large_batch;
      else {
        iss.add("$.scenario.kind",
                "must be \"none\", \"random_slow\", \"fixed_straggler\" or \"large_batch\"");
        kind_known = false;
      }
    } else {
      kind_known = false;
    }
  }

  const bool slowdown = kind_known && (s.kind == ScenarioSpec::Kind::random_slow ||
                                       s.kind == ScenarioSpec::Kind::fixed_straggler);
  if (const json* f = field(js, "factor")) {
    double v = 0.0;
    if (kind_known && !slowdown)
      iss.add("$.scenario.factor", "only applies to random_slow and fixed_straggler");
    else if (get_double(f, "$.scenario.factor", iss, v)) {
      if (v < 1.0)
        iss.add("$.scenario.factor", "slowdown factor must be >= 1");
      else
        s.factor = v;
    }
  } else if (slowdown) {
    iss.add("$.scenario.factor", "missing required key");
  }

  if (const json* f = field(js, "per_iteration")) {
    if (kind_known && s.kind != ScenarioSpec::Kind::random_slow)
      iss.add("$.scenario.per_iteration", "only applies to random_slow");
    else
      get_bool(f, "$.scenario.per_iteration", iss, s.per_iteration);
  }

  if (const json* f = field(js, "worker")) {
    long v = 0;
    if (kind_known && s.kind != ScenarioSpec::Kind::fixed_straggler)
      iss.add("$.scenario.worker", "only applies to fixed_straggler");
    else if (get_long(f, "$.scenario.worker", iss, v)) {
      if (v < 0 || (k_ok && v >= c.task.K))
        iss.add("$.scenario.worker", "worker index out of range [0, K)");
      else
        s.worker = static_cast<int>(v);
    }
  } else if (kind_known && s.kind == ScenarioSpec::Kind::fixed_straggler) {
    iss.add("$.scenario.worker", "missing required key");
  }

  const bool big = kind_known && s.kind == ScenarioSpec::Kind::large_batch;
  if (const json* f = field(js, "batch_mult")) {
    double v = 0.0;
    if (kind_known && !big)
      iss.add("$.scenario.batch_mult", "only applies to large_batch");
    else if (get_double(f, "$.scenario.batch_mult", iss, v)) {
      if (!(v > 0.0))
        iss.add("$.scenario.batch_mult", "must be positive");
      else
        s.batch_mult = v;
    }
  } else if (big) {
    iss.add("$.scenario.batch_mult", "missing required key");
  }
  if (const json* f = field(js, "lr_mult")) {
    double v = 0.0;
    if (kind_known && !big)
      iss.add("$.scenario.lr_mult", "only applies to large_batch");
    else if (get_double(f, "$.scenario.lr_mult", iss, v)) {
      if (!(v > 0.0))
        iss.add("$.scenario.lr_mult", "must be positive");
      else
        s.lr_mult = v;
    }
  }

  if (const json* f = field(js, "base_compute")) {
    double v = 0.0;
    if (get_double(f, "$.scenario.base_compute", iss, v)) {
      if (!(v > 0.0))
        iss.add("$.scenario.base_compute", "must be positive");
      else
        c.timing.base_compute = v;
    }
  }
  if (const json* f = field(js, "comm_time")) {
    double v = 0.0;
    if (get_double(f, "$.scenario.comm_time", iss, v)) {
      if (v < 0.0)
        iss.add("$.scenario.comm_time", "must be >= 0");
      else
        c.timing.comm_time = v;
    }
  }
  if (const json* f = field(js, "allreduce_time")) {
    double v = 0.0;
    if (get_double(f, "$.scenario.allreduce_time", iss, v)) {
      if (v < 0.0)
        iss.add("$.scenario.allreduce_time", "must be >= 0");
      else
        c.timing.allreduce_time = v;
    }
  } else {
    c.timing.allreduce_time = 0.1 * c.timing.base_compute;
  }
  if (const json* f = field(js, "jitter")) {
    double v = 0.0;
    if (get_double(f, "$.scenario.jitter", iss, v)) {
      if (v < 0.0)
        iss.add("$.scenario.jitter", "must be >= 0");
      else
        c.timing.jitter = v;
    }
  }
}

void parse_output(const json& jo, ExperimentConfig& c, Issues& iss) {
  check_keys(jo, "$.output", {"trace", "report"}, iss);
  std::string v;
  if (const json* f = field(jo, "trace")) {
    if (get_string(f, "$.output.trace", iss, v)) {
      if (v.empty())
        iss.add("$.output.trace", "must not be empty");
      else
        c.output.trace = v;
    }
  }
  if (const json* f = field(jo, "report")) {
    if (get_string(f, "$.output.report", iss, v)) {
      if (v.empty())
        iss.add("$.output.report", "must not be empty");
      else
        c.output.report = v;
    }
  }
}

}  // namespace

int effective_batch(const ExperimentConfig& c) {
  if (c.scenario.kind == ScenarioSpec::Kind::large_batch)
    return static_cast<int>(std::lround(c.B * c.scenario.batch_mult));
  return c.B;
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": not valid JSON (" + e.what() + ")");
  }
  if (!doc.is_object()) throw ConfigError(origin + ": top level must be a JSON object");

  Issues iss;
  ExperimentConfig c;

  check_keys(doc, "$",
             {"schema_version", "seed", "mode", "activation", "task", "graph", "train",
              "privacy", "scenario", "output"},
             iss);

  if (const json* f = field(doc, "schema_version")) {
    long v = 0;
    if (get_long(f, "$.schema_version", iss, v)) {
      if (v != kConfigSchemaVersion)
        iss.add("$.schema_version", "unsupported version " + std::to_string(v) +
                                        ", this build reads version " +
                                        std::to_string(kConfigSchemaVersion));
    }
  } else {
    iss.add("$.schema_version", "missing required key");
  }

  if (const json* f = field(doc, "seed")) get_u64(f, "$.seed", iss, c.seed);

  if (const json* f = field(doc, "mode")) {
    std::string v;
    if (get_string(f, "$.mode", iss, v)) {
      if (v == "adpsgd")
        c.mode = RunMode::adpsgd;
      else if (v == "sync")
        c.mode = RunMode::sync;
      else
        iss.add("$.mode", "must be \"adpsgd\" or \"sync\"");
    }
  }

  if (const json* f = field(doc, "activation")) {
    std::string v;
    if (get_string(f, "$.activation", iss, v)) {
      if (v == "physical")
        c.activation = ActivationMode::physical;
      else if (v == "logical")
        c.activation = ActivationMode::logical;
      else
        iss.add("$.activation", "must be \"physical\" or \"logical\"");
    }
  }

  bool k_ok = false;
  if (const json* jt = field(doc, "task")) {
    if (!jt->is_object())
      iss.add("$.task", "expected an object");
    else
      parse_task(*jt, c, k_ok, iss);
  } else {
    iss.add("$.task", "missing required key");
  }

  if (const json* jg = field(doc, "graph")) {
    if (!jg->is_object())
      iss.add("$.graph", "expected an object");
    else
      parse_graph(*jg, c, k_ok, iss);
  }

  if (const json* jt = field(doc, "train")) {
    if (!jt->is_object())
      iss.add("$.train", "expected an object");
    else
      parse_train(*jt, c, iss);
  } else {
    iss.add("$.train", "missing required key");
  }

  if (const json* js = field(doc, "scenario")) {
    if (!js->is_object())
      iss.add("$.scenario", "expected an object");
    else
      parse_scenario(*js, c, k_ok, iss);
  } else {
    c.timing.allreduce_time = 0.1 * c.timing.base_compute;
  }

  if (const json* jp = field(doc, "privacy")) {
    if (!jp->is_object())
      iss.add("$.privacy", "expected an object");
    else
      parse_privacy(*jp, c, iss);
  }

  if (const json* jo = field(doc, "output")) {
    if (!jo->is_object())
      iss.add("$.output", "expected an object");
    else
      parse_output(*jo, c, iss);
  }

  // Cross-field checks, only meaningful once the pieces above parsed cleanly.
  if (!c.task.shard_sizes.empty()) {
    const int n1 = *std::min_element(c.task.shard_sizes.begin(), c.task.shard_sizes.end());
    const int b_eff = effective_batch(c);
    if (b_eff < 1)
      iss.add("$.scenario.batch_mult", "shrinks the batch below 1");
    else if (b_eff > n1)
      iss.add("$.train.B", "effective batch " + std::to_string(b_eff) +
                               " exceeds the smallest shard (" + std::to_string(n1) + ")");
  }
  if (c.mode == RunMode::sync && k_ok && c.T % c.task.K != 0)
    iss.add("$.train.T", "sync mode needs T divisible by K, got T = " +
                             std::to_string(c.T) + ", K = " + std::to_string(c.task.K));
  if (c.scenario.kind == ScenarioSpec::Kind::fixed_straggler && k_ok &&
      c.scenario.worker >= c.task.K)
    iss.add("$.scenario.worker", "worker index out of range [0, K)");

  if (iss.any()) throw ConfigError(iss.list);
  return c;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string serialize_config(const ExperimentConfig& c) {
  ojson out;
  out["schema_version"] = c.schema_version;
  out["seed"] = c.seed;
  out["mode"] = to_string(c.mode);
  out["activation"] = to_string(c.activation);

  ojson jt;
  jt["kind"] = to_string(c.task.kind);
  jt["K"] = c.task.K;
  if (c.task.kind == TaskKind::mlp)
    jt["input_dim"] = c.task.input_dim;
  else
    jt["d"] = c.task.d;
  jt["shard_sizes"] = c.task.shard_sizes;
  jt["gen_seed"] = c.task.gen_seed;
  if (c.task.clip_enabled)
    jt["clip"] = c.task.clip_bound;
  else
    jt["clip"] = nullptr;
  jt["center_base"] = c.task.center_base;
  jt["center_spread"] = c.task.center_spread;
  jt["sample_spread"] = c.task.sample_spread;
  if (c.task.kind != TaskKind::quadratic) jt["label_noise"] = c.task.label_noise;
  if (!c.task.weights.empty()) jt["weights"] = c.task.weights;
  out["task"] = jt;

  ojson jg;
  jg["kind"] = to_string(c.graph.kind);
  if (c.graph.kind == GraphConfig::Kind::custom) {
    ojson edges = ojson::array();
    for (const auto& [a, b] : c.graph.edges) edges.push_back({a, b});
    jg["edges"] = edges;
  }
  out["graph"] = jg;

  ojson jtr;
  if (c.eta_auto)
    jtr["eta"] = "auto";
  else
    jtr["eta"] = c.eta;
  jtr["B"] = c.B;
  jtr["T"] = c.T;
  jtr["probe_stride"] = c.probe_stride;
  if (c.tau_max)
    jtr["tau_max"] = *c.tau_max;
  else
    jtr["tau_max"] = nullptr;
  jtr["interleave"] = c.interleave;
  out["train"] = jtr;

  ojson jp = ojson::object();
  if (c.privacy.mode == PrivacyConfig::Mode::raw) {
    jp["sigma"] = c.privacy.sigma;
  } else if (c.privacy.mode == PrivacyConfig::Mode::calibrated) {
    jp["eps"] = c.privacy.eps;
    jp["delta"] = c.privacy.delta;
    if (c.privacy.mu_auto)
      jp["mu"] = "auto";
    else
      jp["mu"] = c.privacy.mu;
  }
  out["privacy"] = jp;

  ojson js;
  js["kind"] = to_string(c.scenario.kind);
  if (c.scenario.kind == ScenarioSpec::Kind::random_slow ||
      c.scenario.kind == ScenarioSpec::Kind::fixed_straggler)
    js["factor"] = c.scenario.factor;
  if (c.scenario.kind == ScenarioSpec::Kind::random_slow)
    js["per_iteration"] = c.scenario.per_iteration;
  if (c.scenario.kind == ScenarioSpec::Kind::fixed_straggler)
    js["worker"] = c.scenario.worker;
  if (c.scenario.kind == ScenarioSpec::Kind::large_batch) {
    js["batch_mult"] = c.scenario.batch_mult;
    js["lr_mult"] = c.scenario.lr_mult;
  }
  js["base_compute"] = c.timing.base_compute;
  js["comm_time"] = c.timing.comm_time;
  js["allreduce_time"] = c.timing.allreduce_time;
  js["jitter"] = c.timing.jitter;
  out["scenario"] = js;

  ojson jo;
  jo["trace"] = c.output.trace;
  jo["report"] = c.output.report;
  out["output"] = jo;

  return out.dump(2) + "\n";
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

std::string config_hash(const ExperimentConfig& c) {
  const std::string text = serialize_config(c);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char byte : text) {
    h ^= byte;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

Task build_task(const ExperimentConfig& c) { return Task::generate(c.task); }

CommGraph build_graph(const ExperimentConfig& c) {
  switch (c.graph.kind) {
    case GraphConfig::Kind::ring: return CommGraph::ring(c.task.K);
    case GraphConfig::Kind::full_bipartite: return CommGraph::full_bipartite(c.task.K);
    case GraphConfig::Kind::custom: return CommGraph::custom(c.task.K, c.graph.edges);
  }
  throw std::logic_error("unreachable graph kind");
}

RunOptions build_run_options(const ExperimentConfig& c, const Task& task) {
  RunOptions o;
  o.mode = c.mode;
  o.activation = c.activation;
  o.B = c.B;
  o.T = c.T;
  o.seed = c.seed;
  o.probe_stride = c.probe_stride;
  o.tau_max = c.tau_max;
  o.interleave = c.interleave;
  o.scenario = c.scenario;
  o.timing = c.timing;

  if (c.eta_auto) {
    o.eta = auto_learning_rate(static_cast<double>(task.K()), static_cast<double>(c.B),
                               static_cast<double>(c.T));
    o.eta_rule = "auto";
  } else {
    o.eta = c.eta;
    o.eta_rule = "fixed";
  }

  switch (c.privacy.mode) {
    case PrivacyConfig::Mode::off:
      o.noise_sigma2 = 0.0;
      break;
    case PrivacyConfig::Mode::raw:
      o.noise_sigma2 = c.privacy.sigma * c.privacy.sigma;
      break;
    case PrivacyConfig::Mode::calibrated: {
      const int b_eff = effective_batch(c);
      const int n1 = task.min_shard_size();
      if (c.privacy.mu_auto) {
        auto r = find_mu(c.privacy.eps, c.privacy.delta, task.K(), n1, b_eff, c.T,
                         task.clip_bound());
        if (!r.params) {
          std::string msg = "no feasible mu for the requested budget; closest mu = ";
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.6g", r.best_mu);
          msg += buf;
          for (const auto& chk : r.best_checks)
            if (!chk.ok) msg += "; fails " + chk.name + " (" + chk.inequality + ")";
          throw InfeasibleError(msg);
        }
        o.privacy = *r.params;
      } else {
        o.privacy = calibrate_sigma(c.privacy.eps, c.privacy.delta, c.privacy.mu,
                                    task.K(), n1, b_eff, c.T, task.clip_bound());
      }
      o.noise_sigma2 = o.privacy->sigma2;
      break;
    }
  }
  return o;
}

}  // namespace adp2
