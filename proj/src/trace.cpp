#include "adp2/trace.hpp"

#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace adp2 {

namespace {

const char* kHeaderRow =
    "virtual_time,global_iter,worker,event,loss,grad_norm_sq,staleness,eps_spent";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_double(const std::string& s, const char* what) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    throw std::runtime_error(std::string("trace parse error: bad ") + what + " value '" + s + "'");
  return v;
}

long parse_long(const std::string& s, const char* what) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    throw std::runtime_error(std::string("trace parse error: bad ") + what + " value '" + s + "'");
  return v;
}

}  // namespace

std::string to_string(TraceEvent e) {
  return e == TraceEvent::update ? "update" : "barrier";
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ThroughputSummary throughput_summary(const TrainingTrace& trace) {
  if (trace.rows.empty()) throw std::invalid_argument("throughput summary of an empty trace");
  ThroughputSummary s;
  s.updates = trace.summary.updates;
  s.wall_time = trace.summary.total_virtual_time;
  s.updates_per_time = s.wall_time > 0.0 ? static_cast<double>(s.updates) / s.wall_time
                                         : std::numeric_limits<double>::quiet_NaN();
  s.mean_staleness = trace.summary.mean_staleness;
  s.max_staleness = trace.summary.max_staleness;
  s.mean_compute_per_update =
      s.updates > 0 ? trace.summary.total_compute_time / static_cast<double>(s.updates) : 0.0;
  return s;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

void write_trace_csv(const TrainingTrace& trace, const std::string& path,
                     const std::string& config_hash, std::uint64_t seed) {
  std::string out;
  out.reserve(trace.rows.size() * 64 + 256);
  out += "# adp2-trace schema_version=" + std::to_string(kTraceSchemaVersion) + "\n";
  out += "# config_hash=" + config_hash + "\n";
  char seedbuf[32];
  std::snprintf(seedbuf, sizeof(seedbuf), "%" PRIu64, seed);
  out += std::string("# seed=") + seedbuf + "\n";
  out += kHeaderRow;
  out += "\n";
  for (const auto& r : trace.rows) {
    out += format_double(r.virtual_time);
    out += ',';
    out += std::to_string(r.global_iter);
    out += ',';
    out += std::to_string(r.worker);
    out += ',';
    out += to_string(r.event);
    out += ',';
    if (r.has_metrics) {
      out += format_double(r.loss);
      out += ',';
      out += format_double(r.grad_norm_sq);
    } else {
      out += ',';
    }
    out += ',';
    out += std::to_string(r.staleness);
    out += ',';
    out += format_double(r.eps_spent);
    out += '\n';
  }
  write_file_atomic(path, out);
}

ParsedTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file " + path);
  ParsedTrace parsed;
  std::string line;

  if (!std::getline(in, line) || line.rfind("# adp2-trace schema_version=", 0) != 0)
    throw std::runtime_error("not a trace file (missing schema header): " + path);
  parsed.schema_version =
      static_cast<int>(parse_long(line.substr(std::strlen("# adp2-trace schema_version=")),
                                  "schema_version"));
  if (parsed.schema_version != kTraceSchemaVersion)
    throw std::runtime_error("unsupported trace schema_version " +
                             std::to_string(parsed.schema_version) + " in " + path +
                             " (this build reads version " +
                             std::to_string(kTraceSchemaVersion) + ")");

  if (!std::getline(in, line) || line.rfind("# config_hash=", 0) != 0)
    throw std::runtime_error("trace file missing config_hash header: " + path);
  parsed.config_hash = line.substr(std::strlen("# config_hash="));

  if (!std::getline(in, line) || line.rfind("# seed=", 0) != 0)
    throw std::runtime_error("trace file missing seed header: " + path);
  parsed.seed = static_cast<std::uint64_t>(
      std::strtoull(line.substr(std::strlen("# seed=")).c_str(), nullptr, 10));

  if (!std::getline(in, line) || line != kHeaderRow)
    throw std::runtime_error("trace file column header does not match schema: " + path);

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 8)
      throw std::runtime_error("trace row has " + std::to_string(cells.size()) +
                               " cells, expected 8: " + line);
    TraceRow r;
    r.virtual_time = parse_double(cells[0], "virtual_time");
    r.global_iter = parse_long(cells[1], "global_iter");
    r.worker = static_cast<int>(parse_long(cells[2], "worker"));
    if (cells[3] == "update")
      r.event = TraceEvent::update;
    else if (cells[3] == "barrier")
      r.event = TraceEvent::barrier;
    else
      throw std::runtime_error("unknown trace event kind '" + cells[3] + "'");
    r.has_metrics = !cells[4].empty();
    if (r.has_metrics) {
      r.loss = parse_double(cells[4], "loss");
      r.grad_norm_sq = parse_double(cells[5], "grad_norm_sq");
    } else if (!cells[5].empty()) {
      throw std::runtime_error("trace row has grad_norm_sq without loss: " + line);
    }
    r.staleness = parse_long(cells[6], "staleness");
    r.eps_spent = parse_double(cells[7], "eps_spent");
    parsed.rows.push_back(r);
  }
  return parsed;
}

}  // namespace adp2
