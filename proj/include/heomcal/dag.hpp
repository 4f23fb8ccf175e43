#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace heomcal::dag {

enum class NodeStatus { pending, running, done, gated_skip, failed };

std::string_view to_string(NodeStatus s);

struct GateRule {
  double min_r_squared = 0.9;
  std::vector<std::string> required_outputs;  // scalar names every dependency must publish
};

/// What a finished node hands to its dependents and the gate.
struct NodeOutput {
  std::map<std::string, double> scalars;
  std::optional<double> r_squared;
};

using Inputs = std::map<std::string, const NodeOutput*>;
using Task = std::function<NodeOutput(const Inputs& deps)>;

struct DagNode {
  std::string id;
  std::string protocol;
  std::string backend;
  std::vector<std::string> deps;
  GateRule gate;
  Task task;
};

/// Raw monotonic timestamps, seconds since the executor started.
struct NodeTiming {
  std::string id;
  std::vector<std::string> deps;
  double ready = 0.0;
  double start = 0.0;
  double end = 0.0;
};

struct TimingRecord {
  std::map<std::string, double> per_node_wall;       // s
  std::map<std::string, double> sched_latency_us;    // ready -> start
  double serial_time = 0.0;
  double parallel_time = 0.0;
  double critical_path = 0.0;
  double overhead_fraction = 0.0;
  double avg_latency_us = 0.0;
  double max_latency_us = 0.0;
};

/// Serial = sum of walls, critical path = longest dependency-weighted chain,
/// overhead = (parallel - critical) / serial. `parallel_time` is the
/// makespan: latest end minus earliest ready.
TimingRecord timing_metrics(const std::vector<NodeTiming>& nodes);

struct NodeRecord {
  std::string id;
  std::string protocol;
  std::string backend;
  NodeStatus status = NodeStatus::pending;
  std::string reason;  // gate or failure detail
  NodeOutput output;
  int invocations = 0;
  std::optional<NodeTiming> timing;
};

struct DagRunRecord {
  std::vector<NodeRecord> nodes;  // input order
  TimingRecord timing;
  int workers = 0;

  const NodeRecord& node(const std::string& id) const;
  bool all_done() const;
};

/// Worker count: HEOMCAL_WORKERS when set to a positive integer, else `fallback`.
int resolve_workers(int fallback);

/// Runs ready nodes on a bounded pool. A node starts once every dependency
/// is done and its gate accepts every dependency's output; gate rejection or
/// an upstream failure marks it (and its descendants) gated_skip without
/// invoking the task. Throws DagError on an invalid graph.
DagRunRecord execute_dag(const std::vector<DagNode>& nodes, int workers);

}  // namespace heomcal::dag
