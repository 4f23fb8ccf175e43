#include "heomcal/dag.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <functional>
#include <mutex>
#include <set>
#include <thread>

#include "heomcal/error.hpp"

namespace heomcal::dag {

namespace {

using Clock = std::chrono::steady_clock;

bool terminal(NodeStatus s) {
  return s == NodeStatus::done || s == NodeStatus::gated_skip || s == NodeStatus::failed;
}

// Index map plus a topological order; throws on unknown deps or cycles.
std::vector<std::size_t> topo_order(const std::vector<DagNode>& nodes, const std::map<std::string, std::size_t>& index) {
  std::vector<int> indegree(nodes.size(), 0);
  std::vector<std::vector<std::size_t>> out(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const auto& d : nodes[i].deps) {
      const auto it = index.find(d);
      if (it == index.end()) throw DagError("node '" + nodes[i].id + "' depends on unknown node '" + d + "'");
      out[it->second].push_back(i);
      ++indegree[i];
    }
  }
  std::deque<std::size_t> q;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (indegree[i] == 0) q.push_back(i);
  }
  std::vector<std::size_t> order;
  while (!q.empty()) {
    const auto i = q.front();
    q.pop_front();
    order.push_back(i);
    for (auto j : out[i]) {
      if (--indegree[j] == 0) q.push_back(j);
    }
  }
  if (order.size() != nodes.size()) throw DagError("dependency graph has a cycle");
  return order;
}

// Empty string when the gate accepts every dependency output.
std::string gate_verdict(const GateRule& gate, const DagNode& node, const std::vector<NodeRecord>& recs,
                         const std::map<std::string, std::size_t>& index) {
  for (const auto& d : node.deps) {
    const auto& out = recs[index.at(d)].output;
    if (!out.r_squared) return "dependency '" + d + "' published no R^2";
    if (!(*out.r_squared >= gate.min_r_squared)) {
      return "dependency '" + d + "' R^2 " + std::to_string(*out.r_squared) + " below " +
             std::to_string(gate.min_r_squared);
    }
    for (const auto& name : gate.required_outputs) {
      const auto it = out.scalars.find(name);
      if (it == out.scalars.end() || !std::isfinite(it->second)) {
        return "dependency '" + d + "' lacks required output '" + name + "'";
      }
    }
  }
  return {};
}

}  // namespace

std::string_view to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::pending: return "pending";
    case NodeStatus::running: return "running";
    case NodeStatus::done: return "done";
    case NodeStatus::gated_skip: return "gated_skip";
    case NodeStatus::failed: return "failed";
  }
  return "unknown";
}

TimingRecord timing_metrics(const std::vector<NodeTiming>& nodes) {
  if (nodes.empty()) throw DagError("timing_metrics needs at least one node");
  TimingRecord t;
  std::map<std::string, const NodeTiming*> by_id;
  double first_ready = nodes.front().ready;
  double last_end = nodes.front().end;
  double latency_sum = 0.0;
  for (const auto& n : nodes) {
    if (!(n.end >= n.start && n.start >= n.ready)) throw DagError("inconsistent timestamps for node '" + n.id + "'");
    by_id[n.id] = &n;
    const double wall = n.end - n.start;
    const double lat = (n.start - n.ready) * 1e6;
    t.per_node_wall[n.id] = wall;
    t.sched_latency_us[n.id] = lat;
    t.serial_time += wall;
    latency_sum += lat;
    t.max_latency_us = std::max(t.max_latency_us, lat);
    first_ready = std::min(first_ready, n.ready);
    last_end = std::max(last_end, n.end);
  }
  t.avg_latency_us = latency_sum / static_cast<double>(nodes.size());
  t.parallel_time = last_end - first_ready;

  // Longest wall-weighted path; deps outside the timed set contribute nothing.
  std::map<std::string, double> finish;
  std::function<double(const NodeTiming&)> path = [&](const NodeTiming& n) -> double {
    if (auto it = finish.find(n.id); it != finish.end()) return it->second;
    double before = 0.0;
    for (const auto& d : n.deps) {
      if (auto it = by_id.find(d); it != by_id.end()) before = std::max(before, path(*it->second));
    }
    return finish[n.id] = before + (n.end - n.start);
  };
  for (const auto& n : nodes) t.critical_path = std::max(t.critical_path, path(n));
  t.overhead_fraction = t.serial_time > 0.0 ? (t.parallel_time - t.critical_path) / t.serial_time : 0.0;
  return t;
}

const NodeRecord& DagRunRecord::node(const std::string& id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return n;
  }
  throw DagError("no node '" + id + "' in run record");
}

bool DagRunRecord::all_done() const {
  return std::all_of(nodes.begin(), nodes.end(), [](const NodeRecord& n) { return n.status == NodeStatus::done; });
}

int resolve_workers(int fallback) {
  if (const char* env = std::getenv("HEOMCAL_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0 && v <= 256) return static_cast<int>(v);
  }
  return std::max(1, fallback);
}

DagRunRecord execute_dag(const std::vector<DagNode>& nodes, int workers) {
  if (nodes.empty()) throw DagError("empty DAG");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id.empty()) throw DagError("node with empty id");
    if (!index.emplace(nodes[i].id, i).second) throw DagError("duplicate node id '" + nodes[i].id + "'");
    if (!nodes[i].task) throw DagError("node '" + nodes[i].id + "' has no task");
    const auto& g = nodes[i].gate;
    if (!(g.min_r_squared > 0.0 && g.min_r_squared <= 1.0)) {
      throw DagError("node '" + nodes[i].id + "' gate threshold outside (0, 1]");
    }
  }
  topo_order(nodes, index);
  std::vector<std::vector<std::size_t>> dependents(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const auto& d : nodes[i].deps) dependents[index.at(d)].push_back(i);
  }

  DagRunRecord run;
  run.workers = std::max(1, workers);
  run.nodes.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    run.nodes[i].id = nodes[i].id;
    run.nodes[i].protocol = nodes[i].protocol;
    run.nodes[i].backend = nodes[i].backend;
  }

  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::size_t> ready;
  std::size_t finished = 0;
  const auto t0 = Clock::now();
  auto now = [&] { return std::chrono::duration<double>(Clock::now() - t0).count(); };

  // Callers hold `mu`.
  std::function<void(std::size_t, const std::string&)> skip = [&](std::size_t i, const std::string& why) {
    auto& r = run.nodes[i];
    if (terminal(r.status)) return;
    r.status = NodeStatus::gated_skip;
    r.reason = why;
    ++finished;
    for (auto j : dependents[i]) skip(j, "upstream '" + r.id + "' not completed");
  };
  auto release = [&](std::size_t i) {
    for (auto j : dependents[i]) {
      auto& r = run.nodes[j];
      if (r.status != NodeStatus::pending) continue;
      bool deps_terminal = true, deps_done = true;
      for (const auto& d : nodes[j].deps) {
        const auto s = run.nodes[index.at(d)].status;
        deps_terminal = deps_terminal && terminal(s);
        deps_done = deps_done && s == NodeStatus::done;
      }
      if (!deps_terminal) continue;
      if (!deps_done) {
        skip(j, "upstream dependency not completed");
        continue;
      }
      const std::string why = gate_verdict(nodes[j].gate, nodes[j], run.nodes, index);
      if (!why.empty()) {
        skip(j, "gate: " + why);
        continue;
      }
      r.timing = NodeTiming{r.id, nodes[j].deps, now(), 0.0, 0.0};
      ready.push_back(j);
    }
  };

  {
    std::lock_guard lock(mu);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].deps.empty()) {
        run.nodes[i].timing = NodeTiming{nodes[i].id, {}, now(), 0.0, 0.0};
        ready.push_back(i);
      }
    }
  }

  auto worker = [&] {
    std::unique_lock lock(mu);
    for (;;) {
      cv.wait(lock, [&] { return !ready.empty() || finished == nodes.size(); });
      if (ready.empty()) return;
      const std::size_t i = ready.front();
      ready.pop_front();
      auto& rec = run.nodes[i];
      rec.timing->start = now();
      rec.status = NodeStatus::running;
      ++rec.invocations;
      Inputs inputs;
      for (const auto& d : nodes[i].deps) inputs[d] = &run.nodes[index.at(d)].output;
      lock.unlock();

      NodeOutput out;
      std::string error;
      try {
        out = nodes[i].task(inputs);
      } catch (const std::exception& e) {
        error = e.what();
      } catch (...) {
        error = "unknown exception";
      }

      lock.lock();
      rec.timing->end = now();
      if (error.empty()) {
        rec.output = std::move(out);
        rec.status = NodeStatus::done;
      } else {
        rec.status = NodeStatus::failed;
        rec.reason = error;
      }
      ++finished;
      release(i);
      cv.notify_all();
    }
  };

  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < run.workers; ++w) pool.emplace_back(worker);
  }

  std::vector<NodeTiming> timed;
  for (const auto& r : run.nodes) {
    if (r.timing && (r.status == NodeStatus::done || r.status == NodeStatus::failed)) timed.push_back(*r.timing);
  }
  if (!timed.empty()) run.timing = timing_metrics(timed);
  return run;
}

}  // namespace heomcal::dag
