#include "heomcal/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "heomcal/audits.hpp"
#include "heomcal/error.hpp"
#include "heomcal/pipeline.hpp"
#include "heomcal/report.hpp"

namespace heomcal::cli {

namespace {

namespace fs = std::filesystem;
using report::json;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    out.push_back(item);
  }
  return out;
}

// Writes artifacts into the output directory, validating JSON documents
// against their schemas, and keeps the list the manifest reports.
class Session {
 public:
  Session(std::string command, std::vector<std::string> argv, fs::path out)
      : command_(std::move(command)), argv_(std::move(argv)), out_(std::move(out)), started_(utc_now()) {}

  void json_artifact(const std::string& name, const json& doc, const std::string& schema) {
    auto problems = report::validate(doc, schema);
    report::write_json(out_ / name, doc);
    artifacts_.push_back({{"path", name}, {"schema", schema}, {"valid", problems.empty()}});
    for (auto& p : problems) problems_.push_back(std::move(p));
  }

  void text_artifact(const std::string& name, const std::string& text) {
    report::write_text(out_ / name, text);
    artifacts_.push_back({{"path", name}, {"schema", nullptr}, {"valid", true}});
  }

  void error(const std::string& module, const std::string& message) {
    json e{{"record", "error"}, {"status", "error"}, {"command", command_}, {"module", module}, {"message", message}};
    try {
      json_artifact("error.json", e, "error");
    } catch (const std::exception&) {
      // The output directory itself is unusable; stderr carries the message.
    }
    failed_ = true;
  }

  const std::vector<std::string>& problems() const { return problems_; }
  bool failed() const { return failed_; }

  void set(const std::string& key, json value) { extra_[key] = std::move(value); }

  // Manifest goes last; it lists every file written before it.
  void finish() {
    json m{{"record", "manifest"},
           {"command", command_},
           {"argv", argv_},
           {"out_dir", out_.string()},
           {"tool_version", HEOMCAL_VERSION},
           {"started_at", started_},
           {"finished_at", utc_now()},
           {"status", failed_ || !problems_.empty() ? "error" : "ok"},
           {"schema_problems", problems_},
           {"artifacts", artifacts_}};
    for (auto& [k, v] : extra_.items()) m[k] = v;
    auto problems = report::validate(m, "manifest");
    report::write_json(out_ / "manifest.json", m);
    for (auto& p : problems) problems_.push_back(std::move(p));
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  fs::path out_;
  std::string started_;
  json artifacts_ = json::array();
  json extra_ = json::object();
  std::vector<std::string> problems_;
  bool failed_ = false;
};

struct Args {
  std::string platform;
  std::string out;
  std::vector<std::string> backends;
  std::optional<std::uint64_t> seed;
  bool dump_traces = false;
  std::string l_sweep;
  std::string depths;
  bool a_sweep = false;
  std::string scales = "0.5,1,2";
  bool l5_sanity = false;
  bool partial_trace = false;
  std::string in;
};

RunConfig load_config(const Args& a) {
  RunConfig cfg = load_run_config(a.platform);
  if (a.seed) cfg.bootstrap.seed = *a.seed;
  return cfg;
}

void cmd_run_dag(const Args& a, Session& s, std::ostream& out) {
  const RunConfig cfg = load_config(a);
  pipeline::RunOptions opt;
  if (!a.backends.empty()) {
    std::vector<dynamics::Backend> chosen;
    for (const auto& group : a.backends) {
      for (const auto& name : split(group)) chosen.push_back(dynamics::backend_from_string(name));
    }
    opt.backends.clear();
    for (auto b : {dynamics::Backend::unitary, dynamics::Backend::lindblad, dynamics::Backend::heom}) {
      if (std::find(chosen.begin(), chosen.end(), b) != chosen.end()) opt.backends.push_back(b);
    }
  }
  opt.workers = dag::resolve_workers(cfg.dag.workers);
  s.set("platform_path", a.platform);
  s.set("seed", cfg.bootstrap.seed);
  s.set("workers", opt.workers);

  const auto rec = pipeline::run_all(cfg, opt);
  s.json_artifact("run_record.json", report::run_record(rec), "run_record");
  s.json_artifact("dag_timing.json", report::dag_timing(rec), "dag_timing");
  s.text_artifact("rabi_scan.csv", report::rabi_scan_csv(rec));
  s.text_artifact("ramsey_comparison.csv", report::ramsey_comparison_csv(rec));
  if (rec.find(dynamics::Backend::heom)) s.text_artifact("ramsey_dense_heom.csv", report::ramsey_dense_heom_csv(rec));
  if (std::any_of(rec.runs.begin(), rec.runs.end(), [](const auto& r) { return r.t1.has_value(); })) {
    s.text_artifact("t1_occupation.csv", report::t1_occupation_csv(rec));
  }
  if (a.dump_traces) {
    for (const auto& [name, text] : report::trace_csvs(rec)) s.text_artifact("traces/" + name, text);
  }

  for (const auto& r : rec.runs) {
    for (const auto& n : r.dag.nodes) {
      if (n.status == dag::NodeStatus::failed) {
        s.error("dag-executor", std::string(dynamics::to_string(r.backend)) + "/" + n.id + ": " + n.reason);
      }
    }
  }
  if (rec.comparison) {
    for (const auto& v : rec.comparison->verdicts) {
      out << v.protocol << ": " << (v.label ? std::string(verdicts::to_string(*v.label)) : v.status) << "\n";
    }
  }
}

void cmd_audit(const Args& a, Session& s, bool l_sweep_requested) {
  const RunConfig cfg = load_config(a);
  std::vector<int> depths;
  if (!a.l_sweep.empty()) depths = parse_int_list(a.l_sweep);
  if (!a.depths.empty()) depths = parse_int_list(a.depths);
  if (l_sweep_requested && depths.empty()) depths = {2, 3, 4, 5};
  if (!l_sweep_requested && !a.a_sweep && !a.l5_sanity && !a.partial_trace) {
    throw ConfigError("audit: choose at least one of --l-sweep, --a-sweep, --l5-sanity, --partial-trace");
  }
  if (l_sweep_requested && depths.size() < 2) {
    throw AuditError("--l-sweep needs at least two depths, got " + std::to_string(depths.size()));
  }
  const int workers = dag::resolve_workers(cfg.dag.workers);
  s.set("platform_path", a.platform);
  s.set("seed", cfg.bootstrap.seed);
  s.set("workers", workers);

  const auto bath = pipeline::build_bath(cfg);
  const fits::GuardThresholds guard{cfg.verdicts.guard_amp_ratio, cfg.verdicts.guard_tc_ratio};
  double pi_amp = 0.0;
  if (l_sweep_requested || a.a_sweep || a.l5_sanity) {
    const auto engine = protocols::make_engine(dynamics::Backend::heom, cfg, bath.modes);
    pi_amp = pipeline::rabi_outcome(engine, cfg).fit.value("pi_amp");
  }

  std::optional<audits::LSweepRecord> sweep;
  if (l_sweep_requested) {
    sweep = audits::run_l_sweep(cfg, bath, depths, pi_amp, workers);
    s.json_artifact("heom_L_sweep.json", report::l_sweep(*sweep), "heom_L_sweep");
  }
  if (a.a_sweep) {
    const auto engine = protocols::make_engine(dynamics::Backend::lindblad, cfg, bath.modes);
    const double pi_m = pipeline::rabi_outcome(engine, cfg).fit.value("pi_amp");
    const auto mesolve = pipeline::ramsey_outcome(engine, cfg, pi_m).exp_fit;
    const auto rec = audits::run_a_sweep(cfg, bath, parse_double_list(a.scales), pi_amp, mesolve, workers);
    s.json_artifact("ramsey_A_sweep.json", report::a_sweep(rec), "ramsey_A_sweep");
  }
  if (a.l5_sanity) {
    const auto grid = protocols::make_ramsey_plan(cfg.protocols, false).delays;
    std::optional<audits::SanityRecord> rec;
    if (sweep && sweep->depths.back() == 5) {
      rec = audits::run_l5_sanity(grid, sweep->runs.back().ramsey, sweep->runs.back().fit, guard, 5);
    } else {
      RunConfig c = cfg;
      c.heom.depth = 5;
      const auto engine = protocols::make_engine(dynamics::Backend::heom, c, bath.modes);
      const auto r = pipeline::ramsey_outcome(engine, c, pi_amp);
      rec = audits::run_l5_sanity(grid, r.standard.measured, std::nullopt, guard, 5);
    }
    s.json_artifact("L5_sanity_refit.json", report::l5_sanity(*rec), "L5_sanity_refit");
  }
  if (a.partial_trace) {
    const auto rec = audits::run_partial_trace_check(cfg, bath);
    s.json_artifact("t1_partial_trace_check.json", report::partial_trace_check(rec), "t1_partial_trace_check");
  }
}

void cmd_bath_audit(const Args& a, Session& s) {
  const RunConfig cfg = load_config(a);
  s.set("platform_path", a.platform);
  const auto bath = pipeline::build_bath(cfg);
  s.json_artifact("bath_decomposition.json", report::bath_audit(cfg, bath), "bath_decomposition");
}

// Reads a run directory back, validates it and prints the matrix.
int cmd_report(const std::string& dir, std::ostream& out, std::ostream& err) {
  const fs::path path = fs::path(dir) / "run_record.json";
  std::ifstream in(path);
  if (!in) {
    err << "report: cannot read " << path.string() << "\n";
    return 1;
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    err << "report: " << path.string() << ": " << e.what() << "\n";
    return 1;
  }
  const auto problems = report::validate(doc, "run_record");
  for (const auto& p : problems) err << "report: " << p << "\n";
  if (!problems.empty()) return 1;
  if (doc.at("comparison").is_null()) {
    out << "no comparison record (incomplete run)\n";
    return 0;
  }
  const auto cmp = report::comparison_from_json(doc.at("comparison"));
  out << "| protocol | backend | observables | fit |\n|---|---|---|---|\n";
  for (const auto& c : cmp.cells) {
    out << "| " << c.protocol << " | " << c.backend << " | ";
    bool first = true;
    for (const auto& [k, v] : c.observables) {
      out << (first ? "" : ", ") << k << "=" << report::format_double(v);
      first = false;
    }
    out << " | " << c.fit_family << " |\n";
  }
  out << "\n";
  for (const auto& [p, deltas] : cmp.delta) {
    for (const auto& [k, v] : deltas) out << "delta " << p << "." << k << " = " << report::format_double(v) << "\n";
  }
  for (const auto& v : cmp.verdicts) {
    out << "verdict " << v.protocol << ": " << (v.label ? std::string(verdicts::to_string(*v.label)) : "-") << " ("
        << v.status << ")\n";
  }
  return 0;
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split(text)) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) throw Error("cli", "not an integer list: '" + text + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) throw Error("cli", "not a number list: '" + text + "'");
    out.push_back(v);
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"heomcal: calibration DAG over unitary, Lindblad and HEOM backends"};
  app.require_subcommand(1);
  Args a;

  auto* run_dag = app.add_subcommand("run-dag", "Run Rabi -> {Ramsey, T1} on every backend and compare");
  run_dag->add_option("--platform", a.platform, "Config document (YAML)")->required()->check(CLI::ExistingFile);
  run_dag->add_option("--out", a.out, "Output directory")->required();
  run_dag->add_option("--backend", a.backends, "Backends to run (unitary|lindblad|heom, aliases sesolve|mesolve)");
  run_dag->add_option("--seed", a.seed, "Bootstrap seed override");
  run_dag->add_flag("--dump-traces", a.dump_traces, "Also write raw protocol traces under traces/");

  auto* audit = app.add_subcommand("audit", "Convergence and control audits");
  audit->add_option("--platform", a.platform, "Config document (YAML)")->required()->check(CLI::ExistingFile);
  audit->add_option("--out", a.out, "Output directory")->required();
  auto* l_sweep = audit->add_option("--l-sweep", a.l_sweep, "Hierarchy depths, e.g. 2,3,4,5 (default)")->expected(0, 1);
  audit->add_option("--depths", a.depths, "Depth list for --l-sweep");
  audit->add_flag("--a-sweep", a.a_sweep, "Coupling-amplitude sensitivity sweep");
  audit->add_option("--scales", a.scales, "A-sweep scales (default 0.5,1,2)");
  audit->add_flag("--l5-sanity", a.l5_sanity, "Triexp and stretched refits of the L=5 Ramsey trace");
  audit->add_flag("--partial-trace", a.partial_trace, "T1 partial-trace probe control");
  audit->add_option("--seed", a.seed, "Bootstrap seed override");

  auto* bath_audit = app.add_subcommand("bath-audit", "Bath correlation decomposition record");
  bath_audit->add_option("--platform", a.platform, "Config document (YAML)")->required()->check(CLI::ExistingFile);
  bath_audit->add_option("--out", a.out, "Output directory")->required();

  auto* rep = app.add_subcommand("report", "Validate a run directory and print its comparison matrix");
  rep->add_option("--out,--in", a.in, "Run directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  if (rep->parsed()) return cmd_report(a.in, out, err);

  std::string command = run_dag->parsed() ? "run-dag" : audit->parsed() ? "audit" : "bath-audit";
  try {
    fs::create_directories(a.out);
  } catch (const std::exception& e) {
    err << "heomcal: cannot create output directory '" << a.out << "': " << e.what() << "\n";
    return 1;
  }
  Session s(command, args, a.out);
  try {
    if (run_dag->parsed()) {
      cmd_run_dag(a, s, out);
    } else if (audit->parsed()) {
      cmd_audit(a, s, l_sweep->count() > 0 || !a.depths.empty());
    } else {
      cmd_bath_audit(a, s);
    }
  } catch (const Error& e) {
    err << "heomcal: [" << e.module() << "] " << e.what() << "\n";
    s.error(e.module(), e.what());
  } catch (const std::exception& e) {
    err << "heomcal: " << e.what() << "\n";
    s.error("cli", e.what());
  }
  try {
    s.finish();
  } catch (const std::exception& e) {
    err << "heomcal: manifest: " << e.what() << "\n";
    return 1;
  }
  for (const auto& p : s.problems()) err << "heomcal: schema: " << p << "\n";
  return s.failed() || !s.problems().empty() ? 1 : 0;
}

}  // namespace heomcal::cli
