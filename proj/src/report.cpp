#include "heomcal/report.hpp"

#include <rapidjson/document.h>
#include <rapidjson/error/en.h>
#include <rapidjson/schema.h>
#include <rapidjson/stringbuffer.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "heomcal/error.hpp"

namespace heomcal::report {

namespace {

using dynamics::Backend;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double num(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json cplx_json(bath::cplx z) { return json::array({z.real(), z.imag()}); }

std::string tag(Backend b) { return std::string(dynamics::to_string(b)); }

json solver_json(const protocols::TraceMeta& m) {
  return {{"steps", m.steps}, {"rejected", m.rejected}, {"rhs_evals", m.rhs_evals}, {"ado_count", m.ado_count}};
}

json opt_fit(const std::optional<fits::FitResult>& f) { return f ? to_json(*f) : json(nullptr); }

// Columns of one CSV: header name and value per row.
struct Column {
  std::string name;
  std::vector<double> values;
};

std::string csv(const std::vector<Column>& cols) {
  std::ostringstream out;
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c].name;
  out << "\n";
  const std::size_t rows = cols.empty() ? 0 : cols.front().values.size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << format_double(cols[c].values.at(r));
    out << "\n";
  }
  return out.str();
}

std::vector<double> eval_fit(const fits::FitResult& f, const std::vector<double>& x) {
  std::vector<double> out;
  for (double v : x) out.push_back(fits::evaluate(f, v));
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json to_json(const fits::GuardOutcome& g) {
  return {{"amp_ratio", g.amp_ratio}, {"tc_ratio", g.tc_ratio}, {"passed", g.passed}};
}

fits::GuardOutcome guard_from_json(const json& j) {
  return {num(j.at("amp_ratio")), num(j.at("tc_ratio")), j.at("passed").get<bool>()};
}

json to_json(const fits::FitResult& f) {
  json j;
  j["family"] = std::string(fits::to_string(f.family));
  j["params"] = f.params;
  j["r_squared"] = f.r_squared;
  j["ceiling_hit"] = f.ceiling_hit;
  j["guard"] = f.guard ? to_json(*f.guard) : json(nullptr);
  j["derived"] = f.derived;
  j["flags"] = f.flags;
  j["converged"] = f.converged;
  j["starts_tried"] = f.starts_tried;
  j["best_start"] = f.best_start;
  j["cost"] = f.cost;
  return j;
}

json to_json(const stats::CiRecord& c) {
  return {{"point", c.point},
          {"lo", c.lo},
          {"hi", c.hi},
          {"level", c.level},
          {"valid_rate", c.valid_rate},
          {"p_value", c.p_value ? json(*c.p_value) : json(nullptr)},
          {"seed", c.seed},
          {"B", c.resamples},
          {"dropped", c.dropped},
          {"unreliable", c.unreliable},
          {"z0", c.z0},
          {"acceleration", c.acceleration},
          {"method", "bca"}};
}

stats::CiRecord ci_from_json(const json& j) {
  stats::CiRecord c;
  c.point = num(j.at("point"));
  c.lo = num(j.at("lo"));
  c.hi = num(j.at("hi"));
  c.level = num(j.at("level"));
  c.valid_rate = num(j.at("valid_rate"));
  if (!j.at("p_value").is_null()) c.p_value = j.at("p_value").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.resamples = j.at("B").get<int>();
  c.dropped = j.at("dropped").get<int>();
  c.unreliable = j.at("unreliable").get<bool>();
  c.z0 = num(j.at("z0"));
  c.acceleration = num(j.at("acceleration"));
  return c;
}

json to_json(const verdicts::PartialTraceRecord& p) {
  return {{"probe_times_ns", p.probe_times},
          {"rho11_heom", p.rho11_heom},
          {"rho11_mesolve", p.rho11_mesolve},
          {"discrepancy_per_delay", p.discrepancy_per_delay},
          {"branch", std::string(verdicts::to_string(p.branch))},
          {"plateau_flatness", p.plateau_flatness}};
}

json to_json(const verdicts::Verdict& v) {
  json ann = json::object();
  for (const auto& [k, c] : v.annotations) ann[k] = to_json(c);
  return {{"protocol", v.protocol},
          {"label", v.label ? json(std::string(verdicts::to_string(*v.label))) : json(nullptr)},
          {"status", v.status},
          {"evidence", v.evidence},
          {"notes", v.notes},
          {"annotations", ann}};
}

verdicts::Verdict verdict_from_json(const json& j) {
  static const verdicts::Label labels[] = {
      verdicts::Label::non_markov_gap, verdicts::Label::distinguishable, verdicts::Label::marginal_visibility,
      verdicts::Label::degraded, verdicts::Label::shape_match_with_contamination};
  verdicts::Verdict v;
  v.protocol = j.at("protocol").get<std::string>();
  if (!j.at("label").is_null()) {
    const auto name = j.at("label").get<std::string>();
    bool found = false;
    for (auto l : labels) {
      if (verdicts::to_string(l) == name) {
        v.label = l;
        found = true;
      }
    }
    if (!found) throw VerdictError("unknown verdict label '" + name + "'");
  }
  v.status = j.at("status").get<std::string>();
  for (const auto& [k, x] : j.at("evidence").items()) v.evidence[k] = num(x);
  v.notes = j.at("notes").get<std::map<std::string, std::string>>();
  for (const auto& [k, x] : j.at("annotations").items()) v.annotations[k] = ci_from_json(x);
  return v;
}

json to_json(const verdicts::ComparisonRecord& c) {
  json cells = json::array();
  for (const auto& cell : c.cells) {
    json jc{{"protocol", cell.protocol},
            {"backend", cell.backend},
            {"observables", cell.observables},
            {"fit_family", cell.fit_family}};
    if (!cell.decay_shape.empty()) jc["decay_shape"] = cell.decay_shape;
    cells.push_back(std::move(jc));
  }
  json vs = json::array();
  for (const auto& v : c.verdicts) vs.push_back(to_json(v));
  return {{"cells", cells}, {"delta_heom_minus_mesolve", c.delta}, {"verdicts", vs}};
}

verdicts::ComparisonRecord comparison_from_json(const json& j) {
  verdicts::ComparisonRecord c;
  for (const auto& jc : j.at("cells")) {
    verdicts::MatrixCell cell;
    cell.protocol = jc.at("protocol").get<std::string>();
    cell.backend = jc.at("backend").get<std::string>();
    for (const auto& [k, x] : jc.at("observables").items()) cell.observables[k] = num(x);
    cell.fit_family = jc.at("fit_family").get<std::string>();
    cell.decay_shape = jc.value("decay_shape", "");
    c.cells.push_back(std::move(cell));
  }
  for (const auto& [p, names] : j.at("delta_heom_minus_mesolve").items()) {
    for (const auto& [k, x] : names.items()) c.delta[p][k] = num(x);
  }
  for (const auto& jv : j.at("verdicts")) c.verdicts.push_back(verdict_from_json(jv));
  return c;
}

json to_json(const bath::ExpDecomposition& d) {
  json modes = json::array();
  for (const auto& m : d.modes) {
    modes.push_back({{"coeff", cplx_json(m.coeff)}, {"decay", cplx_json(m.decay)}});
  }
  return {{"modes", modes},
          {"rel_rms_residual", d.rel_rms_residual},
          {"method", d.method_tag},
          {"rank_deficient", d.rank_deficient}};
}

json run_record(const pipeline::RunRecord& rec) {
  json j;
  j["record"] = "run_record";
  j["tool_version"] = HEOMCAL_VERSION;
  j["seed"] = rec.cfg.bootstrap.seed;
  j["resamples"] = rec.cfg.bootstrap.resamples;
  j["config"] = serialize_run_config(rec.cfg);
  j["ramsey_fit_grid"] = rec.cfg.verdicts.ramsey_fit_grid;
  j["bath"] = to_json(rec.bath.modes);
  j["bath"]["correlation_c0"] = rec.bath.corr.values.empty() ? json(nullptr) : cplx_json(rec.bath.corr.values.front());

  json backends = json::array();
  json runs = json::object();
  for (const auto& r : rec.runs) {
    backends.push_back(tag(r.backend));
    json jr;
    json nodes = json::array();
    for (const auto& n : r.dag.nodes) {
      nodes.push_back({{"id", n.id},
                       {"protocol", n.protocol},
                       {"status", std::string(dag::to_string(n.status))},
                       {"reason", n.reason},
                       {"invocations", n.invocations}});
    }
    jr["nodes"] = nodes;
    jr["rabi"] = nullptr;
    jr["ramsey"] = nullptr;
    jr["t1"] = nullptr;
    if (r.rabi) {
      jr["rabi"] = {{"fit", to_json(r.rabi->fit)}, {"solver", solver_json(r.rabi->trace.traces_meta)}};
    }
    if (r.ramsey) {
      const auto& m = *r.ramsey;
      jr["ramsey"] = {{"pi_amp", m.pi_amp},
                      {"exp_fit", to_json(m.exp_fit)},
                      {"biexp_standard", opt_fit(m.biexp_standard)},
                      {"biexp_dense", opt_fit(m.biexp_dense)},
                      {"stretched_dense", opt_fit(m.stretched_dense)},
                      {"solver", solver_json(m.standard.traces_meta)}};
    }
    if (r.t1) {
      const auto& m = *r.t1;
      jr["t1"] = {{"pi_amp", m.pi_amp},
                  {"constrained_a_free", to_json(m.a_free)},
                  {"constrained_a_free_dense", to_json(m.a_free_dense)},
                  {"constrained_a_pinned", to_json(m.a_pinned)},
                  {"free_beta_a_pinned", to_json(m.free_beta)},
                  {"pulse_end_population", m.standard.pulse_end_population},
                  {"reference_population", m.standard.reference_population},
                  {"solver", solver_json(m.standard.traces_meta)}};
    }
    runs[tag(r.backend)] = std::move(jr);
  }
  j["backends"] = backends;
  j["runs"] = runs;
  j["partial_trace"] = rec.partial_trace ? to_json(*rec.partial_trace) : json(nullptr);
  j["comparison"] = rec.comparison ? to_json(*rec.comparison) : json(nullptr);
  json cis = json::object();
  for (const auto& [k, c] : rec.cis.records) cis[k] = to_json(c);
  j["cis"] = {{"records", cis}, {"gaps", rec.cis.gaps}};
  return j;
}

json dag_timing(const pipeline::RunRecord& rec) {
  json nodes = json::array();
  json per_backend = json::object();
  double serial = 0.0, parallel = 0.0, crit = 0.0, lat_sum = 0.0, lat_max = 0.0;
  std::size_t count = 0;
  int workers = 0;
  for (const auto& r : rec.runs) {
    workers = std::max(workers, r.dag.workers);
    const auto& t = r.dag.timing;
    for (const auto& n : r.dag.nodes) {
      json jn{{"id", tag(r.backend) + "/" + n.id},
              {"backend", tag(r.backend)},
              {"node", n.id},
              {"status", std::string(dag::to_string(n.status))},
              {"invocations", n.invocations}};
      if (n.timing && t.per_node_wall.count(n.id)) {
        const double lat = t.sched_latency_us.at(n.id);
        jn["wall_s"] = t.per_node_wall.at(n.id);
        jn["sched_latency_us"] = lat;
        jn["ready_s"] = n.timing->ready;
        jn["start_s"] = n.timing->start;
        jn["end_s"] = n.timing->end;
        lat_sum += lat;
        lat_max = std::max(lat_max, lat);
        ++count;
      } else {
        jn["wall_s"] = nullptr;
        jn["sched_latency_us"] = nullptr;
      }
      nodes.push_back(std::move(jn));
    }
    per_backend[tag(r.backend)] = {{"serial_s", t.serial_time},
                                   {"parallel_s", t.parallel_time},
                                   {"critical_path_s", t.critical_path},
                                   {"overhead_fraction", t.overhead_fraction},
                                   {"avg_latency_us", t.avg_latency_us},
                                   {"max_latency_us", t.max_latency_us},
                                   {"workers", r.dag.workers}};
    serial += t.serial_time;
    parallel += t.parallel_time;
    crit += t.critical_path;
  }
  // Backend DAGs run one after another, so their makespans and critical
  // paths add.
  return {{"nodes", nodes},
          {"backends", per_backend},
          {"workers", workers},
          {"serial_s", serial},
          {"parallel_s", parallel},
          {"critical_path_s", crit},
          {"overhead_fraction", serial > 0.0 ? (parallel - crit) / serial : 0.0},
          {"avg_latency_us", count ? lat_sum / static_cast<double>(count) : 0.0},
          {"max_latency_us", lat_max}};
}

json bath_audit(const RunConfig& cfg, const pipeline::BathModel& bath) {
  const auto& b = cfg.platform.bath;
  json j = to_json(bath.modes);
  j["record"] = "bath_decomposition";
  j["bath"] = {{"amplitude_a0_ghz", b.amplitude_a0},
               {"low_cutoff_rad_per_ns", b.low_cutoff},
               {"high_cutoff_rad_per_ns", b.high_cutoff},
               {"temperature_k", b.temperature},
               {"coupling_diag", b.coupling_diag}};
  j["requested_modes"] = cfg.heom.modes;
  const auto& t = bath.corr.times;
  j["grid"] = {{"points", t.size()},
               {"t_min_ns", t.empty() ? 0.0 : t.front()},
               {"t_max_ns", t.empty() ? 0.0 : t.back()},
               {"spacing", "log-then-linear"}};
  j["quad_error"] = bath.corr.quad_error;
  if (!bath.corr.values.empty()) {
    const auto c0 = bath.corr.values.front();
    j["correlation_c0"] = cplx_json(c0);
    j["reconstruction_error_t0"] =
        std::abs(c0) > 0.0 ? std::abs(bath.modes.evaluate(0.0) - c0) / std::abs(c0) : 0.0;
  } else {
    j["correlation_c0"] = nullptr;
    j["reconstruction_error_t0"] = nullptr;
  }
  return j;
}

json l_sweep(const audits::LSweepRecord& r) {
  json guards = json::array();
  for (const auto& g : r.guard_by_l) guards.push_back(to_json(g));
  json per = json::array();
  for (const auto& d : r.runs) {
    per.push_back({{"depth", d.depth},
                   {"ado_count", d.ado_count},
                   {"tau_aw", d.tau_aw},
                   {"fallback_used", d.fallback_used},
                   {"fit", to_json(d.fit)},
                   {"fit_dense", opt_fit(d.fit_dense)},
                   {"t1_fit", to_json(d.t1_fit)},
                   {"ramsey", d.ramsey},
                   {"ramsey_dense", d.ramsey_dense},
                   {"t1", d.t1}});
  }
  std::vector<bool> fallback(r.fallback_used.begin(), r.fallback_used.end());
  return {{"record", "heom_L_sweep"},
          {"depths", r.depths},
          {"ramsey_grid_ns", r.ramsey_grid},
          {"ramsey_dense_grid_ns", r.ramsey_dense_grid},
          {"t1_grid_ns", r.t1_grid},
          {"pi_amp", r.pi_amp},
          {"trace_residuals", r.trace_residuals},
          {"t1_trace_residuals", r.t1_residuals},
          {"tau_aw_by_l", r.tau_aw_by_l},
          {"tau_aw_dense_by_l", r.tau_aw_dense_by_l},
          {"guard_by_l", guards},
          {"fallback_used", fallback},
          {"bath_residual", r.bath_residual},
          {"tau_aw_max_rel_dev", r.tau_aw_max_rel_dev},
          {"case_b_tau_aw_robust", r.case_b_tau_aw_robust},
          {"per_depth", per}};
}

json a_sweep(const audits::ASweepRecord& r) {
  json pts = json::array();
  std::vector<double> taus, stretched;
  for (const auto& p : r.points) {
    taus.push_back(p.tau_aw);
    stretched.push_back(p.stretched_tau);
    pts.push_back({{"scale", p.scale},
                   {"tau_aw", p.tau_aw},
                   {"t2_star", p.t2_star},
                   {"guard", p.fit.guard ? to_json(*p.fit.guard) : json(nullptr)},
                   {"gap_ns", p.gap},
                   {"gap_sign", p.gap_sign},
                   {"stretched_tau", p.stretched_tau},
                   {"stretched_beta", p.stretched_beta},
                   {"stretched_unresolved", p.stretched_unresolved},
                   {"fit", to_json(p.fit)},
                   {"ramsey", p.ramsey}});
  }
  return {{"record", "ramsey_A_sweep"},
          {"scales", r.scales},
          {"grid", r.grid},
          {"delays_ns", r.delays},
          {"pi_amp", r.pi_amp},
          {"mesolve_t2_star", r.mesolve_t2_star},
          {"mesolve_ceiling_hit", r.mesolve_ceiling_hit},
          {"tau_aw_by_scale", taus},
          {"stretched_tau_by_scale", stretched},
          {"tau_aw_strictly_decreasing", r.tau_aw_strictly_decreasing},
          {"stretched_tau_strictly_decreasing", r.stretched_tau_strictly_decreasing},
          {"gap_sign_constant", r.gap_sign_constant},
          {"refit_check",
           {{"scale", r.refit.scale},
            {"residual_scaled", r.refit.residual_scaled},
            {"residual_refit", r.refit.residual_refit},
            {"max_rel_diff", r.refit.max_rel_diff}}},
          {"points", pts}};
}

json l5_sanity(const audits::SanityRecord& r) {
  return {{"record", "L5_sanity_refit"},
          {"depth", r.depth},
          {"a3_ratio", r.a3_ratio},
          {"delta_r_squared", r.delta_r_squared},
          {"tau_aw_biexp", r.tau_aw_biexp},
          {"tau_aw_triexp_ghost_gated", r.tau_aw_triexp},
          {"tau_aw_rel_diff", r.tau_aw_rel_diff},
          {"third_mode_ghost", r.third_mode_ghost},
          {"triexp_fallback", r.triexp_fallback},
          {"biexp_r_squared", r.base.r_squared},
          {"stretched",
           {{"beta", r.stretched.value("beta")},
            {"tau", r.stretched.value("tau")},
            {"r_squared", r.stretched.r_squared}}},
          {"fits", {{"biexp", to_json(r.base)}, {"triexp", to_json(r.triexp)}, {"stretched", to_json(r.stretched)}}}};
}

json partial_trace_check(const audits::PartialTraceCheck& r) {
  json j = to_json(r.record);
  j["record"] = "t1_partial_trace_check";
  j["pi_amp_heom"] = r.pi_amp_heom;
  j["pi_amp_mesolve"] = r.pi_amp_mesolve;
  return j;
}

std::string rabi_scan_csv(const pipeline::RunRecord& rec) {
  std::vector<Column> cols;
  for (const auto& r : rec.runs) {
    if (!r.rabi) continue;
    if (cols.empty()) cols.push_back({"amplitude", r.rabi->trace.sweep_values});
    cols.push_back({"p1_" + tag(r.backend), r.rabi->trace.measured});
    cols.push_back({"fit_" + tag(r.backend), eval_fit(r.rabi->fit, r.rabi->trace.sweep_values)});
  }
  return csv(cols);
}

std::string ramsey_comparison_csv(const pipeline::RunRecord& rec) {
  std::vector<Column> cols;
  for (const auto& r : rec.runs) {
    if (!r.ramsey) continue;
    const auto& s = r.ramsey->standard;
    if (cols.empty()) cols.push_back({"delay_ns", s.sweep_values});
    cols.push_back({"p1_" + tag(r.backend), s.measured});
    const auto& fit = r.ramsey->biexp_standard ? *r.ramsey->biexp_standard : r.ramsey->exp_fit;
    cols.push_back({"fit_" + tag(r.backend), eval_fit(fit, s.sweep_values)});
  }
  return csv(cols);
}

std::string ramsey_dense_heom_csv(const pipeline::RunRecord& rec) {
  const auto* h = rec.find(Backend::heom);
  if (!h || !h->ramsey) return {};
  const auto& d = h->ramsey->dense;
  std::vector<Column> cols{{"delay_ns", d.sweep_values}, {"p1_heom", d.measured}};
  if (h->ramsey->biexp_dense) cols.push_back({"fit_biexp", eval_fit(*h->ramsey->biexp_dense, d.sweep_values)});
  if (h->ramsey->stretched_dense) {
    cols.push_back({"fit_stretched", eval_fit(*h->ramsey->stretched_dense, d.sweep_values)});
  }
  return csv(cols);
}

std::string t1_occupation_csv(const pipeline::RunRecord& rec) {
  std::vector<Column> cols;
  for (const auto& r : rec.runs) {
    if (!r.t1) continue;
    const auto& s = r.t1->standard;
    if (cols.empty()) cols.push_back({"delay_ns", s.sweep_values});
    cols.push_back({"p1_norm_" + tag(r.backend), s.measured});
    cols.push_back({"fit_" + tag(r.backend), eval_fit(r.t1->a_free, s.sweep_values)});
  }
  return csv(cols);
}

std::vector<std::pair<std::string, std::string>> trace_csvs(const pipeline::RunRecord& rec) {
  std::vector<std::pair<std::string, std::string>> out;
  auto add = [&](const std::string& name, const protocols::ProtocolResult& p, const char* sweep) {
    std::vector<Column> cols{{sweep, p.sweep_values}, {"measured", p.measured}};
    if (!p.raw_measured.empty()) cols.push_back({"raw_p1", p.raw_measured});
    out.emplace_back(name, csv(cols));
  };
  for (const auto& r : rec.runs) {
    const auto b = tag(r.backend);
    if (r.rabi) add(b + "_rabi.csv", r.rabi->trace, "amplitude");
    if (r.ramsey) {
      add(b + "_ramsey_standard.csv", r.ramsey->standard, "delay_ns");
      add(b + "_ramsey_dense.csv", r.ramsey->dense, "delay_ns");
    }
    if (r.t1) {
      add(b + "_t1_standard.csv", r.t1->standard, "delay_ns");
      add(b + "_t1_dense.csv", r.t1->dense, "delay_ns");
    }
  }
  return out;
}

std::vector<std::string> validate(const json& doc, const std::string& name, const std::filesystem::path& schema_dir) {
  const auto path = schema_dir / (name + ".schema.json");
  std::ifstream in(path);
  if (!in) return {"schema not found: " + path.string()};
  std::stringstream ss;
  ss << in.rdbuf();
  rapidjson::Document sd;
  if (sd.Parse(ss.str().c_str()).HasParseError()) {
    return {"schema " + path.string() + " does not parse: " + rapidjson::GetParseError_En(sd.GetParseError())};
  }
  const rapidjson::SchemaDocument schema(sd);
  rapidjson::Document d;
  const std::string text = doc.dump();
  if (d.Parse(text.c_str()).HasParseError()) return {"document does not parse"};
  rapidjson::SchemaValidator validator(schema);
  if (d.Accept(validator)) return {};
  rapidjson::StringBuffer sp, dp;
  validator.GetInvalidSchemaPointer().StringifyUriFragment(sp);
  validator.GetInvalidDocumentPointer().StringifyUriFragment(dp);
  return {name + ": document " + dp.GetString() + " violates '" + validator.GetInvalidSchemaKeyword() + "' at schema " +
          sp.GetString()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cli", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("cli", "write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

}  // namespace heomcal::report
