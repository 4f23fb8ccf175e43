#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "heomcal/audits.hpp"
#include "heomcal/pipeline.hpp"

namespace heomcal::report {

using nlohmann::json;

json to_json(const fits::GuardOutcome& g);
json to_json(const fits::FitResult& f);
json to_json(const stats::CiRecord& c);
json to_json(const verdicts::PartialTraceRecord& p);
json to_json(const verdicts::Verdict& v);
json to_json(const verdicts::ComparisonRecord& c);
json to_json(const bath::ExpDecomposition& d);

fits::GuardOutcome guard_from_json(const json& j);
stats::CiRecord ci_from_json(const json& j);
verdicts::Verdict verdict_from_json(const json& j);
verdicts::ComparisonRecord comparison_from_json(const json& j);

/// Scientific record of a run: config echo, bath, per-backend fits and node
/// statuses, matrix, verdicts and CIs. Carries no timing fields.
json run_record(const pipeline::RunRecord& rec);

/// Per-node wall times and scheduling latencies of every backend DAG
/// ("<backend>/<node>"), the per-backend metrics and their sums.
json dag_timing(const pipeline::RunRecord& rec);

json bath_audit(const RunConfig& cfg, const pipeline::BathModel& bath);
json l_sweep(const audits::LSweepRecord& r);
json a_sweep(const audits::ASweepRecord& r);
json l5_sanity(const audits::SanityRecord& r);
json partial_trace_check(const audits::PartialTraceCheck& r);

/// Plot data. Column names are `<quantity>_<backend>` plus the sweep column.
std::string rabi_scan_csv(const pipeline::RunRecord& rec);
std::string ramsey_comparison_csv(const pipeline::RunRecord& rec);
std::string ramsey_dense_heom_csv(const pipeline::RunRecord& rec);
std::string t1_occupation_csv(const pipeline::RunRecord& rec);

/// Raw traces of every protocol result, keyed by file name.
std::vector<std::pair<std::string, std::string>> trace_csvs(const pipeline::RunRecord& rec);

/// Shortest round-trip decimal form; "nan"/"inf" for non-finite values.
std::string format_double(double v);

/// Validates `doc` against schemas/<name>.schema.json. Returns the list of
/// violations (empty when valid).
std::vector<std::string> validate(const json& doc, const std::string& name,
                                  const std::filesystem::path& schema_dir = HEOMCAL_SCHEMA_DIR);

/// Pretty-printed JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const json& doc);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace heomcal::report
