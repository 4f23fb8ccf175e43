#include <doctest.h>

#include "heomcal/cli.hpp"
#include "heomcal/error.hpp"
#include "heomcal/report.hpp"

using namespace heomcal;
using report::json;

TEST_CASE("number formatting") {
  CHECK(report::format_double(0.1) == "0.1");
  CHECK(report::format_double(9950.0) == "9950");
  CHECK(report::format_double(std::nan("")) == "nan");
}

TEST_CASE("comparison record round trip") {
  verdicts::ComparisonRecord c;
  c.cells.push_back({"ramsey", "heom", {{"t2_star", 35.9}, {"tau_aw", 27.9}}, "biexp_revival", "revival"});
  c.delta["ramsey"]["t2_star"] = -9914.0;
  verdicts::Verdict v;
  v.protocol = "ramsey";
  v.label = verdicts::Label::non_markov_gap;
  v.status = "assigned";
  v.evidence["ratio"] = 276.7;
  v.notes["reason"] = "x";
  stats::CiRecord ci;
  ci.point = 1.0;
  ci.lo = 0.5;
  ci.hi = 1.5;
  ci.p_value = 0.2;
  ci.seed = 7;
  ci.resamples = 100;
  v.annotations["t2"] = ci;
  c.verdicts.push_back(v);

  const json j = report::to_json(c);
  const auto back = report::comparison_from_json(j);
  CHECK(report::to_json(back) == j);
  CHECK(back.cells[0].observables.at("tau_aw") == 27.9);
  CHECK(*back.verdicts[0].label == verdicts::Label::non_markov_gap);
  CHECK(*back.verdicts[0].annotations.at("t2").p_value == 0.2);
}

TEST_CASE("schema validation reports violations") {
  const json ok{{"record", "error"}, {"status", "error"}, {"command", "run-dag"}, {"module", "cli"}, {"message", "m"}};
  CHECK(report::validate(ok, "error").empty());
  json bad = ok;
  bad.erase("module");
  CHECK_FALSE(report::validate(bad, "error").empty());
  CHECK_FALSE(report::validate(ok, "no_such_schema").empty());
}

TEST_CASE("cli list parsing") {
  CHECK(cli::parse_int_list("2,3, 4,5") == std::vector<int>{2, 3, 4, 5});
  CHECK(cli::parse_double_list("0.5,1,2") == std::vector<double>{0.5, 1.0, 2.0});
  CHECK_THROWS_AS(cli::parse_int_list("2,x"), Error);
  CHECK_THROWS_AS(cli::parse_int_list("2,,3"), Error);
}

TEST_CASE("cli usage errors") {
  std::ostringstream out, err;
  CHECK(cli::run({"run-dag", "--out", "/tmp/x"}, out, err) != 0);
  CHECK(cli::run({"run-dag", "--platform", "/nonexistent.yaml", "--out", "/tmp/x"}, out, err) != 0);
  CHECK(cli::run({}, out, err) != 0);
}
