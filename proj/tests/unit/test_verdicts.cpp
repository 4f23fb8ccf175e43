#include <doctest.h>

#include "heomcal/error.hpp"
#include "heomcal/verdicts.hpp"

using namespace heomcal;
using namespace heomcal::verdicts;

namespace {

fits::FitResult fit(std::map<std::string, double> derived, std::optional<bool> guard = std::nullopt) {
  fits::FitResult f;
  f.derived = std::move(derived);
  if (guard) f.guard = fits::GuardOutcome{3.11, 0.38, *guard};
  return f;
}

PartialTraceRecord probe(double first) {
  return make_partial_trace({1.0, 10.0, 100.0}, {0.9, 0.9, 0.9}, {0.9 + first, 0.9 + first, 0.9 + first}, {});
}

MatrixCell cell(std::string p, std::string b, double v) {
  MatrixCell c{p, b, {}, "f", ""};
  for (const auto& n : observable_names(p)) c.observables[n] = v;
  return c;
}

std::vector<MatrixCell> full_matrix() {
  std::vector<MatrixCell> cells;
  for (const char* b : {"unitary", "lindblad", "heom"}) {
    cells.push_back(cell("rabi", b, 1.0));
    cells.push_back(cell("ramsey", b, 1.0));
    if (std::string(b) != "unitary") cells.push_back(cell("t1", b, 1.0));
  }
  return cells;
}

}  // namespace

TEST_CASE("ramsey verdict") {
  const VerdictThresholds th;
  const auto v = ramsey_verdict(fit({{"t2_star", 352.0}}, true), fit({{"t2_star", 9950.0}}), th);
  REQUIRE(v.label);
  CHECK(*v.label == Label::non_markov_gap);
  CHECK(v.evidence.at("ratio_mesolve_over_heom") == doctest::Approx(28.3).epsilon(1e-2));

  const auto same = ramsey_verdict(fit({{"t2_star", 9950.0}}, true), fit({{"t2_star", 9950.0}}), th);
  CHECK_FALSE(same.label);
  CHECK(same.evidence.at("relative_difference") == 0.0);

  const auto guarded = ramsey_verdict(fit({{"t2_star", 352.0}}, false), fit({{"t2_star", 9950.0}}), th);
  CHECK_FALSE(guarded.label);

  CHECK_THROWS_AS(ramsey_verdict(fit({{"t2_star", 352.0}}), fit({{"t2_star", 9950.0}}), th), VerdictError);
}

TEST_CASE("rabi verdict tiers") {
  const VerdictThresholds th;
  auto label = [&](double amp_h, double pmax_h) {
    return *rabi_verdict(fit({{"pi_amp", amp_h}, {"p_max", pmax_h}}), fit({{"pi_amp", 1.0}, {"p_max", 0.99}}), th)
                .label;
  };
  CHECK(label(1.0 - 0.0044, 0.99 - 0.0217) == Label::marginal_visibility);
  CHECK(label(1.01, 0.99) == Label::distinguishable);
  CHECK(label(1.001, 0.988) == Label::degraded);
}

TEST_CASE("t1 interpretation") {
  const VerdictThresholds th;
  const auto h = fit({{"a", 0.879}, {"beta", 1.0}, {"t1", 24000.0}});
  const auto m = fit({{"a", 1.0}, {"beta", 1.0}, {"t1", 24800.0}});
  const auto v = t1_interpretation(h, m, probe(0.119), th);
  REQUIRE(v.label);
  CHECK(*v.label == Label::shape_match_with_contamination);

  CHECK_FALSE(t1_interpretation(m, m, probe(0.119), th).label);

  const auto withheld = t1_interpretation(h, m, probe(0.0), th);
  CHECK_FALSE(withheld.label);
  CHECK(withheld.status == "withheld");

  CHECK_THROWS_AS(t1_interpretation(h, m, std::nullopt, th), VerdictError);
}

TEST_CASE("probe branches and plateau") {
  const VerdictThresholds th;
  CHECK(classify_branch(0.119, th) == Branch::physical);
  CHECK(classify_branch(1e-4, th) == Branch::representation);
  CHECK(classify_branch(0.01, th) == Branch::indeterminate);
  const auto r = make_partial_trace({1.0, 50.0, 100.0, 500.0}, {0.90, 0.91, 0.90, 0.5}, {1.0, 1.0, 1.0, 1.0}, th);
  CHECK(r.branch == Branch::physical);
  CHECK(r.discrepancy_per_delay.front() == doctest::Approx(0.1));
  CHECK(r.plateau_flatness == doctest::Approx(0.01 / 0.91));
}

TEST_CASE("matrix completeness and deltas") {
  auto cells = full_matrix();
  for (auto& c : cells) {
    if (c.backend == "heom") {
      for (auto& [k, v] : c.observables) v = 0.5;
    }
  }
  const auto rec = assemble_matrix(cells, {});
  CHECK(rec.cells.size() == 8);
  CHECK(rec.delta.at("rabi").at("pi_amp") == doctest::Approx(-0.5));

  const auto equal = assemble_matrix(full_matrix(), {});
  for (const auto& [p, d] : equal.delta) {
    for (const auto& [k, v] : d) {
      if (k.find("ratio") == std::string::npos) CHECK(v == 0.0);
    }
  }

  auto missing = full_matrix();
  missing.erase(std::remove_if(missing.begin(), missing.end(),
                               [](const MatrixCell& c) { return c.protocol == "ramsey" && c.backend == "heom"; }),
                missing.end());
  try {
    assemble_matrix(missing, {});
    FAIL("missing cell accepted");
  } catch (const VerdictError& e) {
    CHECK(std::string(e.what()).find("ramsey/heom") != std::string::npos);
  }

  std::vector<MatrixCell> one{cell("rabi", "lindblad", 1.0), cell("ramsey", "lindblad", 1.0),
                              cell("t1", "lindblad", 1.0)};
  CHECK_NOTHROW(assemble_matrix(one, {}, false));
  CHECK_THROWS_AS(assemble_matrix({cell("rabi", "heom", 1.0)}, {}, true), VerdictError);
}
