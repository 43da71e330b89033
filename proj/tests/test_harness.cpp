#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "pmbt/harness.hpp"

using namespace pmbt;

namespace {

ExperimentSpec small_spec() {
    ExperimentSpec spec;
    spec.scenario.roi = {8, 8, 1.0, 0.0, 0.0};
    spec.scenario.n_objects = 2;
    spec.scenario.n_steps = 12;
    spec.scenario.birth_last_step = 3;
    spec.scenario.death_first_step = 10;
    spec.filters = {FilterKind::PmbCm};
    spec.etas = {2.0};
    spec.runs = 3;
    spec.threads = 1;
    for (FilterParams* p : {&spec.params_cm, &spec.params_am, &spec.params_pmb}) {
        p->particles_per_bernoulli = 100;
        p->phd_particle_budget = 400;
        p->birth_mass = 5.0 / 64.0;
    }
    return spec;
}

std::string curves_of(const ExperimentReport& r) {
    std::ostringstream os;
    r.write_curves_csv(os);
    return os.str();
}

}  // namespace

TEST_CASE("identical spec and seed give byte-identical results") {
    const auto spec = small_spec();
    const auto a = run(spec);
    const auto b = run(spec);
    REQUIRE(curves_of(a) == curves_of(b));
}

TEST_CASE("the report is independent of the thread count") {
    auto spec = small_spec();
    spec.runs = 4;
    spec.threads = 1;
    const auto serial = run(spec);
    spec.threads = 4;
    const auto parallel = run(spec);
    REQUIRE(curves_of(serial) == curves_of(parallel));
}

TEST_CASE("eta = 0 detects every cell") {
    auto spec = small_spec();
    spec.etas = {0.0};
    spec.scenario.n_steps = 8;
    spec.scenario.birth_last_step = 2;
    spec.scenario.death_first_step = 6;
    spec.runs = 2;
    const auto report = run(spec);
    const auto& cell = report.cell(FilterKind::PmbCm, 0.0);
    REQUIRE(cell.mean_detections() == 64.0);
    for (const auto& rep : cell.reps)
        for (int d : rep.detections) REQUIRE(d == 64);
}

TEST_CASE("clutter-only runs match the analytic detection rate") {
    ExperimentSpec spec;
    spec.scenario.n_objects = 0;
    spec.scenario.n_steps = 30;
    spec.scenario.birth_last_step = 5;
    spec.scenario.death_first_step = 25;
    spec.filters = {FilterKind::PmbCm};
    spec.etas = {2.0};
    spec.runs = 50;
    spec.threads = 0;
    for (FilterParams* p : {&spec.params_cm, &spec.params_am, &spec.params_pmb}) {
        p->particles_per_bernoulli = 50;
        p->phd_particle_budget = 300;
    }
    const auto report = run(spec);
    const double p = oracle::rayleigh_tail_quadrature(2.0, 1.0);
    const double expected = 1024.0 * p;
    REQUIRE(std::abs(report.cells[0].mean_detections() - expected) < 3.0);
}

TEST_CASE("specs with point filters reject eta = 0") {
    auto spec = small_spec();
    spec.filters = {FilterKind::PmbAm};
    spec.etas = {0.0};
    REQUIRE_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.filters = {FilterKind::PmbCm};
    REQUIRE_NOTHROW(spec.validate());
}

TEST_CASE("curve and summary files carry the documented columns") {
    auto spec = small_spec();
    spec.runs = 1;
    const auto report = run(spec);
    std::ostringstream curves, summary;
    report.write_curves_csv(curves);
    report.write_summary_csv(summary);

    std::string first;
    std::istringstream cs(curves.str());
    std::getline(cs, first);
    REQUIRE(first ==
            "filter,eta,k,gospa_total,gospa_loc,gospa_missed,gospa_false,card_true,card_est_mean");
    std::string line;
    int rows = 0;
    while (std::getline(cs, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == spec.scenario.n_steps);  // one cell, one row per step

    std::istringstream ss(summary.str());
    std::getline(ss, first);
    REQUIRE(first == "filter,eta,mean_detections,mean_runtime_s,mean_total_gospa");
}

TEST_CASE("runtime accounting excludes frame synthesis") {
    auto spec = small_spec();
    spec.runs = 1;
    const auto report = run(spec);
    // the filter-only runtime must be positive and finite
    REQUIRE(report.cells[0].reps[0].runtime_s > 0.0);
    REQUIRE(std::isfinite(report.cells[0].reps[0].runtime_s));
}

TEST_CASE("the full filter grid runs end to end at desk scale") {
    auto spec = small_spec();
    spec.filters = {FilterKind::PmbCm, FilterKind::PmbAm, FilterKind::Pmb};
    spec.etas = {2.0, 4.0};
    spec.runs = 2;
    spec.threads = 0;
    const auto report = run(spec);
    REQUIRE(report.cells.size() == 6);
    for (const auto& cell : report.cells) {
        REQUIRE(static_cast<int>(cell.reps.size()) == spec.runs);
        for (const auto& rep : cell.reps) {
            REQUIRE(rep.gospa.size() == static_cast<std::size_t>(spec.scenario.n_steps));
            for (const auto& g : rep.gospa) REQUIRE(std::isfinite(g.total));
        }
    }
}
