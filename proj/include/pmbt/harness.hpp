#pragma once

#include <array>
#include <atomic>
#include <bit>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pmbt/core.hpp"
#include "pmbt/gospa.hpp"
#include "pmbt/measurement.hpp"
#include "pmbt/pmb_cell_filter.hpp"
#include "pmbt/pmb_point_filter.hpp"
#include "pmbt/rng.hpp"
#include "pmbt/scenario.hpp"

namespace pmbt {

enum class FilterKind { PmbCm, PmbAm, Pmb };

inline const char* filter_name(FilterKind k) {
    switch (k) {
        case FilterKind::PmbCm: return "pmb-cm";
        case FilterKind::PmbAm: return "pmb-am";
        case FilterKind::Pmb: return "pmb";
    }
    return "?";
}

inline FilterKind filter_from_name(const std::string& name) {
    if (name == "pmb-cm") return FilterKind::PmbCm;
    if (name == "pmb-am") return FilterKind::PmbAm;
    if (name == "pmb") return FilterKind::Pmb;
    throw std::invalid_argument("unknown filter name: " + name);
}

struct GospaParams {
    double p = 1.0;
    double c = 20.0;
    double beta = 2.0;
};

struct ExperimentSpec {
    ScenarioConfig scenario;
    AmplitudeModel model;
    std::vector<FilterKind> filters{FilterKind::PmbCm, FilterKind::PmbAm, FilterKind::Pmb};
    std::vector<double> etas{2.0, 4.0, 6.0};
    int runs = 100;
    int threads = 0;  // 0 = hardware concurrency
    std::uint64_t master_seed = 1;
    FilterParams params_cm;          // eta overwritten per grid cell
    FilterParams params_am;
    FilterParams params_pmb;
    double sigma_p_sq_am = 1.0 / 12.0;
    double sigma_p_sq_pmb = 1.0 / 12.0;
    bool uniform_cell_am = false;
    bool uniform_cell_pmb = false;
    GospaParams gospa_params;
    std::string out_dir;       // empty = no file output
    bool snapshots = false;    // dump replicate-0 belief snapshots per cell

    const FilterParams& params_for(FilterKind k) const {
        switch (k) {
            case FilterKind::PmbCm: return params_cm;
            case FilterKind::PmbAm: return params_am;
            default: return params_pmb;
        }
    }

    void validate() const {
        scenario.validate();
        params_cm.validate();
        params_am.validate();
        params_pmb.validate();
        if (runs < 1) throw std::invalid_argument("harness: runs must be >= 1");
        if (etas.empty() || filters.empty())
            throw std::invalid_argument("harness: need at least one filter and one eta");
        for (double eta : etas) {
            if (!(eta >= 0.0)) throw std::invalid_argument("harness: eta must be nonnegative");
            if (eta == 0.0)
                for (FilterKind f : filters)
                    if (f != FilterKind::PmbCm)
                        throw std::invalid_argument(
                            "harness: eta = 0 is only supported by pmb-cm (all 1024 cells detect; "
                            "point-measurement filters are undefined there)");
        }
    }
};

/// One replicate's per-step traces.
struct RepCurve {
    std::vector<GospaResult> gospa;   // indexed by step-1
    std::vector<int> detections;
    std::vector<int> card_true;
    std::vector<int> card_est;
    double runtime_s = 0.0;           // filter-only wall clock
};

struct CellResult {
    FilterKind filter = FilterKind::PmbCm;
    double eta = 0.0;
    std::vector<RepCurve> reps;

    double mean_detections() const {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& r : reps)
            for (int d : r.detections) {
                s += d;
                ++n;
            }
        return n ? s / n : 0.0;
    }

    double mean_runtime_s() const {
        double s = 0.0;
        for (const auto& r : reps) s += r.runtime_s;
        return reps.empty() ? 0.0 : s / reps.size();
    }

    double mean_total_gospa() const {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& r : reps)
            for (const auto& g : r.gospa) {
                s += g.total;
                ++n;
            }
        return n ? s / n : 0.0;
    }

    /// Per-replicate GOSPA totals averaged over steps [k_lo, k_hi].
    std::vector<double> rep_window_means(int k_lo, int k_hi) const {
        std::vector<double> out;
        for (const auto& r : reps) {
            double s = 0.0;
            int n = 0;
            for (int k = k_lo; k <= k_hi && k - 1 < static_cast<int>(r.gospa.size()); ++k) {
                s += r.gospa[k - 1].total;
                ++n;
            }
            out.push_back(n ? s / n : 0.0);
        }
        return out;
    }

    /// Per-replicate mean of one decomposition term over steps [k_lo, k_hi].
    std::vector<double> rep_window_false(int k_lo, int k_hi) const {
        std::vector<double> out;
        for (const auto& r : reps) {
            double s = 0.0;
            int n = 0;
            for (int k = k_lo; k <= k_hi && k - 1 < static_cast<int>(r.gospa.size()); ++k) {
                s += r.gospa[k - 1].false_;
                ++n;
            }
            out.push_back(n ? s / n : 0.0);
        }
        return out;
    }
};

struct ExperimentReport {
    ExperimentSpec spec;
    std::vector<CellResult> cells;

    const CellResult& cell(FilterKind f, double eta) const {
        for (const auto& c : cells)
            if (c.filter == f && c.eta == eta) return c;
        throw std::out_of_range("no such experiment cell");
    }

    void write_curves_csv(std::ostream& os) const {
        os << "filter,eta,k,gospa_total,gospa_loc,gospa_missed,gospa_false,card_true,"
              "card_est_mean\n";
        os.precision(12);
        for (const auto& c : cells) {
            const int n_steps = spec.scenario.n_steps;
            for (int k = 1; k <= n_steps; ++k) {
                double gt = 0, gl = 0, gm = 0, gf = 0, ct = 0, ce = 0;
                for (const auto& r : c.reps) {
                    gt += r.gospa[k - 1].total;
                    gl += r.gospa[k - 1].localization;
                    gm += r.gospa[k - 1].missed;
                    gf += r.gospa[k - 1].false_;
                    ct += r.card_true[k - 1];
                    ce += r.card_est[k - 1];
                }
                const double n = static_cast<double>(c.reps.size());
                os << filter_name(c.filter) << "," << c.eta << "," << k << "," << gt / n << ","
                   << gl / n << "," << gm / n << "," << gf / n << "," << ct / n << "," << ce / n
                   << "\n";
            }
        }
    }

    void write_summary_csv(std::ostream& os) const {
        os << "filter,eta,mean_detections,mean_runtime_s,mean_total_gospa\n";
        os.precision(12);
        for (const auto& c : cells)
            os << filter_name(c.filter) << "," << c.eta << "," << c.mean_detections() << ","
               << c.mean_runtime_s() << "," << c.mean_total_gospa() << "\n";
    }
};

namespace detail {

inline RepCurve run_replicate(const ExperimentSpec& spec, FilterKind kind, double eta, int rep,
                              std::string* snapshot_out) {
    const auto& sc = spec.scenario;
    const GroundTruth truth =
        generate(sc, derive_seed(spec.master_seed, {seed_tag::scenario, static_cast<std::uint64_t>(rep)}));

    FilterParams params = spec.params_for(kind);
    params.eta = eta;
    params.process_noise_var = sc.process_noise_var;
    params.dt = sc.dt;
    const std::uint64_t filter_seed =
        derive_seed(spec.master_seed, {seed_tag::filter, static_cast<std::uint64_t>(rep),
                                       static_cast<std::uint64_t>(kind),
                                       std::bit_cast<std::uint64_t>(eta)});

    PmbCellFilter cell_filter(sc.roi, spec.model, params, filter_seed);
    std::unique_ptr<PmbPointFilter> point_filter;
    if (kind != FilterKind::PmbCm) {
        const bool am = kind == FilterKind::PmbAm;
        auto pm = make_point_model(sc.roi, spec.model, eta, am,
                                   am ? spec.sigma_p_sq_am : spec.sigma_p_sq_pmb);
        pm.uniform_cell_likelihood = am ? spec.uniform_cell_am : spec.uniform_cell_pmb;
        point_filter = std::make_unique<PmbPointFilter>(sc.roi, spec.model, pm, params, filter_seed);
    }

    RepCurve curve;
    curve.gospa.resize(sc.n_steps);
    curve.detections.resize(sc.n_steps);
    curve.card_true.resize(sc.n_steps);
    curve.card_est.resize(sc.n_steps);

    std::ostringstream snapshots;
    if (snapshot_out) snapshots << "step,label,r,p1,p2,v1,v2,gamma\n";

    std::chrono::steady_clock::duration elapsed{0};
    for (int k = 1; k <= sc.n_steps; ++k) {
        const auto frame = frame_at(
            truth, k, spec.model, eta,
            derive_seed(spec.master_seed, {seed_tag::frame, static_cast<std::uint64_t>(rep),
                                           static_cast<std::uint64_t>(k)}));

        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::pair<std::uint64_t, ObjectState>> estimates;
        if (kind == FilterKind::PmbCm) {
            cell_filter.step(frame, k);
            estimates = cell_filter.estimates();
        } else {
            point_filter->step(frame, k);
            estimates = point_filter->estimates();
        }
        elapsed += std::chrono::steady_clock::now() - t0;

        const auto alive = truth.alive_at(k);
        std::vector<std::array<double, 2>> truth_pos, est_pos;
        for (const auto& x : alive) truth_pos.push_back({x.p1, x.p2});
        for (const auto& [label, x] : estimates) est_pos.push_back({x.p1, x.p2});

        curve.gospa[k - 1] = gospa(truth_pos, est_pos, spec.gospa_params.p, spec.gospa_params.c,
                                   spec.gospa_params.beta);
        curve.detections[k - 1] = static_cast<int>(frame.detections.size());
        curve.card_true[k - 1] = static_cast<int>(alive.size());
        curve.card_est[k - 1] = static_cast<int>(estimates.size());

        if (snapshot_out) {
            const PmbBelief& belief =
                kind == FilterKind::PmbCm ? cell_filter.belief() : point_filter->belief();
            write_belief_snapshot(belief, k, snapshots);
        }
    }
    curve.runtime_s = std::chrono::duration<double>(elapsed).count();
    if (snapshot_out) *snapshot_out = snapshots.str();
    return curve;
}

}  // namespace detail

/// Runs the (filter x eta) grid with deterministic per-replicate seeds.
/// Replicates are parallelized; the report is independent of the thread
/// count because every replicate owns derived seeds and results are reduced
/// in replicate order.
inline ExperimentReport run(const ExperimentSpec& spec) {
    spec.validate();
    ExperimentReport report;
    report.spec = spec;

    int threads = spec.threads > 0 ? spec.threads
                                   : static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;

    for (FilterKind kind : spec.filters) {
        for (double eta : spec.etas) {
            CellResult cell;
            cell.filter = kind;
            cell.eta = eta;
            cell.reps.resize(spec.runs);
            std::string snapshot;

            std::atomic<int> next{0};
            auto worker = [&]() {
                for (;;) {
                    const int rep = next.fetch_add(1);
                    if (rep >= spec.runs) return;
                    std::string* snap = (spec.snapshots && rep == 0) ? &snapshot : nullptr;
                    cell.reps[rep] = detail::run_replicate(spec, kind, eta, rep, snap);
                }
            };
            if (threads == 1 || spec.runs == 1) {
                worker();
            } else {
                std::vector<std::thread> pool;
                for (int t = 0; t < std::min(threads, spec.runs); ++t) pool.emplace_back(worker);
                for (auto& t : pool) t.join();
            }

            if (spec.snapshots && !spec.out_dir.empty()) {
                std::ostringstream name;
                name << spec.out_dir << "/snapshots_" << filter_name(kind) << "_eta" << eta
                     << ".csv";
                std::ofstream out(name.str());
                out << snapshot;
            }
            report.cells.push_back(std::move(cell));
        }
    }

    if (!spec.out_dir.empty()) {
        std::ofstream curves(spec.out_dir + "/curves.csv");
        if (!curves) throw std::runtime_error("cannot write to output directory " + spec.out_dir);
        report.write_curves_csv(curves);
        std::ofstream summary(spec.out_dir + "/summary.csv");
        report.write_summary_csv(summary);
    }
    return report;
}

}  // namespace pmbt
