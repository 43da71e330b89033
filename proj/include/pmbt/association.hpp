#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace pmbt {

/// Single-scan association weights. Legacy track j carries a nonexistence
/// weight, a single aggregated missed-detection weight, and one weight per
/// detected cell it can claim (sparse; omitted entries are exactly zero).
/// Each detection additionally carries the weight of its "new component
/// active" hypothesis (object from the Poisson part, or clutter); the
/// inactive hypothesis has weight 1 and applies exactly when a legacy track
/// claims the detection. Valid joint assignments give each detection to at
/// most one legacy track; the new component is active iff nobody claims it.
struct AssociationProblem {
    std::vector<double> nonexist;                            // per legacy
    std::vector<double> miss;                                // per legacy, aggregated
    std::vector<std::vector<std::pair<int, double>>> claims; // per legacy: (detection, weight)
    std::vector<double> new_active;                          // per detection

    int n_legacy() const { return static_cast<int>(nonexist.size()); }
    int n_detections() const { return static_cast<int>(new_active.size()); }
};

/// Per-component marginal pmfs. For each legacy track the entries
/// nonexist + miss + sum(claims) equal 1; for each detection, new_active is
/// the probability that its new component is active.
struct MarginalTable {
    std::vector<double> nonexist;
    std::vector<double> miss;
    std::vector<std::vector<std::pair<int, double>>> claims;  // aligned with problem.claims
    std::vector<double> new_active;
};

namespace detail {

inline void check_problem(const AssociationProblem& p) {
    auto bad = [](double w) { return !(w >= 0.0) || !std::isfinite(w); };
    for (double w : p.nonexist)
        if (bad(w)) throw std::invalid_argument("association: non-finite or negative weight");
    for (double w : p.miss)
        if (bad(w)) throw std::invalid_argument("association: non-finite or negative weight");
    for (double w : p.new_active)
        if (bad(w)) throw std::invalid_argument("association: non-finite or negative weight");
    for (const auto& row : p.claims)
        for (const auto& [m, w] : row)
            if (bad(w)) throw std::invalid_argument("association: non-finite or negative weight");
}

}  // namespace detail

/// Exact marginal association probabilities by enumeration of all valid
/// assignments. Guarded to n_legacy + n_detections <= 12.
inline MarginalTable exact_marginals(const AssociationProblem& problem) {
    detail::check_problem(problem);
    const int J = problem.n_legacy();
    const int D = problem.n_detections();
    if (J + D > 12) throw std::length_error("exact_marginals: problem too large to enumerate");

    // legacy state encoding: 0 = nonexist, 1 = miss, 2 + d = claims detection d
    std::vector<std::vector<std::pair<int, double>>> states(J);
    for (int j = 0; j < J; ++j) {
        states[j].push_back({0, problem.nonexist[j]});
        states[j].push_back({1, problem.miss[j]});
        for (const auto& [d, w] : problem.claims[j]) states[j].push_back({2 + d, w});
    }

    MarginalTable out;
    out.nonexist.assign(J, 0.0);
    out.miss.assign(J, 0.0);
    out.claims.resize(J);
    for (int j = 0; j < J; ++j) out.claims[j].assign(problem.claims[j].begin(), problem.claims[j].end());
    for (int j = 0; j < J; ++j)
        for (auto& [d, w] : out.claims[j]) w = 0.0;
    out.new_active.assign(D, 0.0);

    std::vector<int> current(J, 0);
    double total = 0.0;
    std::vector<double> state_sum;  // flattened per (j, state-index) accumulator
    std::vector<int> offset(J + 1, 0);
    for (int j = 0; j < J; ++j) offset[j + 1] = offset[j] + static_cast<int>(states[j].size());
    state_sum.assign(offset[J], 0.0);
    std::vector<double> new_sum(D, 0.0);

    auto recurse = [&](auto&& self, int j, std::uint32_t claimed, double weight) -> void {
        if (weight == 0.0) return;
        if (j == J) {
            double w = weight;
            for (int d = 0; d < D; ++d)
                if (!(claimed & (1u << d))) w *= problem.new_active[d];
            if (w == 0.0) return;
            total += w;
            for (int d = 0; d < D; ++d)
                if (!(claimed & (1u << d))) new_sum[d] += w;
            for (int jj = 0; jj < J; ++jj) state_sum[offset[jj] + current[jj]] += w;
            return;
        }
        for (int s = 0; s < static_cast<int>(states[j].size()); ++s) {
            const auto& [code, w] = states[j][s];
            if (code >= 2) {
                const int d = code - 2;
                if (claimed & (1u << d)) continue;
                current[j] = s;
                self(self, j + 1, claimed | (1u << d), weight * w);
            } else {
                current[j] = s;
                self(self, j + 1, claimed, weight * w);
            }
        }
    };
    recurse(recurse, 0, 0u, 1.0);

    if (!(total > 0.0)) throw std::runtime_error("exact_marginals: all assignments have zero weight");
    for (int j = 0; j < J; ++j) {
        out.nonexist[j] = state_sum[offset[j] + 0] / total;
        out.miss[j] = state_sum[offset[j] + 1] / total;
        for (std::size_t s = 0; s < out.claims[j].size(); ++s)
            out.claims[j][s].second = state_sum[offset[j] + 2 + static_cast<int>(s)] / total;
    }
    for (int d = 0; d < D; ++d) out.new_active[d] = new_sum[d] / total;
    return out;
}

/// Approximate marginals by normalized message passing on the bipartite
/// track/detection graph. Exact on trees; damping 0.5 guards oscillation on
/// loopy instances. Stops when the largest message change drops below tol.
inline MarginalTable bp_marginals(const AssociationProblem& problem, double tol = 1e-6,
                                  int max_iter = 200) {
    detail::check_problem(problem);
    if (!(tol > 0.0)) throw std::invalid_argument("bp_marginals: tol must be positive");
    const int J = problem.n_legacy();
    const int D = problem.n_detections();

    struct Edge {
        int j, d;
        double w;       // claim weight scaled by 1 / new_active[d]
        double mu;      // track -> detection
        double nu;      // detection -> track
    };
    std::vector<Edge> edges;
    std::vector<std::vector<int>> by_track(J), by_det(D);
    for (int j = 0; j < J; ++j) {
        for (const auto& [d, w] : problem.claims[j]) {
            if (w == 0.0) continue;
            const double base = problem.new_active[d];
            if (!(base > 0.0))
                throw std::invalid_argument("bp_marginals: detection with zero new-component weight");
            by_track[j].push_back(static_cast<int>(edges.size()));
            by_det[d].push_back(static_cast<int>(edges.size()));
            edges.push_back({j, d, w / base, 0.0, 1.0});
        }
    }
    std::vector<double> no_claim(J);
    for (int j = 0; j < J; ++j) no_claim[j] = problem.nonexist[j] + problem.miss[j];

    for (auto& e : edges) e.mu = e.w / (no_claim[e.j] > 0.0 ? no_claim[e.j] : 1.0);

    const double damping = 0.5;
    for (int it = 0; it < max_iter; ++it) {
        // detection -> track
        for (int d = 0; d < D; ++d) {
            double sum_mu = 0.0;
            for (int e : by_det[d]) sum_mu += edges[e].mu;
            for (int e : by_det[d]) edges[e].nu = 1.0 / (1.0 + sum_mu - edges[e].mu);
        }
        // track -> detection, damped
        double delta = 0.0;
        for (int j = 0; j < J; ++j) {
            double sum_wnu = 0.0;
            for (int e : by_track[j]) sum_wnu += edges[e].w * edges[e].nu;
            for (int e : by_track[j]) {
                const double denom = no_claim[j] + sum_wnu - edges[e].w * edges[e].nu;
                const double fresh = denom > 0.0 ? edges[e].w / denom : 0.0;
                const double next = damping * edges[e].mu + (1.0 - damping) * fresh;
                delta = std::max(delta, std::abs(next - edges[e].mu));
                edges[e].mu = next;
            }
        }
        if (delta < tol) break;
    }

    // final detection -> track pass against the converged mu
    for (int d = 0; d < D; ++d) {
        double sum_mu = 0.0;
        for (int e : by_det[d]) sum_mu += edges[e].mu;
        for (int e : by_det[d]) edges[e].nu = 1.0 / (1.0 + sum_mu - edges[e].mu);
    }

    MarginalTable out;
    out.nonexist.assign(J, 0.0);
    out.miss.assign(J, 0.0);
    out.claims.resize(J);
    out.new_active.assign(D, 0.0);
    for (int j = 0; j < J; ++j) {
        double denom = no_claim[j];
        for (int e : by_track[j]) denom += edges[e].w * edges[e].nu;
        if (!(denom > 0.0)) throw std::runtime_error("bp_marginals: degenerate track weights");
        out.nonexist[j] = problem.nonexist[j] / denom;
        out.miss[j] = problem.miss[j] / denom;
        out.claims[j].reserve(problem.claims[j].size());
        std::size_t e_idx = 0;
        for (const auto& [d, w] : problem.claims[j]) {
            double p = 0.0;
            if (w > 0.0) {
                const Edge& e = edges[by_track[j][e_idx++]];
                p = e.w * e.nu / denom;
            }
            out.claims[j].push_back({d, p});
        }
    }
    for (int d = 0; d < D; ++d) {
        double sum_mu = 0.0;
        for (int e : by_det[d]) sum_mu += edges[e].mu;
        out.new_active[d] = 1.0 / (1.0 + sum_mu);
    }
    return out;
}

// ---- Relaxation probe ----

/// Per-cell association weights for a tiny instance, at full cell resolution
/// (one weight per occupied missed cell rather than a single aggregate).
struct CellAssociationTable {
    std::vector<double> nonexist;                                  // per legacy
    std::vector<double> unobserved;                                // per legacy: out-of-grid mass
    std::vector<std::vector<std::pair<int, double>>> cell_weights; // per legacy: (cell, weight)
    std::vector<int> detected_cells;                               // sorted detection cell indices
    std::vector<double> new_active;                                // aligned with detected_cells
};

struct RelaxationProbeReport {
    double max_tv = 0.0;
    std::vector<double> tv;  // per legacy component
};

/// Quantifies the missed-cell exclusion relaxation: marginals when no two
/// tracks may occupy the same cell (missed cells included) versus the
/// aggregated-miss model that enforces exclusion over detected cells only.
/// Reports the per-track total-variation distance over
/// {nonexist, miss, each detection}.
inline RelaxationProbeReport relaxation_error_probe(const CellAssociationTable& table) {
    const int J = static_cast<int>(table.nonexist.size());
    const int D = static_cast<int>(table.detected_cells.size());
    std::vector<int> occupied_missed;
    for (int j = 0; j < J; ++j)
        for (const auto& [cell, w] : table.cell_weights[j]) {
            bool detected = false;
            for (int dc : table.detected_cells) detected |= (dc == cell);
            if (!detected && w > 0.0) {
                bool seen = false;
                for (int c : occupied_missed) seen |= (c == cell);
                if (!seen) occupied_missed.push_back(cell);
            }
        }
    if (J > 3 || D > 3 || static_cast<int>(occupied_missed.size()) > 3)
        throw std::length_error("relaxation_error_probe: instance too large");

    // states per track: 0 = nonexist, 1 = out-of-grid, 2+i = occupied missed
    // cell i, 2+nm+d = detection d
    const int nm = static_cast<int>(occupied_missed.size());
    std::vector<std::vector<double>> weight(J, std::vector<double>(2 + nm + D, 0.0));
    for (int j = 0; j < J; ++j) {
        weight[j][0] = table.nonexist[j];
        weight[j][1] = table.unobserved[j];
        for (const auto& [cell, w] : table.cell_weights[j]) {
            for (int i = 0; i < nm; ++i)
                if (occupied_missed[i] == cell) weight[j][2 + i] += w;
            for (int d = 0; d < D; ++d)
                if (table.detected_cells[d] == cell) weight[j][2 + nm + d] += w;
        }
    }

    auto marginals = [&](bool exclusive_missed) {
        std::vector<std::vector<double>> marg(J, std::vector<double>(2 + nm + D, 0.0));
        double total = 0.0;
        std::vector<int> state(J, 0);
        auto rec = [&](auto&& self, int j) -> void {
            if (j == J) {
                double w = 1.0;
                std::uint32_t det_claimed = 0;
                for (int jj = 0; jj < J; ++jj) {
                    w *= weight[jj][state[jj]];
                    if (state[jj] >= 2 + nm) det_claimed |= (1u << (state[jj] - 2 - nm));
                }
                if (w == 0.0) return;
                for (int d = 0; d < D; ++d)
                    if (!(det_claimed & (1u << d))) w *= table.new_active[d];
                total += w;
                for (int jj = 0; jj < J; ++jj) marg[jj][state[jj]] += w;
                return;
            }
            for (int s = 0; s < 2 + nm + D; ++s) {
                bool clash = false;
                if (s >= 2) {
                    for (int jj = 0; jj < j && !clash; ++jj) {
                        if (state[jj] < 2) continue;
                        const bool both_det = s >= 2 + nm && state[jj] >= 2 + nm;
                        const bool both_missed = s < 2 + nm && state[jj] < 2 + nm;
                        if (both_det && state[jj] == s) clash = true;
                        if (exclusive_missed && both_missed && state[jj] == s) clash = true;
                    }
                }
                if (clash) continue;
                state[j] = s;
                self(self, j + 1);
            }
        };
        rec(rec, 0);
        if (total > 0.0)
            for (auto& row : marg)
                for (double& v : row) v /= total;
        return marg;
    };

    const auto relaxed = marginals(false);
    const auto full = marginals(true);

    RelaxationProbeReport report;
    report.tv.assign(J, 0.0);
    for (int j = 0; j < J; ++j) {
        // fold out-of-grid and per-cell missed states into one miss bucket
        auto fold = [&](const std::vector<double>& row) {
            std::vector<double> f(2 + D, 0.0);
            f[0] = row[0];
            for (int s = 1; s < 2 + nm; ++s) f[1] += row[s];
            for (int d = 0; d < D; ++d) f[2 + d] = row[2 + nm + d];
            return f;
        };
        const auto a = fold(relaxed[j]);
        const auto b = fold(full[j]);
        double tv = 0.0;
        for (std::size_t s = 0; s < a.size(); ++s) tv += std::abs(a[s] - b[s]);
        report.tv[j] = 0.5 * tv;
        report.max_tv = std::max(report.max_tv, report.tv[j]);
    }
    return report;
}

}  // namespace pmbt
