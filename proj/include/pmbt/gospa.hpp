#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace pmbt {

struct GospaResult {
    double total = 0.0;
    double localization = 0.0;
    double missed = 0.0;
    double false_ = 0.0;
};

namespace detail {

/// Exact min-cost perfect matching on an n x n cost matrix (Hungarian
/// algorithm with potentials, O(n^3)). Returns assignment[row] = col.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) return {};
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] >= 1) assignment[p[j] - 1] = j - 1;
    return assignment;
}

}  // namespace detail

/// GOSPA distance (alpha = 2 form) between two position sets, with the
/// localization / missed-object / false-object decomposition. Solved exactly:
/// pairwise costs are clamped at c^p, the matching is optimal, and matched
/// pairs at the clamp are counted as unassigned in the decomposition. For
/// p = 1 the three terms sum to the total; for general p they are the
/// additive contributions to total^p.
inline GospaResult gospa(const std::vector<std::array<double, 2>>& truth,
                         const std::vector<std::array<double, 2>>& estimates, double p = 1.0,
                         double c = 20.0, double beta = 2.0) {
    if (!(p >= 1.0)) throw std::invalid_argument("gospa: p must be >= 1");
    if (!(c > 0.0)) throw std::invalid_argument("gospa: c must be positive");
    if (beta != 2.0) throw std::invalid_argument("gospa: only beta = 2 supported");

    const int n = static_cast<int>(truth.size());
    const int m = static_cast<int>(estimates.size());
    const double cp = std::pow(c, p);
    const double unassigned = cp / beta;

    GospaResult res;
    if (n == 0 && m == 0) return res;

    // Pad to (n+m) x (n+m): real x real = clamped distance^p, real x dummy =
    // c^p / beta (unassigned), dummy x dummy = 0.
    const int size = n + m;
    std::vector<std::vector<double>> cost(size, std::vector<double>(size, 0.0));
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
            if (i < n && j < m) {
                const double dx = truth[i][0] - estimates[j][0];
                const double dy = truth[i][1] - estimates[j][1];
                cost[i][j] = std::min(std::pow(std::sqrt(dx * dx + dy * dy), p), cp);
            } else if (i < n || j < m) {
                cost[i][j] = unassigned;
            }
        }
    }
    const auto assignment = detail::hungarian(cost);

    double loc = 0.0;
    int n_missed = 0, n_false = 0;
    std::vector<char> est_matched(m, false);
    for (int i = 0; i < n; ++i) {
        const int j = assignment[i];
        if (j < m && cost[i][j] < cp) {
            loc += cost[i][j];
            est_matched[j] = true;
        } else {
            ++n_missed;
        }
    }
    for (int j = 0; j < m; ++j)
        if (!est_matched[j]) ++n_false;

    res.localization = loc;
    res.missed = n_missed * unassigned;
    res.false_ = n_false * unassigned;
    res.total = std::pow(loc + res.missed + res.false_, 1.0 / p);
    return res;
}

}  // namespace pmbt
