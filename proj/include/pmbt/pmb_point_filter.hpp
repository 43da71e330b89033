#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pmbt/association.hpp"
#include "pmbt/core.hpp"
#include "pmbt/measurement.hpp"
#include "pmbt/pmb_cell_filter.hpp"
#include "pmbt/rng.hpp"

namespace pmbt {

/// Point-measurement model: Gaussian in-cell position likelihood
/// (moment-matched to the cell side), uniform clutter over the ROI with
/// Poisson rate mu_fa = p_fa * M, and an amplitude-information switch.
struct PointMeasurementModel {
    double sigma_p_sq = 1.0 / 12.0;
    double mu_fa = 0.0;
    double roi_area = 0.0;
    double eta = 0.0;
    bool amplitude_enabled = true;
    bool uniform_cell_likelihood = false;
    double gate_sigmas = 25.0;  // pairs beyond this many sigma_p underflow every sum

    double gate_radius() const { return gate_sigmas * std::sqrt(sigma_p_sq); }
};

/// Builds the model for a grid and threshold. The threshold must be positive:
/// at eta = 0 every cell detects and the point-measurement conversion is
/// meaningless.
inline PointMeasurementModel make_point_model(const GridGeometry& geometry,
                                              const AmplitudeModel& model, double eta,
                                              bool amplitude_enabled,
                                              double sigma_p_sq = 1.0 / 12.0) {
    if (!(eta > 0.0))
        throw std::invalid_argument("point filters require eta > 0 (all cells detect at eta = 0)");
    if (!(sigma_p_sq > 0.0)) throw std::invalid_argument("sigma_p_sq must be positive");
    PointMeasurementModel pm;
    pm.sigma_p_sq = sigma_p_sq;
    pm.mu_fa = p_fa(model, eta) * geometry.num_cells();
    pm.roi_area = geometry.area();
    pm.eta = eta;
    pm.amplitude_enabled = amplitude_enabled;
    return pm;
}

/// Breaks the cell structure: one (amplitude, cell center) triple per
/// detection, order preserved.
inline std::vector<PointMeasurement> to_point_measurements(const ThresholdedFrame& frame) {
    std::vector<PointMeasurement> out;
    out.reserve(frame.detections.size());
    for (const auto& d : frame.detections) {
        const auto [c1, c2] = frame.geometry.cell_center(d.cell);
        out.push_back({d.amplitude, c1, c2});
    }
    return out;
}

namespace detail {

inline double gaussian2(double dx, double dy, double var) {
    return std::exp(-0.5 * (dx * dx + dy * dy) / var) / (2.0 * std::numbers::pi * var);
}

}  // namespace detail

/// Object-conditioned measurement density: position factor times (when
/// enabled) the truncated amplitude density.
inline double object_likelihood(const PointMeasurement& y, const ObjectState& x,
                                const PointMeasurementModel& pm, const AmplitudeModel& model,
                                double eta, const GridGeometry* geometry = nullptr) {
    double pos;
    if (pm.uniform_cell_likelihood && geometry) {
        const auto cy = geometry->cell_at(y.z1, y.z2);
        const auto cx = geometry->cell_at(x.p1, x.p2);
        pos = (cy && cx && *cy == *cx) ? 1.0 / geometry->cell_area() : 0.0;
    } else {
        pos = detail::gaussian2(y.z1 - x.p1, y.z2 - x.p2, pm.sigma_p_sq);
    }
    if (!pm.amplitude_enabled) return pos;
    return pos * f1_eta(y.z, x.gamma, model, eta);
}

/// Clutter intensity mu_fa * f0(y): uniform over the ROI, times the clutter
/// amplitude density when enabled.
inline double clutter_intensity(const PointMeasurement& y, const PointMeasurementModel& pm,
                                const AmplitudeModel& model, double eta) {
    double v = pm.mu_fa / pm.roi_area;
    if (pm.amplitude_enabled) v *= f0_eta(y.z, model, eta);
    return v;
}

inline double poisson_pmf(int n, double mu) {
    if (n < 0) throw std::domain_error("poisson_pmf: n must be nonnegative");
    if (mu == 0.0) return n == 0 ? 1.0 : 0.0;
    return std::exp(n * std::log(mu) - mu - std::lgamma(n + 1.0));
}

inline double binomial_pmf(int n, int trials, double p) {
    if (n < 0 || trials < 0) throw std::domain_error("binomial_pmf: negative argument");
    if (n > trials) return 0.0;
    if (p <= 0.0) return n == 0 ? 1.0 : 0.0;
    if (p >= 1.0) return n == trials ? 1.0 : 0.0;
    const double log_choose =
        std::lgamma(trials + 1.0) - std::lgamma(n + 1.0) - std::lgamma(trials - n + 1.0);
    return std::exp(log_choose + n * std::log(p) + (trials - n) * std::log1p(-p));
}

/// Clutter cardinality pmf, Poisson path (the model the point filters use).
inline double clutter_cardinality_pmf(int n, const PointMeasurementModel& pm) {
    return poisson_pmf(n, pm.mu_fa);
}

/// Exact binomial alternative for the same cardinality.
inline double clutter_cardinality_binomial(int n, int cells, double pfa) {
    return binomial_pmf(n, cells, pfa);
}

/// Total-variation distance between Binomial(cells, pfa) and its Poisson
/// approximation, by direct summation.
inline double clutter_cardinality_tv(int cells, double pfa) {
    const double mu = cells * pfa;
    double acc = 0.0;
    double poisson_covered = 0.0;
    for (int n = 0; n <= cells; ++n) {
        const double pp = poisson_pmf(n, mu);
        acc += std::abs(binomial_pmf(n, cells, pfa) - pp);
        poisson_covered += pp;
    }
    acc += std::max(0.0, 1.0 - poisson_covered);  // Poisson tail beyond the binomial support
    return 0.5 * acc;
}

/// Number of ordered ways to pick the detected measurements: the falling
/// factorial M! / (M - M_D)!.
inline double association_prior_count(int m_total, int m_detected) {
    if (m_detected < 0 || m_detected > m_total)
        throw std::domain_error("association_prior_count: need 0 <= detected <= total");
    double v = 1.0;
    for (int i = 0; i < m_detected; ++i) v *= (m_total - i);
    return v;
}

/// PMB update on point measurements. Shares the association machinery with
/// the cell filter; claim weights are likelihood ratios against the clutter
/// intensity so an unclaimed measurement contributes 1.
inline PmbBelief point_update(const PmbBelief& belief,
                              const std::vector<PointMeasurement>& measurements,
                              const PointMeasurementModel& pm, const AmplitudeModel& model,
                              const FilterParams& params, const GridGeometry& geometry, int step,
                              RandomStream& rng) {
    const int J = static_cast<int>(belief.bernoullis.size());
    const int M = static_cast<int>(measurements.size());
    const double eta = pm.eta;
    const double gate = pm.uniform_cell_likelihood ? 0.0 : pm.gate_radius();

    std::vector<double> lambda(M);
    for (int m = 0; m < M; ++m) lambda[m] = clutter_intensity(measurements[m], pm, model, eta);

    // per-component detection probability averages and claim weights
    AssociationProblem problem;
    problem.new_active.assign(M, 1.0);
    std::vector<std::vector<std::vector<double>>> claim_factors(J);  // [j][claim][particle]
    for (int j = 0; j < J; ++j) {
        const auto& b = belief.bernoullis[j];
        const std::size_t n = b.pdf.particles.size();
        double pd_bar = 0.0;
        for (const auto& p : b.pdf.particles) pd_bar += p.weight * p_d(p.state.gamma, model, eta);

        problem.nonexist.push_back(1.0 - b.r);
        problem.miss.push_back(b.r * (1.0 - pd_bar));

        std::vector<std::pair<int, double>> row;
        for (int m = 0; m < M; ++m) {
            const auto& y = measurements[m];
            if (gate > 0.0) {
                bool near = false;
                for (const auto& p : b.pdf.particles) {
                    if (std::abs(p.state.p1 - y.z1) <= gate && std::abs(p.state.p2 - y.z2) <= gate) {
                        near = true;
                        break;
                    }
                }
                if (!near) continue;
            }
            std::vector<double> factors(n, 0.0);
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& p = b.pdf.particles[i];
                factors[i] = p.weight * p_d(p.state.gamma, model, eta) *
                             object_likelihood(y, p.state, pm, model, eta, &geometry);
                sum += factors[i];
            }
            if (sum > 0.0) {
                row.push_back({m, b.r * sum / lambda[m]});
                claim_factors[j].push_back(std::move(factors));
            }
        }
        problem.claims.push_back(std::move(row));
    }

    // new-component weights from the Poisson intensity, dense over the PHD
    std::vector<double> d_bar(M, 0.0);
    std::vector<ParticleSet> buckets(M);
    for (int m = 0; m < M; ++m) {
        const auto& y = measurements[m];
        for (const auto& p : belief.phd.particles) {
            if (gate > 0.0 &&
                (std::abs(p.state.p1 - y.z1) > gate || std::abs(p.state.p2 - y.z2) > gate))
                continue;
            const double w = p.weight * p_d(p.state.gamma, model, eta) *
                             object_likelihood(y, p.state, pm, model, eta, &geometry);
            if (w > 0.0) {
                d_bar[m] += w;
                buckets[m].particles.push_back({p.state, w});
            }
        }
        problem.new_active[m] = 1.0 + d_bar[m] / lambda[m];
    }

    MarginalTable marginals;
    if (M == 0)
        marginals = degenerate_marginals(problem);
    else if (params.use_exact_marginals)
        marginals = exact_marginals(problem);
    else
        marginals = bp_marginals(problem, params.bp_tol, params.bp_max_iter);

    PmbBelief out;
    for (int j = 0; j < J; ++j) {
        const auto& b = belief.bernoullis[j];
        double r_post = marginals.miss[j];
        for (const auto& [m, p] : marginals.claims[j]) r_post += p;
        r_post = std::min(r_post, 1.0);  // guards against summation rounding
        if (!(r_post > 0.0)) continue;

        const std::size_t n = b.pdf.particles.size();
        std::vector<double> weight(n, 0.0);
        if (marginals.miss[j] > 0.0) {
            double norm = 0.0;
            std::vector<double> factor(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto& p = b.pdf.particles[i];
                factor[i] = p.weight * (1.0 - p_d(p.state.gamma, model, eta));
                norm += factor[i];
            }
            if (norm > 0.0)
                for (std::size_t i = 0; i < n; ++i) weight[i] += marginals.miss[j] * factor[i] / norm;
        }
        for (std::size_t c = 0; c < marginals.claims[j].size(); ++c) {
            const double prob = marginals.claims[j][c].second;
            if (!(prob > 0.0)) continue;
            const auto& factors = claim_factors[j][c];
            double norm = 0.0;
            for (double f : factors) norm += f;
            if (norm > 0.0)
                for (std::size_t i = 0; i < n; ++i) weight[i] += prob * factors[i] / norm;
        }

        BernoulliComponent nb;
        nb.label = b.label;
        nb.r = r_post;
        nb.pdf.particles.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            nb.pdf.particles.push_back({b.pdf.particles[i].state, weight[i]});
        detail::clamp_floor(nb.pdf, params.weight_floor);
        if (!(nb.pdf.total_weight() > 0.0)) continue;
        nb.pdf.normalize();
        if (params.resample_after_update)
            nb.pdf = resample_to(nb.pdf, params.particles_per_bernoulli, rng);
        out.bernoullis.push_back(std::move(nb));
    }

    for (int m = 0; m < M; ++m) {
        if (!(d_bar[m] > 0.0) || buckets[m].particles.empty()) continue;
        const double r_new1 = d_bar[m] / (lambda[m] + d_bar[m]);
        BernoulliComponent nb;
        nb.r = marginals.new_active[m] * r_new1;
        if (!(nb.r > 0.0)) continue;
        const auto cell = geometry.cell_at(measurements[m].z1, measurements[m].z2);
        nb.label = make_label(step, cell ? *cell : m);
        nb.pdf = std::move(buckets[m]);
        nb.pdf.normalize();
        if (params.resample_after_update && nb.r >= params.recycle_threshold)
            nb.pdf = resample_to(nb.pdf, params.particles_per_bernoulli, rng);
        out.bernoullis.push_back(std::move(nb));
    }

    // Poisson part: undetected-object scaling
    out.phd = belief.phd;
    for (auto& p : out.phd.particles) p.weight *= 1.0 - p_d(p.state.gamma, model, eta);
    detail::clamp_floor(out.phd, params.weight_floor);
    return out;
}

/// Sequential point-measurement filter (with or without amplitude
/// information), sharing prediction and recycling with the cell filter.
class PmbPointFilter {
public:
    PmbPointFilter(const GridGeometry& roi, const AmplitudeModel& model,
                   const PointMeasurementModel& pm, const FilterParams& params, std::uint64_t seed)
        : roi_(roi), model_(model), pm_(pm), params_(params), rng_(seed) {
        params_.validate();
        if (!(pm_.eta > 0.0)) throw std::invalid_argument("point filter: eta must be positive");
    }

    void step(const ThresholdedFrame& frame, int k) {
        step(to_point_measurements(frame), k);
    }

    void step(const std::vector<PointMeasurement>& measurements, int k) {
        belief_ = predict(belief_, params_, roi_, rng_);
        belief_ = point_update(belief_, measurements, pm_, model_, params_, roi_, k, rng_);
        belief_ = recycle(belief_, params_);
        if (params_.runtime_checks) validate_belief(belief_);
    }

    const PmbBelief& belief() const { return belief_; }
    const FilterParams& params() const { return params_; }

    std::vector<std::pair<std::uint64_t, ObjectState>> estimates() const {
        return extract_estimates(belief_, params_);
    }

private:
    GridGeometry roi_;
    AmplitudeModel model_;
    PointMeasurementModel pm_;
    FilterParams params_;
    RandomStream rng_;
    PmbBelief belief_;
};

}  // namespace pmbt
