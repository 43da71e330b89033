#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pmbt/association.hpp"
#include "pmbt/core.hpp"
#include "pmbt/measurement.hpp"
#include "pmbt/rng.hpp"
#include "pmbt/scenario.hpp"

namespace pmbt {

struct FilterParams {
    double eta = 2.0;                         // operating detection threshold
    double survival_prob = 0.999;
    double recycle_threshold = 0.1;
    double birth_mass = 5.0 / 1024.0;         // total birth PHD mass per step
    double birth_velocity_var = 1e-2;
    double birth_gamma_max = 30.0;
    double gamma_jitter_var = 0.0;            // log-normal intensity jitter, 0 = constant
    int particles_per_bernoulli = 300;
    int phd_particle_budget = 5000;
    double process_noise_var = 1e-3;
    double dt = 0.25;
    bool roi_exit_death = true;
    double extract_threshold = 0.5;
    double bp_tol = 1e-6;
    int bp_max_iter = 200;
    bool use_exact_marginals = false;  // exact enumeration instead of BP (tiny instances)
    bool resample_after_update = true; // particle refresh; off keeps exact mixture weights
    bool runtime_checks = true;        // validate belief invariants every step
    double weight_floor = 1e-300;

    void validate() const {
        if (!(survival_prob > 0.0 && survival_prob <= 1.0))
            throw std::invalid_argument("filter: survival probability must be in (0,1]");
        if (!(recycle_threshold >= 0.0 && recycle_threshold < 1.0))
            throw std::invalid_argument("filter: recycle threshold must be in [0,1)");
        if (particles_per_bernoulli <= 0 || phd_particle_budget <= 0)
            throw std::invalid_argument("filter: particle counts must be positive");
        if (!(eta >= 0.0)) throw std::invalid_argument("filter: eta must be nonnegative");
        if (!(dt > 0.0)) throw std::invalid_argument("filter: dt must be positive");
    }
};

namespace detail {

inline void clamp_floor(ParticleSet& set, double floor) {
    for (auto& p : set.particles)
        if (p.weight < floor) p.weight = 0.0;
}

/// Per-particle factor under the miss hypothesis: (1 - p_d)/(1 - p_fa) in a
/// missed cell, 0 in a detected cell, 1 outside the grid (unobserved).
inline double miss_factor(const ObjectState& x, const GridGeometry& g,
                          const std::vector<char>& detected, const AmplitudeModel& model,
                          double eta, double one_minus_pfa) {
    const auto cell = g.cell_at(x.p1, x.p2);
    if (!cell) return 1.0;
    if (detected[*cell]) return 0.0;
    return (1.0 - p_d(x.gamma, model, eta)) / one_minus_pfa;
}

inline std::vector<char> detected_mask(const ThresholdedFrame& frame) {
    std::vector<char> mask(frame.geometry.num_cells(), 0);
    for (const auto& d : frame.detections) mask[d.cell] = 1;
    return mask;
}

inline std::vector<int> detection_index_by_cell(const ThresholdedFrame& frame) {
    std::vector<int> map(frame.geometry.num_cells(), -1);
    for (int d = 0; d < static_cast<int>(frame.detections.size()); ++d)
        map[frame.detections[d].cell] = d;
    return map;
}

}  // namespace detail

/// PMB prediction: survival scaling, NCV particle propagation, birth
/// injection into the PHD, and PHD resampling back to its budget. With
/// roi_exit_death, particles leaving the ROI die (their mass is removed and
/// Bernoulli existence scales by the surviving fraction).
inline PmbBelief predict(const PmbBelief& belief, const FilterParams& params,
                         const GridGeometry& roi, RandomStream& rng) {
    PmbBelief out;

    auto propagate = [&](const WeightedParticle& in) {
        WeightedParticle p = in;
        p.state = ncv_step(p.state, params.dt, params.process_noise_var, rng);
        if (params.gamma_jitter_var > 0.0)
            p.state.gamma *= std::exp(std::sqrt(params.gamma_jitter_var) * rng.normal());
        if (params.roi_exit_death && !roi.contains(p.state.p1, p.state.p2)) p.weight = 0.0;
        return p;
    };

    for (const auto& b : belief.bernoullis) {
        BernoulliComponent nb;
        nb.label = b.label;
        nb.pdf.particles.reserve(b.pdf.particles.size());
        double mass_before = 0.0, mass_after = 0.0;
        for (const auto& p : b.pdf.particles) {
            mass_before += p.weight;
            auto np = propagate(p);
            mass_after += np.weight;
            nb.pdf.particles.push_back(np);
        }
        if (mass_before <= 0.0 || mass_after <= 0.0) continue;  // fully exited
        nb.r = params.survival_prob * b.r * (mass_after / mass_before);
        nb.pdf.normalize();
        out.bernoullis.push_back(std::move(nb));
    }

    out.phd.particles.reserve(belief.phd.particles.size() + params.phd_particle_budget);
    for (const auto& p : belief.phd.particles) {
        auto np = propagate(p);
        np.weight *= params.survival_prob;
        if (np.weight > 0.0) out.phd.particles.push_back(np);
    }

    if (params.birth_mass > 0.0) {
        const int n_birth = params.phd_particle_budget;
        const double w = params.birth_mass / n_birth;
        const double sv = std::sqrt(params.birth_velocity_var);
        for (int i = 0; i < n_birth; ++i) {
            WeightedParticle p;
            p.state.p1 = rng.uniform(roi.origin1, roi.origin1 + roi.extent1());
            p.state.p2 = rng.uniform(roi.origin2, roi.origin2 + roi.extent2());
            p.state.v1 = sv * rng.normal();
            p.state.v2 = sv * rng.normal();
            p.state.gamma = rng.uniform(0.0, params.birth_gamma_max);
            p.weight = w;
            out.phd.particles.push_back(p);
        }
    }

    if (static_cast<int>(out.phd.particles.size()) > params.phd_particle_budget)
        out.phd = resample_to(out.phd, params.phd_particle_budget, rng);
    return out;
}

/// Poisson-part measurement update: particles in missed cells keep mass
/// scaled by (1 - p_d)/(1 - p_fa), particles in detected cells are removed
/// (those hypotheses live in the new Bernoulli components), particles outside
/// the grid are unobserved.
inline ParticleSet phd_miss_update(const ParticleSet& phd, const ThresholdedFrame& frame,
                                   const AmplitudeModel& model, const FilterParams& params) {
    const auto detected = detail::detected_mask(frame);
    const double one_minus_pfa = 1.0 - p_fa(model, frame.eta);
    ParticleSet out = phd;
    for (auto& p : out.particles)
        p.weight *= detail::miss_factor(p.state, frame.geometry, detected, model, frame.eta,
                                        one_minus_pfa);
    detail::clamp_floor(out, params.weight_floor);
    return out;
}

/// Assembles the association weights for one thresholded frame against a
/// predicted belief. Claim weights exist only for cells carrying a
/// component's particles (the cell indicator makes all others exactly zero).
inline AssociationProblem build_association_problem(const PmbBelief& belief,
                                                    const ThresholdedFrame& frame,
                                                    const AmplitudeModel& model,
                                                    const FilterParams& params) {
    if (frame.eta != params.eta)
        throw std::invalid_argument("association build: frame eta differs from filter eta");
    const auto det_index = detail::detection_index_by_cell(frame);
    const double pfa = p_fa(model, frame.eta);
    const double one_minus_pfa = 1.0 - pfa;
    const int D = static_cast<int>(frame.detections.size());

    AssociationProblem problem;
    problem.new_active.assign(D, 0.0);

    for (const auto& b : belief.bernoullis) {
        double miss_mass = 0.0;
        std::vector<double> claim(D, 0.0);
        for (const auto& p : b.pdf.particles) {
            const auto cell = frame.geometry.cell_at(p.state.p1, p.state.p2);
            if (!cell) {
                miss_mass += p.weight;
                continue;
            }
            const double pd = p_d(p.state.gamma, model, frame.eta);
            const int d = det_index[*cell];
            if (d < 0) {
                miss_mass += p.weight * (1.0 - pd) / one_minus_pfa;
            } else {
                claim[d] += p.weight * pd * f1_eta(frame.detections[d].amplitude, p.state.gamma,
                                                   model, frame.eta);
            }
        }
        problem.nonexist.push_back(1.0 - b.r);
        problem.miss.push_back(b.r * miss_mass);
        std::vector<std::pair<int, double>> row;
        for (int d = 0; d < D; ++d)
            if (claim[d] > 0.0) row.push_back({d, b.r * claim[d]});
        problem.claims.push_back(std::move(row));
    }

    // new components: Poisson mass in the detected cell vs clutter
    std::vector<double> d_mass(D, 0.0);
    for (const auto& p : belief.phd.particles) {
        const auto cell = frame.geometry.cell_at(p.state.p1, p.state.p2);
        if (!cell || det_index[*cell] < 0) continue;
        const int d = det_index[*cell];
        d_mass[d] += p.weight * p_d(p.state.gamma, model, frame.eta) *
                     f1_eta(frame.detections[d].amplitude, p.state.gamma, model, frame.eta);
    }
    for (int d = 0; d < D; ++d) {
        const double clutter = std::exp(log_f0_eta(frame.detections[d].amplitude, model, frame.eta) +
                                        std::log(pfa));
        problem.new_active[d] = clutter + d_mass[d];
    }
    return problem;
}

/// Factorized marginals for a frame with no detections; the association
/// solver is skipped because components do not interact.
inline MarginalTable degenerate_marginals(const AssociationProblem& problem) {
    MarginalTable out;
    const int J = problem.n_legacy();
    out.nonexist.resize(J);
    out.miss.resize(J);
    out.claims.resize(J);
    for (int j = 0; j < J; ++j) {
        const double denom = problem.nonexist[j] + problem.miss[j];
        if (!(denom > 0.0)) throw std::runtime_error("degenerate marginals: zero weight component");
        out.nonexist[j] = problem.nonexist[j] / denom;
        out.miss[j] = problem.miss[j] / denom;
    }
    return out;
}

/// Multi-Bernoulli approximation of the post-update mixture. Legacy
/// components become marginal-weighted mixtures of their per-hypothesis
/// reweightings; each detection spawns a new component from the Poisson mass
/// in its cell; the PHD keeps only the missed-cell hypotheses.
inline PmbBelief mb_update(const PmbBelief& belief, const ThresholdedFrame& frame,
                           const MarginalTable& marginals, const AssociationProblem& problem,
                           const AmplitudeModel& model, const FilterParams& params, int step,
                           RandomStream& rng) {
    const int J = static_cast<int>(belief.bernoullis.size());
    const int D = static_cast<int>(frame.detections.size());
    if (problem.n_legacy() != J || problem.n_detections() != D ||
        static_cast<int>(marginals.nonexist.size()) != J ||
        static_cast<int>(marginals.new_active.size()) != D)
        throw std::invalid_argument("mb_update: marginals/problem do not match belief and frame");

    const auto detected = detail::detected_mask(frame);
    const double pfa = p_fa(model, frame.eta);
    const double one_minus_pfa = 1.0 - pfa;

    PmbBelief out;

    for (int j = 0; j < J; ++j) {
        const auto& b = belief.bernoullis[j];
        double r_post = marginals.miss[j];
        for (const auto& [d, p] : marginals.claims[j]) r_post += p;
        r_post = std::min(r_post, 1.0);  // guards against summation rounding
        if (!(r_post > 0.0)) continue;

        const std::size_t n = b.pdf.particles.size();
        std::vector<double> weight(n, 0.0);

        // miss hypothesis
        if (marginals.miss[j] > 0.0) {
            std::vector<double> factor(n);
            double norm = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& p = b.pdf.particles[i];
                factor[i] = p.weight * detail::miss_factor(p.state, frame.geometry, detected, model,
                                                           frame.eta, one_minus_pfa);
                norm += factor[i];
            }
            if (norm > 0.0)
                for (std::size_t i = 0; i < n; ++i) weight[i] += marginals.miss[j] * factor[i] / norm;
        }

        // claimed-detection hypotheses
        for (const auto& [d, prob] : marginals.claims[j]) {
            if (!(prob > 0.0)) continue;
            const int cell = frame.detections[d].cell;
            const double z = frame.detections[d].amplitude;
            std::vector<double> factor(n);
            double norm = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& p = b.pdf.particles[i];
                const auto pc = frame.geometry.cell_at(p.state.p1, p.state.p2);
                factor[i] = (pc && *pc == cell)
                                ? p.weight * p_d(p.state.gamma, model, frame.eta) *
                                      f1_eta(z, p.state.gamma, model, frame.eta)
                                : 0.0;
                norm += factor[i];
            }
            if (norm > 0.0)
                for (std::size_t i = 0; i < n; ++i) weight[i] += prob * factor[i] / norm;
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

    // new components, one per detection with Poisson support in its cell
    const auto det_index = detail::detection_index_by_cell(frame);
    std::vector<ParticleSet> buckets(D);
    for (const auto& p : belief.phd.particles) {
        const auto cell = frame.geometry.cell_at(p.state.p1, p.state.p2);
        if (!cell || det_index[*cell] < 0) continue;
        const int d = det_index[*cell];
        const double z = frame.detections[d].amplitude;
        const double w = p.weight * p_d(p.state.gamma, model, frame.eta) *
                         f1_eta(z, p.state.gamma, model, frame.eta);
        if (w > 0.0) buckets[d].particles.push_back({p.state, w});
    }
    for (int d = 0; d < D; ++d) {
        const double clutter =
            std::exp(log_f0_eta(frame.detections[d].amplitude, model, frame.eta) + std::log(pfa));
        const double d_mass = std::max(problem.new_active[d] - clutter, 0.0);
        if (!(d_mass > 0.0) || buckets[d].particles.empty()) continue;
        const double r_new1 = d_mass / problem.new_active[d];
        BernoulliComponent nb;
        nb.r = marginals.new_active[d] * r_new1;
        if (!(nb.r > 0.0)) continue;
        nb.label = make_label(step, frame.detections[d].cell);
        nb.pdf = std::move(buckets[d]);
        nb.pdf.normalize();
        // components that will be recycled right away keep their exact
        // bucket particles; only survivors get the full particle budget
        if (params.resample_after_update && nb.r >= params.recycle_threshold)
            nb.pdf = resample_to(nb.pdf, params.particles_per_bernoulli, rng);
        out.bernoullis.push_back(std::move(nb));
    }

    out.phd = phd_miss_update(belief.phd, frame, model, params);
    return out;
}

/// Moves every component below the recycle threshold into the PHD, scaled so
/// its appended mass equals its existence probability. Expected cardinality
/// is conserved.
inline PmbBelief recycle(const PmbBelief& belief, const FilterParams& params) {
    PmbBelief out;
    out.phd = belief.phd;
    for (const auto& b : belief.bernoullis) {
        if (b.r >= params.recycle_threshold) {
            out.bernoullis.push_back(b);
            continue;
        }
        if (!(b.r > 0.0)) continue;
        const double total = b.pdf.total_weight();
        if (!(total > 0.0)) continue;
        const double scale = b.r / total;
        for (const auto& p : b.pdf.particles)
            out.phd.particles.push_back({p.state, p.weight * scale});
    }
    return out;
}

/// One state estimate per component with existence above the threshold.
inline std::vector<std::pair<std::uint64_t, ObjectState>> extract_estimates(
    const PmbBelief& belief, const FilterParams& params) {
    std::vector<std::pair<std::uint64_t, ObjectState>> out;
    for (const auto& b : belief.bernoullis)
        if (b.r > params.extract_threshold) out.push_back({b.label, b.pdf.weighted_mean()});
    return out;
}

/// Full-resolution association table (per missed cell, no aggregation) for
/// the relaxation probe.
inline CellAssociationTable build_cell_association_table(const PmbBelief& belief,
                                                         const ThresholdedFrame& frame,
                                                         const AmplitudeModel& model,
                                                         const FilterParams& params) {
    const auto det_index = detail::detection_index_by_cell(frame);
    const double pfa = p_fa(model, frame.eta);
    const double one_minus_pfa = 1.0 - pfa;

    CellAssociationTable table;
    for (const auto& d : frame.detections) table.detected_cells.push_back(d.cell);

    for (const auto& b : belief.bernoullis) {
        std::map<int, double> cells;
        double out_mass = 0.0;
        for (const auto& p : b.pdf.particles) {
            const auto cell = frame.geometry.cell_at(p.state.p1, p.state.p2);
            if (!cell) {
                out_mass += p.weight;
                continue;
            }
            const double pd = p_d(p.state.gamma, model, frame.eta);
            const int d = det_index[*cell];
            if (d < 0) {
                cells[*cell] += p.weight * (1.0 - pd) / one_minus_pfa;
            } else {
                cells[*cell] += p.weight * pd * f1_eta(frame.detections[d].amplitude, p.state.gamma,
                                                       model, frame.eta);
            }
        }
        table.nonexist.push_back(1.0 - b.r);
        table.unobserved.push_back(b.r * out_mass);
        std::vector<std::pair<int, double>> row;
        for (const auto& [cell, w] : cells) row.push_back({cell, b.r * w});
        table.cell_weights.push_back(std::move(row));
    }

    const auto problem = build_association_problem(belief, frame, model, params);
    table.new_active = problem.new_active;
    return table;
}

inline RelaxationProbeReport relaxation_probe(const PmbBelief& belief,
                                              const ThresholdedFrame& frame,
                                              const AmplitudeModel& model,
                                              const FilterParams& params) {
    return relaxation_error_probe(build_cell_association_table(belief, frame, model, params));
}

/// Belief snapshot export: step,label,r,p1,p2,v1,v2,gamma per component.
inline void write_belief_snapshot(const PmbBelief& belief, int step, std::ostream& os) {
    os.precision(17);
    for (const auto& b : belief.bernoullis) {
        const auto m = b.pdf.weighted_mean();
        os << step << "," << b.label << "," << b.r << "," << m.p1 << "," << m.p2 << "," << m.v1
           << "," << m.v2 << "," << m.gamma << "\n";
    }
}

/// Sequential filter over thresholded cell frames.
class PmbCellFilter {
public:
    PmbCellFilter(const GridGeometry& roi, const AmplitudeModel& model, const FilterParams& params,
                  std::uint64_t seed)
        : roi_(roi), model_(model), params_(params), rng_(seed) {
        params_.validate();
    }

    void step(const ThresholdedFrame& frame, int k) {
        belief_ = predict(belief_, params_, roi_, rng_);
        const auto problem = build_association_problem(belief_, frame, model_, params_);
        MarginalTable marginals;
        if (problem.n_detections() == 0)
            marginals = degenerate_marginals(problem);
        else if (params_.use_exact_marginals)
            marginals = exact_marginals(problem);
        else
            marginals = bp_marginals(problem, params_.bp_tol, params_.bp_max_iter);
        belief_ = mb_update(belief_, frame, marginals, problem, model_, params_, k, rng_);
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
    FilterParams params_;
    RandomStream rng_;
    PmbBelief belief_;
};

}  // namespace pmbt
