#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

#include "pmbt/core.hpp"
#include "pmbt/rng.hpp"

namespace pmbt {

/// Rayleigh/Swerling-1 amplitude model. A cell carrying objects with total
/// intensity G is Rayleigh with scale^2 = G + sigma_n_sq; an empty cell is
/// Rayleigh with scale^2 = sigma_n_sq.
struct AmplitudeModel {
    double sigma_n_sq = 1.0;
};

inline double rayleigh_log_pdf(double z, double scale_sq) {
    return std::log(z / scale_sq) - 0.5 * z * z / scale_sq;
}

inline double rayleigh_pdf(double z, double scale_sq) {
    return z / scale_sq * std::exp(-0.5 * z * z / scale_sq);
}

/// P(amplitude > eta) for an empty cell, exp(-eta^2 / (2 sigma_n^2)).
inline double p_fa(const AmplitudeModel& model, double eta) {
    return std::exp(-0.5 * eta * eta / model.sigma_n_sq);
}

/// P(amplitude > eta) for a cell holding one object of intensity gamma.
inline double p_d(double gamma, const AmplitudeModel& model, double eta) {
    return std::exp(-0.5 * eta * eta / (gamma + model.sigma_n_sq));
}

inline double p_d(const ObjectState& x, const AmplitudeModel& model, double eta) {
    return p_d(x.gamma, model, eta);
}

// Truncated-and-renormalized amplitude densities for detections (z > eta).
// Log forms are the workhorses; the linear forms exponentiate them.

inline double log_f1_eta(double z, double gamma, const AmplitudeModel& model, double eta) {
    if (!(z > eta)) throw std::domain_error("f1_eta: amplitude must exceed eta");
    const double scale_sq = gamma + model.sigma_n_sq;
    return rayleigh_log_pdf(z, scale_sq) + 0.5 * eta * eta / scale_sq;
}

inline double log_f0_eta(double z, const AmplitudeModel& model, double eta) {
    if (!(z > eta)) throw std::domain_error("f0_eta: amplitude must exceed eta");
    return rayleigh_log_pdf(z, model.sigma_n_sq) + 0.5 * eta * eta / model.sigma_n_sq;
}

inline double f1_eta(double z, double gamma, const AmplitudeModel& model, double eta) {
    return std::exp(log_f1_eta(z, gamma, model, eta));
}

inline double f1_eta(double z, const ObjectState& x, const AmplitudeModel& model, double eta) {
    return f1_eta(z, x.gamma, model, eta);
}

inline double f0_eta(double z, const AmplitudeModel& model, double eta) {
    return std::exp(log_f0_eta(z, model, eta));
}

/// Draws one full cell image. Each cell's scale^2 is sigma_n_sq plus the
/// summed intensities of the objects inside it; objects outside the grid
/// contribute nothing.
inline CellFrame synthesize_frame(std::span<const ObjectState> truth, const GridGeometry& geometry,
                                  const AmplitudeModel& model, RandomStream& rng) {
    CellFrame frame;
    frame.geometry = geometry;
    frame.intensities.assign(geometry.num_cells(), 0.0);
    std::vector<double> scale_sq(geometry.num_cells(), model.sigma_n_sq);
    for (const auto& x : truth) {
        if (auto m = cell_of(x, geometry)) scale_sq[*m] += x.gamma;
    }
    for (int m = 0; m < geometry.num_cells(); ++m)
        frame.intensities[m] = rng.rayleigh(std::sqrt(scale_sq[m]));
    return frame;
}

inline CellFrame synthesize_frame(std::span<const ObjectState> truth, const GridGeometry& geometry,
                                  const AmplitudeModel& model, std::uint64_t seed) {
    RandomStream rng(seed);
    return synthesize_frame(truth, geometry, model, rng);
}

/// Keeps cells strictly above eta, amplitudes copied bit-exact.
inline ThresholdedFrame threshold_frame(const CellFrame& frame, double eta) {
    if (!(eta >= 0.0)) throw std::invalid_argument("threshold must be nonnegative");
    ThresholdedFrame out;
    out.geometry = frame.geometry;
    out.eta = eta;
    for (int m = 0; m < static_cast<int>(frame.intensities.size()); ++m) {
        if (frame.intensities[m] > eta) out.detections.push_back({m, frame.intensities[m]});
    }
    return out;
}

}  // namespace pmbt
