#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmbt/rng.hpp"

namespace pmbt {

/// Single-object state: 2D position/velocity plus a nonnegative intensity.
struct ObjectState {
    double p1 = 0.0;
    double p2 = 0.0;
    double v1 = 0.0;
    double v2 = 0.0;
    double gamma = 0.0;
};

inline bool is_finite_state(const ObjectState& x) {
    return std::isfinite(x.p1) && std::isfinite(x.p2) && std::isfinite(x.v1) &&
           std::isfinite(x.v2) && std::isfinite(x.gamma) && x.gamma >= 0.0;
}

/// Regular grid of square cells. Cells are half-open squares: a point on a
/// shared edge belongs to the cell with the larger index along that axis.
/// Columns index axis 1 (p1), rows index axis 2 (p2); linear cell index is
/// row-major, m = row * n_cols + col.
struct GridGeometry {
    int n_rows = 32;
    int n_cols = 32;
    double cell_side = 1.0;
    double origin1 = 0.0;  // lower corner along axis 1
    double origin2 = 0.0;  // lower corner along axis 2

    int num_cells() const { return n_rows * n_cols; }
    double extent1() const { return n_cols * cell_side; }
    double extent2() const { return n_rows * cell_side; }
    double cell_area() const { return cell_side * cell_side; }
    double area() const { return extent1() * extent2(); }

    int row_of(int m) const { return m / n_cols; }
    int col_of(int m) const { return m % n_cols; }
    int index_of(int row, int col) const { return row * n_cols + col; }

    bool contains(double p1, double p2) const {
        return p1 >= origin1 && p1 < origin1 + extent1() && p2 >= origin2 &&
               p2 < origin2 + extent2();
    }

    std::optional<int> cell_at(double p1, double p2) const {
        if (!contains(p1, p2)) return std::nullopt;
        const int col = static_cast<int>(std::floor((p1 - origin1) / cell_side));
        const int row = static_cast<int>(std::floor((p2 - origin2) / cell_side));
        // floor can land on n_cols-epsilon edge cases; clamp defensively
        return index_of(std::min(row, n_rows - 1), std::min(col, n_cols - 1));
    }

    /// Geometric center of cell m. Throws if m is out of range.
    std::pair<double, double> cell_center(int m) const {
        if (m < 0 || m >= num_cells()) throw std::out_of_range("cell index out of range");
        const double c1 = origin1 + (col_of(m) + 0.5) * cell_side;
        const double c2 = origin2 + (row_of(m) + 0.5) * cell_side;
        return {c1, c2};
    }
};

/// Cell containing the object's position, or absent if outside the grid.
inline std::optional<int> cell_of(const ObjectState& x, const GridGeometry& g) {
    return g.cell_at(x.p1, x.p2);
}

/// One full image of per-cell intensities.
struct CellFrame {
    GridGeometry geometry;
    std::vector<double> intensities;  // length num_cells(), all >= 0
};

struct Detection {
    int cell = 0;
    double amplitude = 0.0;  // strictly above the frame threshold
};

/// Sparse set of above-threshold cells. Cells not listed carry only the
/// event z = eta (a probability mass, not a density).
struct ThresholdedFrame {
    GridGeometry geometry;
    double eta = 0.0;
    std::vector<Detection> detections;

    bool is_detected(int cell) const {
        for (const auto& d : detections)
            if (d.cell == cell) return true;
        return false;
    }
};

/// Amplitude + position-converted measurement.
struct PointMeasurement {
    double z = 0.0;   // amplitude, > eta of the originating frame
    double z1 = 0.0;  // position along axis 1
    double z2 = 0.0;  // position along axis 2
};

struct WeightedParticle {
    ObjectState state;
    double weight = 0.0;
};

/// Weighted particle set. Represents either a normalized spatial pdf
/// (Bernoulli component) or an intensity function whose weight sum is the
/// expected object count (PHD).
struct ParticleSet {
    std::vector<WeightedParticle> particles;

    double total_weight() const {
        double s = 0.0;
        for (const auto& p : particles) s += p.weight;
        return s;
    }

    /// Divides weights by their sum. Throws if the set carries no mass.
    void normalize() {
        const double t = total_weight();
        if (!(t > 0.0)) throw std::runtime_error("cannot normalize particle set with zero mass");
        for (auto& p : particles) p.weight /= t;
    }

    ObjectState weighted_mean() const {
        ObjectState m;
        double t = 0.0;
        for (const auto& p : particles) {
            m.p1 += p.weight * p.state.p1;
            m.p2 += p.weight * p.state.p2;
            m.v1 += p.weight * p.state.v1;
            m.v2 += p.weight * p.state.v2;
            m.gamma += p.weight * p.state.gamma;
            t += p.weight;
        }
        if (t > 0.0) {
            m.p1 /= t;
            m.p2 /= t;
            m.v1 /= t;
            m.v2 /= t;
            m.gamma /= t;
        }
        return m;
    }
};

/// Draws n particles by systematic resampling; output weights are equal and
/// sum to the input's total mass.
inline ParticleSet resample_to(const ParticleSet& in, int n, RandomStream& rng) {
    ParticleSet out;
    const double mass = in.total_weight();
    if (n <= 0 || mass <= 0.0) return out;
    std::vector<double> w;
    w.reserve(in.particles.size());
    for (const auto& p : in.particles) w.push_back(p.weight);
    const auto idx = systematic_resample(w, n, rng);
    out.particles.reserve(n);
    const double each = mass / n;
    for (int i : idx) out.particles.push_back({in.particles[i].state, each});
    return out;
}

/// Object hypothesis: existence probability plus a normalized spatial pdf.
struct BernoulliComponent {
    double r = 0.0;
    ParticleSet pdf;
    std::uint64_t label = 0;  // assigned at birth, reporting only
};

inline std::uint64_t make_label(int step, int cell) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(step)) << 32) |
           static_cast<std::uint32_t>(cell);
}

/// Poisson + multi-Bernoulli belief: the PHD carries undetected-object
/// intensity (mass = expected count), the Bernoullis carry tracked objects.
struct PmbBelief {
    ParticleSet phd;
    std::vector<BernoulliComponent> bernoullis;

    double expected_cardinality() const {
        double c = phd.total_weight();
        for (const auto& b : bernoullis) c += b.r;
        return c;
    }
};

/// Checks the belief's range and normalization invariants; throws on
/// violation. Cheap enough to run every step.
inline void validate_belief(const PmbBelief& belief, double tol = 1e-9) {
    const double phd_mass = belief.phd.total_weight();
    if (!(phd_mass >= 0.0) || !std::isfinite(phd_mass))
        throw std::runtime_error("PHD mass invalid");
    for (const auto& b : belief.bernoullis) {
        if (!(b.r >= 0.0 && b.r <= 1.0)) throw std::runtime_error("existence probability out of [0,1]");
        if (b.r > 0.0) {
            const double t = b.pdf.total_weight();
            if (std::abs(t - 1.0) > tol) throw std::runtime_error("Bernoulli pdf not normalized");
        }
    }
}

// ---- Frame serialization ----
// Metadata line followed by a detection table:
//   # eta=<v> rows=<r> cols=<c> side=<s>
//   cell_index,amplitude
//   17,3.25

inline void write_frame_csv(const ThresholdedFrame& f, std::ostream& os) {
    os << "# eta=" << f.eta << " rows=" << f.geometry.n_rows << " cols=" << f.geometry.n_cols
       << " side=" << f.geometry.cell_side << "\n";
    os << "cell_index,amplitude\n";
    os.precision(17);
    for (const auto& d : f.detections) os << d.cell << "," << d.amplitude << "\n";
}

inline ThresholdedFrame read_frame_csv(std::istream& is) {
    ThresholdedFrame f;
    std::string line;
    if (!std::getline(is, line) || line.rfind("# eta=", 0) != 0)
        throw std::runtime_error("frame csv: missing metadata line");
    {
        std::istringstream meta(line.substr(1));
        std::string tok;
        while (meta >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = tok.substr(0, eq);
            const double val = std::stod(tok.substr(eq + 1));
            if (key == "eta")
                f.eta = val;
            else if (key == "rows")
                f.geometry.n_rows = static_cast<int>(val);
            else if (key == "cols")
                f.geometry.n_cols = static_cast<int>(val);
            else if (key == "side")
                f.geometry.cell_side = val;
            else
                throw std::runtime_error("frame csv: unknown metadata key " + key);
        }
    }
    if (!std::getline(is, line) || line != "cell_index,amplitude")
        throw std::runtime_error("frame csv: missing header line");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("frame csv: malformed row: " + line);
        Detection d;
        d.cell = std::stoi(line.substr(0, comma));
        d.amplitude = std::stod(line.substr(comma + 1));
        if (d.cell < 0 || d.cell >= f.geometry.num_cells())
            throw std::runtime_error("frame csv: cell index out of range");
        if (!(d.amplitude > f.eta)) throw std::runtime_error("frame csv: amplitude not above eta");
        f.detections.push_back(d);
    }
    return f;
}

}  // namespace pmbt
