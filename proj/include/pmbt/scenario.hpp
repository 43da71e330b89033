#pragma once

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmbt/core.hpp"
#include "pmbt/measurement.hpp"
#include "pmbt/rng.hpp"

namespace pmbt {

struct ScenarioConfig {
    GridGeometry roi{32, 32, 1.0, 0.0, 0.0};
    int n_objects = 10;
    int n_steps = 200;
    int birth_last_step = 30;    // births drawn uniformly on [1, birth_last_step]
    int death_first_step = 170;  // deaths drawn uniformly on [death_first_step+1, n_steps]
    double sigma_v_sq = 1e-2;
    double process_noise_var = 1e-3;
    double initial_gamma = 10.0;
    double dt = 0.25;

    void validate() const {
        if (n_objects < 0 || n_steps < 1) throw std::invalid_argument("scenario: bad sizes");
        if (!(birth_last_step < death_first_step && death_first_step <= n_steps))
            throw std::invalid_argument("scenario: birth window must end before death window");
        if (!(sigma_v_sq >= 0.0 && process_noise_var >= 0.0 && dt > 0.0))
            throw std::invalid_argument("scenario: bad noise/step parameters");
    }
};

/// One object's trajectory; alive exactly on steps [birth_step, death_step).
struct TruthObject {
    int id = 0;
    int birth_step = 0;
    int death_step = 0;
    std::vector<ObjectState> states;  // states[i] = state at step birth_step + i

    bool alive_at(int k) const { return k >= birth_step && k < death_step; }
    const ObjectState& state_at(int k) const { return states[k - birth_step]; }
};

struct GroundTruth {
    ScenarioConfig config;
    std::vector<TruthObject> objects;

    std::vector<ObjectState> alive_at(int k) const {
        std::vector<ObjectState> out;
        for (const auto& o : objects)
            if (o.alive_at(k)) out.push_back(o.state_at(k));
        return out;
    }

    int alive_count(int k) const {
        int n = 0;
        for (const auto& o : objects) n += o.alive_at(k) ? 1 : 0;
        return n;
    }
};

/// Nearly-constant-velocity step: position advances by velocity * dt, then
/// driving noise with per-axis variance q is added to all four kinematic
/// components.
inline ObjectState ncv_step(const ObjectState& x, double dt, double q, RandomStream& rng) {
    ObjectState n = x;
    n.p1 += x.v1 * dt;
    n.p2 += x.v2 * dt;
    if (q > 0.0) {
        const double s = std::sqrt(q);
        n.p1 += s * rng.normal();
        n.p2 += s * rng.normal();
        n.v1 += s * rng.normal();
        n.v2 += s * rng.normal();
    }
    return n;
}

/// Draws a full ground truth: birth steps uniform on [1, birth_last_step],
/// scheduled deaths uniform on [death_first_step+1, n_steps], positions
/// uniform over the ROI, velocities Gaussian, constant intensity. An object
/// leaving the ROI dies at that step.
inline GroundTruth generate(const ScenarioConfig& config, std::uint64_t seed) {
    config.validate();
    GroundTruth truth;
    truth.config = config;
    RandomStream rng(seed);
    const double sv = std::sqrt(config.sigma_v_sq);
    for (int i = 0; i < config.n_objects; ++i) {
        TruthObject obj;
        obj.id = i;
        obj.birth_step = rng.uniform_int(1, config.birth_last_step);
        const int death_sched = rng.uniform_int(config.death_first_step + 1, config.n_steps);
        ObjectState x;
        x.p1 = rng.uniform(config.roi.origin1, config.roi.origin1 + config.roi.extent1());
        x.p2 = rng.uniform(config.roi.origin2, config.roi.origin2 + config.roi.extent2());
        x.v1 = sv * rng.normal();
        x.v2 = sv * rng.normal();
        x.gamma = config.initial_gamma;
        obj.death_step = death_sched;
        for (int k = obj.birth_step; k < death_sched; ++k) {
            if (!truth.config.roi.contains(x.p1, x.p2)) {
                obj.death_step = k;
                break;
            }
            obj.states.push_back(x);
            x = ncv_step(x, config.dt, config.process_noise_var, rng);
        }
        truth.objects.push_back(std::move(obj));
    }
    return truth;
}

inline CellFrame cell_frame_at(const GroundTruth& truth, int k, const AmplitudeModel& model,
                               std::uint64_t seed) {
    if (k < 1 || k > truth.config.n_steps) throw std::out_of_range("cell_frame_at: step out of range");
    const auto alive = truth.alive_at(k);
    return synthesize_frame(alive, truth.config.roi, model, seed);
}

inline ThresholdedFrame frame_at(const GroundTruth& truth, int k, const AmplitudeModel& model,
                                 double eta, std::uint64_t seed) {
    return threshold_frame(cell_frame_at(truth, k, model, seed), eta);
}

// Ground-truth / track CSV: object_id,step,p1,p2,v1,v2,gamma

inline void write_truth_csv(const GroundTruth& truth, std::ostream& os) {
    os << "object_id,step,p1,p2,v1,v2,gamma\n";
    os.precision(17);
    for (const auto& o : truth.objects) {
        for (int k = o.birth_step; k < o.death_step; ++k) {
            const auto& x = o.state_at(k);
            os << o.id << "," << k << "," << x.p1 << "," << x.p2 << "," << x.v1 << "," << x.v2
               << "," << x.gamma << "\n";
        }
    }
}

struct TrackRow {
    std::uint64_t id = 0;
    int step = 0;
    ObjectState state;
};

/// Parses a track CSV (same schema the truth export uses). Throws with the
/// 1-based line number on malformed input.
inline std::vector<TrackRow> read_track_csv(std::istream& is) {
    std::vector<TrackRow> rows;
    std::string line;
    int lineno = 0;
    if (!std::getline(is, line) || line != "object_id,step,p1,p2,v1,v2,gamma")
        throw std::runtime_error("track csv: line 1: expected header object_id,step,p1,p2,v1,v2,gamma");
    lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        TrackRow row;
        try {
            auto next = [&]() {
                if (!std::getline(ss, field, ',')) throw std::runtime_error("missing field");
                return field;
            };
            row.id = std::stoull(next());
            row.step = std::stoi(next());
            row.state.p1 = std::stod(next());
            row.state.p2 = std::stod(next());
            row.state.v1 = std::stod(next());
            row.state.v2 = std::stod(next());
            row.state.gamma = std::stod(next());
        } catch (const std::exception&) {
            throw std::runtime_error("track csv: line " + std::to_string(lineno) + ": malformed row");
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace pmbt
