#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "oracles.hpp"
#include "pmbt/pmb_point_filter.hpp"

using namespace pmbt;

namespace {

const AmplitudeModel kModel{1.0};
GridGeometry grid32() { return {32, 32, 1.0, 0.0, 0.0}; }

FilterParams test_params(double eta) {
    FilterParams p;
    p.eta = eta;
    p.particles_per_bernoulli = 100;
    p.phd_particle_budget = 500;
    p.use_exact_marginals = true;
    p.resample_after_update = false;
    p.runtime_checks = false;
    return p;
}

ParticleSet cloud(int n, double p1, double p2, double gamma, double spread, std::uint64_t seed) {
    ParticleSet set;
    RandomStream rng(seed);
    for (int i = 0; i < n; ++i)
        set.particles.push_back({{p1 + rng.uniform(-spread, spread),
                                  p2 + rng.uniform(-spread, spread), 0.0, 0.0, gamma},
                                 1.0 / n});
    return set;
}

}  // namespace

TEST_CASE("detections convert to cell-center point measurements") {
    ThresholdedFrame f;
    f.geometry = grid32();
    f.eta = 2.0;
    f.detections = {{0, 3.2}};
    const auto ys = to_point_measurements(f);
    REQUIRE(ys.size() == 1);
    REQUIRE(ys[0].z == 3.2);
    REQUIRE(ys[0].z1 == 0.5);
    REQUIRE(ys[0].z2 == 0.5);

    f.detections.clear();
    REQUIRE(to_point_measurements(f).empty());

    RandomStream rng(1);
    for (int i = 0; i < 143; ++i) f.detections.push_back({i * 7 % 1024, 2.0 + rng.uniform01()});
    REQUIRE(to_point_measurements(f).size() == 143);
}

TEST_CASE("eta = 0 is rejected for point filters") {
    REQUIRE_THROWS_AS(make_point_model(grid32(), kModel, 0.0, true), std::invalid_argument);
}

TEST_CASE("object likelihood peaks at the Gaussian height") {
    auto pm = make_point_model(grid32(), kModel, 2.0, false);
    const PointMeasurement y{3.0, 10.5, 10.5};
    const ObjectState x{10.5, 10.5, 0, 0, 10.0};
    REQUIRE(object_likelihood(y, x, pm, kModel, 2.0) ==
            Catch::Approx(1.0 / (2.0 * std::numbers::pi * pm.sigma_p_sq)).epsilon(1e-12));

    // amplitude information multiplies in the truncated amplitude density
    auto pm_am = make_point_model(grid32(), kModel, 2.0, true);
    REQUIRE(object_likelihood(y, x, pm_am, kModel, 2.0) ==
            Catch::Approx(object_likelihood(y, x, pm, kModel, 2.0) *
                          f1_eta(3.0, 10.0, kModel, 2.0))
                .epsilon(1e-12));
}

TEST_CASE("position likelihood integrates to one") {
    auto pm = make_point_model(grid32(), kModel, 2.0, false);
    const ObjectState x{16.0, 16.0, 0, 0, 10.0};
    // nested quadrature of the two-dimensional Gaussian around the state
    const double s = std::sqrt(pm.sigma_p_sq);
    const auto inner = [&](double z1) {
        return oracle::integrate(
            [&](double z2) {
                return object_likelihood({3.0, z1, z2}, x, pm, kModel, 2.0);
            },
            16.0 - 8.0 * s, 16.0 + 8.0 * s, 1e-10);
    };
    const double mass = oracle::integrate(inner, 16.0 - 8.0 * s, 16.0 + 8.0 * s, 1e-8);
    REQUIRE(mass == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("uniform-cell position likelihood variant") {
    auto pm = make_point_model(grid32(), kModel, 2.0, false);
    pm.uniform_cell_likelihood = true;
    const auto g = grid32();
    const PointMeasurement y{3.0, 10.5, 10.5};
    REQUIRE(object_likelihood(y, {10.2, 10.8, 0, 0, 10.0}, pm, kModel, 2.0, &g) == 1.0);
    REQUIRE(object_likelihood(y, {11.2, 10.8, 0, 0, 10.0}, pm, kModel, 2.0, &g) == 0.0);
}

TEST_CASE("clutter intensity is uniform with rate from the false-alarm probability") {
    auto pm = make_point_model(grid32(), kModel, 2.0, false);
    const double mu_quad = oracle::rayleigh_tail_quadrature(2.0, 1.0) * 1024.0;
    REQUIRE(pm.mu_fa == Catch::Approx(mu_quad).margin(1e-8));
    REQUIRE(mu_quad == Catch::Approx(138.6).margin(0.1));

    const PointMeasurement a{2.5, 1.0, 1.0}, b{7.0, 30.0, 13.0};
    REQUIRE(clutter_intensity(a, pm, kModel, 2.0) ==
            Catch::Approx(pm.mu_fa / 1024.0).epsilon(1e-12));
    REQUIRE(clutter_intensity(a, pm, kModel, 2.0) ==
            Catch::Approx(clutter_intensity(b, pm, kModel, 2.0)).epsilon(1e-12));
    REQUIRE(clutter_intensity(a, pm, kModel, 2.0) == Catch::Approx(0.1354).margin(1e-3));

    auto zero = pm;
    zero.mu_fa = 0.0;
    REQUIRE(clutter_intensity(a, zero, kModel, 2.0) == 0.0);

    auto am = make_point_model(grid32(), kModel, 2.0, true);
    REQUIRE(clutter_intensity(a, am, kModel, 2.0) ==
            Catch::Approx(pm.mu_fa / 1024.0 * f0_eta(2.5, kModel, 2.0)).epsilon(1e-12));
}

TEST_CASE("clutter cardinality pmfs normalize and obey the Poisson limit") {
    auto pm = make_point_model(grid32(), kModel, 2.0, true);
    REQUIRE(clutter_cardinality_pmf(0, pm) == Catch::Approx(std::exp(-pm.mu_fa)));

    double poisson_sum = 0.0, binom_sum = 0.0;
    const int hi = static_cast<int>(10.0 * pm.mu_fa + 50.0);
    for (int n = 0; n <= hi; ++n) {
        poisson_sum += clutter_cardinality_pmf(n, pm);
        binom_sum += clutter_cardinality_binomial(n, 1024, p_fa(kModel, 2.0));
    }
    REQUIRE(poisson_sum == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(binom_sum == Catch::Approx(1.0).margin(1e-9));

    const double tv_good = clutter_cardinality_tv(1024, std::exp(-8.0));
    REQUIRE(tv_good < 1e-3);
    REQUIRE(tv_good > 0.0);
    REQUIRE(clutter_cardinality_tv(10, 0.5) > 0.05);
}

TEST_CASE("association prior count is the falling factorial") {
    REQUIRE(association_prior_count(3, 2) == 6.0);
    REQUIRE(association_prior_count(1024, 0) == 1.0);
    REQUIRE(association_prior_count(5, 5) == 120.0);
    REQUIRE_THROWS_AS(association_prior_count(3, 4), std::domain_error);
    REQUIRE_THROWS_AS(association_prior_count(3, -1), std::domain_error);
}

TEST_CASE("empty measurement set gives the standard Bernoulli miss posterior") {
    auto params = test_params(2.0);
    auto pm = make_point_model(grid32(), kModel, 2.0, true);
    PmbBelief belief;
    BernoulliComponent b;
    b.r = 0.8;
    b.pdf = cloud(50, 10.0, 10.0, 10.0, 0.3, 2);
    belief.bernoullis.push_back(b);

    double pd_bar = 0.0;
    for (const auto& p : b.pdf.particles) pd_bar += p.weight * p_d(p.state.gamma, kModel, 2.0);

    RandomStream rng(3);
    const auto out = point_update(belief, {}, pm, kModel, params, grid32(), 1, rng);
    const double expected = 0.8 * (1.0 - pd_bar) / (1.0 - 0.8 * pd_bar);
    REQUIRE(out.bernoullis.size() == 1);
    REQUIRE(out.bernoullis[0].r == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("overwhelming clutter rate collapses claims to the miss hypothesis") {
    auto params = test_params(2.0);
    auto pm = make_point_model(grid32(), kModel, 2.0, true);
    pm.mu_fa = 1e12;

    PmbBelief belief;
    BernoulliComponent b;
    b.r = 0.8;
    b.pdf = cloud(50, 10.0, 10.0, 10.0, 0.3, 4);
    belief.bernoullis.push_back(b);
    double pd_bar = 0.0;
    for (const auto& p : b.pdf.particles) pd_bar += p.weight * p_d(p.state.gamma, kModel, 2.0);

    const std::vector<PointMeasurement> ys{{3.0, 10.5, 10.5}};
    RandomStream rng(5);
    const auto out = point_update(belief, ys, pm, kModel, params, grid32(), 1, rng);
    const double miss_only = 0.8 * (1.0 - pd_bar) / (1.0 - 0.8 * pd_bar);
    double legacy_r = 0.0;
    for (const auto& c : out.bernoullis)
        if (c.label == b.label) legacy_r = c.r;
    REQUIRE(legacy_r == Catch::Approx(miss_only).margin(1e-6));
}

TEST_CASE("point update matches the brute-force posterior on tiny instances") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        RandomStream rng(seed);
        auto params = test_params(2.0);
        const bool amplitude = seed % 2 == 0;
        auto pm = make_point_model(grid32(), kModel, 2.0, amplitude);

        PmbBelief belief;
        const int n_comp = rng.uniform_int(0, 3);
        for (int j = 0; j < n_comp; ++j) {
            BernoulliComponent b;
            b.r = rng.uniform(0.1, 0.9);
            b.label = j + 1;
            b.pdf = cloud(12, rng.uniform(8.0, 12.0), rng.uniform(8.0, 12.0),
                          rng.uniform(0.0, 25.0), 0.8, seed * 7 + j);
            belief.bernoullis.push_back(std::move(b));
        }
        const int n_phd = 25;
        const double mass = rng.uniform(0.5, 2.0);
        for (int i = 0; i < n_phd; ++i)
            belief.phd.particles.push_back({{rng.uniform(8.0, 12.0), rng.uniform(8.0, 12.0), 0, 0,
                                             rng.uniform(0.0, 25.0)},
                                            mass / n_phd});

        std::vector<PointMeasurement> ys;
        const int n_meas = rng.uniform_int(0, 3);
        std::vector<std::pair<int, int>> used;
        for (int m = 0; m < n_meas; ++m) {
            int cx, cy;
            do {
                cx = rng.uniform_int(8, 12);
                cy = rng.uniform_int(8, 12);
            } while (std::find(used.begin(), used.end(), std::pair{cx, cy}) != used.end());
            used.push_back({cx, cy});
            ys.push_back({2.0 + rng.uniform(0.1, 3.0), 0.5 + cx, 0.5 + cy});
        }

        RandomStream urng(seed + 1);
        const auto post = point_update(belief, ys, pm, kModel, params, grid32(), 1, urng);
        const auto brute = oracle::pmbm_point_bruteforce(belief, ys, pm, kModel, grid32());

        std::map<std::uint64_t, double> impl_r;
        for (const auto& b : post.bernoullis) impl_r[b.label] = b.r;
        for (int j = 0; j < n_comp; ++j) {
            const double impl = impl_r.count(j + 1) ? impl_r[j + 1] : 0.0;
            REQUIRE(impl == Catch::Approx(brute.legacy_r[j]).margin(1e-10));
        }
        // new components by birth label
        for (int m = 0; m < n_meas; ++m) {
            const auto cell = grid32().cell_at(ys[m].z1, ys[m].z2);
            const auto label = make_label(1, cell ? *cell : m);
            const double impl = impl_r.count(label) ? impl_r[label] : 0.0;
            REQUIRE(impl == Catch::Approx(brute.new_r[m]).margin(1e-10));
        }
    }
}

TEST_CASE("amplitude information is inert when every intensity is zero") {
    // with gamma = 0 the object amplitude density equals the clutter density,
    // so the amplitude factors cancel and PMB-AM equals PMB exactly
    auto params = test_params(2.0);
    auto with_am = make_point_model(grid32(), kModel, 2.0, true);
    auto without = make_point_model(grid32(), kModel, 2.0, false);

    PmbBelief belief;
    BernoulliComponent b;
    b.r = 0.7;
    b.label = 9;
    b.pdf = cloud(40, 10.0, 10.0, 0.0, 0.6, 6);
    belief.bernoullis.push_back(b);
    for (int i = 0; i < 30; ++i)
        belief.phd.particles.push_back({{9.0 + 0.1 * i, 10.0, 0, 0, 0.0}, 0.03});

    const std::vector<PointMeasurement> ys{{2.7, 10.5, 10.5}, {4.0, 9.5, 10.5}};
    RandomStream r1(7), r2(7);
    const auto a = point_update(belief, ys, with_am, kModel, params, grid32(), 1, r1);
    const auto c = point_update(belief, ys, without, kModel, params, grid32(), 1, r2);

    REQUIRE(a.bernoullis.size() == c.bernoullis.size());
    for (std::size_t i = 0; i < a.bernoullis.size(); ++i) {
        REQUIRE(a.bernoullis[i].label == c.bernoullis[i].label);
        REQUIRE(a.bernoullis[i].r == Catch::Approx(c.bernoullis[i].r).margin(1e-12));
        for (std::size_t k = 0; k < a.bernoullis[i].pdf.particles.size(); ++k)
            REQUIRE(a.bernoullis[i].pdf.particles[k].weight ==
                    Catch::Approx(c.bernoullis[i].pdf.particles[k].weight).margin(1e-12));
    }
}

TEST_CASE("point update is invariant to measurement permutation") {
    auto params = test_params(2.0);
    auto pm = make_point_model(grid32(), kModel, 2.0, true);
    PmbBelief belief;
    BernoulliComponent b;
    b.r = 0.7;
    b.label = 1;
    b.pdf = cloud(30, 10.0, 10.0, 12.0, 0.8, 8);
    belief.bernoullis.push_back(b);
    for (int i = 0; i < 40; ++i)
        belief.phd.particles.push_back(
            {{8.0 + 0.12 * i, 9.0 + 0.05 * i, 0, 0, 5.0 + i % 20}, 0.02});

    std::vector<PointMeasurement> ys{{2.5, 10.5, 10.5}, {3.1, 9.5, 9.5}, {2.2, 11.5, 10.5}};
    auto reversed = ys;
    std::reverse(reversed.begin(), reversed.end());

    RandomStream r1(9), r2(9);
    const auto a = point_update(belief, ys, pm, kModel, params, grid32(), 1, r1);
    const auto c = point_update(belief, reversed, pm, kModel, params, grid32(), 1, r2);
    std::map<std::uint64_t, double> ra, rc;
    for (const auto& x : a.bernoullis) ra[x.label] = x.r;
    for (const auto& x : c.bernoullis) rc[x.label] = x.r;
    REQUIRE(ra.size() == rc.size());
    for (const auto& [label, r] : ra) REQUIRE(r == Catch::Approx(rc[label]).margin(1e-12));
}

TEST_CASE("the point filters evaluate the same detection probability as the cell model") {
    for (double gamma : {0.0, 5.0, 10.0, 30.0})
        for (double eta : {1.0, 2.0, 4.0})
            REQUIRE(p_d(gamma, kModel, eta) == p_d(ObjectState{0, 0, 0, 0, gamma}, kModel, eta));
}
