#include <doctest.h>

#include <cmath>

#include "crdm/network.hpp"
#include "crdm/rng.hpp"

using namespace crdm;
using namespace crdm::net;

TEST_CASE("SBM blocks")
{
    const auto g = build_sbm({784, 200, 0.2, 0.1}, {}, 1);
    CHECK(g.node_count() == 984);
    CHECK(g.input_ids.size() == 784);
    CHECK(g.hidden_ids.size() == 200);
    g.validate();
    for (const auto &e : g.edges) CHECK_FALSE(g.is_input(e.dst));
}

TEST_CASE("SBM with zero probabilities has no edges")
{
    CHECK(build_sbm({784, 200, 0.0, 0.0}, {}, 3).edge_count() == 0);
}

TEST_CASE("SBM cross-block edge count follows the binomial expectation")
{
    const double n = 784.0 * 200.0, p = 0.1;
    const double mean = n * p, sigma = std::sqrt(n * p * (1 - p));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = build_sbm({784, 200, 0.0, p}, {}, seed);
        CHECK(std::abs(static_cast<double>(g.edge_count()) - mean) < 3 * sigma);
    }
}

TEST_CASE("reservoir edge counts")
{
    const auto g = build_reservoir({784, 200, false}, {}, 5);
    std::size_t input_edges = 0;
    for (const auto &e : g.edges) input_edges += g.is_input(e.src);
    CHECK(input_edges == 156800);
    CHECK(g.edge_count() == 784 * 200 + 200 * 199);
    CHECK(g.recurrent_begin() == 156800);
    CHECK(g.recurrent_edge_count() == 200 * 199);
    CHECK(count_reservoir_edges(784, 200, false) == g.edge_count());
    CHECK(count_reservoir_edges(784, 200, true) == 784 * 200 + 200 * 200);

    const auto one = build_reservoir({784, 1, false}, {}, 5);
    CHECK(one.edge_count() == 784);
    CHECK(one.recurrent_edge_count() == 0);

    const auto loops = build_reservoir({784, 10, true}, {}, 5);
    CHECK(loops.edge_count() == 784 * 10 + 100);
}

TEST_CASE("every input-recurrent pair has exactly one edge")
{
    const auto g = build_reservoir({784, 7, false}, {}, 9);
    std::vector<int> seen(784 * 7, 0);
    for (const auto &e : g.edges) {
        if (g.is_input(e.src)) ++seen[e.src * 7 + (e.dst - 784)];
        else CHECK(e.src != e.dst);
    }
    for (int s : seen) CHECK(s == 1);
}

TEST_CASE("excitatory fraction")
{
    const auto g = build_reservoir({784, 200, false}, {}, 11);
    std::size_t positive = 0;
    for (const auto &e : g.edges) {
        positive += e.weight > 0;
        CHECK(std::abs(e.weight) >= 0.4);
        CHECK(std::abs(e.weight) <= 0.8);
    }
    const double frac = static_cast<double>(positive) / static_cast<double>(g.edge_count());
    CHECK(std::abs(frac - 0.7) <= 0.01);
}

TEST_CASE("delay floor for coincident nodes")
{
    PhysiologyConfig p;
    CHECK(delay_ticks_for(0.0, p) == 1);
    CHECK(delay_ticks_for(1e-9, p) == 1);
}

TEST_CASE("halving velocity never shortens a delay")
{
    PhysiologyConfig fast, slow;
    slow.velocity = fast.velocity / 2;
    const auto a = build_reservoir({784, 20, false}, fast, 4);
    const auto b = build_reservoir({784, 20, false}, slow, 4);
    REQUIRE(a.edge_count() == b.edge_count());
    for (std::size_t i = 0; i < a.edge_count(); ++i) CHECK(b.edges[i].delay_ticks >= a.edges[i].delay_ticks);
}

TEST_CASE("delays agree with an independent distance over velocity recomputation")
{
    PhysiologyConfig p;
    Rng rng(77);
    for (int i = 0; i < 10000; ++i) {
        const double dx = rng.uniform(), dy = rng.uniform(), dz = rng.uniform();
        const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
        // delay in ms rounded up to a whole number of 0.1 ms ticks
        const double ms = d / p.velocity;
        auto expected = static_cast<std::uint32_t>(std::ceil(ms * 10.0 - 1e-9));
        if (expected < 1) expected = 1;
        CHECK(delay_ticks_for(d, p) == expected);
    }

    const auto g = build_reservoir({784, 5, false}, p, 8);
    for (const auto &e : g.edges) {
        const auto &a = g.nodes[e.src].position;
        const auto &b = g.nodes[e.dst].position;
        const double d = std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
        CHECK(e.delay_ticks == std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::ceil(d / p.velocity * 10.0 - 1e-9))));
    }
}

TEST_CASE("default velocity spreads delays over roughly 1 to 20 ms")
{
    const auto g = build_reservoir({784, 50, false}, {}, 2);
    std::uint32_t lo = ~0u, hi = 0;
    for (const auto &e : g.edges) {
        lo = std::min(lo, e.delay_ticks);
        hi = std::max(hi, e.delay_ticks);
    }
    CHECK(lo <= 20);
    CHECK(hi >= 150);
    CHECK(hi <= 200);
}

TEST_CASE("positions lie in the unit cube")
{
    const auto g = build_sbm({50, 20, 0.2, 0.1}, {}, 6);
    for (const auto &n : g.nodes) {
        for (double c : {n.position.x, n.position.y, n.position.z}) {
            CHECK(c >= 0.0);
            CHECK(c <= 1.0);
        }
        CHECK(n.refractory_ms == 5.0);
        CHECK(n.threshold == 1.0);
    }
}

TEST_CASE("construction is bit-identical for a fixed seed")
{
    CHECK(build_sbm({784, 200, 0.2, 0.1}, {}, 13) == build_sbm({784, 200, 0.2, 0.1}, {}, 13));
    CHECK(build_reservoir({784, 30, false}, {}, 13) == build_reservoir({784, 30, false}, {}, 13));
    CHECK_FALSE(build_reservoir({784, 30, false}, {}, 13) == build_reservoir({784, 30, false}, {}, 14));
}

TEST_CASE("weight gains scale magnitudes per source block")
{
    PhysiologyConfig scaled;
    scaled.input_gain = 0.25;
    scaled.hidden_gain = 0.5;
    const auto a = build_reservoir({784, 10, false}, {}, 21);
    const auto b = build_reservoir({784, 10, false}, scaled, 21);
    for (std::size_t i = 0; i < a.edge_count(); ++i) {
        const double g = a.is_input(a.edges[i].src) ? 0.25 : 0.5;
        CHECK(b.edges[i].weight == doctest::Approx(a.edges[i].weight * g).epsilon(1e-15));
    }
}

TEST_CASE("JSON round trip keeps canonical order")
{
    PhysiologyConfig p;
    p.input_gain = 0.2;
    const auto g = build_sbm({40, 15, 0.3, 0.2}, p, 17);
    const auto back = network_from_json(to_json(g));
    CHECK(back == g);

    const auto path = std::filesystem::temp_directory_path() / "crdm_net_roundtrip.json";
    save_network(g, path);
    CHECK(load_network(path) == g);
    std::filesystem::remove(path);
}

TEST_CASE("invalid physiology is rejected")
{
    PhysiologyConfig p;
    p.weight_lo = 0.8;
    CHECK_THROWS_AS(build_reservoir({784, 3, false}, p, 1), std::invalid_argument);
    p = {};
    p.velocity = 0;
    CHECK_THROWS_AS(build_reservoir({784, 3, false}, p, 1), std::invalid_argument);
    CHECK_THROWS_AS(build_sbm({784, 3, 1.5, 0.1}, {}, 1), std::invalid_argument);
}

TEST_CASE("set_weights rejects a wrong length")
{
    auto g = build_reservoir({784, 3, false}, {}, 1);
    std::vector<double> w(g.edge_count() - 1, 0.5);
    CHECK_THROWS(g.set_weights(w));
}
