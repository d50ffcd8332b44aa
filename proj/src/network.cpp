#include "crdm/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <tuple>

#include "crdm/rng.hpp"

namespace crdm::net {

namespace {

constexpr int kFormatVersion = 1;
constexpr std::uint64_t kTopologyStream = 1;
constexpr std::uint64_t kPhysiologyStream = 2;

std::vector<NodeId> id_range(std::size_t begin, std::size_t end)
{
    std::vector<NodeId> ids(end - begin);
    std::iota(ids.begin(), ids.end(), static_cast<NodeId>(begin));
    return ids;
}

GeometricNetwork blank_network(Layout layout, std::size_t n_input, std::size_t n_hidden, std::uint64_t seed)
{
    GeometricNetwork net;
    net.layout = layout;
    net.seed = seed;
    net.nodes.resize(n_input + n_hidden);
    for (std::size_t i = 0; i < net.nodes.size(); ++i) net.nodes[i].id = static_cast<NodeId>(i);
    net.input_ids = id_range(0, n_input);
    net.hidden_ids = id_range(n_input, n_input + n_hidden);
    return net;
}

}  // namespace

double distance(const Vec3 &a, const Vec3 &b)
{
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::string to_string(Layout layout)
{
    switch (layout) {
    case Layout::Sbm: return "sbm";
    case Layout::Reservoir: return "reservoir";
    case Layout::Custom: return "custom";
    }
    return "custom";
}

Layout layout_from_string(const std::string &name)
{
    if (name == "sbm") return Layout::Sbm;
    if (name == "reservoir") return Layout::Reservoir;
    if (name == "custom") return Layout::Custom;
    throw std::invalid_argument("unknown layout '" + name + "'");
}

void PhysiologyConfig::validate() const
{
    if (!(tick_ms > 0)) throw std::invalid_argument("tick must be positive");
    if (!(refractory_ms > 0)) throw std::invalid_argument("refractory period must be positive");
    if (!(threshold > 0)) throw std::invalid_argument("threshold must be positive");
    if (!(weight_lo > 0) || !(weight_lo < weight_hi)) {
        throw std::invalid_argument("weight range must satisfy 0 < lo < hi");
    }
    if (!(velocity > 0)) throw std::invalid_argument("conduction velocity must be positive");
    if (!(input_gain > 0) || !(hidden_gain > 0)) throw std::invalid_argument("weight gains must be positive");
    if (!(excitatory_fraction >= 0 && excitatory_fraction <= 1)) {
        throw std::invalid_argument("excitatory fraction must lie in [0, 1]");
    }
}

std::size_t GeometricNetwork::recurrent_begin() const
{
    const auto n_input = static_cast<NodeId>(input_ids.size());
    const auto it = std::partition_point(edges.begin(), edges.end(),
                                         [n_input](const EdgeSpec &e) { return e.src < n_input; });
    return static_cast<std::size_t>(it - edges.begin());
}

std::vector<double> GeometricNetwork::weights() const
{
    std::vector<double> w(edges.size());
    std::transform(edges.begin(), edges.end(), w.begin(), [](const EdgeSpec &e) { return e.weight; });
    return w;
}

std::vector<double> GeometricNetwork::recurrent_weights() const
{
    std::vector<double> w;
    w.reserve(recurrent_edge_count());
    for (std::size_t i = recurrent_begin(); i < edges.size(); ++i) w.push_back(edges[i].weight);
    return w;
}

void GeometricNetwork::set_weights(std::span<const double> weights)
{
    if (weights.size() != edges.size()) throw std::invalid_argument("weight vector length mismatch");
    for (std::size_t i = 0; i < edges.size(); ++i) edges[i].weight = weights[i];
}

void GeometricNetwork::validate() const
{
    const auto n = nodes.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto &node = nodes[i];
        if (node.id != i) throw std::invalid_argument("node ids must be dense and ordered");
        if (!(node.refractory_ms > 0)) throw std::invalid_argument("refractory period must be positive");
        if (!(node.threshold > 0)) throw std::invalid_argument("threshold must be positive");
    }
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto &e = edges[i];
        if (e.src >= n || e.dst >= n) throw std::invalid_argument("edge endpoint out of range");
        if (e.delay_ticks < 1) throw std::invalid_argument("edge delay below one tick");
        if (!std::isfinite(e.weight)) throw std::invalid_argument("edge weight not finite");
        if (is_input(e.dst)) throw std::invalid_argument("input nodes cannot receive edges");
        if (i > 0) {
            const auto &p = edges[i - 1];
            if (std::tie(p.src, p.dst) >= std::tie(e.src, e.dst)) {
                throw std::invalid_argument("edges not in canonical (src, dst) order");
            }
        }
    }
}

void canonicalize(GeometricNetwork &net)
{
    std::sort(net.edges.begin(), net.edges.end(),
              [](const EdgeSpec &a, const EdgeSpec &b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });
}

std::uint32_t delay_ticks_for(double dist, const PhysiologyConfig &params)
{
    // Small epsilon keeps exact multiples from rounding up through float error.
    const double ticks = std::ceil(dist / params.velocity / params.tick_ms - 1e-9);
    return static_cast<std::uint32_t>(std::max(1.0, ticks));
}

void assign_delays(GeometricNetwork &net, const PhysiologyConfig &params)
{
    params.validate();
    for (auto &e : net.edges) {
        e.delay_ticks = delay_ticks_for(distance(net.nodes[e.src].position, net.nodes[e.dst].position), params);
    }
}

GeometricNetwork assign_physiology(GeometricNetwork net, const PhysiologyConfig &params, std::uint64_t seed)
{
    params.validate();
    Rng rng(derive_seed(seed, kPhysiologyStream));

    for (auto &node : net.nodes) {
        node.position = {rng.uniform(), rng.uniform(), rng.uniform()};
        node.refractory_ms = params.refractory_ms;
        node.threshold = params.threshold;
    }
    assign_delays(net, params);

    const auto edge_count = net.edges.size();
    const auto excitatory = static_cast<std::size_t>(std::llround(params.excitatory_fraction * edge_count));
    std::vector<std::uint8_t> is_excitatory(edge_count, 0);
    std::fill_n(is_excitatory.begin(), excitatory, 1);
    shuffle(is_excitatory, rng);

    for (std::size_t i = 0; i < edge_count; ++i) {
        const double gain = net.is_input(net.edges[i].src) ? params.input_gain : params.hidden_gain;
        const double magnitude = gain * rng.uniform(params.weight_lo, params.weight_hi);
        net.edges[i].weight = is_excitatory[i] ? magnitude : -magnitude;
    }
    net.physiology = params;
    return net;
}

GeometricNetwork build_sbm(const SbmParams &params, const PhysiologyConfig &physiology, std::uint64_t seed)
{
    if (params.n_input == 0 || params.n_hidden == 0) throw std::invalid_argument("block sizes must be positive");
    for (double p : {params.p_between, params.p_in_hidden}) {
        if (!(p >= 0 && p <= 1)) throw std::invalid_argument("probabilities must lie in [0, 1]");
    }

    auto net = blank_network(Layout::Sbm, params.n_input, params.n_hidden, seed);
    Rng rng(derive_seed(seed, kTopologyStream));
    const auto n_total = static_cast<NodeId>(params.n_input + params.n_hidden);
    const auto first_hidden = static_cast<NodeId>(params.n_input);
    // Iterating sources in id order and targets in id order yields canonical order.
    for (NodeId src = 0; src < n_total; ++src) {
        const double p = src < first_hidden ? params.p_between : params.p_in_hidden;
        for (NodeId dst = first_hidden; dst < n_total; ++dst) {
            if (dst == src) continue;
            if (rng.bernoulli(p)) net.edges.push_back({src, dst, 0.0, 1});
        }
    }
    return assign_physiology(std::move(net), physiology, seed);
}

GeometricNetwork build_reservoir(const ReservoirParams &params, const PhysiologyConfig &physiology,
                                 std::uint64_t seed)
{
    if (params.n_recurrent < 1 || params.n_input < 1) throw std::invalid_argument("layer sizes must be positive");

    auto net = blank_network(Layout::Reservoir, params.n_input, params.n_recurrent, seed);
    const auto n_total = static_cast<NodeId>(params.n_input + params.n_recurrent);
    const auto first_hidden = static_cast<NodeId>(params.n_input);
    net.edges.reserve(count_reservoir_edges(params.n_input, params.n_recurrent, params.self_loops));
    for (NodeId src = 0; src < n_total; ++src) {
        for (NodeId dst = first_hidden; dst < n_total; ++dst) {
            if (dst == src && !params.self_loops) continue;
            net.edges.push_back({src, dst, 0.0, 1});
        }
    }
    return assign_physiology(std::move(net), physiology, seed);
}

std::size_t count_reservoir_edges(std::size_t n_input, std::size_t n_recurrent, bool self_loops)
{
    return n_input * n_recurrent + n_recurrent * (self_loops ? n_recurrent : n_recurrent - 1);
}

nlohmann::json to_json(const GeometricNetwork &net)
{
    using nlohmann::json;
    json nodes = json::array();
    for (const auto &n : net.nodes) {
        nodes.push_back({{"id", n.id},
                         {"pos", {n.position.x, n.position.y, n.position.z}},
                         {"refractory_ms", n.refractory_ms},
                         {"threshold", n.threshold}});
    }
    json edges = json::array();
    for (const auto &e : net.edges) edges.push_back({e.src, e.dst, e.weight, e.delay_ticks});

    const auto &p = net.physiology;
    return {{"format", "crdm-network"},
            {"version", kFormatVersion},
            {"layout", to_string(net.layout)},
            {"seed", net.seed},
            {"n_input", net.input_ids.size()},
            {"n_hidden", net.hidden_ids.size()},
            {"physiology",
             {{"tick_ms", p.tick_ms},
              {"refractory_ms", p.refractory_ms},
              {"threshold", p.threshold},
              {"weight_lo", p.weight_lo},
              {"weight_hi", p.weight_hi},
              {"excitatory_fraction", p.excitatory_fraction},
              {"velocity", p.velocity},
              {"input_gain", p.input_gain},
              {"hidden_gain", p.hidden_gain}}},
            {"nodes", std::move(nodes)},
            {"edges", std::move(edges)}};
}

GeometricNetwork network_from_json(const nlohmann::json &doc)
{
    if (doc.value("format", "") != "crdm-network") throw std::invalid_argument("not a crdm-network document");
    if (doc.at("version").get<int>() != kFormatVersion) throw std::invalid_argument("unsupported network version");

    GeometricNetwork net = blank_network(layout_from_string(doc.at("layout").get<std::string>()),
                                         doc.at("n_input").get<std::size_t>(), doc.at("n_hidden").get<std::size_t>(),
                                         doc.at("seed").get<std::uint64_t>());
    const auto &p = doc.at("physiology");
    net.physiology = {p.at("tick_ms").get<double>(),   p.at("refractory_ms").get<double>(),
                      p.at("threshold").get<double>(), p.at("weight_lo").get<double>(),
                      p.at("weight_hi").get<double>(), p.at("excitatory_fraction").get<double>(),
                      p.at("velocity").get<double>(),  p.value("input_gain", 1.0),
                      p.value("hidden_gain", 1.0)};

    const auto &nodes = doc.at("nodes");
    if (nodes.size() != net.nodes.size()) throw std::invalid_argument("node count mismatch");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto &n = nodes[i];
        const auto &pos = n.at("pos");
        net.nodes[i] = {n.at("id").get<NodeId>(),
                        {pos.at(0).get<double>(), pos.at(1).get<double>(), pos.at(2).get<double>()},
                        n.at("refractory_ms").get<double>(),
                        n.at("threshold").get<double>()};
    }
    for (const auto &e : doc.at("edges")) {
        net.edges.push_back(
            {e.at(0).get<NodeId>(), e.at(1).get<NodeId>(), e.at(2).get<double>(), e.at(3).get<std::uint32_t>()});
    }
    net.validate();
    return net;
}

void save_network(const GeometricNetwork &net, const std::filesystem::path &path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json(net).dump() << '\n';
}

GeometricNetwork load_network(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return network_from_json(nlohmann::json::parse(in));
}

}  // namespace crdm::net
