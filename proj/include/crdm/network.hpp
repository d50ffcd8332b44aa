#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace crdm::net {

using NodeId = std::uint32_t;
using EdgeId = std::uint32_t;

struct Vec3
{
    double x = 0, y = 0, z = 0;
    bool operator==(const Vec3 &) const = default;
};

double distance(const Vec3 &a, const Vec3 &b);

struct NodeSpec
{
    NodeId id = 0;
    Vec3 position;
    double refractory_ms = 5.0;
    double threshold = 1.0;
    bool operator==(const NodeSpec &) const = default;
};

struct EdgeSpec
{
    NodeId src = 0;
    NodeId dst = 0;
    double weight = 0.0;
    std::uint32_t delay_ticks = 1;
    bool operator==(const EdgeSpec &) const = default;
};

enum class Layout { Sbm, Reservoir, Custom };

std::string to_string(Layout layout);
Layout layout_from_string(const std::string &name);

/// Per-network physiological parameters. Weight magnitudes are drawn
/// uniformly from [weight_lo, weight_hi]; the sign is negative for the
/// inhibitory share of edges.
struct PhysiologyConfig
{
    double tick_ms = 0.1;
    double refractory_ms = 5.0;
    double threshold = 1.0;
    double weight_lo = 0.4;
    double weight_hi = 0.8;
    double excitatory_fraction = 0.7;
    /// Unit-cube distance per ms. The cube diagonal (sqrt 3) maps to ~20 ms.
    double velocity = 0.0866;
    /// Magnitude multipliers for edges leaving input nodes and hidden nodes.
    double input_gain = 1.0;
    double hidden_gain = 1.0;

    void validate() const;
    bool operator==(const PhysiologyConfig &) const = default;
};

struct SbmParams
{
    std::size_t n_input = 784;
    std::size_t n_hidden = 200;
    double p_in_hidden = 0.2;
    double p_between = 0.1;
    bool operator==(const SbmParams &) const = default;
};

struct ReservoirParams
{
    std::size_t n_input = 784;
    std::size_t n_recurrent = 200;
    bool self_loops = false;
    bool operator==(const ReservoirParams &) const = default;
};

/// Immutable network template. Edges are kept sorted by (src, dst); node ids
/// [0, n_input) are the input block and the rest are hidden/recurrent.
struct GeometricNetwork
{
    std::vector<NodeSpec> nodes;
    std::vector<EdgeSpec> edges;
    Layout layout = Layout::Custom;
    std::vector<NodeId> input_ids;
    std::vector<NodeId> hidden_ids;
    std::uint64_t seed = 0;
    PhysiologyConfig physiology;

    std::size_t node_count() const { return nodes.size(); }
    std::size_t edge_count() const { return edges.size(); }

    /// First edge whose source is a hidden node. Hidden-to-hidden edges occupy
    /// [recurrent_begin(), edge_count()) because inputs never receive edges.
    std::size_t recurrent_begin() const;
    std::size_t recurrent_edge_count() const { return edge_count() - recurrent_begin(); }

    std::vector<double> weights() const;
    std::vector<double> recurrent_weights() const;
    void set_weights(std::span<const double> weights);

    bool is_input(NodeId id) const { return id < input_ids.size(); }

    /// Checks endpoint validity, canonical ordering, delays >= 1 tick and the
    /// node parameter ranges. Throws std::invalid_argument.
    void validate() const;

    bool operator==(const GeometricNetwork &) const = default;
};

/// Sorts edges by (src, dst).
void canonicalize(GeometricNetwork &net);

GeometricNetwork build_sbm(const SbmParams &params, const PhysiologyConfig &physiology, std::uint64_t seed);
GeometricNetwork build_reservoir(const ReservoirParams &params, const PhysiologyConfig &physiology,
                                 std::uint64_t seed);

/// Places nodes uniformly in the unit cube, derives delays from distance and
/// velocity, and draws signed weights with exactly round(f * E) excitatory
/// edges. Topology is left untouched.
GeometricNetwork assign_physiology(GeometricNetwork net, const PhysiologyConfig &params, std::uint64_t seed);

/// Recomputes delays from the current positions (used after editing positions
/// or velocity).
void assign_delays(GeometricNetwork &net, const PhysiologyConfig &params);

std::uint32_t delay_ticks_for(double distance, const PhysiologyConfig &params);

/// Parameter counts reported alongside the comparison table.
std::size_t count_reservoir_edges(std::size_t n_input, std::size_t n_recurrent, bool self_loops);

nlohmann::json to_json(const GeometricNetwork &net);
GeometricNetwork network_from_json(const nlohmann::json &doc);
void save_network(const GeometricNetwork &net, const std::filesystem::path &path);
GeometricNetwork load_network(const std::filesystem::path &path);

}  // namespace crdm::net
