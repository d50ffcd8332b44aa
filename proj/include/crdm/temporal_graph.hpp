#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "crdm/engine.hpp"
#include "crdm/network.hpp"

namespace crdm::sim {

struct TemporalVertex
{
    NodeId node;
    Tick time;
};

/// Causal arc: the activation `from` emitted the impulse on `edge` that
/// contributed to activation `to`.
struct TemporalArc
{
    std::uint32_t from;
    std::uint32_t to;
    EdgeId edge;
};

/// Causal DAG of one stimulation. Vertices are activation events in trace
/// order, so every arc points forward in time.
class TemporalGraph
{
public:
    TemporalGraph() = default;
    TemporalGraph(std::vector<TemporalVertex> vertices, std::vector<TemporalArc> arcs);

    const std::vector<TemporalVertex> &vertices() const { return vertices_; }
    const std::vector<TemporalArc> &arcs() const { return arcs_; }

    std::span<const TemporalArc> out_arcs(std::uint32_t vertex) const
    {
        return {arcs_.data() + out_offsets_[vertex], out_offsets_[vertex + 1] - out_offsets_[vertex]};
    }
    std::uint32_t in_degree(std::uint32_t vertex) const { return in_degree_[vertex]; }

    bool empty() const { return vertices_.empty(); }

private:
    std::vector<TemporalVertex> vertices_;
    std::vector<TemporalArc> arcs_;
    std::vector<std::uint32_t> out_offsets_{0};
    std::vector<std::uint32_t> in_degree_;
};

/// Resolves each contributing edge to the source activation whose impulse
/// arrived within the summation window before the target fired. Throws
/// std::logic_error if no such activation exists.
TemporalGraph extract_temporal_graph(const ActivationTrace &trace, const net::GeometricNetwork &net,
                                     double window_ms = 2.0);

using Path = std::vector<NodeId>;

struct PathOptions
{
    std::size_t max_len = 8;
    /// Paths emitted per source vertex; 0 means unlimited.
    std::size_t max_paths_per_source = 0;
    bool emit_prefixes = false;
};

/// Walks forward from every source vertex (in-degree 0) through causal arcs.
/// A path is emitted when it reaches a vertex without out-arcs or max_len
/// vertices; with emit_prefixes every prefix of length >= 2 is emitted too.
/// Order: sources by vertex index, then depth-first with arcs by target.
std::vector<Path> enumerate_paths(const TemporalGraph &graph, const PathOptions &options);

}  // namespace crdm::sim
