#include "crdm/temporal_graph.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <tuple>

namespace crdm::sim {

TemporalGraph::TemporalGraph(std::vector<TemporalVertex> vertices, std::vector<TemporalArc> arcs)
    : vertices_(std::move(vertices)), arcs_(std::move(arcs))
{
    std::sort(arcs_.begin(), arcs_.end(), [](const TemporalArc &a, const TemporalArc &b) {
        return std::tie(a.from, a.to, a.edge) < std::tie(b.from, b.to, b.edge);
    });
    out_offsets_.assign(vertices_.size() + 1, 0);
    in_degree_.assign(vertices_.size(), 0);
    for (const auto &arc : arcs_) {
        if (arc.from >= vertices_.size() || arc.to >= vertices_.size()) {
            throw std::invalid_argument("arc endpoint out of range");
        }
        if (vertices_[arc.from].time >= vertices_[arc.to].time) {
            throw std::invalid_argument("temporal arc does not move forward in time");
        }
        ++out_offsets_[arc.from + 1];
        ++in_degree_[arc.to];
    }
    for (std::size_t v = 0; v < vertices_.size(); ++v) out_offsets_[v + 1] += out_offsets_[v];
}

TemporalGraph extract_temporal_graph(const ActivationTrace &trace, const net::GeometricNetwork &net, double window_ms)
{
    const Tick window = to_ticks(window_ms, trace.tick_ms);
    std::vector<TemporalVertex> vertices;
    vertices.reserve(trace.events.size());

    // Per-node activation lists (event indices in time order) for source lookup.
    std::vector<std::vector<std::uint32_t>> by_node(net.node_count());
    for (std::uint32_t i = 0; i < trace.events.size(); ++i) {
        const auto &ev = trace.events[i];
        vertices.push_back({ev.node, ev.time});
        by_node.at(ev.node).push_back(i);
    }

    std::vector<TemporalArc> arcs;
    std::vector<std::pair<EdgeId, std::uint32_t>> repeats;
    for (std::uint32_t i = 0; i < trace.events.size(); ++i) {
        const auto &ev = trace.events[i];
        const auto contributors = trace.contributors_of(ev);
        repeats.clear();
        // Walk newest first so a repeated edge maps to successively older emissions.
        for (auto c = contributors.rbegin(); c != contributors.rend(); ++c) {
            const auto edge = *c;
            const auto &spec = net.edges.at(edge);
            std::uint32_t older = 0;
            for (auto &[e, n] : repeats) {
                if (e == edge) older = n++;
            }
            if (older == 0) repeats.emplace_back(edge, 1);

            // The impulse arrived in (ev.time - window, ev.time], so it left the
            // source in (ev.time - delay - window, ev.time - delay].
            const Tick latest = ev.time - spec.delay_ticks;
            const auto &candidates = by_node[spec.src];
            const auto it = std::upper_bound(candidates.begin(), candidates.end(), latest,
                                             [&](Tick t, std::uint32_t idx) { return t < trace.events[idx].time; });
            const auto before = static_cast<std::size_t>(it - candidates.begin());
            if (before <= older || trace.events[candidates[before - 1 - older]].time <= latest - window) {
                throw std::logic_error("no activation of node " + std::to_string(spec.src) +
                                       " explains contributing edge " + std::to_string(edge) + " at tick " +
                                       std::to_string(ev.time));
            }
            arcs.push_back({candidates[before - 1 - older], i, edge});
        }
    }
    return TemporalGraph(std::move(vertices), std::move(arcs));
}

std::vector<Path> enumerate_paths(const TemporalGraph &graph, const PathOptions &options)
{
    if (options.max_len < 2) throw std::invalid_argument("max_len must be at least 2");

    std::vector<Path> out;
    const auto &vertices = graph.vertices();

    struct Frame
    {
        std::uint32_t vertex;
        std::uint32_t next_arc;
    };
    std::vector<Frame> stack;
    Path current;

    for (std::uint32_t source = 0; source < vertices.size(); ++source) {
        if (graph.in_degree(source) != 0) continue;
        std::size_t emitted = 0;
        const auto budget_left = [&] {
            return options.max_paths_per_source == 0 || emitted < options.max_paths_per_source;
        };

        stack.assign(1, {source, 0});
        current.assign(1, vertices[source].node);
        while (!stack.empty() && budget_left()) {
            auto &top = stack.back();
            const auto arcs = graph.out_arcs(top.vertex);
            const bool at_limit = current.size() >= options.max_len;

            if (top.next_arc == 0) {
                const bool maximal = arcs.empty() || at_limit;
                if (current.size() >= 2 && (maximal || options.emit_prefixes)) {
                    out.push_back(current);
                    ++emitted;
                }
            }
            if (at_limit || top.next_arc >= arcs.size()) {
                stack.pop_back();
                current.pop_back();
                continue;
            }
            const auto next = arcs[top.next_arc++].to;
            stack.push_back({next, 0});
            current.push_back(vertices[next].node);
        }
    }
    return out;
}

}  // namespace crdm::sim
