#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crdm/mnist.hpp"
#include "crdm/network.hpp"

namespace crdm::sim {

using net::EdgeId;
using net::NodeId;
using Tick = std::int64_t;

/// Converts milliseconds to ticks; throws std::invalid_argument unless ms is an
/// integer multiple of tick_ms.
Tick to_ticks(double ms, double tick_ms);

/// Read-only adjacency derived from a network template. Safe to share across
/// engines running in parallel.
class Topology
{
public:
    explicit Topology(const net::GeometricNetwork &net);

    const net::GeometricNetwork &network() const { return *net_; }

    std::span<const EdgeId> incoming(NodeId node) const
    {
        return {in_edges_.data() + in_offsets_[node], in_offsets_[node + 1] - in_offsets_[node]};
    }
    /// Outgoing edges are contiguous because edges are sorted by source.
    std::pair<EdgeId, EdgeId> outgoing(NodeId node) const { return {out_offsets_[node], out_offsets_[node + 1]}; }

    std::uint32_t max_delay() const { return max_delay_; }
    Tick refractory_ticks(NodeId node) const { return refractory_ticks_[node]; }

private:
    const net::GeometricNetwork *net_;
    std::vector<EdgeId> out_offsets_;
    std::vector<std::uint32_t> in_offsets_;
    std::vector<EdgeId> in_edges_;
    std::vector<Tick> refractory_ticks_;
    std::uint32_t max_delay_ = 1;
};

enum class StimulusMode { SingleVolley, Tonic, Explicit };

/// Which input nodes fire, and when. Explicit mode fires the pixel set at each
/// listed time.
struct StimulusSchedule
{
    data::ActivePixelSet pixels;
    StimulusMode mode = StimulusMode::SingleVolley;
    double period_ms = 10.0;
    std::vector<double> volley_times_ms;

    static StimulusSchedule single(data::ActivePixelSet pixels);
    static StimulusSchedule tonic(data::ActivePixelSet pixels, double period_ms);
};

struct EngineConfig
{
    double summation_window_ms = 2.0;
    /// Caps on impulse deliveries (event-loop iterations) and activations; 0 disables.
    std::uint64_t max_steps = 0;
    std::uint64_t max_events = 0;
    bool record_trace = true;
};

struct ActivationEvent
{
    NodeId node = 0;
    Tick time = 0;
    std::uint32_t first_contributor = 0;
    std::uint16_t contributor_count = 0;
};

enum class StopReason { QueueEmpty, Horizon, MaxSteps, MaxEvents };

std::string to_string(StopReason reason);

struct ActivationTrace
{
    std::vector<ActivationEvent> events;
    std::vector<EdgeId> contributors;
    Tick horizon = 0;
    double tick_ms = 0.1;
    std::string stimulus_id;
    StopReason stop = StopReason::QueueEmpty;
    std::uint64_t steps = 0;

    std::span<const EdgeId> contributors_of(const ActivationEvent &event) const
    {
        return {contributors.data() + event.first_contributor, event.contributor_count};
    }
    double time_ms(const ActivationEvent &event) const { return static_cast<double>(event.time) * tick_ms; }
};

/// Hooks invoked synchronously by the engine. Weight spans alias the engine's
/// private weight copy and may be modified.
class Observer
{
public:
    virtual ~Observer() = default;
    virtual void begin(const Topology &, std::span<double> /*weights*/, Tick /*horizon*/) {}
    /// Every impulse delivery, including ones discarded by a refractory target.
    virtual void on_arrival(EdgeId, NodeId /*dst*/, Tick, std::span<double>) {}
    virtual void on_activation(NodeId, Tick, std::span<double>) {}
    virtual void on_tick_end(Tick, std::span<const double>) {}
    /// Called once with the last processed tick.
    virtual void end(Tick, std::span<const double>) {}
};

/// Single-threaded event-driven CRDM simulator. Owns a private copy of the
/// edge weights, which persists across run() calls until reset_weights().
class Engine
{
public:
    Engine(std::shared_ptr<const Topology> topology, EngineConfig config = {});

    void add_observer(Observer &observer) { observers_.push_back(&observer); }
    void clear_observers() { observers_.clear(); }

    ActivationTrace run(const StimulusSchedule &schedule, double horizon_ms, std::string stimulus_id = {});

    /// Queues a forced activation for the next run (in addition to the schedule).
    void force_activation(NodeId node, double time_ms);

    std::span<const double> weights() const { return weights_; }
    void set_weights(std::span<const double> weights);
    void reset_weights();

    const Topology &topology() const { return *topology_; }
    const EngineConfig &config() const { return config_; }

private:
    struct Impulse
    {
        std::uint64_t key;  // (dst << 32) | edge, so sorting yields (dst, src) order
        double magnitude;
    };
    struct Buffered
    {
        Tick arrival;
        EdgeId edge;
        double magnitude;
    };

    void activate(NodeId node, Tick t, ActivationTrace &trace, Tick horizon);

    std::shared_ptr<const Topology> topology_;
    EngineConfig config_;
    std::vector<double> weights_;
    std::vector<Observer *> observers_;
    std::vector<std::pair<Tick, NodeId>> forced_;

    std::vector<std::vector<Impulse>> wheel_;
    std::uint64_t wheel_mask_ = 0;
    std::uint64_t pending_ = 0;
    std::vector<Tick> refractory_until_;
    std::vector<std::vector<Buffered>> buffers_;
};

/// Convenience wrapper: fresh engine over `net`, optional observer.
ActivationTrace run(const net::GeometricNetwork &net, const StimulusSchedule &schedule, double horizon_ms,
                    const EngineConfig &config = {}, Observer *hooks = nullptr);

/// Time of the last event in ms, or 0 for an empty trace.
double quiescence_time(const ActivationTrace &trace);

/// Little-endian binary form: u64 event count, then per event u32 node, u64
/// tick, u16 contributor count and u32 edge ids.
std::vector<std::uint8_t> encode_trace(const ActivationTrace &trace);
ActivationTrace decode_trace(std::span<const std::uint8_t> bytes, double tick_ms);
nlohmann::json trace_to_json(const ActivationTrace &trace);

}  // namespace crdm::sim
