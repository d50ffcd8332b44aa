#include "crdm/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace crdm::sim {

Tick to_ticks(double ms, double tick_ms)
{
    const double ticks = ms / tick_ms;
    const double rounded = std::round(ticks);
    if (std::abs(ticks - rounded) > 1e-6) {
        throw std::invalid_argument(std::to_string(ms) + " ms is not a multiple of the " + std::to_string(tick_ms) +
                                    " ms tick");
    }
    return static_cast<Tick>(rounded);
}

std::string to_string(StopReason reason)
{
    switch (reason) {
    case StopReason::QueueEmpty: return "queue-empty";
    case StopReason::Horizon: return "horizon";
    case StopReason::MaxSteps: return "max-steps";
    case StopReason::MaxEvents: return "max-events";
    }
    return "unknown";
}

Topology::Topology(const net::GeometricNetwork &net) : net_(&net)
{
    const auto n = net.node_count();
    out_offsets_.assign(n + 1, 0);
    in_offsets_.assign(n + 1, 0);
    for (const auto &e : net.edges) {
        ++out_offsets_[e.src + 1];
        ++in_offsets_[e.dst + 1];
        max_delay_ = std::max(max_delay_, e.delay_ticks);
    }
    for (std::size_t i = 0; i < n; ++i) {
        out_offsets_[i + 1] += out_offsets_[i];
        in_offsets_[i + 1] += in_offsets_[i];
    }
    in_edges_.resize(net.edge_count());
    auto cursor = in_offsets_;
    for (EdgeId id = 0; id < net.edge_count(); ++id) in_edges_[cursor[net.edges[id].dst]++] = id;

    refractory_ticks_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double ticks = std::round(net.nodes[i].refractory_ms / net.physiology.tick_ms);
        refractory_ticks_[i] = std::max<Tick>(1, static_cast<Tick>(ticks));
    }
}

StimulusSchedule StimulusSchedule::single(data::ActivePixelSet pixels)
{
    return {std::move(pixels), StimulusMode::SingleVolley, 0.0, {}};
}

StimulusSchedule StimulusSchedule::tonic(data::ActivePixelSet pixels, double period_ms)
{
    if (!(period_ms > 0)) throw std::invalid_argument("tonic period must be positive");
    return {std::move(pixels), StimulusMode::Tonic, period_ms, {}};
}

Engine::Engine(std::shared_ptr<const Topology> topology, EngineConfig config)
    : topology_(std::move(topology)), config_(config)
{
    const auto &net = topology_->network();
    weights_ = net.weights();
    const auto wheel_size = std::bit_ceil(static_cast<std::uint64_t>(topology_->max_delay()) + 1);
    wheel_.resize(wheel_size);
    wheel_mask_ = wheel_size - 1;
    refractory_until_.assign(net.node_count(), 0);
    buffers_.resize(net.node_count());
}

void Engine::set_weights(std::span<const double> weights)
{
    if (weights.size() != weights_.size()) throw std::invalid_argument("weight vector length mismatch");
    std::copy(weights.begin(), weights.end(), weights_.begin());
}

void Engine::reset_weights() { weights_ = topology_->network().weights(); }

void Engine::force_activation(NodeId node, double time_ms)
{
    if (node >= topology_->network().node_count()) throw std::invalid_argument("forced node out of range");
    forced_.emplace_back(to_ticks(time_ms, topology_->network().physiology.tick_ms), node);
}

void Engine::activate(NodeId node, Tick t, ActivationTrace &trace, Tick horizon)
{
    auto &buffer = buffers_[node];
    if (config_.record_trace) {
        if (buffer.size() > UINT16_MAX) throw std::runtime_error("contributor count overflow");
        trace.events.push_back({node, t, static_cast<std::uint32_t>(trace.contributors.size()),
                                static_cast<std::uint16_t>(buffer.size())});
        for (const auto &b : buffer) trace.contributors.push_back(b.edge);
    }
    buffer.clear();
    refractory_until_[node] = t + topology_->refractory_ticks(node);

    for (auto *obs : observers_) obs->on_activation(node, t, weights_);

    const auto &edges = topology_->network().edges;
    const auto [first, last] = topology_->outgoing(node);
    for (EdgeId e = first; e < last; ++e) {
        const Tick arrival = t + edges[e].delay_ticks;
        if (arrival > horizon) continue;
        wheel_[static_cast<std::uint64_t>(arrival) & wheel_mask_].push_back(
            {(std::uint64_t{edges[e].dst} << 32) | e, weights_[e]});
        ++pending_;
    }
}

ActivationTrace Engine::run(const StimulusSchedule &schedule, double horizon_ms, std::string stimulus_id)
{
    const auto &net = topology_->network();
    const double tick_ms = net.physiology.tick_ms;
    if (!(horizon_ms > 0)) throw std::invalid_argument("horizon must be positive");
    const Tick horizon = to_ticks(horizon_ms, tick_ms);
    const Tick window = to_ticks(config_.summation_window_ms, tick_ms);

    // Expand the stimulus into forced input activations.
    std::vector<Tick> volleys;
    switch (schedule.mode) {
    case StimulusMode::SingleVolley: volleys.push_back(0); break;
    case StimulusMode::Tonic: {
        const Tick period = to_ticks(schedule.period_ms, tick_ms);
        if (period <= 0) throw std::invalid_argument("tonic period must be positive");
        for (Tick t = 0; t < horizon; t += period) volleys.push_back(t);
        break;
    }
    case StimulusMode::Explicit:
        for (double ms : schedule.volley_times_ms) volleys.push_back(to_ticks(ms, tick_ms));
        break;
    }
    for (Tick t : volleys) {
        for (auto pixel : schedule.pixels.indices) {
            if (pixel >= net.input_ids.size()) throw std::invalid_argument("pixel index outside the input block");
            forced_.emplace_back(t, net.input_ids[pixel]);
        }
    }
    std::sort(forced_.begin(), forced_.end());
    forced_.erase(std::unique(forced_.begin(), forced_.end()), forced_.end());

    ActivationTrace trace;
    trace.horizon = horizon;
    trace.tick_ms = tick_ms;
    trace.stimulus_id = std::move(stimulus_id);

    std::fill(refractory_until_.begin(), refractory_until_.end(), 0);
    for (auto &b : buffers_) b.clear();
    for (auto &bucket : wheel_) bucket.clear();
    pending_ = 0;

    for (auto *obs : observers_) obs->begin(*topology_, weights_, horizon);

    std::size_t next_forced = 0;
    std::uint64_t steps = 0;
    Tick last_tick = 0;
    trace.stop = StopReason::Horizon;
    bool halted = false;

    for (Tick t = 0; t <= horizon && !halted; ++t) {
        if (pending_ == 0 && next_forced == forced_.size()) {
            trace.stop = StopReason::QueueEmpty;
            break;
        }
        last_tick = t;
        const std::size_t tick_first_event = trace.events.size();

        for (; next_forced < forced_.size() && forced_[next_forced].first == t; ++next_forced) {
            const NodeId node = forced_[next_forced].second;
            if (t < refractory_until_[node]) continue;
            buffers_[node].clear();
            activate(node, t, trace, horizon);
        }

        auto &bucket = wheel_[static_cast<std::uint64_t>(t) & wheel_mask_];
        std::sort(bucket.begin(), bucket.end(), [](const Impulse &a, const Impulse &b) { return a.key < b.key; });
        for (const auto &impulse : bucket) {
            if (config_.max_steps != 0 && steps >= config_.max_steps) {
                trace.stop = StopReason::MaxSteps;
                halted = true;
                break;
            }
            ++steps;
            const auto dst = static_cast<NodeId>(impulse.key >> 32);
            const auto edge = static_cast<EdgeId>(impulse.key & 0xffffffffu);
            for (auto *obs : observers_) obs->on_arrival(edge, dst, t, weights_);

            // Signals reaching a refractory node lose the competition and are dropped.
            if (t < refractory_until_[dst]) continue;

            auto &buffer = buffers_[dst];
            const auto stale = std::find_if(buffer.begin(), buffer.end(),
                                            [&](const Buffered &b) { return b.arrival > t - window; });
            buffer.erase(buffer.begin(), stale);
            buffer.push_back({t, edge, impulse.magnitude});

            double sum = 0.0;
            for (const auto &b : buffer) sum += b.magnitude;
            if (sum >= net.nodes[dst].threshold) {
                activate(dst, t, trace, horizon);
                if (config_.max_events != 0 && trace.events.size() >= config_.max_events) {
                    trace.stop = StopReason::MaxEvents;
                    halted = true;
                    break;
                }
            }
        }
        pending_ -= std::min<std::uint64_t>(pending_, bucket.size());
        bucket.clear();

        // Forced activations can target hidden nodes, so restore (time, node) order.
        const auto tick_events = trace.events.begin() + static_cast<std::ptrdiff_t>(tick_first_event);
        if (!std::is_sorted(tick_events, trace.events.end(),
                            [](const ActivationEvent &a, const ActivationEvent &b) { return a.node < b.node; })) {
            std::sort(tick_events, trace.events.end(),
                      [](const ActivationEvent &a, const ActivationEvent &b) { return a.node < b.node; });
        }

        for (auto *obs : observers_) obs->on_tick_end(t, weights_);
    }

    trace.steps = steps;
    forced_.clear();
    for (auto *obs : observers_) obs->end(last_tick, weights_);
    return trace;
}

ActivationTrace run(const net::GeometricNetwork &net, const StimulusSchedule &schedule, double horizon_ms,
                    const EngineConfig &config, Observer *hooks)
{
    Engine engine(std::make_shared<const Topology>(net), config);
    if (hooks != nullptr) engine.add_observer(*hooks);
    return engine.run(schedule, horizon_ms);
}

double quiescence_time(const ActivationTrace &trace)
{
    if (trace.events.empty()) return 0.0;
    return trace.time_ms(trace.events.back());
}

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t> &out, T value)
{
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t &offset)
{
    if (offset + sizeof(T) > bytes.size()) throw std::runtime_error("trace payload truncated");
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(T{bytes[offset + i]} << (8 * i));
    offset += sizeof(T);
    return value;
}

}  // namespace

std::vector<std::uint8_t> encode_trace(const ActivationTrace &trace)
{
    std::vector<std::uint8_t> out;
    out.reserve(8 + trace.events.size() * 14 + trace.contributors.size() * 4);
    put_le<std::uint64_t>(out, trace.events.size());
    for (const auto &ev : trace.events) {
        put_le<std::uint32_t>(out, ev.node);
        put_le<std::uint64_t>(out, static_cast<std::uint64_t>(ev.time));
        put_le<std::uint16_t>(out, ev.contributor_count);
        for (auto edge : trace.contributors_of(ev)) put_le<std::uint32_t>(out, edge);
    }
    return out;
}

ActivationTrace decode_trace(std::span<const std::uint8_t> bytes, double tick_ms)
{
    ActivationTrace trace;
    trace.tick_ms = tick_ms;
    std::size_t offset = 0;
    const auto count = get_le<std::uint64_t>(bytes, offset);
    for (std::uint64_t i = 0; i < count; ++i) {
        ActivationEvent ev;
        ev.node = get_le<std::uint32_t>(bytes, offset);
        ev.time = static_cast<Tick>(get_le<std::uint64_t>(bytes, offset));
        ev.contributor_count = get_le<std::uint16_t>(bytes, offset);
        ev.first_contributor = static_cast<std::uint32_t>(trace.contributors.size());
        for (std::uint16_t c = 0; c < ev.contributor_count; ++c) {
            trace.contributors.push_back(get_le<std::uint32_t>(bytes, offset));
        }
        trace.events.push_back(ev);
    }
    if (offset != bytes.size()) throw std::runtime_error("trailing bytes after trace payload");
    return trace;
}

nlohmann::json trace_to_json(const ActivationTrace &trace)
{
    nlohmann::json events = nlohmann::json::array();
    for (const auto &ev : trace.events) {
        const auto contributors = trace.contributors_of(ev);
        events.push_back({{"node", ev.node},
                          {"tick", ev.time},
                          {"contributors", std::vector<EdgeId>(contributors.begin(), contributors.end())}});
    }
    return {{"stimulus_id", trace.stimulus_id},
            {"tick_ms", trace.tick_ms},
            {"horizon_ticks", trace.horizon},
            {"stop", to_string(trace.stop)},
            {"steps", trace.steps},
            {"events", std::move(events)}};
}

}  // namespace crdm::sim
