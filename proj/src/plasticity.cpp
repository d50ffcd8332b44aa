#include "crdm/plasticity.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace crdm::plasticity {

namespace {

constexpr Tick kNever = std::numeric_limits<Tick>::min();

}  // namespace

void StdpParams::validate() const
{
    if (!(a_plus >= 0) || !(a_minus >= 0)) throw std::invalid_argument("STDP amplitudes must be non-negative");
    if (!(tau_plus_ms > 0) || !(tau_minus_ms > 0)) throw std::invalid_argument("STDP time constants must be positive");
    if (!(w_max > 0)) throw std::invalid_argument("w_max must be positive");
}

double stdp_delta(double dt_ms, const StdpParams &p)
{
    if (dt_ms > 0) return p.a_plus * std::exp(-dt_ms / p.tau_plus_ms);
    if (dt_ms < 0) return -p.a_minus * std::exp(dt_ms / p.tau_minus_ms);
    return 0.0;
}

StdpObserver::StdpObserver(StdpParams params, Scope scope) : params_(params), scope_(scope) { params_.validate(); }

void StdpObserver::begin(const sim::Topology &topology, std::span<double> weights, Tick /*horizon*/)
{
    topology_ = &topology;
    const auto &net = topology.network();
    tick_ms_ = net.physiology.tick_ms;
    window_ticks_ = static_cast<Tick>(std::floor(params_.pairing_window_ms() / tick_ms_ + 1e-9));
    first_plastic_ = scope_ == Scope::All ? 0 : net.recurrent_begin();
    last_arrival_.assign(weights.size(), kNever);
    last_post_.assign(net.node_count(), kNever);
}

void StdpObserver::apply(std::span<double> weights, net::EdgeId edge, double dt_ms)
{
    const double delta = stdp_delta(dt_ms, params_);
    if (delta == 0.0) return;
    weights[edge] = std::clamp(weights[edge] + delta, -params_.w_max, params_.w_max);
    ++updates_;
}

void StdpObserver::on_arrival(net::EdgeId edge, net::NodeId dst, Tick t, std::span<double> weights)
{
    last_arrival_[edge] = t;
    if (edge < first_plastic_) return;
    const Tick post = last_post_[dst];
    if (post == kNever || t - post > window_ticks_) return;
    apply(weights, edge, static_cast<double>(post - t) * tick_ms_);
}

void StdpObserver::on_activation(net::NodeId node, Tick t, std::span<double> weights)
{
    last_post_[node] = t;
    for (auto edge : topology_->incoming(node)) {
        if (edge < first_plastic_) continue;
        const Tick pre = last_arrival_[edge];
        if (pre == kNever || t - pre > window_ticks_) continue;
        apply(weights, edge, static_cast<double>(t - pre) * tick_ms_);
    }
}

void WeightTrajectory::validate() const
{
    if (vectors.size() != sample_times_ms.size()) throw std::invalid_argument("sample count mismatch");
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].size() != dimension()) throw std::invalid_argument("ragged weight trajectory");
        if (i > 0 && !(sample_times_ms[i] > sample_times_ms[i - 1])) {
            throw std::invalid_argument("sample times must increase strictly");
        }
    }
}

SnapshotClock::SnapshotClock(double every_ms, std::size_t first_edge) : every_ms_(every_ms), first_edge_(first_edge)
{
    if (!(every_ms > 0)) throw std::invalid_argument("snapshot interval must be positive");
}

void SnapshotClock::begin(const sim::Topology &topology, std::span<double> /*weights*/, Tick horizon)
{
    tick_ms_ = topology.network().physiology.tick_ms;
    every_ticks_ = sim::to_ticks(every_ms_, tick_ms_);
    if (every_ticks_ <= 0 || horizon % every_ticks_ != 0) {
        throw std::invalid_argument("snapshot interval must divide the horizon");
    }
    horizon_ = horizon;
    next_sample_ = every_ticks_;
    current_ = {};
}

void SnapshotClock::record(Tick t, std::span<const double> weights)
{
    current_.sample_times_ms.push_back(static_cast<double>(t) * tick_ms_);
    current_.vectors.emplace_back(weights.begin() + static_cast<std::ptrdiff_t>(first_edge_), weights.end());
}

void SnapshotClock::on_tick_end(Tick t, std::span<const double> weights)
{
    if (t == next_sample_) {
        record(t, weights);
        next_sample_ += every_ticks_;
    }
}

void SnapshotClock::end(Tick /*last_tick*/, std::span<const double> weights)
{
    for (; next_sample_ <= horizon_; next_sample_ += every_ticks_) record(next_sample_, weights);
}

WeightTrajectory SnapshotClock::take(std::string stimulus_id)
{
    current_.stimulus_id = std::move(stimulus_id);
    return std::exchange(current_, {});
}

WeightDeltaStats weight_delta_stats(std::span<const double> before, std::span<const double> after, double tol)
{
    if (before.size() != after.size()) throw TopologyMismatch("weight vectors differ in length");
    WeightDeltaStats stats;
    stats.edge_count = before.size();
    if (before.empty()) return stats;

    std::size_t higher = 0, lower = 0, flipped = 0, unchanged = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        const double delta = after[i] - before[i];
        if (before[i] > 0 && after[i] < 0) {
            ++flipped;
        } else if (std::abs(delta) <= tol) {
            ++unchanged;
        } else if (delta > 0) {
            ++higher;
        } else {
            ++lower;
        }
    }
    const auto n = static_cast<double>(before.size());
    stats.frac_higher = static_cast<double>(higher) / n;
    stats.frac_lower = static_cast<double>(lower) / n;
    stats.frac_sign_flipped = static_cast<double>(flipped) / n;
    stats.frac_unchanged = static_cast<double>(unchanged) / n;
    return stats;
}

WeightDeltaStats weight_delta_stats(const net::GeometricNetwork &before, const net::GeometricNetwork &after, double tol)
{
    if (before.edges.size() != after.edges.size()) throw TopologyMismatch("edge counts differ");
    for (std::size_t i = 0; i < before.edges.size(); ++i) {
        if (before.edges[i].src != after.edges[i].src || before.edges[i].dst != after.edges[i].dst) {
            throw TopologyMismatch("edge " + std::to_string(i) + " connects different nodes");
        }
    }
    const auto wb = before.weights();
    const auto wa = after.weights();
    return weight_delta_stats(wb, wa, tol);
}

namespace {

void put_u64(std::ostream &out, std::uint64_t v)
{
    std::uint8_t bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<const char *>(bytes), 8);
}

std::uint64_t get_u64(std::istream &in)
{
    std::uint8_t bytes[8];
    if (!in.read(reinterpret_cast<char *>(bytes), 8)) throw std::runtime_error("matrix file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes[i]} << (8 * i);
    return v;
}

}  // namespace

void write_matrix(const std::filesystem::path &path, const std::vector<std::vector<double>> &rows, std::size_t cols)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    put_u64(out, cols);
    put_u64(out, rows.size());
    for (const auto &row : rows) {
        if (row.size() != cols) throw std::invalid_argument("ragged matrix rows");
        for (double v : row) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
}

std::vector<std::vector<double>> read_matrix(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const auto cols = get_u64(in);
    const auto rows = get_u64(in);
    std::vector<std::vector<double>> out(rows, std::vector<double>(cols));
    for (auto &row : out) {
        for (auto &v : row) v = std::bit_cast<double>(get_u64(in));
    }
    return out;
}

void save_trajectory(const WeightTrajectory &trajectory, const std::filesystem::path &path, int label)
{
    trajectory.validate();
    write_matrix(path, trajectory.vectors, trajectory.dimension());
    nlohmann::json meta = {{"format", "crdm-weight-trajectory"},
                           {"version", 1},
                           {"stimulus_id", trajectory.stimulus_id},
                           {"sample_times_ms", trajectory.sample_times_ms},
                           {"edge_count", trajectory.dimension()},
                           {"label", label}};
    std::ofstream side(path.string() + ".json");
    side << meta.dump(2) << '\n';
}

WeightTrajectory load_trajectory(const std::filesystem::path &path)
{
    WeightTrajectory out;
    out.vectors = read_matrix(path);
    std::ifstream side(path.string() + ".json");
    if (!side) throw std::runtime_error("missing trajectory sidecar for " + path.string());
    const auto meta = nlohmann::json::parse(side);
    out.stimulus_id = meta.at("stimulus_id").get<std::string>();
    out.sample_times_ms = meta.at("sample_times_ms").get<std::vector<double>>();
    out.validate();
    return out;
}

}  // namespace crdm::plasticity
