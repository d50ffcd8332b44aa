#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crdm/engine.hpp"
#include "crdm/network.hpp"

namespace crdm::plasticity {

using sim::Tick;

/// Pair-based additive STDP with nearest-neighbour pairing.
struct StdpParams
{
    double a_plus = 0.01;
    double a_minus = 0.012;
    double tau_plus_ms = 20.0;
    double tau_minus_ms = 20.0;
    double w_max = 2.0;

    void validate() const;
    /// Pairings further apart than this never change a weight.
    double pairing_window_ms() const { return 5.0 * std::max(tau_plus_ms, tau_minus_ms); }
};

/// dt = post_time - pre_arrival_time (ms). Positive dt potentiates, negative
/// dt depresses, dt == 0 is a tie and yields 0.
double stdp_delta(double dt_ms, const StdpParams &p);

/// Which edges are plastic.
enum class Scope { All, Recurrent };

/// Online STDP driven by engine hooks. Writes straight into the engine's
/// weight copy so later impulses carry the updated magnitudes.
class StdpObserver final : public sim::Observer
{
public:
    explicit StdpObserver(StdpParams params, Scope scope = Scope::All);

    void begin(const sim::Topology &topology, std::span<double> weights, Tick horizon) override;
    void on_arrival(net::EdgeId edge, net::NodeId dst, Tick t, std::span<double> weights) override;
    void on_activation(net::NodeId node, Tick t, std::span<double> weights) override;

    std::uint64_t updates() const { return updates_; }

private:
    void apply(std::span<double> weights, net::EdgeId edge, double dt_ms);

    StdpParams params_;
    Scope scope_;
    const sim::Topology *topology_ = nullptr;
    double tick_ms_ = 0.1;
    Tick window_ticks_ = 0;
    std::size_t first_plastic_ = 0;
    std::vector<Tick> last_arrival_;
    std::vector<Tick> last_post_;
    std::uint64_t updates_ = 0;
};

struct WeightTrajectory
{
    std::string stimulus_id;
    std::vector<double> sample_times_ms;
    std::vector<std::vector<double>> vectors;

    std::size_t dimension() const { return vectors.empty() ? 0 : vectors.front().size(); }
    void validate() const;
    bool operator==(const WeightTrajectory &) const = default;
};

/// Records the weights of edges [first_edge, edge_count) at t = every, 2*every,
/// ..., horizon. Samples after an early stop repeat the final weights.
class SnapshotClock final : public sim::Observer
{
public:
    SnapshotClock(double every_ms, std::size_t first_edge);

    void begin(const sim::Topology &topology, std::span<double> weights, Tick horizon) override;
    void on_tick_end(Tick t, std::span<const double> weights) override;
    void end(Tick last_tick, std::span<const double> weights) override;

    /// Moves out the trajectory of the most recent run.
    WeightTrajectory take(std::string stimulus_id = {});

private:
    void record(Tick t, std::span<const double> weights);

    double every_ms_;
    std::size_t first_edge_;
    double tick_ms_ = 0.1;
    Tick every_ticks_ = 0;
    Tick horizon_ = 0;
    Tick next_sample_ = 0;
    WeightTrajectory current_;
};

struct WeightDeltaStats
{
    double frac_higher = 0;
    double frac_lower = 0;
    double frac_sign_flipped = 0;
    double frac_unchanged = 0;
    std::size_t edge_count = 0;
};

class TopologyMismatch : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// A + to - crossing counts as flipped first; otherwise |delta| <= tol is
/// unchanged, else higher/lower by the sign of the change.
WeightDeltaStats weight_delta_stats(const net::GeometricNetwork &before, const net::GeometricNetwork &after,
                                    double tol = 1e-9);
WeightDeltaStats weight_delta_stats(std::span<const double> before, std::span<const double> after, double tol = 1e-9);

/// Binary matrix: little-endian u64 column count (edges), u64 row count
/// (samples), then row-major IEEE-754 f64 values.
void write_matrix(const std::filesystem::path &path, const std::vector<std::vector<double>> &rows, std::size_t cols);
std::vector<std::vector<double>> read_matrix(const std::filesystem::path &path);

/// Matrix file plus `<path>.json` metadata sidecar.
void save_trajectory(const WeightTrajectory &trajectory, const std::filesystem::path &path, int label = -1);
WeightTrajectory load_trajectory(const std::filesystem::path &path);

}  // namespace crdm::plasticity
