#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "crdm/ann.hpp"
#include "crdm/embed.hpp"
#include "crdm/engine.hpp"
#include "crdm/knn.hpp"
#include "crdm/mnist.hpp"
#include "crdm/network.hpp"
#include "crdm/plasticity.hpp"
#include "crdm/temporal_graph.hpp"

namespace crdm::expctl {

inline constexpr const char *kToolVersion = "0.1.0";

enum class Experiment { PathsEmbed, StdpCompare, WeightTraj, AnnBaseline };

std::string to_string(Experiment experiment);
Experiment experiment_from_string(const std::string &name);

struct ExperimentConfig
{
    Experiment experiment = Experiment::PathsEmbed;
    std::string name;
    std::uint64_t seed = 1;
    /// Independent repetitions with seeds derived from `seed` (network and
    /// embedding streams); reports are averaged.
    std::size_t trials = 1;
    std::size_t workers = 1;

    // data
    std::filesystem::path data_dir;
    data::Source source = data::Source::Train;
    std::vector<int> classes{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    /// Balanced selection, first matches in file order; 0 takes the file order.
    std::size_t per_class = 0;
    /// Cap on the number of images after selection; 0 means no cap.
    std::size_t subset = 0;

    // network
    net::SbmParams sbm;
    std::vector<std::size_t> reservoir_sizes{100};
    bool self_loops = false;
    net::PhysiologyConfig physiology;

    // engine
    sim::EngineConfig engine;
    double horizon_ms = 1000.0;
    sim::StimulusMode stimulus = sim::StimulusMode::SingleVolley;
    double period_ms = 10.0;

    // plasticity
    plasticity::StdpParams stdp;
    plasticity::Scope stdp_scope = plasticity::Scope::All;
    double snapshot_ms = 100.0;
    /// Sample times to classify; empty means every snapshot.
    std::vector<double> eval_times_ms;
    double delta_tol = 1e-9;

    sim::PathOptions paths;
    embed::EmbedParams embedding;
    std::size_t pca_components = 3;
    classify::KnnConfig knn{5, Metric::Cosine, classify::Weighting::InverseDistance, 1e-12};
    data::SplitPlan split;

    // ann
    std::vector<std::size_t> hidden_sizes{5, 10, 100, 200};
    ann::TrainConfig train;
    data::Source ann_train_source = data::Source::Train;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// Defaults for one experiment, before any file or flag is applied.
ExperimentConfig defaults_for(Experiment experiment);

/// Reads a TOML document over the defaults of its `experiment` key.
ExperimentConfig load_config(const std::filesystem::path &path);
ExperimentConfig parse_config(const std::string &toml_text);
/// Applies one `section.key=value` override (value in TOML syntax).
void apply_override(ExperimentConfig &cfg, const std::string &assignment);
std::string to_toml(const ExperimentConfig &cfg);
/// Every settable key as `section.key` (top-level keys bare), in file order.
std::vector<std::string> config_keys();
nlohmann::json to_json(const ExperimentConfig &cfg);

/// Runs fn(i) for i in [0, n) on up to `workers` threads and returns results
/// in index order. The first exception thrown by any job is rethrown.
template <typename T>
std::vector<T> ordered_map(std::size_t n, std::size_t workers, const std::function<T(std::size_t)> &fn)
{
    std::vector<std::optional<T>> slots(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n;
            }
        }
    };
    const auto threads = std::min(std::max<std::size_t>(workers, 1), n);
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<T> out;
    out.reserve(n);
    for (auto &slot : slots) out.push_back(std::move(*slot));
    return out;
}

/// Collects artifact files written under a run directory and their hashes.
class RunDirectory
{
public:
    /// Creates `<root>/<timestamp>-<name>/` and writes config.toml.
    RunDirectory(const std::filesystem::path &root, const ExperimentConfig &cfg);

    const std::filesystem::path &path() const { return dir_; }
    std::filesystem::path file(const std::string &relative) const { return dir_ / relative; }

    /// Registers a file written under the run directory.
    void add(const std::string &relative, const std::string &kind);
    void time(const std::string &phase, double seconds);
    /// Hashes every artifact and writes manifest.json. Throws if one is missing.
    void finish(const nlohmann::json &summary);

    nlohmann::json manifest() const { return manifest_; }

private:
    std::filesystem::path dir_;
    nlohmann::json manifest_;
    std::chrono::steady_clock::time_point started_;
};

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path &path);

/// Images selected by classes / per_class / subset from the configured source.
struct Stimuli
{
    std::vector<std::size_t> indices;
    std::vector<data::ActivePixelSet> pixels;
    std::vector<int> labels;
};

Stimuli select_stimuli(const data::ImageSet &set, const ExperimentConfig &cfg);
data::ImageSet load_source(const ExperimentConfig &cfg, data::Source source);

/// Simulates every stimulus on `network` and enumerates its temporal paths.
/// Each document depends only on its own stimulus.
std::vector<embed::Document> simulate_documents(const net::GeometricNetwork &network, const Stimuli &stimuli,
                                                const ExperimentConfig &cfg, std::vector<std::size_t> *events = nullptr);

/// The configured split for `items` selected images: 0/0 means 90/10, and a
/// plan larger than the selection is scaled down in proportion.
data::SplitPlan resolve_split(const ExperimentConfig &cfg, std::size_t items);

struct PathsEmbedResult
{
    classify::EvalReport report;
    embed::GraphEmbedding embedding;
    embed::PcaProjection pca;
    std::size_t items = 0;
    double mean_events = 0;
    double mean_paths = 0;
};

struct StdpTrial
{
    classify::EvalReport plain;
    classify::EvalReport stdp;
    plasticity::WeightDeltaStats delta;
};

struct StdpCompareResult
{
    std::vector<StdpTrial> trials;
    double plain_mean = 0;
    double stdp_mean = 0;
};

struct SizeCurve
{
    std::size_t size = 0;
    std::vector<classify::TimePoint> curve;
    double mean_activations = 0;

    /// Report at the given sample time; throws if it was not evaluated.
    const classify::EvalReport &at(double time_ms) const;
};

struct WeightTrajResult
{
    std::vector<SizeCurve> sizes;
};

struct AnnRow
{
    std::size_t hidden = 0;
    ann::OneShotResult result;
    std::size_t params_table = 0;
    std::size_t params_full = 0;
};

struct AnnBaselineResult
{
    std::vector<AnnRow> rows;
};

/// Optional artifact sink; with nullptr the experiments only compute.
PathsEmbedResult run_paths_embed(const ExperimentConfig &cfg, RunDirectory *out = nullptr);
StdpCompareResult run_stdp_compare(const ExperimentConfig &cfg, RunDirectory *out = nullptr);
WeightTrajResult run_weight_traj(const ExperimentConfig &cfg, RunDirectory *out = nullptr);
AnnBaselineResult run_ann_baseline(const ExperimentConfig &cfg, RunDirectory *out = nullptr);

nlohmann::json to_json(const PathsEmbedResult &result);
nlohmann::json to_json(const StdpCompareResult &result);
nlohmann::json to_json(const WeightTrajResult &result);
nlohmann::json to_json(const AnnBaselineResult &result);

/// Runs the configured experiment into a fresh run directory under `root`
/// and returns the summary written to the manifest.
nlohmann::json run_experiment(const ExperimentConfig &cfg, const std::filesystem::path &root);

/// Progress lines go here; defaults to stderr. Set to nullptr for silence.
void set_log(std::function<void(const std::string &)> sink);

}  // namespace crdm::expctl
