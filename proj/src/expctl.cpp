#include "crdm/expctl.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

#include "crdm/rng.hpp"

namespace crdm::expctl {

namespace {

std::function<void(const std::string &)> &log_sink()
{
    static std::function<void(const std::string &)> sink = [](const std::string &line) {
        std::cerr << line << std::endl;
    };
    return sink;
}

std::mutex log_mutex;

void log(const std::string &line)
{
    std::lock_guard lock(log_mutex);
    if (log_sink()) log_sink()(line);
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixed(double v, int digits = 4)
{
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

/// Pools repeats of several evaluations into one report.
void merge(classify::EvalReport &into, const classify::EvalReport &from)
{
    for (std::size_t a = 0; a < data::kClassCount; ++a)
        for (std::size_t b = 0; b < data::kClassCount; ++b) into.confusion[a][b] += from.confusion[a][b];
    into.repeat_accuracy.insert(into.repeat_accuracy.end(), from.repeat_accuracy.begin(), from.repeat_accuracy.end());
    into.repeats += from.repeats;
    classify::finalize(into);
}

sim::StimulusSchedule schedule_for(const ExperimentConfig &cfg, const data::ActivePixelSet &pixels)
{
    return cfg.stimulus == sim::StimulusMode::Tonic ? sim::StimulusSchedule::tonic(pixels, cfg.period_ms)
                                                    : sim::StimulusSchedule::single(pixels);
}

std::string graph_id(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "img%06zu", index);
    return buf;
}

struct CorpusBuild
{
    embed::PathCorpus corpus;
    double mean_events = 0;
    double mean_paths = 0;
};

CorpusBuild build_corpus(const net::GeometricNetwork &network, const Stimuli &stimuli, const ExperimentConfig &cfg)
{
    CorpusBuild out;
    std::vector<std::size_t> events;
    out.corpus.documents = simulate_documents(network, stimuli, cfg, &events);
    for (std::size_t i = 0; i < events.size(); ++i) {
        out.mean_events += static_cast<double>(events[i]);
        out.mean_paths += static_cast<double>(out.corpus.documents[i].paths.size());
    }
    const auto n = static_cast<double>(std::max<std::size_t>(events.size(), 1));
    out.mean_events /= n;
    out.mean_paths /= n;
    return out;
}

std::filesystem::path resolve_data_dir(const ExperimentConfig &cfg)
{
    if (!cfg.data_dir.empty()) return cfg.data_dir;
    if (const char *env = std::getenv("CRDM_DATA_DIR")) return env;
    return "data/mnist";
}

void write_text(const std::filesystem::path &path, const std::string &text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_json(const std::filesystem::path &path, const nlohmann::json &doc) { write_text(path, doc.dump(2) + "\n"); }

net::PhysiologyConfig physiology(const ExperimentConfig &cfg) { return cfg.physiology; }

/// Counts activations of a run without recording a trace.
class ActivationCounter final : public sim::Observer
{
public:
    void on_activation(net::NodeId, sim::Tick, std::span<double>) override { ++count; }
    std::size_t count = 0;
};

}  // namespace

data::SplitPlan resolve_split(const ExperimentConfig &cfg, std::size_t items)
{
    auto plan = cfg.split;
    plan.seed = derive_seed(cfg.seed, 400);
    if (plan.embedding_count == 0 && plan.query_count == 0) {
        plan.query_count = items / 10;
        plan.embedding_count = items - plan.query_count;
    } else if (plan.embedding_count + plan.query_count > items) {
        const auto total = plan.embedding_count + plan.query_count;
        plan.query_count = std::max<std::size_t>(1, items * plan.query_count / total);
        plan.embedding_count = items - plan.query_count;
        if (plan.embedding_count > 0)
            log("split scaled to " + std::to_string(plan.embedding_count) + "/" + std::to_string(plan.query_count) +
                " for " + std::to_string(items) + " images");
    }
    if (plan.embedding_count == 0 || plan.query_count == 0)
        throw std::invalid_argument("too few images (" + std::to_string(items) + ") for a split");
    return plan;
}

std::vector<embed::Document> simulate_documents(const net::GeometricNetwork &network, const Stimuli &stimuli,
                                                const ExperimentConfig &cfg, std::vector<std::size_t> *events)
{
    auto engine_cfg = cfg.engine;
    engine_cfg.record_trace = true;
    struct Item
    {
        embed::Document doc;
        std::size_t events;
    };
    auto items = ordered_map<Item>(stimuli.indices.size(), cfg.workers, [&](std::size_t i) {
        const auto trace = sim::run(network, schedule_for(cfg, stimuli.pixels[i]), cfg.horizon_ms, engine_cfg);
        const auto graph = sim::extract_temporal_graph(trace, network, engine_cfg.summation_window_ms);
        return Item{{graph_id(stimuli.indices[i]), stimuli.labels[i], sim::enumerate_paths(graph, cfg.paths)},
                    trace.events.size()};
    });
    std::vector<embed::Document> docs;
    docs.reserve(items.size());
    if (events) events->clear();
    for (auto &item : items) {
        docs.push_back(std::move(item.doc));
        if (events) events->push_back(item.events);
    }
    return docs;
}

std::string to_string(Experiment experiment)
{
    switch (experiment) {
    case Experiment::PathsEmbed: return "paths-embed";
    case Experiment::StdpCompare: return "stdp-compare";
    case Experiment::WeightTraj: return "weight-traj";
    case Experiment::AnnBaseline: return "ann-baseline";
    }
    return "unknown";
}

Experiment experiment_from_string(const std::string &name)
{
    for (auto e : {Experiment::PathsEmbed, Experiment::StdpCompare, Experiment::WeightTraj, Experiment::AnnBaseline}) {
        if (to_string(e) == name) return e;
    }
    throw std::invalid_argument("unknown experiment '" + name +
                                "' (expected paths-embed, stdp-compare, weight-traj or ann-baseline)");
}

void set_log(std::function<void(const std::string &)> sink)
{
    std::lock_guard lock(log_mutex);
    log_sink() = std::move(sink);
}

void ExperimentConfig::validate() const
{
    const auto fail = [](const std::string &what) { throw std::invalid_argument(what); };
    if (trials == 0) fail("trials must be at least 1");
    if (classes.empty()) fail("data.classes is empty");
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] < 0 || classes[i] > 9) fail("data.classes entries must be digits 0-9");
        for (std::size_t j = 0; j < i; ++j)
            if (classes[i] == classes[j]) fail("data.classes has a duplicate");
    }
    if (source == data::Source::Unknown || ann_train_source == data::Source::Unknown) fail("data.source must be train or test");
    if (!(horizon_ms > 0)) fail("engine.horizon_ms must be positive");
    if (!(period_ms > 0)) fail("engine.period_ms must be positive");
    if (!(engine.summation_window_ms > 0)) fail("engine.window_ms must be positive");
    if (sbm.n_input != data::kPixelCount) fail("network.n_input must be 784");
    if (sbm.n_hidden == 0) fail("network.n_hidden must be positive");
    for (double p : {sbm.p_in_hidden, sbm.p_between})
        if (!(p >= 0 && p <= 1)) fail("network connection probabilities must lie in [0, 1]");
    if (reservoir_sizes.empty()) fail("network.reservoir_sizes is empty");
    for (auto n : reservoir_sizes)
        if (n < 2) fail("network.reservoir_sizes entries must be at least 2");
    if (!(physiology.tick_ms > 0)) fail("physiology.tick_ms must be positive");
    if (!(physiology.threshold > 0)) fail("physiology.threshold must be positive");
    if (!(physiology.weight_lo > 0) || !(physiology.weight_hi >= physiology.weight_lo))
        fail("physiology weight range must satisfy 0 < weight_lo <= weight_hi");
    if (!(physiology.excitatory_fraction >= 0 && physiology.excitatory_fraction <= 1))
        fail("physiology.excitatory_fraction must lie in [0, 1]");
    if (!(physiology.velocity > 0)) fail("physiology.velocity must be positive");
    if (!(physiology.input_gain > 0) || !(physiology.hidden_gain > 0)) fail("physiology gains must be positive");
    if (!(stdp.a_plus >= 0) || !(stdp.a_minus >= 0)) fail("plasticity amplitudes must be non-negative");
    if (!(stdp.tau_plus_ms > 0) || !(stdp.tau_minus_ms > 0)) fail("plasticity time constants must be positive");
    if (!(stdp.w_max > 0)) fail("plasticity.w_max must be positive");
    if (!(snapshot_ms > 0)) fail("plasticity.snapshot_ms must be positive");
    if (!(delta_tol >= 0)) fail("plasticity.delta_tol must be non-negative");
    for (double t : eval_times_ms)
        if (!(t > 0 && t <= horizon_ms)) fail("plasticity.eval_times_ms must lie in (0, horizon_ms]");
    if (paths.max_len < 2) fail("paths.max_len must be at least 2");
    if (embedding.dim == 0 || embedding.window == 0 || embedding.negatives == 0 || embedding.epochs == 0)
        fail("embedding dim, window, negatives and epochs must be positive");
    if (!(embedding.learning_rate > 0)) fail("embedding.learning_rate must be positive");
    if (pca_components == 0) fail("embedding.pca_components must be positive");
    if (knn.k < 1) fail("knn.k must be at least 1");
    if (!(knn.epsilon > 0)) fail("knn.epsilon must be positive");
    if ((split.embedding_count == 0) != (split.query_count == 0))
        fail("split.embedding and split.query must both be set or both be 0");
    if (split.repeats == 0) fail("split.repeats must be at least 1");
    if (hidden_sizes.empty()) fail("ann.hidden_sizes is empty");
    for (auto h : hidden_sizes)
        if (h == 0) fail("ann.hidden_sizes entries must be positive");
    if (train.max_epochs == 0) fail("ann.max_epochs must be positive");
    if (!(train.adam.learning_rate >= 0)) fail("ann.learning_rate must be non-negative");
}

ExperimentConfig defaults_for(Experiment experiment)
{
    ExperimentConfig c;
    c.experiment = experiment;
    c.name = to_string(experiment);
    c.engine.max_steps = 10000;
    c.paths.max_len = 8;
    c.paths.max_paths_per_source = 4;
    c.embedding.train_words = false;
    c.split = {0, 0, 0, 10};

    switch (experiment) {
    case Experiment::PathsEmbed:
        c.source = data::Source::Train;
        c.per_class = 600;
        break;
    case Experiment::StdpCompare:
        c.source = data::Source::Train;
        c.classes = {1, 5};
        c.per_class = 1000;
        c.trials = 3;
        c.stdp_scope = plasticity::Scope::All;
        break;
    case Experiment::WeightTraj:
        c.source = data::Source::Test;
        c.reservoir_sizes = {5, 10, 100, 200};
        c.physiology.input_gain = 0.2;
        c.physiology.hidden_gain = 0.1;
        c.engine.max_steps = 0;
        c.stimulus = sim::StimulusMode::Tonic;
        c.period_ms = 10.0;
        c.horizon_ms = 600.0;
        c.stdp_scope = plasticity::Scope::Recurrent;
        c.snapshot_ms = 100.0;
        c.knn = {5, Metric::Euclidean, classify::Weighting::InverseDistance, 1e-12};
        c.split = {0, 9000, 1000, 10};
        break;
    case Experiment::AnnBaseline:
        c.source = data::Source::Test;
        c.ann_train_source = data::Source::Train;
        c.split = {0, 9000, 1000, 10};
        break;
    }
    return c;
}

data::ImageSet load_source(const ExperimentConfig &cfg, data::Source source)
{
    const auto dir = resolve_data_dir(cfg);
    const std::string stem = source == data::Source::Test ? "t10k" : "train";
    auto set = data::load_idx(dir / (stem + "-images-idx3-ubyte"), dir / (stem + "-labels-idx1-ubyte"));
    set.source = source;
    return set;
}

Stimuli select_stimuli(const data::ImageSet &set, const ExperimentConfig &cfg)
{
    std::vector<std::size_t> indices;
    if (cfg.per_class > 0) {
        indices = data::select_per_class(set, cfg.classes, cfg.per_class);
        if (indices.size() != cfg.per_class * cfg.classes.size())
            throw std::invalid_argument("not enough images for data.per_class = " + std::to_string(cfg.per_class));
    } else {
        for (std::size_t i = 0; i < set.size(); ++i) {
            for (int c : cfg.classes) {
                if (set.labels[i] == c) {
                    indices.push_back(i);
                    break;
                }
            }
        }
    }
    if (cfg.subset > 0 && indices.size() > cfg.subset) indices.resize(cfg.subset);
    if (indices.empty()) throw std::invalid_argument("stimulus selection is empty");

    Stimuli out;
    out.indices = indices;
    for (auto i : indices) {
        out.pixels.push_back(data::binarize(set.images[i]));
        out.labels.push_back(set.labels[i]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

RunDirectory::RunDirectory(const std::filesystem::path &root, const ExperimentConfig &cfg)
    : started_(std::chrono::steady_clock::now())
{
    const auto now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &utc);
    const std::string base = std::string(stamp) + "-" + (cfg.name.empty() ? to_string(cfg.experiment) : cfg.name);

    std::filesystem::create_directories(root);
    dir_ = root / base;
    for (int n = 2; !std::filesystem::create_directory(dir_); ++n) dir_ = root / (base + "-" + std::to_string(n));

    write_text(file("config.toml"), to_toml(cfg));
    manifest_ = {{"experiment", to_string(cfg.experiment)},
                 {"name", cfg.name},
                 {"created_utc", stamp},
                 {"tool_version", kToolVersion},
                 {"config", to_json(cfg)},
                 {"artifacts", nlohmann::json::array()},
                 {"timings_s", nlohmann::json::object()}};
    add("config.toml", "config");
}

void RunDirectory::add(const std::string &relative, const std::string &kind)
{
    manifest_["artifacts"].push_back({{"path", relative}, {"kind", kind}});
}

void RunDirectory::time(const std::string &phase, double seconds) { manifest_["timings_s"][phase] = seconds; }

void RunDirectory::finish(const nlohmann::json &summary)
{
    for (auto &artifact : manifest_["artifacts"]) {
        const auto p = file(artifact["path"].get<std::string>());
        if (!std::filesystem::is_regular_file(p)) throw std::runtime_error("artifact missing: " + p.string());
        artifact["bytes"] = std::filesystem::file_size(p);
        artifact["sha256"] = sha256_file(p);
    }
    manifest_["timings_s"]["total"] = seconds_since(started_);
    manifest_["summary"] = summary;
    write_json(file("manifest.json"), manifest_);
}

const classify::EvalReport &SizeCurve::at(double time_ms) const
{
    for (const auto &p : curve) {
        if (std::abs(p.time_ms - time_ms) < 1e-9) return p.report;
    }
    throw std::out_of_range("no evaluation at " + std::to_string(time_ms) + " ms for size " + std::to_string(size));
}

PathsEmbedResult run_paths_embed(const ExperimentConfig &cfg, RunDirectory *out)
{
    cfg.validate();
    auto t0 = std::chrono::steady_clock::now();
    const auto set = load_source(cfg, cfg.source);
    const auto stimuli = select_stimuli(set, cfg);
    if (out) out->time("load", seconds_since(t0));
    const auto plan = resolve_split(cfg, stimuli.indices.size());

    PathsEmbedResult result;
    result.items = stimuli.indices.size();
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        const auto tag = "trial" + std::to_string(t);
        t0 = std::chrono::steady_clock::now();
        const auto network = net::build_sbm(cfg.sbm, physiology(cfg), derive_seed(cfg.seed, 100 + t));
        auto built = build_corpus(network, stimuli, cfg);
        const double sim_s = seconds_since(t0);
        log(tag + ": simulated " + std::to_string(result.items) + " stimuli in " + fixed(sim_s, 1) + " s, " +
            fixed(built.mean_events, 1) + " events and " + fixed(built.mean_paths, 1) + " paths per stimulus");

        t0 = std::chrono::steady_clock::now();
        auto params = cfg.embedding;
        params.seed = derive_seed(cfg.seed, 300 + t);
        auto embedding = embed::train_graph_embeddings(built.corpus, params);
        embedding.space.metric = cfg.knn.metric;
        const double embed_s = seconds_since(t0);

        t0 = std::chrono::steady_clock::now();
        const auto report = classify::evaluate(embedding.space, plan, cfg.knn);
        const double eval_s = seconds_since(t0);
        log(tag + ": accuracy " + fixed(report.accuracy_mean) + " +- " + fixed(report.accuracy_std));
        merge(result.report, report);
        result.mean_events += built.mean_events / static_cast<double>(cfg.trials);
        result.mean_paths += built.mean_paths / static_cast<double>(cfg.trials);

        if (t == 0) {
            result.pca = embed::pca(embedding.space, std::min(cfg.pca_components, embedding.space.dim));
            result.embedding = std::move(embedding);
        }
        if (out) {
            out->time(tag + ".simulate", sim_s);
            out->time(tag + ".embed", embed_s);
            out->time(tag + ".classify", eval_s);
            save_network(network, out->file(tag + "-network.json"));
            out->add(tag + "-network.json", "network");
            write_json(out->file(tag + "-report.json"), classify::to_json(report));
            out->add(tag + "-report.json", "report");
        }
    }
    if (out) {
        write_csv(result.embedding.space, out->file("embedding.csv"));
        out->add("embedding.csv", "embedding");
        embed::write_csv(result.pca, out->file("pca.csv"));
        out->add("pca.csv", "pca");
        write_json(out->file("report.json"), to_json(result));
        out->add("report.json", "report");
        write_text(out->file("report.csv"), classify::csv_header() + "\n" + classify::to_csv_row(result.report, "paths") + "\n");
        out->add("report.csv", "report");
    }
    return result;
}

StdpCompareResult run_stdp_compare(const ExperimentConfig &cfg, RunDirectory *out)
{
    cfg.validate();
    const auto set = load_source(cfg, cfg.source);
    const auto stimuli = select_stimuli(set, cfg);
    const auto plan = resolve_split(cfg, stimuli.indices.size());

    StdpCompareResult result;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        const auto tag = "trial" + std::to_string(t);
        auto t0 = std::chrono::steady_clock::now();
        const auto plain = net::build_sbm(cfg.sbm, physiology(cfg), derive_seed(cfg.seed, 100 + t));

        // One engine carries the weights through every stimulus in order.
        auto engine_cfg = cfg.engine;
        engine_cfg.record_trace = false;
        sim::Engine engine(std::make_shared<const sim::Topology>(plain), engine_cfg);
        plasticity::StdpObserver stdp(cfg.stdp, cfg.stdp_scope);
        engine.add_observer(stdp);
        for (const auto &pixels : stimuli.pixels) engine.run(schedule_for(cfg, pixels), cfg.horizon_ms);
        auto trained = plain;
        trained.set_weights(engine.weights());
        if (out) out->time(tag + ".train", seconds_since(t0));

        StdpTrial trial;
        trial.delta = plasticity::weight_delta_stats(plain, trained, cfg.delta_tol);
        log(tag + ": " + std::to_string(stdp.updates()) + " weight updates, higher " + fixed(trial.delta.frac_higher, 3) +
            " lower " + fixed(trial.delta.frac_lower, 3) + " flipped " + fixed(trial.delta.frac_sign_flipped, 3) +
            " unchanged " + fixed(trial.delta.frac_unchanged, 3));

        for (const net::GeometricNetwork *network : {&plain, static_cast<const net::GeometricNetwork *>(&trained)}) {
            const bool is_plain = network == &plain;
            t0 = std::chrono::steady_clock::now();
            auto built = build_corpus(*network, stimuli, cfg);
            auto params = cfg.embedding;
            params.seed = derive_seed(cfg.seed, 300 + t);
            auto embedding = embed::train_graph_embeddings(built.corpus, params);
            embedding.space.metric = cfg.knn.metric;
            auto report = classify::evaluate(embedding.space, plan, cfg.knn);
            log(tag + (is_plain ? " plain" : " stdp") + ": accuracy " + fixed(report.accuracy_mean) + ", " +
                fixed(built.mean_events, 1) + " events per stimulus");
            if (out) out->time(tag + (is_plain ? ".plain" : ".stdp"), seconds_since(t0));
            (is_plain ? trial.plain : trial.stdp) = std::move(report);
        }
        result.plain_mean += trial.plain.accuracy_mean / static_cast<double>(cfg.trials);
        result.stdp_mean += trial.stdp.accuracy_mean / static_cast<double>(cfg.trials);
        if (out) {
            save_network(plain, out->file(tag + "-network-plain.json"));
            out->add(tag + "-network-plain.json", "network");
            save_network(trained, out->file(tag + "-network-stdp.json"));
            out->add(tag + "-network-stdp.json", "network");
        }
        result.trials.push_back(std::move(trial));
    }
    if (out) {
        write_json(out->file("report.json"), to_json(result));
        out->add("report.json", "report");
        std::string csv = classify::csv_header() + "\n";
        for (std::size_t t = 0; t < result.trials.size(); ++t) {
            csv += classify::to_csv_row(result.trials[t].plain, "plain-trial" + std::to_string(t)) + "\n";
            csv += classify::to_csv_row(result.trials[t].stdp, "stdp-trial" + std::to_string(t)) + "\n";
        }
        write_text(out->file("report.csv"), csv);
        out->add("report.csv", "report");
    }
    return result;
}

WeightTrajResult run_weight_traj(const ExperimentConfig &cfg, RunDirectory *out)
{
    cfg.validate();
    const auto set = load_source(cfg, cfg.source);
    const auto stimuli = select_stimuli(set, cfg);
    const auto n = stimuli.indices.size();
    const auto plan = resolve_split(cfg, n);

    // Sample times produced by the snapshot clock, and the ones to classify.
    const auto horizon_ticks = sim::to_ticks(cfg.horizon_ms, cfg.physiology.tick_ms);
    const auto every_ticks = sim::to_ticks(cfg.snapshot_ms, cfg.physiology.tick_ms);
    if (horizon_ticks % every_ticks != 0) throw std::invalid_argument("plasticity.snapshot_ms must divide engine.horizon_ms");
    const auto samples = static_cast<std::size_t>(horizon_ticks / every_ticks);
    std::vector<double> times;
    std::vector<std::size_t> sample_index;
    if (cfg.eval_times_ms.empty()) {
        for (std::size_t s = 0; s < samples; ++s) times.push_back(cfg.snapshot_ms * static_cast<double>(s + 1));
    } else {
        times = cfg.eval_times_ms;
    }
    for (double time : times) {
        const auto ticks = sim::to_ticks(time, cfg.physiology.tick_ms);
        if (ticks % every_ticks != 0) throw std::invalid_argument("eval time " + std::to_string(time) + " is not a snapshot time");
        sample_index.push_back(static_cast<std::size_t>(ticks / every_ticks) - 1);
    }

    WeightTrajResult result;
    for (auto size : cfg.reservoir_sizes) {
        SizeCurve curve;
        curve.size = size;
        for (std::size_t t = 0; t < cfg.trials; ++t) {
            const auto tag = "n" + std::to_string(size) + "-trial" + std::to_string(t);
            auto t0 = std::chrono::steady_clock::now();
            const auto network = net::build_reservoir({data::kPixelCount, size, cfg.self_loops}, physiology(cfg),
                                                      derive_seed(cfg.seed, 1000 + size + 100000 * t));
            const auto topology = std::make_shared<const sim::Topology>(network);
            const auto dim = network.recurrent_edge_count();
            std::vector<EmbeddingSpace> spaces(times.size(), EmbeddingSpace(dim, cfg.knn.metric, ItemKind::WeightVector));
            for (auto &space : spaces) {
                space.values.resize(n * dim);
                space.labels = stimuli.labels;
            }

            auto engine_cfg = cfg.engine;
            engine_cfg.record_trace = false;
            const auto counts = ordered_map<std::size_t>(n, cfg.workers, [&](std::size_t i) {
                sim::Engine engine(topology, engine_cfg);
                plasticity::StdpObserver stdp(cfg.stdp, cfg.stdp_scope);
                plasticity::SnapshotClock clock(cfg.snapshot_ms, network.recurrent_begin());
                ActivationCounter counter;
                engine.add_observer(stdp);
                engine.add_observer(clock);
                engine.add_observer(counter);
                engine.run(schedule_for(cfg, stimuli.pixels[i]), cfg.horizon_ms);
                const auto trajectory = clock.take();
                for (std::size_t s = 0; s < times.size(); ++s) {
                    const auto &v = trajectory.vectors.at(sample_index[s]);
                    auto row = spaces[s].row(i);
                    for (std::size_t j = 0; j < dim; ++j) row[j] = static_cast<float>(v[j]);
                }
                return counter.count;
            });
            double activations = 0;
            for (auto c : counts) activations += static_cast<double>(c);
            curve.mean_activations += activations / static_cast<double>(n) / static_cast<double>(cfg.trials);
            const double sim_s = seconds_since(t0);

            t0 = std::chrono::steady_clock::now();
            const auto points = classify::accuracy_vs_time(spaces, times, plan, cfg.knn);
            if (curve.curve.empty()) {
                curve.curve = points;
            } else {
                for (std::size_t s = 0; s < points.size(); ++s) merge(curve.curve[s].report, points[s].report);
            }
            std::string line = tag + ": " + fixed(sim_s, 1) + " s,";
            for (const auto &p : points) line += " " + fixed(p.time_ms, 0) + "ms=" + fixed(p.report.accuracy_mean);
            log(line);
            if (out) {
                out->time(tag + ".simulate", sim_s);
                out->time(tag + ".classify", seconds_since(t0));
                save_network(network, out->file(tag + "-network.json"));
                out->add(tag + "-network.json", "network");
            }
        }
        result.sizes.push_back(std::move(curve));
    }
    if (out) {
        write_json(out->file("report.json"), to_json(result));
        out->add("report.json", "report");
        std::string csv = classify::csv_header() + "\n";
        for (const auto &c : result.sizes)
            for (const auto &p : c.curve)
                csv += classify::to_csv_row(p.report, "n" + std::to_string(c.size) + "@" + fixed(p.time_ms, 0) + "ms") + "\n";
        write_text(out->file("report.csv"), csv);
        out->add("report.csv", "report");
    }
    return result;
}

AnnBaselineResult run_ann_baseline(const ExperimentConfig &cfg, RunDirectory *out)
{
    cfg.validate();
    const auto train = load_source(cfg, cfg.ann_train_source);
    const auto full_pool = load_source(cfg, cfg.source);
    const auto pool = data::subset(full_pool, select_stimuli(full_pool, cfg).indices);
    const auto plan = resolve_split(cfg, pool.size());

    AnnBaselineResult result;
    result.rows = ordered_map<AnnRow>(cfg.hidden_sizes.size(), cfg.workers, [&](std::size_t i) {
        const auto hidden = cfg.hidden_sizes[i];
        const auto t0 = std::chrono::steady_clock::now();
        AnnRow row;
        row.hidden = hidden;
        ann::OneShotProtocol protocol;
        protocol.hidden = hidden;
        protocol.seed = derive_seed(cfg.seed, 500 + hidden);
        protocol.train = cfg.train;
        protocol.knn = cfg.knn;
        row.result = ann::evaluate_one_shot(train, pool, plan, protocol);
        row.params_table = ann::count_params(ann::ParamKind::Ann, hidden);
        row.params_full = ann::count_params_full(ann::ParamKind::Ann, hidden);
        log("H=" + std::to_string(hidden) + ": accuracy " + fixed(row.result.report.accuracy_mean) + " +- " +
            fixed(row.result.report.accuracy_std) + ", " + std::to_string(row.result.non_converged) +
            " runs not converged, " + fixed(seconds_since(t0), 1) + " s");
        return row;
    });
    if (out) {
        write_json(out->file("report.json"), to_json(result));
        out->add("report.json", "report");
        std::string csv = classify::csv_header() + "\n";
        for (const auto &row : result.rows) csv += classify::to_csv_row(row.result.report, "H" + std::to_string(row.hidden)) + "\n";
        write_text(out->file("report.csv"), csv);
        out->add("report.csv", "report");
    }
    return result;
}

nlohmann::json to_json(const PathsEmbedResult &result)
{
    std::vector<double> ratio;
    if (result.pca.explained_variance.size() > 0) {
        const Eigen::VectorXd r = result.pca.explained_variance_ratio();
        ratio.assign(r.data(), r.data() + r.size());
    }
    return {{"items", result.items},
            {"mean_events", result.mean_events},
            {"mean_paths", result.mean_paths},
            {"epoch_loss", result.embedding.epoch_loss},
            {"pca_explained_variance_ratio", ratio},
            {"report", classify::to_json(result.report)}};
}

namespace {

nlohmann::json to_json(const plasticity::WeightDeltaStats &s)
{
    return {{"higher", s.frac_higher},
            {"lower", s.frac_lower},
            {"sign_flipped", s.frac_sign_flipped},
            {"unchanged", s.frac_unchanged},
            {"edges", s.edge_count}};
}

}  // namespace

nlohmann::json to_json(const StdpCompareResult &result)
{
    nlohmann::json trials = nlohmann::json::array();
    for (const auto &t : result.trials) {
        trials.push_back(
            {{"plain", classify::to_json(t.plain)}, {"stdp", classify::to_json(t.stdp)}, {"delta", to_json(t.delta)}});
    }
    return {{"plain_mean", result.plain_mean}, {"stdp_mean", result.stdp_mean}, {"trials", trials}};
}

nlohmann::json to_json(const WeightTrajResult &result)
{
    nlohmann::json sizes = nlohmann::json::array();
    for (const auto &c : result.sizes) {
        nlohmann::json curve = nlohmann::json::array();
        for (const auto &p : c.curve) curve.push_back({{"time_ms", p.time_ms}, {"report", classify::to_json(p.report)}});
        sizes.push_back({{"size", c.size},
                         {"mean_activations", c.mean_activations},
                         {"params_table", ann::count_params(ann::ParamKind::Bnn, c.size)},
                         {"curve", curve}});
    }
    return {{"sizes", sizes}};
}

nlohmann::json to_json(const AnnBaselineResult &result)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto &r : result.rows) {
        std::size_t epochs = 0;
        for (const auto &t : r.result.training) epochs += t.epochs;
        rows.push_back({{"hidden", r.hidden},
                        {"params_table", r.params_table},
                        {"params_full", r.params_full},
                        {"non_converged", r.result.non_converged},
                        {"mean_epochs", r.result.training.empty() ? 0.0
                                                                  : static_cast<double>(epochs) /
                                                                        static_cast<double>(r.result.training.size())},
                        {"report", classify::to_json(r.result.report)}});
    }
    return {{"rows", rows}};
}

nlohmann::json run_experiment(const ExperimentConfig &cfg, const std::filesystem::path &root)
{
    cfg.validate();
    RunDirectory dir(root, cfg);
    log("run directory " + dir.path().string());
    nlohmann::json summary;
    switch (cfg.experiment) {
    case Experiment::PathsEmbed: {
        const auto r = run_paths_embed(cfg, &dir);
        summary = {{"accuracy_mean", r.report.accuracy_mean},
                   {"accuracy_std", r.report.accuracy_std},
                   {"per_class_accuracy", r.report.per_class_accuracy}};
        break;
    }
    case Experiment::StdpCompare: {
        const auto r = run_stdp_compare(cfg, &dir);
        summary = {{"plain_mean", r.plain_mean}, {"stdp_mean", r.stdp_mean}};
        break;
    }
    case Experiment::WeightTraj: {
        const auto r = run_weight_traj(cfg, &dir);
        for (const auto &c : r.sizes) {
            nlohmann::json curve = nlohmann::json::object();
            for (const auto &p : c.curve) curve[fixed(p.time_ms, 0)] = p.report.accuracy_mean;
            summary[std::to_string(c.size)] = curve;
        }
        break;
    }
    case Experiment::AnnBaseline: {
        const auto r = run_ann_baseline(cfg, &dir);
        for (const auto &row : r.rows) summary[std::to_string(row.hidden)] = row.result.report.accuracy_mean;
        break;
    }
    }
    dir.finish(summary);
    return summary;
}

}  // namespace crdm::expctl
