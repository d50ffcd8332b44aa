#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "crdm/ann.hpp"
#include "crdm/embed.hpp"
#include "crdm/expctl.hpp"
#include "crdm/knn.hpp"
#include "crdm/rng.hpp"

using namespace crdm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct DataFlags
{
    std::string images, labels, data_dir, source = "train";

    void add(CLI::App &app)
    {
        app.add_option("--images", images, "IDX image file");
        app.add_option("--labels", labels, "IDX label file");
        app.add_option("--data-dir", data_dir, "directory holding the MNIST IDX files (default $CRDM_DATA_DIR)");
        app.add_option("--source", source, "train or t10k when reading from the data directory")
            ->check(CLI::IsMember({"train", "test", "t10k"}));
    }

    data::ImageSet load() const
    {
        if (!images.empty() || !labels.empty()) {
            if (images.empty() || labels.empty()) throw std::invalid_argument("--images and --labels go together");
            return data::load_idx(images, labels);
        }
        fs::path dir = data_dir;
        if (dir.empty()) {
            const char *env = std::getenv("CRDM_DATA_DIR");
            dir = env ? env : "data/mnist";
        }
        const std::string stem = source == "train" ? "train" : "t10k";
        auto set = data::load_idx(dir / (stem + "-images-idx3-ubyte"), dir / (stem + "-labels-idx1-ubyte"));
        set.source = stem == "train" ? data::Source::Train : data::Source::Test;
        return set;
    }
};

struct Selection
{
    std::vector<std::size_t> index;
    std::vector<int> classes{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::size_t per_class = 0;
    std::size_t subset = 0;

    void add(CLI::App &app)
    {
        app.add_option("--index", index, "explicit image indices");
        app.add_option("--classes", classes, "digits to keep")->delimiter(',');
        app.add_option("--per-class", per_class, "first N images of each class");
        app.add_option("--subset", subset, "cap on the number of images");
    }

    std::vector<std::size_t> pick(const data::ImageSet &set) const
    {
        if (!index.empty()) {
            for (auto i : index)
                if (i >= set.size()) throw std::out_of_range("image index " + std::to_string(i) + " out of range");
            return index;
        }
        expctl::ExperimentConfig cfg;
        cfg.classes = classes;
        cfg.per_class = per_class;
        cfg.subset = subset;
        return expctl::select_stimuli(set, cfg).indices;
    }
};

void write_bytes(const fs::path &path, const std::vector<std::uint8_t> &bytes)
{
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_json(const fs::path &path, const json &doc)
{
    std::ofstream out(path);
    out << doc.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

json document_to_json(const embed::Document &doc)
{
    return {{"graph_id", doc.graph_id}, {"label", doc.label}, {"paths", doc.paths}};
}

embed::PathCorpus read_corpus(const std::vector<std::string> &files)
{
    embed::PathCorpus corpus;
    for (const auto &file : files) {
        std::ifstream in(file);
        if (!in) throw std::runtime_error("cannot read " + file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = json::parse(line);
            corpus.documents.push_back(
                {j.at("graph_id").get<std::string>(), j.at("label").get<int>(), j.at("paths").get<std::vector<sim::Path>>()});
        }
    }
    return corpus;
}

Metric parse_metric(const std::string &s) { return metric_from_string(s); }

void print_report(const classify::EvalReport &r)
{
    std::printf("accuracy %.4f +- %.4f over %zu repeats\n", r.accuracy_mean, r.accuracy_std, r.repeats);
    std::printf("per class:");
    for (std::size_t c = 0; c < data::kClassCount; ++c)
        if (r.per_class_count[c]) std::printf(" %zu=%.3f", c, r.per_class_accuracy[c]);
    std::printf("\n");
}

}  // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Competitive-refractory network simulator and MNIST experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", expctl::kToolVersion);

    // netgen
    auto *netgen = app.add_subcommand("netgen", "build a network template");
    std::string layout = "sbm", net_out;
    net::SbmParams sbm;
    std::size_t reservoir_size = 100;
    bool self_loops = false;
    std::uint64_t seed = 1;
    net::PhysiologyConfig phys;
    netgen->add_option("--layout", layout)->check(CLI::IsMember({"sbm", "reservoir"}));
    netgen->add_option("--n-hidden", sbm.n_hidden, "hidden nodes (sbm)");
    netgen->add_option("--p-in", sbm.p_in_hidden, "input-to-hidden probability (sbm)");
    netgen->add_option("--p-between", sbm.p_between, "hidden-to-hidden probability (sbm)");
    netgen->add_option("--size", reservoir_size, "recurrent nodes (reservoir)");
    netgen->add_flag("--self-loops", self_loops, "add recurrent self loops (reservoir)");
    netgen->add_option("--seed", seed);
    netgen->add_option("--threshold", phys.threshold);
    netgen->add_option("--refractory-ms", phys.refractory_ms);
    netgen->add_option("--excitatory-fraction", phys.excitatory_fraction);
    netgen->add_option("--velocity", phys.velocity);
    netgen->add_option("--input-gain", phys.input_gain);
    netgen->add_option("--hidden-gain", phys.hidden_gain);
    netgen->add_option("-o,--out", net_out, "network JSON")->required();

    // simulate
    auto *simulate = app.add_subcommand("simulate", "run stimuli through a network");
    std::string sim_net, sim_out = ".", stimulus = "single", scope = "all";
    DataFlags sim_data;
    Selection sim_sel;
    double horizon = 1000, period = 10, snapshot_ms = 100;
    sim::EngineConfig engine_cfg;
    sim::PathOptions path_opts;
    path_opts.max_paths_per_source = 4;
    bool traces = false, trace_json = false, use_stdp = false;
    plasticity::StdpParams stdp;
    std::size_t sim_workers = 1;
    simulate->add_option("--network", sim_net, "network JSON")->required()->check(CLI::ExistingFile);
    sim_data.add(*simulate);
    sim_sel.add(*simulate);
    simulate->add_option("--horizon", horizon, "simulated ms");
    simulate->add_option("--stimulus", stimulus)->check(CLI::IsMember({"single", "tonic"}));
    simulate->add_option("--period", period, "tonic period in ms");
    simulate->add_option("--window", engine_cfg.summation_window_ms, "summation window in ms");
    simulate->add_option("--max-steps", engine_cfg.max_steps, "cap on impulse deliveries (0: none)");
    simulate->add_option("--max-events", engine_cfg.max_events, "cap on activations (0: none)");
    simulate->add_option("--max-len", path_opts.max_len, "longest path");
    simulate->add_option("--per-source", path_opts.max_paths_per_source, "paths per source activation (0: all)");
    simulate->add_flag("--traces", traces, "write binary traces");
    simulate->add_flag("--trace-json", trace_json, "also write JSON traces");
    simulate->add_flag("--stdp", use_stdp, "apply STDP and record weight trajectories");
    simulate->add_option("--scope", scope)->check(CLI::IsMember({"all", "recurrent"}));
    simulate->add_option("--snapshot-ms", snapshot_ms);
    simulate->add_option("--a-plus", stdp.a_plus);
    simulate->add_option("--a-minus", stdp.a_minus);
    simulate->add_option("--w-max", stdp.w_max);
    simulate->add_option("--workers", sim_workers);
    simulate->add_option("-o,--out-dir", sim_out);

    // embed
    auto *embed_cmd = app.add_subcommand("embed", "train graph embeddings from path corpora");
    std::vector<std::string> corpus_files;
    embed::EmbedParams embed_params;
    embed_params.train_words = false;
    std::string embed_out, embed_metric = "cosine";
    embed_cmd->add_option("corpus", corpus_files, "corpus.jsonl files written by simulate")->required();
    embed_cmd->add_option("--dim", embed_params.dim);
    embed_cmd->add_option("--window", embed_params.window);
    embed_cmd->add_option("--negatives", embed_params.negatives);
    embed_cmd->add_option("--epochs", embed_params.epochs);
    embed_cmd->add_option("--lr", embed_params.learning_rate);
    embed_cmd->add_option("--train-words", embed_params.train_words);
    embed_cmd->add_option("--seed", embed_params.seed);
    embed_cmd->add_option("--metric", embed_metric)->check(CLI::IsMember({"cosine", "euclidean"}));
    embed_cmd->add_option("-o,--out", embed_out, "embedding CSV")->required();

    // pca
    auto *pca_cmd = app.add_subcommand("pca", "project an embedding onto its principal components");
    std::string pca_in, pca_out;
    std::size_t pca_k = 3;
    pca_cmd->add_option("input", pca_in, "embedding CSV")->required()->check(CLI::ExistingFile);
    pca_cmd->add_option("-k,--components", pca_k);
    pca_cmd->add_option("-o,--out", pca_out, "projection CSV")->required();

    // classify
    auto *classify_cmd = app.add_subcommand("classify", "kNN evaluation of an embedding");
    std::string cls_in, cls_out, cls_metric = "cosine", cls_weighting = "inverse-distance";
    classify::KnnConfig knn;
    data::SplitPlan plan{0, 0, 0, 10};
    classify_cmd->add_option("input", cls_in, "embedding CSV")->required()->check(CLI::ExistingFile);
    classify_cmd->add_option("-k", knn.k);
    classify_cmd->add_option("--metric", cls_metric)->check(CLI::IsMember({"cosine", "euclidean"}));
    classify_cmd->add_option("--weighting", cls_weighting)->check(CLI::IsMember({"majority", "inverse-distance"}));
    classify_cmd->add_option("--epsilon", knn.epsilon);
    classify_cmd->add_option("--embedding-count", plan.embedding_count, "0 with --query-count 0: 90/10 split");
    classify_cmd->add_option("--query-count", plan.query_count);
    classify_cmd->add_option("--repeats", plan.repeats);
    classify_cmd->add_option("--seed", plan.seed);
    classify_cmd->add_option("-o,--out", cls_out, "report JSON");

    // ann
    auto *ann_cmd = app.add_subcommand("ann", "one-shot MLP baseline");
    DataFlags ann_train, ann_pool;
    ann_pool.source = "test";
    std::vector<std::size_t> hidden{5, 10, 100, 200};
    data::SplitPlan ann_plan{11, 9000, 1000, 10};
    ann::TrainConfig ann_cfg;
    std::uint64_t ann_seed = 1;
    std::string ann_out, ann_model;
    ann_cmd->add_option("--hidden", hidden)->delimiter(',');
    ann_cmd->add_option("--train-images", ann_train.images);
    ann_cmd->add_option("--train-labels", ann_train.labels);
    ann_pool.add(*ann_cmd);
    ann_cmd->add_option("--embedding-count", ann_plan.embedding_count);
    ann_cmd->add_option("--query-count", ann_plan.query_count);
    ann_cmd->add_option("--repeats", ann_plan.repeats);
    ann_cmd->add_option("--seed", ann_seed);
    ann_cmd->add_option("--max-epochs", ann_cfg.max_epochs);
    ann_cmd->add_option("--lr", ann_cfg.adam.learning_rate);
    ann_cmd->add_option("--save-model", ann_model, "stem for a model trained on the first image of each class");
    ann_cmd->add_option("-o,--out", ann_out, "report JSON");

    // run
    auto *run_cmd = app.add_subcommand("run", "run an experiment end to end");
    std::string target, runs_dir = "runs";
    std::vector<std::string> sets;
    run_cmd->add_option("experiment", target, "paths-embed, stdp-compare, weight-traj, ann-baseline or a TOML file")
        ->required();
    run_cmd->add_option("--set", sets, "override as section.key=value");
    run_cmd->add_option("--runs-dir", runs_dir, "parent of the run directory");
    // Every config key doubles as a flag; aliases for the common ones.
    std::vector<std::pair<std::string, std::string>> flagged;
    for (const auto &key : expctl::config_keys()) {
        run_cmd->add_option_function<std::string>(
            "--" + key, [&flagged, key](const std::string &v) { flagged.emplace_back(key, v); }, "config " + key);
    }
    for (const auto &[alias, key] : std::map<std::string, std::string>{
             {"--data-dir", "data.dir"}, {"--subset", "data.subset"}, {"--per-class", "data.per_class"}}) {
        run_cmd->add_option_function<std::string>(
            alias, [&flagged, key = key](const std::string &v) { flagged.emplace_back(key, v); }, "same as --" + key);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (*netgen) {
            const auto network =
                layout == "sbm" ? net::build_sbm(sbm, phys, seed)
                                : net::build_reservoir({data::kPixelCount, reservoir_size, self_loops}, phys, seed);
            net::save_network(network, net_out);
            std::printf("%zu nodes, %zu edges (%zu recurrent) -> %s\n", network.node_count(), network.edge_count(),
                        network.recurrent_edge_count(), net_out.c_str());
        } else if (*simulate) {
            const auto network = net::load_network(sim_net);
            const auto set = sim_data.load();
            const auto picked = sim_sel.pick(set);
            const auto topology = std::make_shared<const sim::Topology>(network);
            fs::create_directories(sim_out);
            const auto run_one = [&](std::size_t j) {
                const auto i = picked[j];
                const auto pixels = data::binarize(set.images[i]);
                const auto schedule = stimulus == "tonic" ? sim::StimulusSchedule::tonic(pixels, period)
                                                          : sim::StimulusSchedule::single(pixels);
                sim::Engine engine(topology, engine_cfg);
                plasticity::StdpObserver plastic(stdp, scope == "all" ? plasticity::Scope::All : plasticity::Scope::Recurrent);
                plasticity::SnapshotClock clock(snapshot_ms, network.recurrent_begin());
                if (use_stdp) {
                    engine.add_observer(plastic);
                    engine.add_observer(clock);
                }
                char id[32];
                std::snprintf(id, sizeof id, "img%06zu", i);
                const auto trace = engine.run(schedule, horizon, id);
                if (traces) write_bytes(fs::path(sim_out) / (std::string(id) + ".trace"), sim::encode_trace(trace));
                if (trace_json) write_json(fs::path(sim_out) / (std::string(id) + ".trace.json"), sim::trace_to_json(trace));
                if (use_stdp) plasticity::save_trajectory(clock.take(id), fs::path(sim_out) / (std::string(id) + ".traj"), set.labels[i]);
                const auto graph = sim::extract_temporal_graph(trace, network, engine_cfg.summation_window_ms);
                return document_to_json({id, set.labels[i], sim::enumerate_paths(graph, path_opts)}).dump();
            };
            const auto lines = expctl::ordered_map<std::string>(picked.size(), sim_workers, run_one);
            std::ofstream corpus(fs::path(sim_out) / "corpus.jsonl");
            for (const auto &line : lines) corpus << line << "\n";
            if (!corpus) throw std::runtime_error("cannot write corpus.jsonl");
            std::printf("%zu stimuli -> %s\n", picked.size(), (fs::path(sim_out) / "corpus.jsonl").c_str());
        } else if (*embed_cmd) {
            const auto corpus = read_corpus(corpus_files);
            auto result = embed::train_graph_embeddings(corpus, embed_params);
            result.space.metric = parse_metric(embed_metric);
            write_csv(result.space, embed_out);
            std::printf("%zu documents, %zu paths; loss", corpus.documents.size(), corpus.path_count());
            for (double l : result.epoch_loss) std::printf(" %.4f", l);
            std::printf("\n");
        } else if (*pca_cmd) {
            const auto space = read_csv(pca_in, Metric::Euclidean, ItemKind::Graph);
            const auto projection = embed::pca(space, pca_k);
            embed::write_csv(projection, pca_out);
            const Eigen::VectorXd ratio = projection.explained_variance_ratio();
            std::printf("explained variance ratio:");
            for (Eigen::Index c = 0; c < ratio.size(); ++c) std::printf(" %.4f", ratio[c]);
            std::printf("\n");
        } else if (*classify_cmd) {
            knn.metric = parse_metric(cls_metric);
            knn.weighting = classify::weighting_from_string(cls_weighting);
            const auto space = read_csv(cls_in, knn.metric, ItemKind::Graph);
            if (plan.embedding_count == 0 && plan.query_count == 0) {
                plan.query_count = space.rows() / 10;
                plan.embedding_count = space.rows() - plan.query_count;
            }
            const auto report = classify::evaluate(space, plan, knn);
            print_report(report);
            if (!cls_out.empty()) write_json(cls_out, classify::to_json(report));
        } else if (*ann_cmd) {
            data::ImageSet train;
            if (!ann_train.images.empty() || !ann_train.labels.empty()) {
                train = ann_train.load();
            } else {
                auto d = ann_pool;
                d.images.clear(), d.labels.clear(), d.source = "train";
                train = d.load();
            }
            const auto pool = ann_pool.load();
            json rows = json::array();
            for (auto h : hidden) {
                ann::OneShotProtocol protocol;
                protocol.hidden = h;
                protocol.seed = derive_seed(ann_seed, 500 + h);
                protocol.train = ann_cfg;
                const auto result = ann::evaluate_one_shot(train, pool, ann_plan, protocol);
                std::printf("H=%zu params %zu (%zu with output layer) ", h, ann::count_params(ann::ParamKind::Ann, h),
                            ann::count_params_full(ann::ParamKind::Ann, h));
                print_report(result.report);
                rows.push_back({{"hidden", h},
                                {"params_table", ann::count_params(ann::ParamKind::Ann, h)},
                                {"params_full", ann::count_params_full(ann::ParamKind::Ann, h)},
                                {"non_converged", result.non_converged},
                                {"report", classify::to_json(result.report)}});
            }
            if (!ann_out.empty()) write_json(ann_out, {{"rows", rows}});
            if (!ann_model.empty()) {
                std::vector<data::Image> examples;
                std::vector<int> labels;
                for (auto i : data::select_per_class(train, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 1)) {
                    examples.push_back(train.images[i]);
                    labels.push_back(train.labels[i]);
                }
                auto model = ann::MlpModel::random(hidden.back(), derive_seed(ann_seed, 500 + hidden.back()));
                const auto report = ann::train_one_shot(model, examples, labels, ann_cfg);
                ann::save_model(model, ann_model);
                std::printf("saved H=%zu model after %zu epochs (loss %.5f)\n", hidden.back(), report.epochs,
                            report.final_loss);
            }
        } else if (*run_cmd) {
            expctl::ExperimentConfig cfg;
            if (target.size() > 5 && target.substr(target.size() - 5) == ".toml") {
                cfg = expctl::load_config(target);
            } else {
                cfg = expctl::defaults_for(expctl::experiment_from_string(target));
            }
            for (const auto &[key, value] : flagged) expctl::apply_override(cfg, key + "=" + value);
            for (const auto &s : sets) expctl::apply_override(cfg, s);
            cfg.validate();
            const auto summary = expctl::run_experiment(cfg, runs_dir);
            std::printf("%s\n", summary.dump(2).c_str());
        }
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
