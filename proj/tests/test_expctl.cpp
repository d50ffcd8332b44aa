#include <doctest.h>

#include <fstream>

#include "crdm/expctl.hpp"
#include "support.hpp"

using namespace crdm;
using namespace crdm::expctl;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small(Experiment e)
{
    auto cfg = defaults_for(e);
    cfg.data_dir = test::data_dir();
    return cfg;
}

fs::path scratch_dir(const std::string &name)
{
    auto dir = fs::temp_directory_path() / ("crdm-expctl-" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct QuietLog
{
    QuietLog() { set_log(nullptr); }
    ~QuietLog()
    {
        set_log([](const std::string &line) { std::fprintf(stderr, "%s\n", line.c_str()); });
    }
};

}  // namespace

TEST_CASE("experiment names round trip")
{
    for (auto e : {Experiment::PathsEmbed, Experiment::StdpCompare, Experiment::WeightTraj, Experiment::AnnBaseline}) {
        CHECK(experiment_from_string(to_string(e)) == e);
        CHECK_NOTHROW(defaults_for(e).validate());
    }
    CHECK_THROWS_AS(experiment_from_string("paths"), std::invalid_argument);
}

TEST_CASE("config survives a TOML round trip")
{
    for (auto e : {Experiment::PathsEmbed, Experiment::StdpCompare, Experiment::WeightTraj, Experiment::AnnBaseline}) {
        auto cfg = defaults_for(e);
        cfg.seed = 77;
        cfg.classes = {3, 8};
        cfg.eval_times_ms = {100, 300};
        cfg.stdp.a_minus = 0.0125;
        const auto text = to_toml(cfg);
        const auto back = parse_config(text);
        CHECK(to_toml(back) == text);
        CHECK(to_json(back) == to_json(cfg));
    }
}

TEST_CASE("files fill in over the experiment defaults")
{
    const auto cfg = parse_config("experiment = 'weight-traj'\nseed = 5\n[knn]\nk = 3\n");
    CHECK(cfg.experiment == Experiment::WeightTraj);
    CHECK(cfg.seed == 5);
    CHECK(cfg.knn.k == 3);
    CHECK(cfg.stimulus == sim::StimulusMode::Tonic);
    CHECK(cfg.horizon_ms == 600.0);

    CHECK_THROWS_AS(parse_config("seed = 5\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("experiment = 'ann-baseline'\n[knn]\nkay = 3\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("experiment = 'ann-baseline'\nbogus = 1\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("experiment = 'ann-baseline'\n[knn]\nk = 'five'\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("experiment = 'ann-baseline'\n[knn]\nk = 0\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("experiment = 'ann-baseline'\n[data]\nclasses = [1, 12]\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("experiment = 'ann-baseline'\n[engine]\nhorizon_ms = -1\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("experiment = [\n"), std::invalid_argument);
}

TEST_CASE("overrides")
{
    auto cfg = defaults_for(Experiment::PathsEmbed);
    apply_override(cfg, "knn.k=9");
    apply_override(cfg, "knn.metric=euclidean");
    apply_override(cfg, "data.classes=[1, 5]");
    apply_override(cfg, "physiology.input_gain=0.5");
    apply_override(cfg, "plasticity.scope='recurrent'");
    apply_override(cfg, "seed=12");
    CHECK(cfg.knn.k == 9);
    CHECK(cfg.knn.metric == Metric::Euclidean);
    CHECK(cfg.classes == std::vector<int>{1, 5});
    CHECK(cfg.physiology.input_gain == 0.5);
    CHECK(cfg.stdp_scope == plasticity::Scope::Recurrent);
    CHECK(cfg.seed == 12);
    CHECK_THROWS(apply_override(cfg, "knn.k"));
    CHECK_THROWS(apply_override(cfg, "knn.q=1"));
    CHECK_THROWS(apply_override(cfg, "experiment=weight-traj"));
    CHECK_THROWS(apply_override(cfg, "engine.horizon_ms=soon"));

    // every key accepts its own serialized value
    const auto doc = to_json(cfg);
    auto copy = cfg;
    for (const auto &key : config_keys()) {
        const auto dot = key.find('.');
        const auto &value = dot == std::string::npos ? doc.at(key) : doc.at(key.substr(0, dot)).at(key.substr(dot + 1));
        INFO(key);
        CHECK_NOTHROW(apply_override(copy, key + "=" + value.dump()));
    }
    CHECK(to_toml(copy) == to_toml(cfg));
}

TEST_CASE("ordered_map keeps index order and rethrows")
{
    const std::function<std::size_t(std::size_t)> square = [](std::size_t i) { return i * i; };
    const auto serial = ordered_map(100, 1, square);
    const auto parallel = ordered_map(100, 4, square);
    CHECK(serial == parallel);
    CHECK(serial[9] == 81);
    CHECK(ordered_map(0, 4, square).empty());

    const std::function<int(std::size_t)> boom = [](std::size_t i) -> int {
        if (i == 37) throw std::runtime_error("job 37");
        return 0;
    };
    CHECK_THROWS_WITH(ordered_map(64, 3, boom), "job 37");
}

TEST_CASE("sha256 of a known message")
{
    const auto p = scratch_dir("sha") / "abc.txt";
    fs::create_directories(p.parent_path());
    std::ofstream(p) << "abc";
    CHECK(sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("split resolution")
{
    QuietLog quiet;
    auto cfg = defaults_for(Experiment::PathsEmbed);
    auto plan = resolve_split(cfg, 6000);
    CHECK(plan.embedding_count == 5400);
    CHECK(plan.query_count == 600);
    cfg.split = {0, 9000, 1000, 5};
    plan = resolve_split(cfg, 2000);
    CHECK(plan.embedding_count == 1800);
    CHECK(plan.query_count == 200);
    CHECK(plan.repeats == 5);
    plan = resolve_split(cfg, 10000);
    CHECK(plan.embedding_count == 9000);
    CHECK_THROWS(resolve_split(cfg, 1));
}

TEST_CASE("stimulus selection and subsets")
{
    const auto set = test::load_test();
    auto cfg = small(Experiment::PathsEmbed);
    cfg.classes = {1, 5};
    cfg.per_class = 30;
    const auto all = select_stimuli(set, cfg);
    CHECK(all.indices.size() == 60);
    for (auto l : all.labels) CHECK((l == 1 || l == 5));
    cfg.subset = 25;
    const auto some = select_stimuli(set, cfg);
    REQUIRE(some.indices.size() == 25);
    CHECK(std::equal(some.indices.begin(), some.indices.end(), all.indices.begin()));

    // per-item results do not depend on which other items are included
    const auto network = net::build_sbm({}, {}, 9);
    cfg.workers = 2;
    const auto big = simulate_documents(network, all, cfg);
    const auto part = simulate_documents(network, some, cfg);
    for (std::size_t i = 0; i < part.size(); ++i) {
        CHECK(part[i].graph_id == big[i].graph_id);
        CHECK(part[i].paths == big[i].paths);
    }

    cfg.per_class = 100000;
    CHECK_THROWS(select_stimuli(set, cfg));
}

TEST_CASE("paths-embed smoke run and worker invariance")
{
    QuietLog quiet;
    auto cfg = small(Experiment::PathsEmbed);
    cfg.classes = {0, 1};
    cfg.per_class = 0;
    cfg.subset = 10;
    const auto serial = run_paths_embed(cfg);
    CHECK(serial.items == 10);
    CHECK(serial.report.total() == serial.report.repeats);  // one query per repeat
    CHECK(serial.embedding.space.rows() == 10);
    CHECK(serial.pca.projected.rows() == 10);

    cfg.subset = 40;
    const auto a = run_paths_embed(cfg);
    cfg.workers = 3;
    const auto b = run_paths_embed(cfg);
    CHECK(to_json(a).dump() == to_json(b).dump());
    CHECK(a.embedding.space.values == b.embedding.space.values);
}

TEST_CASE("zero plasticity leaves the two stdp-compare arms identical")
{
    QuietLog quiet;
    auto cfg = small(Experiment::StdpCompare);
    cfg.per_class = 15;
    cfg.trials = 1;
    cfg.stdp.a_plus = 0;
    cfg.stdp.a_minus = 0;
    const auto r = run_stdp_compare(cfg);
    REQUIRE(r.trials.size() == 1);
    CHECK(classify::to_json(r.trials[0].plain) == classify::to_json(r.trials[0].stdp));
    CHECK(r.trials[0].delta.frac_unchanged == 1.0);
    CHECK(r.plain_mean == r.stdp_mean);

    cfg.stdp = {};
    const auto changed = run_stdp_compare(cfg);
    CHECK(changed.trials[0].delta.frac_unchanged < 1.0);
}

TEST_CASE("weight-traj smoke run emits one point per snapshot")
{
    QuietLog quiet;
    auto cfg = small(Experiment::WeightTraj);
    cfg.subset = 20;
    cfg.reservoir_sizes = {5};
    const auto r = run_weight_traj(cfg);
    REQUIRE(r.sizes.size() == 1);
    REQUIRE(r.sizes[0].curve.size() == 6);
    for (std::size_t s = 0; s < 6; ++s) CHECK(r.sizes[0].curve[s].time_ms == doctest::Approx(100.0 * double(s + 1)));
    CHECK(r.sizes[0].mean_activations > 0);
    CHECK_NOTHROW(r.sizes[0].at(300));
    CHECK_THROWS(r.sizes[0].at(250));

    cfg.eval_times_ms = {300};
    cfg.workers = 2;
    const auto only = run_weight_traj(cfg);
    REQUIRE(only.sizes[0].curve.size() == 1);
    CHECK(classify::to_json(only.sizes[0].curve[0].report) == classify::to_json(r.sizes[0].at(300)));

    cfg.eval_times_ms = {250};
    CHECK_THROWS(run_weight_traj(cfg));
}

TEST_CASE("ann-baseline table rows")
{
    QuietLog quiet;
    auto cfg = small(Experiment::AnnBaseline);
    cfg.hidden_sizes = {5, 10};
    cfg.subset = 300;
    cfg.split.repeats = 2;
    cfg.train.max_epochs = 300;
    const auto r = run_ann_baseline(cfg);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].params_table == 3925);
    CHECK(r.rows[1].params_table == 7850);
    CHECK(r.rows[0].result.report.repeats == 2);
    CHECK(r.rows[0].result.report.total() == 2 * 30);
}

TEST_CASE("run directories hold hashed, byte-reproducible artifacts")
{
    QuietLog quiet;
    const auto root = scratch_dir("runs");
    auto cfg = small(Experiment::PathsEmbed);
    cfg.name = "smoke";
    cfg.classes = {4, 9};
    cfg.per_class = 6;
    run_experiment(cfg, root);
    run_experiment(cfg, root);

    std::vector<fs::path> runs;
    for (const auto &entry : fs::directory_iterator(root)) runs.push_back(entry.path());
    REQUIRE(runs.size() == 2);
    std::sort(runs.begin(), runs.end());
    CHECK(runs[0].filename().string().find("-smoke") != std::string::npos);

    const auto manifest = nlohmann::json::parse(slurp(runs[0] / "manifest.json"));
    CHECK(manifest.at("experiment") == "paths-embed");
    CHECK(manifest.contains("tool_version"));
    CHECK(manifest.at("timings_s").contains("total"));
    std::size_t reports = 0;
    for (const auto &artifact : manifest.at("artifacts")) {
        const auto p = runs[0] / artifact.at("path").get<std::string>();
        REQUIRE(fs::exists(p));
        CHECK(artifact.at("sha256") == sha256_file(p));
        CHECK(artifact.at("bytes") == fs::file_size(p));
        if (artifact.at("kind") == "report") {
            ++reports;
            CHECK(slurp(p) == slurp(runs[1] / artifact.at("path").get<std::string>()));
        }
    }
    CHECK(reports >= 2);
    CHECK(load_config(runs[0] / "config.toml").seed == cfg.seed);

    RunDirectory dir(root, cfg);
    dir.add("missing.csv", "report");
    CHECK_THROWS(dir.finish({}));
}

TEST_CASE("shipped configs parse")
{
    std::size_t n = 0;
    for (const auto &entry : fs::directory_iterator(CRDM_CONFIG_DIR)) {
        if (entry.path().extension() != ".toml") continue;
        INFO(entry.path().string());
        CHECK_NOTHROW(load_config(entry.path()));
        ++n;
    }
    CHECK(n >= 4);
    const auto desk = load_config(fs::path(CRDM_CONFIG_DIR) / "weight-traj-desk.toml");
    CHECK(desk.subset == 2000);
    CHECK(desk.eval_times_ms == std::vector<double>{100, 300});
}
