#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <toml.hpp>

#include "crdm/expctl.hpp"

namespace crdm::expctl {

namespace {

struct Field
{
    std::string section;  // empty for top-level keys
    std::string key;
    std::function<void(ExperimentConfig &, const toml::node &)> set;
    std::function<void(const ExperimentConfig &, toml::table &)> put;
};

[[noreturn]] void bad(const Field &f, const std::string &why)
{
    throw std::invalid_argument((f.section.empty() ? f.key : f.section + "." + f.key) + ": " + why);
}

template <typename Ref>
Field real(std::string section, std::string key, Ref ref)
{
    Field f{section, key, {}, {}};
    f.set = [f, ref](ExperimentConfig &c, const toml::node &n) {
        const auto v = n.value<double>();
        if (!v) bad(f, "expected a number");
        ref(c) = *v;
    };
    f.put = [key, ref](const ExperimentConfig &c, toml::table &t) {
        t.insert_or_assign(key, ref(const_cast<ExperimentConfig &>(c)));
    };
    return f;
}

template <typename Ref>
Field count(std::string section, std::string key, Ref ref)
{
    Field f{section, key, {}, {}};
    f.set = [f, ref](ExperimentConfig &c, const toml::node &n) {
        const auto v = n.value<std::int64_t>();
        if (!v || *v < 0 || !n.is_integer()) bad(f, "expected a non-negative integer");
        using T = std::remove_reference_t<decltype(ref(c))>;
        ref(c) = static_cast<T>(*v);
    };
    f.put = [key, ref](const ExperimentConfig &c, toml::table &t) {
        t.insert_or_assign(key, static_cast<std::int64_t>(ref(const_cast<ExperimentConfig &>(c))));
    };
    return f;
}

template <typename Ref>
Field flag(std::string section, std::string key, Ref ref)
{
    Field f{section, key, {}, {}};
    f.set = [f, ref](ExperimentConfig &c, const toml::node &n) {
        const auto v = n.value<bool>();
        if (!v) bad(f, "expected true or false");
        ref(c) = *v;
    };
    f.put = [key, ref](const ExperimentConfig &c, toml::table &t) {
        t.insert_or_assign(key, static_cast<bool>(ref(const_cast<ExperimentConfig &>(c))));
    };
    return f;
}

template <typename Ref, typename Parse, typename Show>
Field text(std::string section, std::string key, Ref ref, Parse parse, Show show)
{
    Field f{section, key, {}, {}};
    f.set = [f, ref, parse](ExperimentConfig &c, const toml::node &n) {
        const auto v = n.value<std::string>();
        if (!v) bad(f, "expected a string");
        try {
            ref(c) = parse(*v);
        } catch (const std::invalid_argument &e) {
            bad(f, e.what());
        }
    };
    f.put = [key, ref, show](const ExperimentConfig &c, toml::table &t) {
        t.insert_or_assign(key, show(ref(const_cast<ExperimentConfig &>(c))));
    };
    return f;
}

template <typename T, typename Ref>
Field list(std::string section, std::string key, Ref ref)
{
    Field f{section, key, {}, {}};
    f.set = [f, ref](ExperimentConfig &c, const toml::node &n) {
        const auto *arr = n.as_array();
        if (!arr) bad(f, "expected an array");
        std::vector<T> out;
        for (const auto &item : *arr) {
            if constexpr (std::is_floating_point_v<T>) {
                const auto v = item.value<double>();
                if (!v) bad(f, "expected numbers");
                out.push_back(*v);
            } else {
                const auto v = item.value<std::int64_t>();
                if (!v || !item.is_integer() || *v < 0) bad(f, "expected non-negative integers");
                out.push_back(static_cast<T>(*v));
            }
        }
        ref(c) = std::move(out);
    };
    f.put = [key, ref](const ExperimentConfig &c, toml::table &t) {
        toml::array arr;
        for (auto v : ref(const_cast<ExperimentConfig &>(c))) {
            if constexpr (std::is_floating_point_v<T>) arr.push_back(v);
            else arr.push_back(static_cast<std::int64_t>(v));
        }
        t.insert_or_assign(key, std::move(arr));
    };
    return f;
}

std::string source_name(data::Source s)
{
    switch (s) {
    case data::Source::Train: return "train";
    case data::Source::Test: return "test";
    default: return "unknown";
    }
}

data::Source source_from(const std::string &s)
{
    if (s == "train") return data::Source::Train;
    if (s == "test") return data::Source::Test;
    throw std::invalid_argument("source must be train or test");
}

std::string stimulus_name(sim::StimulusMode m)
{
    return m == sim::StimulusMode::Tonic ? "tonic" : "single";
}

sim::StimulusMode stimulus_from(const std::string &s)
{
    if (s == "single") return sim::StimulusMode::SingleVolley;
    if (s == "tonic") return sim::StimulusMode::Tonic;
    throw std::invalid_argument("stimulus must be single or tonic");
}

std::string scope_name(plasticity::Scope s)
{
    return s == plasticity::Scope::All ? "all" : "recurrent";
}

plasticity::Scope scope_from(const std::string &s)
{
    if (s == "all") return plasticity::Scope::All;
    if (s == "recurrent") return plasticity::Scope::Recurrent;
    throw std::invalid_argument("scope must be all or recurrent");
}

#define REF(expr) [](ExperimentConfig &c) -> auto & { return c.expr; }

const std::vector<Field> &fields()
{
    static const std::vector<Field> all = [] {
        std::vector<Field> v;
        const auto same = [](const std::string &s) { return s; };
        v.push_back(text("", "experiment", REF(experiment), experiment_from_string,
                         [](Experiment e) { return to_string(e); }));
        v.push_back(text("", "name", REF(name), same, same));
        v.push_back(count("", "seed", REF(seed)));
        v.push_back(count("", "trials", REF(trials)));
        v.push_back(count("", "workers", REF(workers)));

        v.push_back(text("data", "dir", REF(data_dir), [](const std::string &s) { return std::filesystem::path(s); },
                         [](const std::filesystem::path &p) { return p.string(); }));
        v.push_back(text("data", "source", REF(source), source_from, source_name));
        v.push_back(list<int>("data", "classes", REF(classes)));
        v.push_back(count("data", "per_class", REF(per_class)));
        v.push_back(count("data", "subset", REF(subset)));

        v.push_back(count("network", "n_input", REF(sbm.n_input)));
        v.push_back(count("network", "n_hidden", REF(sbm.n_hidden)));
        v.push_back(real("network", "p_in_hidden", REF(sbm.p_in_hidden)));
        v.push_back(real("network", "p_between", REF(sbm.p_between)));
        v.push_back(list<std::size_t>("network", "reservoir_sizes", REF(reservoir_sizes)));
        v.push_back(flag("network", "self_loops", REF(self_loops)));

        v.push_back(real("physiology", "tick_ms", REF(physiology.tick_ms)));
        v.push_back(real("physiology", "refractory_ms", REF(physiology.refractory_ms)));
        v.push_back(real("physiology", "threshold", REF(physiology.threshold)));
        v.push_back(real("physiology", "weight_lo", REF(physiology.weight_lo)));
        v.push_back(real("physiology", "weight_hi", REF(physiology.weight_hi)));
        v.push_back(real("physiology", "excitatory_fraction", REF(physiology.excitatory_fraction)));
        v.push_back(real("physiology", "velocity", REF(physiology.velocity)));
        v.push_back(real("physiology", "input_gain", REF(physiology.input_gain)));
        v.push_back(real("physiology", "hidden_gain", REF(physiology.hidden_gain)));

        v.push_back(real("engine", "horizon_ms", REF(horizon_ms)));
        v.push_back(text("engine", "stimulus", REF(stimulus), stimulus_from, stimulus_name));
        v.push_back(real("engine", "period_ms", REF(period_ms)));
        v.push_back(real("engine", "window_ms", REF(engine.summation_window_ms)));
        v.push_back(count("engine", "max_steps", REF(engine.max_steps)));
        v.push_back(count("engine", "max_events", REF(engine.max_events)));

        v.push_back(real("plasticity", "a_plus", REF(stdp.a_plus)));
        v.push_back(real("plasticity", "a_minus", REF(stdp.a_minus)));
        v.push_back(real("plasticity", "tau_plus_ms", REF(stdp.tau_plus_ms)));
        v.push_back(real("plasticity", "tau_minus_ms", REF(stdp.tau_minus_ms)));
        v.push_back(real("plasticity", "w_max", REF(stdp.w_max)));
        v.push_back(text("plasticity", "scope", REF(stdp_scope), scope_from, scope_name));
        v.push_back(real("plasticity", "snapshot_ms", REF(snapshot_ms)));
        v.push_back(list<double>("plasticity", "eval_times_ms", REF(eval_times_ms)));
        v.push_back(real("plasticity", "delta_tol", REF(delta_tol)));

        v.push_back(count("paths", "max_len", REF(paths.max_len)));
        v.push_back(count("paths", "per_source", REF(paths.max_paths_per_source)));
        v.push_back(flag("paths", "prefixes", REF(paths.emit_prefixes)));

        v.push_back(count("embedding", "dim", REF(embedding.dim)));
        v.push_back(count("embedding", "window", REF(embedding.window)));
        v.push_back(count("embedding", "negatives", REF(embedding.negatives)));
        v.push_back(count("embedding", "epochs", REF(embedding.epochs)));
        v.push_back(real("embedding", "learning_rate", REF(embedding.learning_rate)));
        v.push_back(real("embedding", "min_learning_rate_fraction", REF(embedding.min_learning_rate_fraction)));
        v.push_back(flag("embedding", "train_words", REF(embedding.train_words)));
        v.push_back(count("embedding", "pca_components", REF(pca_components)));

        v.push_back(
            count("knn", "k", [](ExperimentConfig &c) -> int & { return c.knn.k; }));
        v.push_back(text("knn", "metric", REF(knn.metric), metric_from_string, [](Metric m) { return to_string(m); }));
        v.push_back(text("knn", "weighting", REF(knn.weighting), classify::weighting_from_string,
                         [](classify::Weighting w) { return classify::to_string(w); }));
        v.push_back(real("knn", "epsilon", REF(knn.epsilon)));

        v.push_back(count("split", "embedding", REF(split.embedding_count)));
        v.push_back(count("split", "query", REF(split.query_count)));
        v.push_back(count("split", "repeats", REF(split.repeats)));

        v.push_back(list<std::size_t>("ann", "hidden_sizes", REF(hidden_sizes)));
        v.push_back(count("ann", "max_epochs", REF(train.max_epochs)));
        v.push_back(real("ann", "loss_target", REF(train.loss_target)));
        v.push_back(real("ann", "learning_rate", REF(train.adam.learning_rate)));
        v.push_back(real("ann", "beta1", REF(train.adam.beta1)));
        v.push_back(real("ann", "beta2", REF(train.adam.beta2)));
        v.push_back(real("ann", "epsilon", REF(train.adam.epsilon)));
        v.push_back(text("ann", "train_source", REF(ann_train_source), source_from, source_name));
        return v;
    }();
    return all;
}

#undef REF

const Field *find_field(const std::string &section, const std::string &key)
{
    for (const auto &f : fields()) {
        if (f.section == section && f.key == key) return &f;
    }
    return nullptr;
}

void apply_table(ExperimentConfig &cfg, const toml::table &doc)
{
    for (const auto &[k, node] : doc) {
        const std::string key(k.str());
        if (key == "experiment") continue;
        if (const auto *section = node.as_table()) {
            for (const auto &[sk, inner] : *section) {
                const auto *f = find_field(key, std::string(sk.str()));
                if (!f) throw std::invalid_argument("unknown config key " + key + "." + std::string(sk.str()));
                f->set(cfg, inner);
            }
            continue;
        }
        const auto *f = find_field("", key);
        if (!f) throw std::invalid_argument("unknown config key " + key);
        f->set(cfg, node);
    }
}

}  // namespace

ExperimentConfig parse_config(const std::string &toml_text)
{
    toml::table doc;
    try {
        doc = toml::parse(toml_text);
    } catch (const toml::parse_error &e) {
        std::ostringstream msg;
        msg << "config parse error: " << e.description() << " at line " << e.source().begin.line;
        throw std::invalid_argument(msg.str());
    }
    const auto name = doc["experiment"].value<std::string>();
    if (!name) throw std::invalid_argument("config lacks an experiment key");
    auto cfg = defaults_for(experiment_from_string(*name));
    apply_table(cfg, doc);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

void apply_override(ExperimentConfig &cfg, const std::string &assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("override must look like section.key=value");
    const auto lhs = assignment.substr(0, eq);
    const auto dot = lhs.find('.');
    const std::string section = dot == std::string::npos ? "" : lhs.substr(0, dot);
    const std::string key = dot == std::string::npos ? lhs : lhs.substr(dot + 1);
    const auto *f = find_field(section, key);
    if (!f || f->key == "experiment") throw std::invalid_argument("unknown config key " + lhs);

    const auto value = assignment.substr(eq + 1);
    toml::table parsed;
    try {
        parsed = toml::parse("v = " + value);
    } catch (const toml::parse_error &) {
        // bare words such as metric=euclidean are strings
        parsed.insert_or_assign("v", value);
    }
    f->set(cfg, *parsed.get("v"));
}

std::vector<std::string> config_keys()
{
    std::vector<std::string> keys;
    for (const auto &f : fields()) {
        if (f.key != "experiment") keys.push_back(f.section.empty() ? f.key : f.section + "." + f.key);
    }
    return keys;
}

std::string to_toml(const ExperimentConfig &cfg)
{
    toml::table root;
    for (const auto &f : fields()) {
        if (f.section.empty()) {
            f.put(cfg, root);
            continue;
        }
        if (!root.contains(f.section)) root.insert(f.section, toml::table{});
        f.put(cfg, *root.get_as<toml::table>(f.section));
    }
    std::ostringstream out;
    out << root << "\n";
    return out.str();
}

nlohmann::json to_json(const ExperimentConfig &cfg)
{
    toml::table root;
    for (const auto &f : fields()) {
        if (f.section.empty()) {
            f.put(cfg, root);
            continue;
        }
        if (!root.contains(f.section)) root.insert(f.section, toml::table{});
        f.put(cfg, *root.get_as<toml::table>(f.section));
    }
    std::ostringstream out;
    out << toml::json_formatter{root};
    return nlohmann::json::parse(out.str());
}

}  // namespace crdm::expctl
