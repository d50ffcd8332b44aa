#include "crdm/ann.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "crdm/plasticity.hpp"
#include "crdm/rng.hpp"

namespace crdm::ann {

namespace {

constexpr Eigen::Index kInputs = data::kPixelCount;
constexpr Eigen::Index kOutputs = data::kClassCount;

Gradients zero_like(const MlpModel &model)
{
    return {Eigen::MatrixXd::Zero(model.w1.rows(), model.w1.cols()), Eigen::VectorXd::Zero(model.b1.size()),
            Eigen::MatrixXd::Zero(model.w2.rows(), model.w2.cols()), Eigen::VectorXd::Zero(model.b2.size())};
}

template <typename Param, typename Grad>
void adam_update(Param &p, const Grad &g, Grad &m, Grad &v, const AdamConfig &c, double correction1,
                 double correction2)
{
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g.cwiseProduct(g);
    p.array() -= c.learning_rate * (m.array() / correction1) / ((v.array() / correction2).sqrt() + c.epsilon);
}

Eigen::MatrixXd input_matrix(std::span<const data::Image> images)
{
    Eigen::MatrixXd x(kInputs, static_cast<Eigen::Index>(images.size()));
    for (std::size_t i = 0; i < images.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = to_input(images[i]);
    return x;
}

}  // namespace

std::size_t MlpModel::parameter_count() const
{
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

void MlpModel::validate() const
{
    const auto h = b1.size();
    if (h < 1) throw std::invalid_argument("hidden layer must have at least one unit");
    if (w1.rows() != kInputs || w1.cols() != h || w2.rows() != h || w2.cols() != kOutputs || b2.size() != kOutputs) {
        throw std::invalid_argument("inconsistent MLP shapes");
    }
    if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite()) {
        throw std::invalid_argument("non-finite MLP parameter");
    }
}

MlpModel MlpModel::random(std::size_t hidden, std::uint64_t seed)
{
    MlpModel m = zeros(hidden);
    Rng rng(seed);
    const auto fill = [&](auto &block, double fan_in) {
        const double bound = 1.0 / std::sqrt(fan_in);
        for (Eigen::Index j = 0; j < block.cols(); ++j) {
            for (Eigen::Index i = 0; i < block.rows(); ++i) block(i, j) = rng.uniform(-bound, bound);
        }
    };
    fill(m.w1, static_cast<double>(kInputs));
    fill(m.b1, static_cast<double>(kInputs));
    fill(m.w2, static_cast<double>(hidden));
    fill(m.b2, static_cast<double>(hidden));
    return m;
}

MlpModel MlpModel::zeros(std::size_t hidden)
{
    if (hidden < 1) throw std::invalid_argument("hidden layer must have at least one unit");
    const auto h = static_cast<Eigen::Index>(hidden);
    return {Eigen::MatrixXd::Zero(kInputs, h), Eigen::VectorXd::Zero(h), Eigen::MatrixXd::Zero(h, kOutputs),
            Eigen::VectorXd::Zero(kOutputs)};
}

Eigen::VectorXd to_input(const data::Image &image)
{
    Eigen::VectorXd x(kInputs);
    for (Eigen::Index i = 0; i < kInputs; ++i) x[i] = image[static_cast<std::size_t>(i)] / 255.0;
    return x;
}

Forward forward(const MlpModel &model, const Eigen::VectorXd &x)
{
    Forward f;
    f.hidden = (model.w1.transpose() * x + model.b1).cwiseMax(0.0);
    f.logits = model.w2.transpose() * f.hidden + model.b2;
    return f;
}

Eigen::VectorXd softmax(const Eigen::VectorXd &logits)
{
    const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

double cross_entropy(const Eigen::VectorXd &logits, int label)
{
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return lse - logits[label];
}

double loss_and_gradients(const MlpModel &model, const Eigen::MatrixXd &inputs, std::span<const int> labels,
                          Gradients &grad)
{
    const auto batch = inputs.cols();
    if (static_cast<std::size_t>(batch) != labels.size() || batch == 0) throw std::invalid_argument("batch mismatch");

    const Eigen::MatrixXd pre = (model.w1.transpose() * inputs).colwise() + model.b1;
    const Eigen::MatrixXd hidden = pre.cwiseMax(0.0);
    const Eigen::MatrixXd logits = (model.w2.transpose() * hidden).colwise() + model.b2;

    Eigen::MatrixXd dlogits(kOutputs, batch);
    double loss = 0;
    for (Eigen::Index b = 0; b < batch; ++b) {
        const auto label = labels[static_cast<std::size_t>(b)];
        loss += cross_entropy(logits.col(b), label);
        dlogits.col(b) = softmax(logits.col(b));
        dlogits(label, b) -= 1.0;
    }
    dlogits /= static_cast<double>(batch);

    grad.w2 = hidden * dlogits.transpose();
    grad.b2 = dlogits.rowwise().sum();
    const Eigen::MatrixXd dpre = (model.w2 * dlogits).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    grad.w1 = inputs * dpre.transpose();
    grad.b1 = dpre.rowwise().sum();
    return loss / static_cast<double>(batch);
}

Adam::Adam(const MlpModel &model, AdamConfig config) : config_(config), m_(zero_like(model)), v_(zero_like(model)) {}

void Adam::step(MlpModel &model, const Gradients &grad)
{
    ++step_;
    const double c1 = 1 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1 - std::pow(config_.beta2, static_cast<double>(step_));
    adam_update(model.w1, grad.w1, m_.w1, v_.w1, config_, c1, c2);
    adam_update(model.b1, grad.b1, m_.b1, v_.b1, config_, c1, c2);
    adam_update(model.w2, grad.w2, m_.w2, v_.w2, config_, c1, c2);
    adam_update(model.b2, grad.b2, m_.b2, v_.b2, config_, c1, c2);
}

TrainReport train_one_shot(MlpModel &model, std::span<const data::Image> examples, std::span<const int> labels,
                           const TrainConfig &config)
{
    model.validate();
    if (examples.size() != data::kClassCount || labels.size() != examples.size()) {
        throw std::invalid_argument("one-shot training needs exactly one example per class");
    }
    std::array<bool, data::kClassCount> seen{};
    for (int l : labels) {
        if (l < 0 || l >= data::kClassCount || seen[static_cast<std::size_t>(l)]) {
            throw std::invalid_argument("one-shot training needs exactly one example per class");
        }
        seen[static_cast<std::size_t>(l)] = true;
    }

    const Eigen::MatrixXd x = input_matrix(examples);
    Adam adam(model, config.adam);
    Gradients grad = zero_like(model);
    TrainReport report;

    const auto accuracy = [&] {
        std::size_t hits = 0;
        for (Eigen::Index b = 0; b < x.cols(); ++b) {
            Eigen::Index arg;
            forward(model, x.col(b)).logits.maxCoeff(&arg);
            hits += arg == labels[static_cast<std::size_t>(b)];
        }
        return static_cast<double>(hits) / static_cast<double>(x.cols());
    };

    double loss = loss_and_gradients(model, x, labels, grad);
    report.initial_loss = loss;
    while (true) {
        report.train_accuracy = accuracy();
        if (report.train_accuracy == 1.0 && loss < config.loss_target) {
            report.converged = true;
            break;
        }
        if (report.epochs >= config.max_epochs) break;
        adam.step(model, grad);
        ++report.epochs;
        loss = loss_and_gradients(model, x, labels, grad);
    }
    report.final_loss = loss;
    return report;
}

EmbeddingSpace embed_hidden(const MlpModel &model, std::span<const data::Image> images, std::span<const int> labels)
{
    model.validate();
    if (images.size() != labels.size()) throw std::invalid_argument("one label per image required");
    EmbeddingSpace space(model.hidden(), Metric::Cosine, ItemKind::HiddenActivation);
    space.reserve(images.size());

    constexpr std::size_t kBatch = 1024;
    std::vector<float> row(model.hidden());
    for (std::size_t start = 0; start < images.size(); start += kBatch) {
        const auto n = std::min(kBatch, images.size() - start);
        const Eigen::MatrixXd hidden =
            ((model.w1.transpose() * input_matrix(images.subspan(start, n))).colwise() + model.b1).cwiseMax(0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t h = 0; h < row.size(); ++h) {
                row[h] = static_cast<float>(hidden(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(i)));
            }
            space.push_back(std::span<const float>(row), labels[start + i]);
        }
    }
    return space;
}

std::size_t count_params(ParamKind kind, std::size_t size)
{
    if (size < 1) throw std::invalid_argument("size must be at least 1");
    return kind == ParamKind::Ann ? 785 * size : size * size + 3 * size;
}

std::size_t count_params_full(ParamKind kind, std::size_t size, bool self_loops)
{
    if (size < 1) throw std::invalid_argument("size must be at least 1");
    if (kind == ParamKind::Ann) return 785 * size + 10 * (size + 1);
    return self_loops ? size * size : size * (size - 1);
}

void save_model(const MlpModel &model, const std::filesystem::path &stem)
{
    model.validate();
    const auto to_rows = [](const Eigen::MatrixXd &w, const Eigen::VectorXd &b) {
        std::vector<std::vector<double>> rows(static_cast<std::size_t>(w.rows() + 1),
                                              std::vector<double>(static_cast<std::size_t>(w.cols())));
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = w(i, j);
        }
        for (Eigen::Index j = 0; j < b.size(); ++j) rows.back()[static_cast<std::size_t>(j)] = b[j];
        return rows;
    };
    const std::string base = stem.string();
    plasticity::write_matrix(base + ".l1.bin", to_rows(model.w1, model.b1), model.hidden());
    plasticity::write_matrix(base + ".l2.bin", to_rows(model.w2, model.b2), data::kClassCount);
    const nlohmann::json meta = {{"format", "crdm-mlp"},
                                 {"version", 1},
                                 {"inputs", data::kPixelCount},
                                 {"hidden", model.hidden()},
                                 {"outputs", data::kClassCount},
                                 {"activation", "relu"},
                                 {"layer1", std::filesystem::path(base + ".l1.bin").filename().string()},
                                 {"layer2", std::filesystem::path(base + ".l2.bin").filename().string()}};
    std::ofstream out(base + ".json");
    if (!out) throw std::runtime_error("cannot write " + base + ".json");
    out << meta.dump(2) << '\n';
}

MlpModel load_model(const std::filesystem::path &stem)
{
    const std::string base = stem.string();
    std::ifstream in(base + ".json");
    if (!in) throw std::runtime_error("cannot open " + base + ".json");
    const auto meta = nlohmann::json::parse(in);
    if (meta.at("format") != "crdm-mlp") throw std::runtime_error("not an MLP model file");
    const auto hidden = meta.at("hidden").get<std::size_t>();

    MlpModel model = MlpModel::zeros(hidden);
    const auto from_rows = [](const std::vector<std::vector<double>> &rows, Eigen::MatrixXd &w, Eigen::VectorXd &b) {
        if (rows.size() != static_cast<std::size_t>(w.rows() + 1)) throw std::runtime_error("model matrix shape mismatch");
        for (Eigen::Index i = 0; i <= w.rows(); ++i) {
            const auto &row = rows[static_cast<std::size_t>(i)];
            if (row.size() != static_cast<std::size_t>(w.cols())) throw std::runtime_error("model matrix shape mismatch");
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                (i < w.rows() ? w(i, j) : b[j]) = row[static_cast<std::size_t>(j)];
            }
        }
    };
    const auto dir = stem.parent_path();
    from_rows(plasticity::read_matrix(dir / meta.at("layer1").get<std::string>()), model.w1, model.b1);
    from_rows(plasticity::read_matrix(dir / meta.at("layer2").get<std::string>()), model.w2, model.b2);
    model.validate();
    return model;
}

OneShotResult evaluate_one_shot(const data::ImageSet &train, const data::ImageSet &pool, const data::SplitPlan &plan,
                                const OneShotProtocol &protocol)
{
    std::array<std::vector<std::size_t>, data::kClassCount> by_class;
    for (std::size_t i = 0; i < train.labels.size(); ++i) by_class.at(train.labels[i]).push_back(i);
    for (const auto &members : by_class) {
        if (members.empty()) throw std::invalid_argument("training set lacks a digit class");
    }

    std::vector<int> pool_labels(pool.labels.begin(), pool.labels.end());
    OneShotResult result;
    std::vector<int> truth;
    for (std::size_t r = 0; r < plan.repeats; ++r) {
        Rng pick(derive_seed(protocol.seed, 2 * r));
        std::vector<data::Image> examples;
        std::vector<int> labels;
        for (int c = 0; c < data::kClassCount; ++c) {
            const auto &members = by_class[static_cast<std::size_t>(c)];
            examples.push_back(train.images[members[pick.below(members.size())]]);
            labels.push_back(c);
        }
        MlpModel model = MlpModel::random(protocol.hidden, derive_seed(protocol.seed, 2 * r + 1));
        const auto trained = train_one_shot(model, examples, labels, protocol.train);
        result.non_converged += !trained.converged;
        result.training.push_back(trained);

        const auto space = embed_hidden(model, pool.images, pool_labels);
        const auto parts = data::split(space.rows(), plan, r);
        const auto predicted = classify::predict_block(space, parts.embedding, parts.query, protocol.knn);
        truth.clear();
        for (auto q : parts.query) truth.push_back(space.labels[q]);
        classify::add_repeat(result.report, truth, predicted);
    }
    classify::finalize(result.report);
    return result;
}

}  // namespace crdm::ann
