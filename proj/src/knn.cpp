#include "crdm/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace crdm::classify {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows considered beyond k when re-ranking float scan results exactly.
constexpr std::size_t kRerankSlack = 32;
// Bound on float scratch per block (query rows x space rows).
constexpr std::size_t kBlockCells = std::size_t{1} << 24;

double squared_norm(std::span<const float> v)
{
    double s = 0;
    for (float x : v) s += static_cast<double>(x) * x;
    return s;
}

bool closer(const Neighbor &a, const Neighbor &b)
{
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

}  // namespace

std::string to_string(Weighting weighting)
{
    return weighting == Weighting::Majority ? "majority" : "inverse-distance";
}

Weighting weighting_from_string(const std::string &name)
{
    if (name == "majority") return Weighting::Majority;
    if (name == "inverse-distance") return Weighting::InverseDistance;
    throw std::invalid_argument("unknown weighting '" + name + "'");
}

void KnnConfig::validate() const
{
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
}

double distance(std::span<const float> a, std::span<const float> b, Metric metric)
{
    if (a.size() != b.size()) throw std::invalid_argument("distance between vectors of different length");
    if (metric == Metric::Euclidean) {
        double s = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = static_cast<double>(a[i]) - b[i];
            s += d * d;
        }
        return std::sqrt(s);
    }
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0 || nb == 0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

int vote(std::span<const Neighbor> neighbors, std::span<const int> labels, const KnnConfig &cfg)
{
    if (neighbors.empty()) throw std::invalid_argument("vote over no neighbours");
    int max_label = 0;
    for (const auto &n : neighbors) max_label = std::max(max_label, labels[n.index]);
    std::vector<double> score(static_cast<std::size_t>(max_label) + 1, 0.0);
    for (const auto &n : neighbors) {
        const double w = cfg.weighting == Weighting::Majority ? 1.0 : 1.0 / (n.distance + cfg.epsilon);
        score[static_cast<std::size_t>(labels[n.index])] += w;
    }
    // max_element returns the first maximum, i.e. the smallest label on ties.
    return static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
}

int knn_predict(const EmbeddingSpace &space, std::span<const float> query, const KnnConfig &cfg)
{
    cfg.validate();
    if (space.rows() == 0) throw std::invalid_argument("kNN over an empty space");
    if (query.size() != space.dim) throw std::invalid_argument("query dimension mismatch");

    std::vector<Neighbor> all(space.rows());
    for (std::size_t i = 0; i < space.rows(); ++i) all[i] = {i, distance(space.row(i), query, cfg.metric)};
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(cfg.k), all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    return vote(std::span(all).first(k), space.labels, cfg);
}

std::vector<int> predict_block(const EmbeddingSpace &items, std::span<const std::size_t> space_rows,
                               std::span<const std::size_t> query_rows, const KnnConfig &cfg)
{
    cfg.validate();
    if (space_rows.empty()) throw std::invalid_argument("kNN over an empty space");
    const auto dim = static_cast<Eigen::Index>(items.dim);
    const auto ns = space_rows.size();
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(cfg.k), ns);
    const auto candidates = std::min(ns, k + kRerankSlack);

    RowMatrix space(static_cast<Eigen::Index>(ns), dim);
    Eigen::VectorXd space_norm(static_cast<Eigen::Index>(ns));
    for (std::size_t i = 0; i < ns; ++i) {
        const auto r = items.row(space_rows[i]);
        std::copy(r.begin(), r.end(), space.row(static_cast<Eigen::Index>(i)).data());
        space_norm[static_cast<Eigen::Index>(i)] = squared_norm(r);
    }

    std::vector<int> space_labels(ns);
    for (std::size_t i = 0; i < ns; ++i) space_labels[i] = items.labels[space_rows[i]];

    const std::size_t block = std::max<std::size_t>(1, kBlockCells / ns);
    std::vector<int> out(query_rows.size());
    std::vector<Neighbor> approx(ns);
    for (std::size_t q0 = 0; q0 < query_rows.size(); q0 += block) {
        const auto nq = std::min(block, query_rows.size() - q0);
        RowMatrix queries(static_cast<Eigen::Index>(nq), dim);
        for (std::size_t j = 0; j < nq; ++j) {
            const auto r = items.row(query_rows[q0 + j]);
            std::copy(r.begin(), r.end(), queries.row(static_cast<Eigen::Index>(j)).data());
        }
        const Eigen::MatrixXf dots = queries * space.transpose();

        for (std::size_t j = 0; j < nq; ++j) {
            const auto query = items.row(query_rows[q0 + j]);
            const double qn = squared_norm(query);
            for (std::size_t i = 0; i < ns; ++i) {
                const double dot = dots(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
                const double sn = space_norm[static_cast<Eigen::Index>(i)];
                double d;
                if (cfg.metric == Metric::Euclidean) {
                    d = qn + sn - 2.0 * dot;
                } else {
                    d = (qn == 0 || sn == 0) ? 1.0 : 1.0 - dot / std::sqrt(qn * sn);
                }
                approx[i] = {i, d};
            }
            std::partial_sort(approx.begin(), approx.begin() + static_cast<std::ptrdiff_t>(candidates), approx.end(),
                              closer);
            for (std::size_t c = 0; c < candidates; ++c) {
                approx[c].distance = distance(items.row(space_rows[approx[c].index]), query, cfg.metric);
            }
            std::sort(approx.begin(), approx.begin() + static_cast<std::ptrdiff_t>(candidates), closer);
            out[q0 + j] = vote(std::span(approx).first(k), space_labels, cfg);
        }
    }
    return out;
}

std::size_t EvalReport::total() const
{
    std::size_t n = 0;
    for (const auto &row : confusion) n = std::accumulate(row.begin(), row.end(), n);
    return n;
}

std::size_t EvalReport::correct() const
{
    std::size_t n = 0;
    for (std::size_t c = 0; c < confusion.size(); ++c) n += confusion[c][c];
    return n;
}

void add_repeat(EvalReport &report, std::span<const int> truth, std::span<const int> predicted)
{
    if (truth.size() != predicted.size() || truth.empty()) throw std::invalid_argument("bad repeat predictions");
    for (std::size_t j = 0; j < truth.size(); ++j) {
        if (truth[j] < 0 || truth[j] >= data::kClassCount || predicted[j] < 0 || predicted[j] >= data::kClassCount) {
            throw std::invalid_argument("labels must lie in 0..9");
        }
    }
    std::size_t hits = 0;
    for (std::size_t j = 0; j < truth.size(); ++j) {
        ++report.confusion[static_cast<std::size_t>(truth[j])][static_cast<std::size_t>(predicted[j])];
        hits += truth[j] == predicted[j];
    }
    report.repeat_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(truth.size()));
    report.repeats = report.repeat_accuracy.size();
}

void finalize(EvalReport &report)
{
    const auto n = static_cast<double>(report.repeat_accuracy.size());
    report.accuracy_mean = report.total() ? static_cast<double>(report.correct()) / static_cast<double>(report.total()) : 0;
    double ss = 0;
    for (double a : report.repeat_accuracy) ss += (a - report.accuracy_mean) * (a - report.accuracy_mean);
    report.accuracy_std = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;

    for (std::size_t c = 0; c < data::kClassCount; ++c) {
        const auto row_total = std::accumulate(report.confusion[c].begin(), report.confusion[c].end(), std::size_t{0});
        report.per_class_count[c] = row_total;
        report.per_class_accuracy[c] =
            row_total == 0 ? 0.0 : static_cast<double>(report.confusion[c][c]) / static_cast<double>(row_total);
    }
}

EvalReport evaluate(const EmbeddingSpace &items, const data::SplitPlan &plan, const KnnConfig &cfg)
{
    items.validate();
    if (plan.embedding_count == 0 || plan.query_count == 0) throw std::invalid_argument("empty split plan");

    EvalReport report;
    std::vector<int> truth;
    for (std::size_t r = 0; r < plan.repeats; ++r) {
        const auto parts = data::split(items.rows(), plan, r);
        const auto predicted = predict_block(items, parts.embedding, parts.query, cfg);
        truth.clear();
        for (auto q : parts.query) truth.push_back(items.labels[q]);
        add_repeat(report, truth, predicted);
    }
    finalize(report);
    return report;
}

std::vector<TimePoint> accuracy_vs_time(std::span<const EmbeddingSpace> spaces, std::span<const double> sample_times,
                                        const data::SplitPlan &plan, const KnnConfig &cfg)
{
    if (spaces.size() != sample_times.size()) throw std::invalid_argument("one space per sample time required");
    std::vector<TimePoint> curve;
    for (std::size_t s = 0; s < spaces.size(); ++s) {
        if (spaces[s].rows() != spaces.front().rows() || spaces[s].labels != spaces.front().labels) {
            throw std::invalid_argument("ragged trajectories: sample spaces disagree on items");
        }
        curve.push_back({sample_times[s], evaluate(spaces[s], plan, cfg)});
    }
    return curve;
}

nlohmann::json to_json(const EvalReport &report)
{
    nlohmann::json confusion = nlohmann::json::array();
    for (const auto &row : report.confusion) confusion.push_back(row);
    return {{"accuracy_mean", report.accuracy_mean},
            {"accuracy_std", report.accuracy_std},
            {"repeats", report.repeats},
            {"repeat_accuracy", report.repeat_accuracy},
            {"per_class_accuracy", report.per_class_accuracy},
            {"per_class_count", report.per_class_count},
            {"confusion", std::move(confusion)}};
}

std::string csv_header()
{
    std::string h = "tag,accuracy_mean,accuracy_std,repeats";
    for (int c = 0; c < data::kClassCount; ++c) h += ",class" + std::to_string(c);
    return h;
}

std::string to_csv_row(const EvalReport &report, const std::string &tag)
{
    std::ostringstream out;
    out.precision(6);
    out << tag << ',' << report.accuracy_mean << ',' << report.accuracy_std << ',' << report.repeats;
    for (double a : report.per_class_accuracy) out << ',' << a;
    return out.str();
}

}  // namespace crdm::classify
