#include "crdm/embed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "crdm/rng.hpp"

namespace crdm::embed {

namespace {

constexpr std::size_t kUnigramTableSize = 1'000'000;
constexpr double kUnigramPower = 0.75;
constexpr float kMaxLogit = 30.0f;

// word2vec's linear congruential generator; cheap and fully deterministic.
struct Lcg
{
    std::uint64_t state;
    std::uint64_t next()
    {
        state = state * 25214903917ULL + 11;
        return state;
    }
};

class Trainer
{
public:
    Trainer(const PathCorpus &corpus, const EmbedParams &params) : corpus_(corpus), params_(params)
    {
        const auto vocab = corpus.node_vocabulary();
        if (vocab.empty()) throw std::invalid_argument("corpus has an empty vocabulary");
        for (std::size_t i = 0; i < vocab.size(); ++i) token_of_[vocab[i]] = static_cast<std::uint32_t>(i);

        order_.resize(corpus.documents.size());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
            return corpus.documents[a].graph_id < corpus.documents[b].graph_id;
        });

        const auto dim = params.dim;
        Rng rng(derive_seed(params.seed, 0));
        const auto init = [&](std::vector<float> &v, std::size_t rows) {
            v.resize(rows * dim);
            for (auto &x : v) x = static_cast<float>((rng.uniform() - 0.5) / static_cast<double>(dim));
        };
        init(node_in_, vocab.size());
        // Graph vectors are initialised in graph_id order.
        graph_in_.resize(corpus.documents.size() * dim);
        for (auto doc : order_) {
            for (std::size_t d = 0; d < dim; ++d) {
                graph_in_[doc * dim + d] = static_cast<float>((rng.uniform() - 0.5) / static_cast<double>(dim));
            }
        }
        node_out_.assign(vocab.size() * dim, 0.0f);
        build_unigram_table(vocab.size());
        lcg_.state = derive_seed(params.seed, 1);
        scratch_.resize(dim);
    }

    GraphEmbedding run()
    {
        const double total_work = static_cast<double>(params_.epochs * corpus_.token_count());
        double done = 0;
        GraphEmbedding result;
        std::vector<std::uint32_t> sentence;

        // Paths from all documents are interleaved; visiting one document's
        // paths back to back lets its vector chase them at high learning rate.
        std::vector<std::pair<std::uint32_t, std::uint32_t>> visits;
        for (auto doc : order_) {
            for (std::size_t p = 0; p < corpus_.documents[doc].paths.size(); ++p) {
                visits.emplace_back(static_cast<std::uint32_t>(doc), static_cast<std::uint32_t>(p));
            }
        }

        for (std::size_t epoch = 0; epoch < params_.epochs; ++epoch) {
            loss_sum_ = 0;
            predictions_ = 0;
            Rng shuffler(derive_seed(params_.seed, 2 + epoch));
            shuffle(visits, shuffler);
            for (const auto &[doc, p] : visits) {
                float *graph_vec = graph_in_.data() + std::size_t{doc} * params_.dim;
                {
                    const auto &path = corpus_.documents[doc].paths[p];
                    sentence.clear();
                    for (auto node : path) sentence.push_back(token_of_.at(node));

                    for (std::size_t i = 0; i < sentence.size(); ++i) {
                        const double progress = total_work > 0 ? done / total_work : 0.0;
                        const double lr =
                            params_.learning_rate * std::max(params_.min_learning_rate_fraction, 1.0 - progress);
                        done += 1;

                        const auto center = sentence[i];
                        train_pair(graph_vec, center, static_cast<float>(lr));
                        if (!params_.train_words || params_.window == 0) continue;

                        const auto shrink = static_cast<std::size_t>(lcg_.next() % params_.window);
                        const auto reach = params_.window - shrink;
                        const auto lo = i >= reach ? i - reach : 0;
                        const auto hi = std::min(sentence.size() - 1, i + reach);
                        for (std::size_t j = lo; j <= hi; ++j) {
                            if (j == i) continue;
                            train_pair(node_in_.data() + sentence[j] * params_.dim, center, static_cast<float>(lr));
                        }
                    }
                }
            }
            result.epoch_loss.push_back(predictions_ > 0 ? loss_sum_ / static_cast<double>(predictions_) : 0.0);
        }

        result.space = EmbeddingSpace(params_.dim, Metric::Cosine, ItemKind::Graph);
        result.space.reserve(corpus_.documents.size());
        for (std::size_t doc = 0; doc < corpus_.documents.size(); ++doc) {
            result.space.push_back(std::span<const float>(graph_in_.data() + doc * params_.dim, params_.dim),
                                   corpus_.documents[doc].label);
        }
        return result;
    }

private:
    void build_unigram_table(std::size_t vocab_size)
    {
        std::vector<double> counts(vocab_size, 0.0);
        for (const auto &doc : corpus_.documents) {
            for (const auto &path : doc.paths) {
                for (auto node : path) counts[token_of_.at(node)] += 1;
            }
        }
        double norm = 0;
        for (double c : counts) norm += std::pow(c, kUnigramPower);
        table_.resize(kUnigramTableSize);
        std::size_t token = 0;
        double cumulative = std::pow(counts[0], kUnigramPower) / norm;
        for (std::size_t a = 0; a < kUnigramTableSize; ++a) {
            table_[a] = static_cast<std::uint32_t>(token);
            if (static_cast<double>(a) / kUnigramTableSize > cumulative && token + 1 < vocab_size) {
                ++token;
                cumulative += std::pow(counts[token], kUnigramPower) / norm;
            }
        }
    }

    void train_pair(float *input, std::uint32_t center, float lr)
    {
        const auto dim = params_.dim;
        std::fill(scratch_.begin(), scratch_.end(), 0.0f);
        for (std::size_t d = 0; d <= params_.negatives; ++d) {
            std::uint32_t target;
            float label;
            if (d == 0) {
                target = center;
                label = 1.0f;
            } else {
                target = table_[(lcg_.next() >> 16) % kUnigramTableSize];
                if (target == center) continue;
                label = 0.0f;
            }
            float *out = node_out_.data() + static_cast<std::size_t>(target) * dim;
            float f = 0.0f;
            for (std::size_t k = 0; k < dim; ++k) f += input[k] * out[k];
            f = std::clamp(f, -kMaxLogit, kMaxLogit);
            const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(f)));
            loss_sum_ += label > 0 ? -std::log(std::max(sig, 1e-12)) : -std::log(std::max(1.0 - sig, 1e-12));
            ++predictions_;
            const auto g = static_cast<float>((label - sig) * lr);
            for (std::size_t k = 0; k < dim; ++k) scratch_[k] += g * out[k];
            for (std::size_t k = 0; k < dim; ++k) out[k] += g * input[k];
        }
        for (std::size_t k = 0; k < dim; ++k) input[k] += scratch_[k];
    }

    const PathCorpus &corpus_;
    const EmbedParams &params_;
    std::unordered_map<sim::NodeId, std::uint32_t> token_of_;
    std::vector<std::size_t> order_;
    std::vector<float> node_in_;
    std::vector<float> graph_in_;
    std::vector<float> node_out_;
    std::vector<std::uint32_t> table_;
    std::vector<float> scratch_;
    Lcg lcg_{0};
    double loss_sum_ = 0;
    std::size_t predictions_ = 0;
};

}  // namespace

std::size_t PathCorpus::path_count() const
{
    std::size_t n = 0;
    for (const auto &d : documents) n += d.paths.size();
    return n;
}

std::size_t PathCorpus::token_count() const
{
    std::size_t n = 0;
    for (const auto &d : documents) {
        for (const auto &p : d.paths) n += p.size();
    }
    return n;
}

std::vector<sim::NodeId> PathCorpus::node_vocabulary() const
{
    std::set<sim::NodeId> nodes;
    for (const auto &d : documents) {
        for (const auto &p : d.paths) nodes.insert(p.begin(), p.end());
    }
    return {nodes.begin(), nodes.end()};
}

void PathCorpus::validate() const
{
    std::set<std::string> ids;
    for (const auto &d : documents) {
        if (!ids.insert(d.graph_id).second) throw std::invalid_argument("duplicate graph id '" + d.graph_id + "'");
        for (const auto &p : d.paths) {
            if (p.size() < 2) throw std::invalid_argument("path shorter than two nodes in " + d.graph_id);
        }
    }
}

GraphEmbedding train_graph_embeddings(const PathCorpus &corpus, const EmbedParams &params)
{
    if (corpus.documents.empty()) throw std::invalid_argument("corpus has no documents");
    if (params.dim == 0) throw std::invalid_argument("embedding dimension must be positive");
    corpus.validate();
    Trainer trainer(corpus, params);
    return trainer.run();
}

Eigen::VectorXd PcaProjection::explained_variance_ratio() const
{
    if (total_variance <= 0) return Eigen::VectorXd::Zero(explained_variance.size());
    return explained_variance / total_variance;
}

namespace {

Eigen::MatrixXd centered_data(const EmbeddingSpace &space, Eigen::VectorXd &mean)
{
    const auto rows = static_cast<Eigen::Index>(space.rows());
    const auto dim = static_cast<Eigen::Index>(space.dim);
    Eigen::MatrixXd x(rows, dim);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto r = space.row(static_cast<std::size_t>(i));
        for (Eigen::Index d = 0; d < dim; ++d) x(i, d) = r[static_cast<std::size_t>(d)];
    }
    mean = x.colwise().mean().transpose();
    x.rowwise() -= mean.transpose();
    return x;
}

}  // namespace

PcaProjection pca(const EmbeddingSpace &space, std::size_t k)
{
    space.validate();
    if (k == 0 || k > std::min(space.rows(), space.dim)) {
        throw std::invalid_argument("k must lie in [1, min(rows, dim)]");
    }
    PcaProjection out;
    const Eigen::MatrixXd x = centered_data(space, out.mean);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);

    const auto kk = static_cast<Eigen::Index>(k);
    out.components = svd.matrixV().leftCols(kk).transpose();
    for (Eigen::Index c = 0; c < kk; ++c) {
        Eigen::Index arg;
        out.components.row(c).cwiseAbs().maxCoeff(&arg);
        if (out.components(c, arg) < 0) out.components.row(c) *= -1.0;
    }
    const double denom = space.rows() > 1 ? static_cast<double>(space.rows() - 1) : 1.0;
    out.explained_variance = svd.singularValues().head(kk).array().square() / denom;
    out.total_variance = x.squaredNorm() / denom;
    out.projected = x * out.components.transpose();
    out.labels = space.labels;
    return out;
}

double reconstruction_error(const EmbeddingSpace &space, const PcaProjection &projection)
{
    Eigen::VectorXd mean;
    const Eigen::MatrixXd x = centered_data(space, mean);
    const Eigen::MatrixXd approx = projection.projected * projection.components;
    return (x - approx).squaredNorm();
}

void write_csv(const PcaProjection &projection, const std::filesystem::path &path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(10);
    for (Eigen::Index c = 0; c < projection.projected.cols(); ++c) out << "pc" << c + 1 << ',';
    out << "label\n";
    for (Eigen::Index i = 0; i < projection.projected.rows(); ++i) {
        for (Eigen::Index c = 0; c < projection.projected.cols(); ++c) out << projection.projected(i, c) << ',';
        out << projection.labels[static_cast<std::size_t>(i)] << '\n';
    }
}

}  // namespace crdm::embed
