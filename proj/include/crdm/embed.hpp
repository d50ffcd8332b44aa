#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crdm/embedding_space.hpp"
#include "crdm/temporal_graph.hpp"

namespace crdm::embed {

/// One temporal graph's paths, tagged with its graph id and class label.
struct Document
{
    std::string graph_id;
    int label = -1;
    std::vector<sim::Path> paths;
};

struct PathCorpus
{
    std::vector<Document> documents;

    std::size_t path_count() const;
    std::size_t token_count() const;
    /// Sorted distinct node ids appearing in any path.
    std::vector<sim::NodeId> node_vocabulary() const;
    /// Throws on short paths or duplicate graph ids.
    void validate() const;
};

struct EmbedParams
{
    std::size_t dim = 64;
    std::size_t window = 5;
    std::size_t negatives = 5;
    std::size_t epochs = 5;
    double learning_rate = 0.025;
    double min_learning_rate_fraction = 1e-4;
    /// Also train node-to-node skip-gram pairs within the window, as in PV-DBOW
    /// with interleaved word training.
    bool train_words = true;
    std::uint64_t seed = 1;
};

struct GraphEmbedding
{
    /// One row per document, in the corpus's document order.
    EmbeddingSpace space;
    /// Mean negative log-likelihood per prediction, one entry per epoch.
    std::vector<double> epoch_loss;
};

/// Skip-gram with negative sampling where each path is a sentence and the
/// owning graph token predicts every token of its paths. Paths are visited in
/// a seeded shuffle of the graph_id-sorted corpus, so results do not depend
/// on input order.
GraphEmbedding train_graph_embeddings(const PathCorpus &corpus, const EmbedParams &params);

struct PcaProjection
{
    Eigen::VectorXd mean;
    /// k x dim, rows orthonormal.
    Eigen::MatrixXd components;
    Eigen::VectorXd explained_variance;
    double total_variance = 0;
    /// rows x k.
    Eigen::MatrixXd projected;
    std::vector<int> labels;

    Eigen::VectorXd explained_variance_ratio() const;
};

/// Top-k principal directions of the mean-centred data (thin SVD). Each
/// component's largest-magnitude coordinate is made positive.
PcaProjection pca(const EmbeddingSpace &space, std::size_t k);

/// Squared Frobenius error of reconstructing the centred data from k components.
double reconstruction_error(const EmbeddingSpace &space, const PcaProjection &projection);

void write_csv(const PcaProjection &projection, const std::filesystem::path &path);

}  // namespace crdm::embed
