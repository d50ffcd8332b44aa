#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "crdm/embedding_space.hpp"
#include "crdm/knn.hpp"
#include "crdm/mnist.hpp"

namespace crdm::ann {

/// 784 -> H -> 10 perceptron with a rectified hidden layer.
struct MlpModel
{
    Eigen::MatrixXd w1;  // 784 x H
    Eigen::VectorXd b1;  // H
    Eigen::MatrixXd w2;  // H x 10
    Eigen::VectorXd b2;  // 10

    std::size_t hidden() const { return static_cast<std::size_t>(b1.size()); }
    std::size_t parameter_count() const;
    void validate() const;

    /// Weights and biases uniform in +-1/sqrt(fan_in).
    static MlpModel random(std::size_t hidden, std::uint64_t seed);
    static MlpModel zeros(std::size_t hidden);
};

/// Pixels scaled to [0, 1].
Eigen::VectorXd to_input(const data::Image &image);

struct Forward
{
    Eigen::VectorXd hidden;
    Eigen::VectorXd logits;
};

Forward forward(const MlpModel &model, const Eigen::VectorXd &x);

Eigen::VectorXd softmax(const Eigen::VectorXd &logits);
double cross_entropy(const Eigen::VectorXd &logits, int label);

struct Gradients
{
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;
};

/// Mean cross-entropy over the columns of `inputs` (784 x B) and its gradient.
double loss_and_gradients(const MlpModel &model, const Eigen::MatrixXd &inputs, std::span<const int> labels,
                          Gradients &grad);

struct AdamConfig
{
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam
{
public:
    Adam(const MlpModel &model, AdamConfig config);

    void step(MlpModel &model, const Gradients &grad);
    std::uint64_t steps() const { return step_; }

private:
    AdamConfig config_;
    std::uint64_t step_ = 0;
    Gradients m_;
    Gradients v_;
};

struct TrainConfig
{
    std::size_t max_epochs = 20000;
    double loss_target = 1e-3;
    AdamConfig adam;
};

struct TrainReport
{
    std::size_t epochs = 0;
    double initial_loss = 0;
    double final_loss = 0;
    double train_accuracy = 0;
    bool converged = false;
};

/// Full-batch Adam on one example per class until every example is classified
/// correctly and the mean loss is below the target, or max_epochs.
TrainReport train_one_shot(MlpModel &model, std::span<const data::Image> examples, std::span<const int> labels,
                           const TrainConfig &config);

/// Hidden activations as rows, cosine metric.
EmbeddingSpace embed_hidden(const MlpModel &model, std::span<const data::Image> images, std::span<const int> labels);

enum class ParamKind { Ann, Bnn };

/// Table convention: ann counts 785*H, bnn counts n^2 + 3n.
std::size_t count_params(ParamKind kind, std::size_t size);
/// Everything trainable: 785*H + 10*(H + 1) for ann; recurrent edge count
/// n*(n-1) (or n^2 with self loops) for bnn.
std::size_t count_params_full(ParamKind kind, std::size_t size, bool self_loops = false);

/// Writes `<stem>.json` plus two binary matrices: `<stem>.l1.bin` holds the
/// 784 rows of w1 followed by b1, `<stem>.l2.bin` the H rows of w2 then b2.
void save_model(const MlpModel &model, const std::filesystem::path &stem);
MlpModel load_model(const std::filesystem::path &stem);

struct OneShotProtocol
{
    std::size_t hidden = 100;
    std::uint64_t seed = 1;
    TrainConfig train;
    classify::KnnConfig knn{5, Metric::Cosine, classify::Weighting::InverseDistance, 1e-12};
};

struct OneShotResult
{
    classify::EvalReport report;
    std::vector<TrainReport> training;
    std::size_t non_converged = 0;
};

/// Per repeat: a fresh model trained on one random `train` image per class,
/// then kNN over its hidden activations for `pool` split by `plan`.
OneShotResult evaluate_one_shot(const data::ImageSet &train, const data::ImageSet &pool, const data::SplitPlan &plan,
                                const OneShotProtocol &protocol);

}  // namespace crdm::ann
