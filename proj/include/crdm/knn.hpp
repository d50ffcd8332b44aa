#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crdm/embedding_space.hpp"
#include "crdm/mnist.hpp"

namespace crdm::classify {

enum class Weighting { Majority, InverseDistance };

std::string to_string(Weighting weighting);
Weighting weighting_from_string(const std::string &name);

struct KnnConfig
{
    int k = 5;
    Metric metric = Metric::Euclidean;
    Weighting weighting = Weighting::InverseDistance;
    double epsilon = 1e-12;

    void validate() const;
};

/// Euclidean distance, or 1 - cosine similarity (1 when either vector is zero).
/// Accumulates in double.
double distance(std::span<const float> a, std::span<const float> b, Metric metric);

struct Neighbor
{
    std::size_t index;
    double distance;
};

/// Majority or 1/(d + eps) weighted vote over the given neighbours; ties go
/// to the smallest label.
int vote(std::span<const Neighbor> neighbors, std::span<const int> labels, const KnnConfig &cfg);

/// Exact brute-force kNN over every row of the space. Throws on an empty space
/// or a dimension mismatch.
int knn_predict(const EmbeddingSpace &space, std::span<const float> query, const KnnConfig &cfg);

struct EvalReport
{
    double accuracy_mean = 0;
    double accuracy_std = 0;
    std::array<double, data::kClassCount> per_class_accuracy{};
    std::array<std::size_t, data::kClassCount> per_class_count{};
    std::array<std::array<std::size_t, data::kClassCount>, data::kClassCount> confusion{};
    std::vector<double> repeat_accuracy;
    std::size_t repeats = 0;

    std::size_t total() const;
    std::size_t correct() const;
};

/// Adds one repeat's predictions to the pooled confusion matrix.
void add_repeat(EvalReport &report, std::span<const int> truth, std::span<const int> predicted);
/// Computes pooled accuracy, per-repeat sample std and per-class accuracy.
void finalize(EvalReport &report);

nlohmann::json to_json(const EvalReport &report);
std::string csv_header();
std::string to_csv_row(const EvalReport &report, const std::string &tag);

/// For each repeat: split the rows, classify the query part against the
/// embedding part, then pool. Candidate neighbours come from a float GEMM
/// scan and are re-ranked with exact double distances.
EvalReport evaluate(const EmbeddingSpace &items, const data::SplitPlan &plan, const KnnConfig &cfg);

/// Predictions for `queries` rows against `space` rows, using the blocked scan.
std::vector<int> predict_block(const EmbeddingSpace &items, std::span<const std::size_t> space_rows,
                               std::span<const std::size_t> query_rows, const KnnConfig &cfg);

struct TimePoint
{
    double time_ms;
    EvalReport report;
};

/// One evaluate() per sample time. `spaces[s]` holds every item's vector at
/// sample time s.
std::vector<TimePoint> accuracy_vs_time(std::span<const EmbeddingSpace> spaces, std::span<const double> sample_times,
                                        const data::SplitPlan &plan, const KnnConfig &cfg);

}  // namespace crdm::classify
