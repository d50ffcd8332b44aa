#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace crdm {

enum class Metric { Cosine, Euclidean };
enum class ItemKind { Graph, WeightVector, HiddenActivation };

std::string to_string(Metric metric);
Metric metric_from_string(const std::string &name);
std::string to_string(ItemKind kind);

/// Labelled row vectors queried by kNN. Stored as float rows because weight
/// vectors of a 200-node reservoir have ~40k entries per item.
struct EmbeddingSpace
{
    std::size_t dim = 0;
    std::vector<float> values;
    std::vector<int> labels;
    Metric metric = Metric::Euclidean;
    ItemKind kind = ItemKind::Graph;

    EmbeddingSpace() = default;
    EmbeddingSpace(std::size_t dim, Metric metric, ItemKind kind) : dim(dim), metric(metric), kind(kind) {}

    std::size_t rows() const { return labels.size(); }
    std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
    std::span<float> row(std::size_t i) { return {values.data() + i * dim, dim}; }

    void reserve(std::size_t rows) { values.reserve(rows * dim), labels.reserve(rows); }
    void push_back(std::span<const float> vector, int label);
    void push_back(std::span<const double> vector, int label);

    /// Rows by index, preserving order.
    EmbeddingSpace select(std::span<const std::size_t> indices) const;

    /// Throws std::invalid_argument on NaN/Inf or a label/row mismatch.
    void validate() const;
};

/// CSV with one row per item and the label in the last column.
void write_csv(const EmbeddingSpace &space, const std::filesystem::path &path);
EmbeddingSpace read_csv(const std::filesystem::path &path, Metric metric, ItemKind kind);

}  // namespace crdm
