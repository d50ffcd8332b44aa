#include "crdm/embedding_space.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace crdm {

std::string to_string(Metric metric) { return metric == Metric::Cosine ? "cosine" : "euclidean"; }

Metric metric_from_string(const std::string &name)
{
    if (name == "cosine") return Metric::Cosine;
    if (name == "euclidean") return Metric::Euclidean;
    throw std::invalid_argument("unknown metric '" + name + "'");
}

std::string to_string(ItemKind kind)
{
    switch (kind) {
    case ItemKind::Graph: return "graph";
    case ItemKind::WeightVector: return "weight-vector";
    case ItemKind::HiddenActivation: return "hidden-activation";
    }
    return "graph";
}

void EmbeddingSpace::push_back(std::span<const float> vector, int label)
{
    if (vector.size() != dim) throw std::invalid_argument("embedding dimension mismatch");
    values.insert(values.end(), vector.begin(), vector.end());
    labels.push_back(label);
}

void EmbeddingSpace::push_back(std::span<const double> vector, int label)
{
    if (vector.size() != dim) throw std::invalid_argument("embedding dimension mismatch");
    for (double v : vector) values.push_back(static_cast<float>(v));
    labels.push_back(label);
}

EmbeddingSpace EmbeddingSpace::select(std::span<const std::size_t> indices) const
{
    EmbeddingSpace out(dim, metric, kind);
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(row(i), labels.at(i));
    return out;
}

void EmbeddingSpace::validate() const
{
    if (values.size() != labels.size() * dim) throw std::invalid_argument("label count does not match rows");
    for (float v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("embedding contains NaN or Inf");
    }
}

void write_csv(const EmbeddingSpace &space, const std::filesystem::path &path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t d = 0; d < space.dim; ++d) out << 'x' << d << ',';
    out << "label\n";
    char buf[32];
    for (std::size_t i = 0; i < space.rows(); ++i) {
        for (float v : space.row(i)) {
            const auto res = std::to_chars(buf, buf + sizeof buf, v);
            out.write(buf, res.ptr - buf);
            out << ',';
        }
        out << space.labels[i] << '\n';
    }
}

EmbeddingSpace read_csv(const std::filesystem::path &path, Metric metric, ItemKind kind)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV " + path.string());
    std::size_t columns = 1;
    for (char c : line) columns += c == ',';
    if (columns < 2) throw std::runtime_error("CSV needs at least one value column and a label");

    EmbeddingSpace space(columns - 1, metric, kind);
    std::vector<float> row(space.dim);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream cells(line);
        std::string cell;
        for (std::size_t d = 0; d < space.dim; ++d) {
            if (!std::getline(cells, cell, ',')) throw std::runtime_error("short CSV row");
            row[d] = std::stof(cell);
        }
        if (!std::getline(cells, cell, ',')) throw std::runtime_error("CSV row missing label");
        space.push_back(std::span<const float>(row), std::stoi(cell));
    }
    return space;
}

}  // namespace crdm
