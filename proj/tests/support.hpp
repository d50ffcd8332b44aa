#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "crdm/mnist.hpp"
#include "crdm/network.hpp"

namespace crdm::test {

inline std::filesystem::path data_dir()
{
    const char *dir = std::getenv("CRDM_DATA_DIR");
    return dir ? dir : CRDM_DEFAULT_DATA_DIR;
}

inline data::ImageSet load_train()
{
    return data::load_idx(data_dir() / "train-images-idx3-ubyte", data_dir() / "train-labels-idx1-ubyte");
}

inline data::ImageSet load_test()
{
    return data::load_idx(data_dir() / "t10k-images-idx3-ubyte", data_dir() / "t10k-labels-idx1-ubyte");
}

struct Wire
{
    net::NodeId src;
    net::NodeId dst;
    double weight;
    double delay_ms;
};

/// Hand-built network: nodes [0, n_input) are inputs, every node sits at the
/// origin, delays are given directly.
inline net::GeometricNetwork custom_network(std::size_t n_input, std::size_t n_total, const std::vector<Wire> &wires,
                                            double refractory_ms = 5.0, double threshold = 1.0)
{
    net::GeometricNetwork g;
    g.layout = net::Layout::Custom;
    for (net::NodeId i = 0; i < n_total; ++i) {
        g.nodes.push_back({i, {}, refractory_ms, threshold});
        (i < n_input ? g.input_ids : g.hidden_ids).push_back(i);
    }
    for (const auto &w : wires) {
        g.edges.push_back({w.src, w.dst, w.weight, static_cast<std::uint32_t>(w.delay_ms / g.physiology.tick_ms + 0.5)});
    }
    net::canonicalize(g);
    g.validate();
    return g;
}

inline data::ActivePixelSet pixels(std::vector<std::uint16_t> indices)
{
    return {std::move(indices)};
}

}  // namespace crdm::test
