#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace crdm::data {

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kPixelCount = kImageSide * kImageSide;
inline constexpr int kClassCount = 10;

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;

/// Row-major 28x28 grayscale grid; pixel (row, col) lives at row * 28 + col.
using Image = std::array<std::uint8_t, kPixelCount>;

enum class Source { Train, Test, Unknown };

struct ImageSet
{
    std::vector<Image> images;
    std::vector<std::uint8_t> labels;
    Source source = Source::Unknown;

    std::size_t size() const { return images.size(); }
    bool operator==(const ImageSet &) const = default;
};

class IdxError : public std::runtime_error
{
public:
    enum class Kind { Io, BadMagic, BadShape, Truncated, CountMismatch, BadLabel };

    IdxError(Kind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Loads an IDX image/label file pair. Each failure mode throws IdxError with
/// a distinct Kind.
ImageSet load_idx(const std::filesystem::path &images_path, const std::filesystem::path &labels_path);

/// Parses IDX payloads already in memory.
ImageSet parse_idx(const std::vector<std::uint8_t> &image_bytes, const std::vector<std::uint8_t> &label_bytes);

std::vector<std::uint8_t> encode_idx_images(const ImageSet &set);
std::vector<std::uint8_t> encode_idx_labels(const ImageSet &set);
void write_idx(const ImageSet &set, const std::filesystem::path &images_path, const std::filesystem::path &labels_path);

/// Sorted indices of nonzero pixels.
struct ActivePixelSet
{
    std::vector<std::uint16_t> indices;

    std::size_t size() const { return indices.size(); }
    bool empty() const { return indices.empty(); }
    bool operator==(const ActivePixelSet &) const = default;
};

ActivePixelSet binarize(const Image &image);

/// 0/1 image with ones at the active indices.
Image to_binary_image(const ActivePixelSet &pixels);

struct SplitPlan
{
    std::uint64_t seed = 0;
    std::size_t embedding_count = 9000;
    std::size_t query_count = 1000;
    std::size_t repeats = 10;
};

struct Split
{
    std::vector<std::size_t> embedding;
    std::vector<std::size_t> query;
};

/// Seeded Fisher-Yates partition of [0, item_count). Throws std::invalid_argument
/// when the plan needs more items than exist or repeat_index is out of range.
Split split(std::size_t item_count, const SplitPlan &plan, std::size_t repeat_index);

/// Indices of the first `per_class` items of each listed class, in dataset order.
std::vector<std::size_t> select_per_class(const ImageSet &set, const std::vector<int> &classes, std::size_t per_class);

/// Subset by index list, preserving order.
ImageSet subset(const ImageSet &set, const std::vector<std::size_t> &indices);

}  // namespace crdm::data
