#include "crdm/mnist.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>

#include "crdm/rng.hpp"

namespace crdm::data {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxError(IdxError::Kind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path &path, const std::vector<std::uint8_t> &bytes)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IdxError(IdxError::Kind::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t read_be32(const std::vector<std::uint8_t> &bytes, std::size_t offset)
{
    if (offset + 4 > bytes.size()) throw IdxError(IdxError::Kind::Truncated, "IDX header truncated");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void append_be32(std::vector<std::uint8_t> &bytes, std::uint32_t v)
{
    bytes.push_back(static_cast<std::uint8_t>(v >> 24));
    bytes.push_back(static_cast<std::uint8_t>(v >> 16));
    bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    bytes.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

ImageSet parse_idx(const std::vector<std::uint8_t> &image_bytes, const std::vector<std::uint8_t> &label_bytes)
{
    const auto image_magic = read_be32(image_bytes, 0);
    if (image_magic != kImageMagic) throw IdxError(IdxError::Kind::BadMagic, "bad IDX image magic");
    const auto label_magic = read_be32(label_bytes, 0);
    if (label_magic != kLabelMagic) throw IdxError(IdxError::Kind::BadMagic, "bad IDX label magic");

    const std::size_t image_count = read_be32(image_bytes, 4);
    const std::size_t rows = read_be32(image_bytes, 8);
    const std::size_t cols = read_be32(image_bytes, 12);
    const std::size_t label_count = read_be32(label_bytes, 4);

    if (rows != kImageSide || cols != kImageSide) {
        throw IdxError(IdxError::Kind::BadShape,
                       "expected 28x28 images, got " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (image_count != label_count) {
        throw IdxError(IdxError::Kind::CountMismatch, "image count " + std::to_string(image_count) +
                                                          " != label count " + std::to_string(label_count));
    }
    if (image_bytes.size() < 16 + image_count * kPixelCount) {
        throw IdxError(IdxError::Kind::Truncated, "IDX image payload truncated");
    }
    if (label_bytes.size() < 8 + label_count) {
        throw IdxError(IdxError::Kind::Truncated, "IDX label payload truncated");
    }

    ImageSet set;
    set.images.resize(image_count);
    set.labels.resize(label_count);
    for (std::size_t i = 0; i < image_count; ++i) {
        const auto *begin = image_bytes.data() + 16 + i * kPixelCount;
        std::copy(begin, begin + kPixelCount, set.images[i].begin());
    }
    for (std::size_t i = 0; i < label_count; ++i) {
        const auto label = label_bytes[8 + i];
        if (label >= kClassCount) {
            throw IdxError(IdxError::Kind::BadLabel, "label out of range at index " + std::to_string(i));
        }
        set.labels[i] = label;
    }
    return set;
}

ImageSet load_idx(const std::filesystem::path &images_path, const std::filesystem::path &labels_path)
{
    auto set = parse_idx(read_file(images_path), read_file(labels_path));
    const auto name = images_path.filename().string();
    if (name.starts_with("train")) {
        set.source = Source::Train;
    } else if (name.starts_with("t10k") || name.starts_with("test")) {
        set.source = Source::Test;
    }
    return set;
}

std::vector<std::uint8_t> encode_idx_images(const ImageSet &set)
{
    std::vector<std::uint8_t> bytes;
    bytes.reserve(16 + set.size() * kPixelCount);
    append_be32(bytes, kImageMagic);
    append_be32(bytes, static_cast<std::uint32_t>(set.size()));
    append_be32(bytes, kImageSide);
    append_be32(bytes, kImageSide);
    for (const auto &image : set.images) bytes.insert(bytes.end(), image.begin(), image.end());
    return bytes;
}

std::vector<std::uint8_t> encode_idx_labels(const ImageSet &set)
{
    std::vector<std::uint8_t> bytes;
    bytes.reserve(8 + set.labels.size());
    append_be32(bytes, kLabelMagic);
    append_be32(bytes, static_cast<std::uint32_t>(set.labels.size()));
    bytes.insert(bytes.end(), set.labels.begin(), set.labels.end());
    return bytes;
}

void write_idx(const ImageSet &set, const std::filesystem::path &images_path, const std::filesystem::path &labels_path)
{
    write_file(images_path, encode_idx_images(set));
    write_file(labels_path, encode_idx_labels(set));
}

ActivePixelSet binarize(const Image &image)
{
    ActivePixelSet out;
    for (std::size_t i = 0; i < kPixelCount; ++i) {
        if (image[i] > 0) out.indices.push_back(static_cast<std::uint16_t>(i));
    }
    return out;
}

Image to_binary_image(const ActivePixelSet &pixels)
{
    Image image{};
    for (auto idx : pixels.indices) image.at(idx) = 1;
    return image;
}

Split split(std::size_t item_count, const SplitPlan &plan, std::size_t repeat_index)
{
    if (plan.repeats < 1) throw std::invalid_argument("split plan needs at least one repeat");
    if (repeat_index >= plan.repeats) throw std::invalid_argument("repeat index out of range");
    if (plan.embedding_count + plan.query_count > item_count) {
        throw std::invalid_argument("split plan needs " + std::to_string(plan.embedding_count + plan.query_count) +
                                    " items, only " + std::to_string(item_count) + " available");
    }

    std::vector<std::size_t> order(item_count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(plan.seed, repeat_index));
    shuffle(order, rng);

    Split out;
    out.embedding.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(plan.embedding_count));
    out.query.assign(order.begin() + static_cast<std::ptrdiff_t>(plan.embedding_count),
                     order.begin() + static_cast<std::ptrdiff_t>(plan.embedding_count + plan.query_count));
    return out;
}

std::vector<std::size_t> select_per_class(const ImageSet &set, const std::vector<int> &classes, std::size_t per_class)
{
    std::array<std::size_t, kClassCount> taken{};
    std::array<bool, kClassCount> wanted{};
    for (int c : classes) {
        if (c < 0 || c >= kClassCount) throw std::invalid_argument("class out of range");
        wanted[static_cast<std::size_t>(c)] = true;
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto c = set.labels[i];
        if (wanted[c] && taken[c] < per_class) {
            ++taken[c];
            out.push_back(i);
        }
    }
    for (int c : classes) {
        if (taken[static_cast<std::size_t>(c)] < per_class) {
            throw std::invalid_argument("class " + std::to_string(c) + " has only " +
                                        std::to_string(taken[static_cast<std::size_t>(c)]) + " images");
        }
    }
    return out;
}

ImageSet subset(const ImageSet &set, const std::vector<std::size_t> &indices)
{
    ImageSet out;
    out.source = set.source;
    out.images.reserve(indices.size());
    out.labels.reserve(indices.size());
    for (auto i : indices) {
        out.images.push_back(set.images.at(i));
        out.labels.push_back(set.labels.at(i));
    }
    return out;
}

}  // namespace crdm::data
