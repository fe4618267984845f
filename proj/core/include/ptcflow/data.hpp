#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptcflow/linalg.hpp"
#include "ptcflow/tensor.hpp"

namespace ptcflow {

/// In-memory labelled samples, one row of `x` per sample in CHW order.
struct Dataset {
    std::string name;
    Shape shape;
    Matrix x;
    std::vector<int> y;
    std::size_t classes = 0;
    /// Generated stand-in rather than a real corpus.
    bool synthetic = false;

    std::size_t size() const noexcept { return y.size(); }
    Dataset subset(std::span<const std::size_t> indices) const;
    /// Samples with label in [lo, hi), relabelled to y - lo when `relabel` is set.
    Dataset filter_classes(int lo, int hi, bool relabel = true) const;
};

struct DatasetSplit {
    Dataset train;
    Dataset test;
};

struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;
};

/// Big-endian IDX parsing. Throws FormatError with the byte offset of the first bad field.
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);
IdxImages read_idx_images(const std::filesystem::path &path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path &path);

/// Pixels scaled to [0, 1], then (v - mean) / std. `limit` > 0 keeps the first `limit` samples.
Dataset load_idx_dataset(const std::filesystem::path &images, const std::filesystem::path &labels, double mean,
                         double std, std::size_t limit = 0, const std::string &name = "idx");

/// train-images-idx3-ubyte / train-labels-idx1-ubyte / t10k-* inside `dir`.
DatasetSplit load_idx_dir(const std::filesystem::path &dir, double mean, double std, std::size_t train_limit = 0,
                          std::size_t test_limit = 0);

/// Isotropic Gaussian clusters around centres drawn from N(0, center_scale^2 I).
struct BlobsConfig {
    std::size_t classes = 4;
    std::size_t features = 8;
    std::size_t train = 400;
    std::size_t test = 200;
    double spread = 1.0;
    double center_scale = 2.0;
    std::uint64_t seed = 0;

    bool operator==(const BlobsConfig &) const = default;
};

nlohmann::json to_json(const BlobsConfig &c);
BlobsConfig blobs_config_from_json(const nlohmann::json &j);

DatasetSplit make_blobs(const BlobsConfig &cfg);

}  // namespace ptcflow
