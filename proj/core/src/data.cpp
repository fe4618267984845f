#include "ptcflow/data.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>

#include "ptcflow/errors.hpp"
#include "ptcflow/rng.hpp"

namespace ptcflow {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t offset, const char *field) {
    if (b.size() < offset + 4) {
        throw FormatError(std::string("idx: truncated before ") + field + " at byte " + std::to_string(offset), offset);
    }
    return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
           (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void check_magic(std::uint32_t got, std::uint32_t want) {
    if (got != want) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "idx: bad magic 0x%08x at byte 0 (expected 0x%08x)", got, want);
        throw FormatError(buf, 0);
    }
}

void check_payload(std::span<const std::uint8_t> b, std::size_t header, std::size_t payload) {
    if (b.size() < header + payload) {
        throw FormatError("idx: truncated payload, data ends at byte " + std::to_string(b.size()) + " but header declares " +
                              std::to_string(header + payload),
                          b.size());
    }
}

std::vector<std::uint8_t> slurp(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InvalidInput("cannot open '" + path.string() + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset d;
    d.name = name;
    d.shape = shape;
    d.classes = classes;
    d.synthetic = synthetic;
    d.x = Matrix(indices.size(), x.cols());
    d.y.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = x.row(indices[i]);
        std::copy(src.begin(), src.end(), d.x.row(i).begin());
        d.y.push_back(y[indices[i]]);
    }
    return d;
}

Dataset Dataset::filter_classes(int lo, int hi, bool relabel) const {
    if (lo < 0 || hi <= lo) {
        throw ConfigError("filter_classes: need 0 <= lo < hi");
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] >= lo && y[i] < hi) {
            keep.push_back(i);
        }
    }
    Dataset d = subset(keep);
    if (relabel) {
        for (int &v : d.y) {
            v -= lo;
        }
        d.classes = static_cast<std::size_t>(hi - lo);
    }
    d.name = name + "[" + std::to_string(lo) + "," + std::to_string(hi) + ")";
    return d;
}

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
    check_magic(read_be32(bytes, 0, "magic"), kImageMagic);
    IdxImages img;
    img.count = read_be32(bytes, 4, "image count");
    img.rows = read_be32(bytes, 8, "row count");
    img.cols = read_be32(bytes, 12, "column count");
    const std::size_t payload = img.count * img.rows * img.cols;
    check_payload(bytes, 16, payload);
    img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
    return img;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
    check_magic(read_be32(bytes, 0, "magic"), kLabelMagic);
    const std::size_t n = read_be32(bytes, 4, "label count");
    check_payload(bytes, 8, n);
    return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n)};
}

IdxImages read_idx_images(const std::filesystem::path &path) { return parse_idx_images(slurp(path)); }

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path &path) { return parse_idx_labels(slurp(path)); }

Dataset load_idx_dataset(const std::filesystem::path &images, const std::filesystem::path &labels, double mean,
                         double std, std::size_t limit, const std::string &name) {
    if (!(std > 0.0)) {
        throw ConfigError("idx: normalization std must be positive");
    }
    const IdxImages img = read_idx_images(images);
    const auto lab = read_idx_labels(labels);
    if (lab.size() != img.count) {
        throw InvalidInput("idx: " + std::to_string(img.count) + " images but " + std::to_string(lab.size()) +
                           " labels");
    }
    const std::size_t n = limit > 0 ? std::min(limit, img.count) : img.count;
    const std::size_t f = img.rows * img.cols;
    Dataset d;
    d.name = name;
    d.shape = Shape{1, img.rows, img.cols};
    d.x = Matrix(n, f);
    d.y.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto row = d.x.row(i);
        for (std::size_t j = 0; j < f; ++j) {
            row[j] = (img.pixels[i * f + j] / 255.0 - mean) / std;
        }
        d.y[i] = lab[i];
        max_label = std::max(max_label, d.y[i]);
    }
    d.classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
    return d;
}

DatasetSplit load_idx_dir(const std::filesystem::path &dir, double mean, double std, std::size_t train_limit,
                          std::size_t test_limit) {
    DatasetSplit s;
    s.train = load_idx_dataset(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", mean, std,
                               train_limit, dir.filename().string() + "/train");
    s.test = load_idx_dataset(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", mean, std, test_limit,
                              dir.filename().string() + "/test");
    return s;
}

nlohmann::json to_json(const BlobsConfig &c) {
    return {{"classes", c.classes}, {"features", c.features},         {"train", c.train}, {"test", c.test},
            {"spread", c.spread},   {"center_scale", c.center_scale}, {"seed", c.seed}};
}

BlobsConfig blobs_config_from_json(const nlohmann::json &j) {
    BlobsConfig c;
    c.classes = j.value("classes", c.classes);
    c.features = j.value("features", c.features);
    c.train = j.value("train", c.train);
    c.test = j.value("test", c.test);
    c.spread = j.value("spread", c.spread);
    c.center_scale = j.value("center_scale", c.center_scale);
    c.seed = j.value("seed", c.seed);
    return c;
}

DatasetSplit make_blobs(const BlobsConfig &cfg) {
    if (cfg.classes < 2 || cfg.features == 0 || cfg.train == 0 || !(cfg.spread > 0.0)) {
        throw ConfigError("blobs: need >= 2 classes, features, samples and a positive spread");
    }
    Rng centre_rng(derive_seed(cfg.seed, {tag(SeedStage::data), 0}));
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix centres(cfg.classes, cfg.features);
    for (double &v : centres.data()) {
        v = cfg.center_scale * g(centre_rng);
    }
    auto draw = [&](std::size_t n, std::uint64_t stream, const std::string &split) {
        Rng rng(derive_seed(cfg.seed, {tag(SeedStage::data), stream}));
        std::normal_distribution<double> noise(0.0, cfg.spread);
        Dataset d;
        d.name = "blobs/" + split;
        d.shape = Shape{cfg.features, 1, 1};
        d.classes = cfg.classes;
        d.synthetic = true;
        d.x = Matrix(n, cfg.features);
        d.y.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = i % cfg.classes;
            d.y[i] = static_cast<int>(c);
            auto row = d.x.row(i);
            for (std::size_t j = 0; j < cfg.features; ++j) {
                row[j] = centres(c, j) + noise(rng);
            }
        }
        return d;
    };
    return {draw(cfg.train, 1, "train"), draw(cfg.test, 2, "test")};
}

}  // namespace ptcflow
