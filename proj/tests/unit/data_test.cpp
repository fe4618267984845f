#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ptcflow/data.hpp"
#include "ptcflow/errors.hpp"

using namespace ptcflow;

namespace {

void put_be32(std::vector<std::uint8_t> &b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) {
        b.push_back(static_cast<std::uint8_t>(v >> s));
    }
}

std::vector<std::uint8_t> image_header(std::uint32_t n, std::uint32_t r, std::uint32_t c) {
    std::vector<std::uint8_t> b;
    put_be32(b, 0x00000803);
    put_be32(b, n);
    put_be32(b, r);
    put_be32(b, c);
    return b;
}

}  // namespace

TEST(Idx, HeaderOfFullSizeTrainFile) {
    auto bytes = image_header(60000, 28, 28);
    bytes.resize(16 + 60000u * 28u * 28u, 7);
    const IdxImages img = parse_idx_images(bytes);
    EXPECT_EQ(img.count, 60000u);
    EXPECT_EQ(img.rows, 28u);
    EXPECT_EQ(img.cols, 28u);
    EXPECT_EQ(img.pixels.size(), 60000u * 784u);
}

TEST(Idx, TruncatedPayloadReportsOffset) {
    auto bytes = image_header(10, 28, 28);
    bytes.resize(16 + 100);
    try {
        parse_idx_images(bytes);
        FAIL() << "expected FormatError";
    } catch (const FormatError &e) {
        EXPECT_EQ(e.offset(), 116u);
    }
}

TEST(Idx, TruncatedHeaderAndBadMagic) {
    auto bytes = image_header(1, 2, 2);
    bytes.resize(10);
    try {
        parse_idx_images(bytes);
        FAIL();
    } catch (const FormatError &e) {
        EXPECT_EQ(e.offset(), 8u);
    }
    std::vector<std::uint8_t> labels;
    put_be32(labels, 0x00000803);
    put_be32(labels, 0);
    try {
        parse_idx_labels(labels);
        FAIL();
    } catch (const FormatError &e) {
        EXPECT_EQ(e.offset(), 0u);
    }
}

TEST(Idx, BundledSubset) {
    const std::filesystem::path dir = std::filesystem::path(PTCFLOW_DATA_DIR) / "mnist5k";
    const DatasetSplit s = load_idx_dir(dir, 0.1307, 0.3081);
    EXPECT_EQ(s.train.size(), 4000u);
    EXPECT_EQ(s.test.size(), 1000u);
    EXPECT_EQ(s.train.shape, (Shape{1, 28, 28}));
    EXPECT_EQ(s.train.classes, 10u);
    std::vector<int> counts(10, 0);
    for (int y : s.test.y) {
        ASSERT_GE(y, 0);
        ASSERT_LT(y, 10);
        ++counts[static_cast<std::size_t>(y)];
    }
    for (int c : counts) {
        EXPECT_EQ(c, 100);
    }
    double lo = 1e9, hi = -1e9;
    for (double v : s.train.x.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    EXPECT_NEAR(lo, -0.1307 / 0.3081, 1e-12);
    EXPECT_NEAR(hi, (1.0 - 0.1307) / 0.3081, 1e-12);
    EXPECT_EQ(load_idx_dir(dir, 0.0, 1.0, 100, 50).train.size(), 100u);
    EXPECT_THROW(load_idx_dir(dir / "missing", 0.0, 1.0), InvalidInput);
}

TEST(Idx, FilterClassesRelabels) {
    const DatasetSplit s = load_idx_dir(std::filesystem::path(PTCFLOW_DATA_DIR) / "mnist5k", 0.0, 1.0);
    const Dataset hi = s.test.filter_classes(5, 10);
    EXPECT_EQ(hi.size(), 500u);
    EXPECT_EQ(hi.classes, 5u);
    for (int y : hi.y) {
        EXPECT_GE(y, 0);
        EXPECT_LT(y, 5);
    }
    EXPECT_THROW(s.test.filter_classes(3, 3), ConfigError);
}

TEST(Blobs, DeterministicUnderSeed) {
    BlobsConfig cfg;
    cfg.seed = 4;
    const DatasetSplit a = make_blobs(cfg);
    const DatasetSplit b = make_blobs(cfg);
    EXPECT_EQ(a.train.x, b.train.x);
    EXPECT_EQ(a.test.y, b.test.y);
    EXPECT_TRUE(a.train.synthetic);
    EXPECT_EQ(a.train.shape, (Shape{8, 1, 1}));
    EXPECT_EQ(a.train.classes, 4u);
    cfg.seed = 5;
    EXPECT_NE(make_blobs(cfg).train.x, a.train.x);
    EXPECT_EQ(blobs_config_from_json(to_json(cfg)), cfg);
    cfg.classes = 1;
    EXPECT_THROW(make_blobs(cfg), ConfigError);
}

TEST(Blobs, TrainAndTestShareCentres) {
    BlobsConfig cfg;
    cfg.spread = 0.1;
    const DatasetSplit s = make_blobs(cfg);
    for (std::size_t j = 0; j < cfg.features; ++j) {
        EXPECT_NEAR(s.train.x(0, j), s.test.x(0, j), 1.0);
    }
}
