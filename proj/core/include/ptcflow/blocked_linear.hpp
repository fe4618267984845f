#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ptcflow/linalg.hpp"
#include "ptcflow/noise.hpp"
#include "ptcflow/ptc_block.hpp"

namespace ptcflow {

/// An M x N weight realized by a P x Q grid of k x k blocks, P = ceil(M/k), Q = ceil(N/k). Inputs and
/// outputs are zero-padded to the grid; padded rows and columns are never read back.
class BlockedLinear {
  public:
    BlockedLinear() = default;
    /// Block (p, q) draws its hidden state from (cfg.seed, layer_id, p, q).
    BlockedLinear(std::size_t out_features, std::size_t in_features, std::size_t k, const NoiseConfig &cfg,
                  std::uint64_t layer_id);

    std::size_t rows() const noexcept { return m_; }
    std::size_t cols() const noexcept { return n_; }
    std::size_t k() const noexcept { return k_; }
    std::size_t p() const noexcept { return p_; }
    std::size_t q() const noexcept { return q_; }
    std::size_t block_count() const noexcept { return blocks_.size(); }

    PTCBlock &block(std::size_t bp, std::size_t bq) { return blocks_[bp * q_ + bq]; }
    const PTCBlock &block(std::size_t bp, std::size_t bq) const { return blocks_[bp * q_ + bq]; }
    std::vector<PTCBlock> &blocks() noexcept { return blocks_; }
    const std::vector<PTCBlock> &blocks() const noexcept { return blocks_; }

    /// Unpadded extent of block row bp / block column bq.
    std::size_t valid_rows(std::size_t bp) const noexcept;
    std::size_t valid_cols(std::size_t bq) const noexcept;

    /// y = W~ x for one input vector of length N.
    Vector forward(std::span<const double> x) const;
    /// dx = W~^T dy through every block's reverse pass.
    Vector adjoint(std::span<const double> dy) const;

    /// Dense M x N equivalent read out with k basis probes per block.
    Matrix probe_matrix() const;

    /// Zero-padded k x k slice of `w` that block (bp, bq) is responsible for.
    Matrix target_block(const Matrix &w, std::size_t bp, std::size_t bq) const;

    /// Sum of all blocks' optical pass counters.
    std::uint64_t calls() const noexcept;
    void reset_calls() noexcept;

  private:
    std::size_t m_ = 0, n_ = 0, k_ = 0, p_ = 0, q_ = 0;
    std::vector<PTCBlock> blocks_;
};

}  // namespace ptcflow
