#pragma once

#include <cstdint>
#include <span>

#include "ptcflow/blocked_linear.hpp"
#include "ptcflow/cost.hpp"
#include "ptcflow/sampling.hpp"

namespace ptcflow {

// Batched optical routines on a blocked layer. Rows of every matrix are samples (or im2col columns);
// all results are independent of `workers`.

/// Q x P grid of ||W_pq||_F^2 = sum sigma^2, read from the monitored attenuators.
Matrix block_norm_grid(const BlockedLinear &layer);

/// rows x M outputs of rows x N inputs.
Matrix photonic_forward(const BlockedLinear &layer, const Matrix &x, CostMeter *meter = nullptr,
                        std::size_t workers = 1);

/// rows x N error feedback c_W * sum over kept blocks of W_pq^T dy_p. Masked blocks are never run.
Matrix sparse_error_feedback(const BlockedLinear &layer, const Matrix &dy, const FeedbackMask &mask,
                             CostMeter *meter = nullptr, std::size_t workers = 1);

/// Sigma gradients, one row of k entries per block (order bp * Q + bq), accumulated over the rows
/// of x / dy whose `keep` entry is set (all rows when `keep` is empty) and multiplied by `scale`.
Matrix subspace_weight_grad(const BlockedLinear &layer, const Matrix &x, const Matrix &dy,
                            std::span<const std::uint8_t> keep = {}, double scale = 1.0, CostMeter *meter = nullptr,
                            std::size_t workers = 1);

}  // namespace ptcflow
