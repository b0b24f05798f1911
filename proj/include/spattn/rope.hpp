#pragma once

#include <cstdint>
#include <vector>

#include "spattn/tensor.hpp"

namespace spattn {

// Latent grid of one generation block: F frames of H_g x W_g tokens.
// Token order within the block is row-major (t outer, then h, then w), so
// floor(i / (H_g * W_g)) is the frame index of sequence position i.
struct GridSpec {
    std::int64_t frames = 0; // F
    std::int64_t height = 0; // H_g
    std::int64_t width = 0;  // W_g

    std::int64_t tokens_per_frame() const { return height * width; }
    std::int64_t seq_len() const { return frames * height * width; }
    void validate() const;
};

// Temporal offset of the current block: block k of size tau starts at
// frame s = k * tau.
struct BlockContext {
    std::int64_t start_frame = 0;
    std::int64_t block_size = 0;

    static BlockContext for_block(std::int64_t block_index, std::int64_t block_size) {
        return BlockContext{block_index * block_size, block_size};
    }
};

// Complex-pair counts per rotation band; temporal + height + width = D/2.
struct BandSplit {
    std::int64_t temporal = 0; // p_T
    std::int64_t height = 0;   // p_H
    std::int64_t width = 0;    // p_W

    std::int64_t total() const { return temporal + height + width; }

    // p_H = p_W = floor((D/2)/3), temporal band absorbs the remainder.
    static BandSplit defaults_for(std::int64_t head_dim);
};

enum class Band : int { Temporal = 0, Height = 1, Width = 2 };

// Rotation angles for every (position, pair) of the three bands, stored as
// contiguous (cos, sin) pairs. Angle at position m, pair j of a band with p
// pairs is m * base^(-2j / (2p)). Fully materialized up front; lookups
// during application are pure reads.
class RopeFrequencyTable {
  public:
    std::int64_t max_frames() const { return max_pos_[0]; }
    std::int64_t max_height() const { return max_pos_[1]; }
    std::int64_t max_width() const { return max_pos_[2]; }
    const BandSplit& split() const { return split_; }
    double base() const { return base_; }

    double cos_at(Band band, std::int64_t pos, std::int64_t pair) const {
        return data_[static_cast<int>(band)][static_cast<std::size_t>((pos * pairs(band) + pair) * 2)];
    }
    double sin_at(Band band, std::int64_t pos, std::int64_t pair) const {
        return data_[static_cast<int>(band)][static_cast<std::size_t>((pos * pairs(band) + pair) * 2 + 1)];
    }

    std::int64_t pairs(Band band) const {
        switch (band) {
            case Band::Temporal: return split_.temporal;
            case Band::Height: return split_.height;
            case Band::Width: return split_.width;
        }
        return 0;
    }

    const std::vector<double>& band_data(Band band) const {
        return data_[static_cast<int>(band)];
    }

    friend RopeFrequencyTable precompute_frequencies(std::int64_t, std::int64_t, std::int64_t,
                                                     std::int64_t, double, const BandSplit&);

  private:
    std::int64_t max_pos_[3] = {0, 0, 0};
    BandSplit split_;
    double base_ = 0.0;
    std::vector<double> data_[3]; // per band: max_pos * pairs * {cos, sin}
};

RopeFrequencyTable precompute_frequencies(std::int64_t max_frames, std::int64_t max_h,
                                          std::int64_t max_w, std::int64_t head_dim, double base,
                                          const BandSplit& split);

inline RopeFrequencyTable precompute_frequencies(std::int64_t max_frames, std::int64_t max_h,
                                                 std::int64_t max_w, std::int64_t head_dim,
                                                 double base = 10000.0) {
    return precompute_frequencies(max_frames, max_h, max_w, head_dim, base,
                                  BandSplit::defaults_for(head_dim));
}

// Global time index of local token i on rank r:
//   i_global = r * local_len + i_local
//   t_global = start_frame + floor(i_global / grid_hw)
// Needs only rank-local information plus the shared start_frame, which is
// what lets the causal variant skip the pre-rotation gather.
std::int64_t global_time_index(std::int64_t i_local, std::int64_t rank, std::int64_t local_len,
                               std::int64_t grid_hw, std::int64_t start_frame);

// 3D RoPE over a fully gathered block: token (t, h, w) has its temporal-band
// pairs rotated by angle(t + start_frame), height band by angle(h), width
// band by angle(w). Pairs rotate as (a, b) -> (a cos - b sin, a sin + b cos).
// x: (B, L, H, D) with L = F * H_g * W_g.
Tensor4 apply_rope_global(const Tensor4& x, const GridSpec& grid, const RopeFrequencyTable& table,
                          std::int64_t start_frame);

// Same rotation computed on a rank-local shard without communication: the
// (t, h, w) of each local row is derived from i_global = rank * L/P + i_local.
// Concatenating the per-rank outputs reproduces apply_rope_global bit for bit
// (the per-element arithmetic is shared).
// x_local: (B, L/P, H, D).
Tensor4 apply_rope_causal_local(const Tensor4& x_local, const GridSpec& grid,
                                const RopeFrequencyTable& table, std::int64_t start_frame,
                                std::int64_t rank, std::int64_t world_size);

} // namespace spattn
