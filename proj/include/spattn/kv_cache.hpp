#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <utility>

#include "spattn/tensor.hpp"

namespace spattn {

// Per-rank key/value store over generated blocks: full sequence, one head
// shard. Frames append in generation order; a bounded window evicts the
// oldest whole frames from the front. Re-denoising the same block overwrites
// its slots in place, so the cache never grows with the step count.
class KvCache {
  public:
    // tokens_per_frame = H_g * W_g of the grid; window_frames empty means
    // unlimited.
    KvCache(std::int64_t tokens_per_frame, std::optional<std::int64_t> window_frames = {});

    // k_block/v_block: (B, F * tokens_per_frame, H_shard, D). Appends the
    // block's frames, or replaces them when block_index matches the newest
    // frames already stored.
    void update(std::int64_t block_index, const Tensor4& k_block, const Tensor4& v_block);

    // Full cached (keys, values) in chronological frame order:
    // (B, cached_frames * tokens_per_frame, H_shard, D).
    std::pair<Tensor4, Tensor4> read() const;

    std::int64_t cached_frames() const { return static_cast<std::int64_t>(frames_.size()); }
    std::int64_t seq_len() const { return cached_frames() * tokens_per_frame_; }
    bool empty() const { return frames_.empty(); }
    std::int64_t tokens_per_frame() const { return tokens_per_frame_; }
    std::optional<std::int64_t> window_frames() const { return window_frames_; }

    // Block index of the oldest surviving frame, for eviction tests.
    std::int64_t oldest_block_index() const;

  private:
    struct Frame {
        std::int64_t block_index;
        Tensor4 k; // (B, tokens_per_frame, H_shard, D)
        Tensor4 v;
    };

    std::int64_t tokens_per_frame_;
    std::optional<std::int64_t> window_frames_;
    std::deque<Frame> frames_;
};

} // namespace spattn
