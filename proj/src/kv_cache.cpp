#include "spattn/kv_cache.hpp"

#include <string>
#include <vector>

namespace spattn {

KvCache::KvCache(std::int64_t tokens_per_frame, std::optional<std::int64_t> window_frames)
    : tokens_per_frame_(tokens_per_frame), window_frames_(window_frames) {
    if (tokens_per_frame < 1) {
        throw ConfigError("tokens_per_frame must be >= 1");
    }
    if (window_frames && *window_frames < 1) {
        throw ConfigError("window_frames must be >= 1 when set");
    }
}

void KvCache::update(std::int64_t block_index, const Tensor4& k_block, const Tensor4& v_block) {
    const Shape4& ks = k_block.shape();
    if (ks != v_block.shape()) {
        throw ShapeError("k/v block shape mismatch: " + ks.str() + " vs " +
                         v_block.shape().str());
    }
    if (ks.seq % tokens_per_frame_ != 0) {
        throw AlignmentError("block length " + std::to_string(ks.seq) +
                             " is not a whole number of frames of " +
                             std::to_string(tokens_per_frame_) + " tokens");
    }
    if (!frames_.empty()) {
        const Shape4& have = frames_.front().k.shape();
        if (have.batch != ks.batch || have.heads != ks.heads || have.head_dim != ks.head_dim) {
            throw ShapeError("block shape " + ks.str() + " incompatible with cached frames " +
                             have.str());
        }
    }

    // Re-denoising the same block: drop its previous frames, then re-append.
    while (!frames_.empty() && frames_.back().block_index == block_index) {
        frames_.pop_back();
    }

    const std::int64_t num_frames = ks.seq / tokens_per_frame_;
    for (std::int64_t f = 0; f < num_frames; ++f) {
        frames_.push_back(Frame{block_index,
                                k_block.slice(Axis::Seq, f * tokens_per_frame_, tokens_per_frame_),
                                v_block.slice(Axis::Seq, f * tokens_per_frame_, tokens_per_frame_)});
    }
    if (window_frames_) {
        while (cached_frames() > *window_frames_) {
            frames_.pop_front();
        }
    }
}

std::pair<Tensor4, Tensor4> KvCache::read() const {
    if (frames_.empty()) {
        throw EmptyCacheError("read() on an empty cache");
    }
    std::vector<Tensor4> ks, vs;
    ks.reserve(frames_.size());
    vs.reserve(frames_.size());
    for (const Frame& f : frames_) {
        ks.push_back(f.k);
        vs.push_back(f.v);
    }
    return {concat(ks, Axis::Seq), concat(vs, Axis::Seq)};
}

std::int64_t KvCache::oldest_block_index() const {
    if (frames_.empty()) {
        throw EmptyCacheError("oldest_block_index() on an empty cache");
    }
    return frames_.front().block_index;
}

} // namespace spattn
