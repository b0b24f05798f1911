#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spattn/collectives.hpp"
#include "spattn/kv_cache.hpp"
#include "spattn/rope.hpp"
#include "spattn/tensor.hpp"

namespace spattn {

// Dense row-major (rows, cols) matrix for the projection weights.
struct Matrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<double> w;

    static Matrix random(std::int64_t rows, std::int64_t cols, Rng& rng);
    static Matrix identity(std::int64_t n);
    static Matrix zero(std::int64_t rows, std::int64_t cols);
};

// Projection weights of one attention layer, replicated across ranks.
struct AttentionLayerParams {
    Matrix w_q, w_k, w_v, w_o; // (H*D, H*D)

    static AttentionLayerParams seeded(std::int64_t model_dim, std::uint64_t seed);
    static AttentionLayerParams identity(std::int64_t model_dim);
};

// y[b,s] = W x[b,s] on the flattened (H, D) token vector.
Tensor4 project_tokens(const Tensor4& x, const Matrix& w);

struct AblationFlags {
    bool use_fused_all_to_all = false;
    bool use_local_rope = false;
    bool use_precomputed_freqs = false;

    static AblationFlags all_off() { return {}; }
    static AblationFlags all_on() { return {true, true, true}; }
    bool operator==(const AblationFlags&) const = default;
};

enum class PipelineKind { Reference, BaselineSP, OptimizedSP };

std::string pipeline_kind_name(PipelineKind kind);

struct PipelineVariant {
    PipelineKind kind = PipelineKind::OptimizedSP;
    AblationFlags ablation = AblationFlags::all_on();

    static PipelineVariant reference() { return {PipelineKind::Reference, AblationFlags::all_on()}; }
    static PipelineVariant baseline() { return {PipelineKind::BaselineSP, AblationFlags::all_off()}; }
    static PipelineVariant optimized(AblationFlags flags = AblationFlags::all_on()) {
        return {PipelineKind::OptimizedSP, flags};
    }
    std::string name() const { return pipeline_kind_name(kind); }

    // Effective flags the engine runs with; BaselineSP is pinned to all-off.
    AblationFlags effective_flags() const {
        return kind == PipelineKind::BaselineSP ? AblationFlags::all_off() : ablation;
    }
    bool operator==(const PipelineVariant&) const = default;
};

// One self-attention invocation, per stage: wall time plus the ledger delta
// the stage caused. Stage order reflects the executed schedule (rope before
// or after the exchange).
struct CallProfile {
    struct Stage {
        std::string label;
        double time_us = 0.0;
        CommStats ledger_delta;
    };

    std::string variant;
    AblationFlags ablation;
    std::vector<Stage> stages;
    double total_us = 0.0;
    CommStats ledger_delta;

    std::vector<std::string> stage_order() const;
    const Stage* find(const std::string& label) const;
    // Kernel-level QKV+RoPE fusion is modeled as a report-level stage
    // merge only; it has no numerical effect and only applies when rope
    // immediately follows qkv.
    CallProfile merged_qkv_rope() const;
};

inline constexpr const char* kStageQkv = "qkv";
inline constexpr const char* kStageGatherOrFused = "gather_or_fused";
inline constexpr const char* kStageRope = "rope";
inline constexpr const char* kStageCache = "cache";
inline constexpr const char* kStageAttention = "attention";
inline constexpr const char* kStageOutputExchange = "output_exchange";

// Single-rank oracle: the P=1 instantiation of the baseline pipeline with no
// collectives. x_full: (B, L, H, D) -> (B, L, H, D).
Tensor4 reference_self_attention(const Tensor4& x_full, const AttentionLayerParams& params,
                                 const GridSpec& grid, const RopeFrequencyTable& table,
                                 std::int64_t start_frame, KvCache& cache,
                                 std::int64_t block_index, CallProfile* profile = nullptr);

// Baseline schedule: QKV, three sequence all-gathers, global RoPE, head
// split, cache update, attention, layout-restoring all-to-all. x_local: (B, L/P, H, D) -> (B, L/P, H, D).
Tensor4 baseline_sp_self_attention(const Tensor4& x_local, int rank, CommWorld& world,
                                   const AttentionLayerParams& params, const GridSpec& grid,
                                   const RopeFrequencyTable& table, std::int64_t start_frame,
                                   KvCache& cache, std::int64_t block_index,
                                   CallProfile* profile = nullptr);

// Optimized schedule: QKV, local causal RoPE (no communication), one fused
// all-to-all (sequence gather + head split), cache update, attention,
// layout-restoring all-to-all. Each ablation flag set to false degrades that
// stage back to the baseline mechanism.
Tensor4 optimized_sp_self_attention(const Tensor4& x_local, int rank, CommWorld& world,
                                    const AttentionLayerParams& params, const GridSpec& grid,
                                    const RopeFrequencyTable& table, std::int64_t start_frame,
                                    KvCache& cache, std::int64_t block_index,
                                    const AblationFlags& flags, CallProfile* profile = nullptr);

// Variant dispatch used by the generator. Reference expects world_size 1 and
// x_local spanning the whole block.
Tensor4 run_self_attention(const PipelineVariant& variant, const Tensor4& x_local, int rank,
                           CommWorld& world, const AttentionLayerParams& params,
                           const GridSpec& grid, const RopeFrequencyTable& table,
                           std::int64_t start_frame, KvCache& cache, std::int64_t block_index,
                           CallProfile* profile = nullptr);

struct ProfileCallInputs {
    int world_size = 2;
    std::int64_t batch = 1;
    GridSpec grid{3, 4, 4};
    std::int64_t heads = 8;
    std::int64_t head_dim = 16;
    std::uint64_t seed = 0;
    std::int64_t block_index = 0;
    double rope_base = 10000.0;
    bool merge_qkv_rope = false;
};

// Runs one self-attention call on a fresh world and returns rank 0's
// per-stage profile.
CallProfile profile_call(const PipelineVariant& variant, const ProfileCallInputs& inputs);

} // namespace spattn
