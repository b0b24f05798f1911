#include "spattn/sp_attention.hpp"

#include <chrono>
#include <cmath>

namespace spattn {

Matrix Matrix::random(std::int64_t rows, std::int64_t cols, Rng& rng) {
    Matrix m{rows, cols, std::vector<double>(static_cast<std::size_t>(rows * cols))};
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& x : m.w) {
        x = rng.next_normal() * scale;
    }
    return m;
}

Matrix Matrix::identity(std::int64_t n) {
    Matrix m{n, n, std::vector<double>(static_cast<std::size_t>(n * n), 0.0)};
    for (std::int64_t i = 0; i < n; ++i) {
        m.w[static_cast<std::size_t>(i * n + i)] = 1.0;
    }
    return m;
}

Matrix Matrix::zero(std::int64_t rows, std::int64_t cols) {
    return Matrix{rows, cols, std::vector<double>(static_cast<std::size_t>(rows * cols), 0.0)};
}

AttentionLayerParams AttentionLayerParams::seeded(std::int64_t model_dim, std::uint64_t seed) {
    AttentionLayerParams p;
    Rng rq(derive_seed(seed, 11));
    Rng rk(derive_seed(seed, 12));
    Rng rv(derive_seed(seed, 13));
    Rng ro(derive_seed(seed, 14));
    p.w_q = Matrix::random(model_dim, model_dim, rq);
    p.w_k = Matrix::random(model_dim, model_dim, rk);
    p.w_v = Matrix::random(model_dim, model_dim, rv);
    p.w_o = Matrix::random(model_dim, model_dim, ro);
    return p;
}

AttentionLayerParams AttentionLayerParams::identity(std::int64_t model_dim) {
    AttentionLayerParams p;
    p.w_q = Matrix::identity(model_dim);
    p.w_k = Matrix::identity(model_dim);
    p.w_v = Matrix::identity(model_dim);
    p.w_o = Matrix::identity(model_dim);
    return p;
}

Tensor4 project_tokens(const Tensor4& x, const Matrix& w) {
    const Shape4& xs = x.shape();
    const std::int64_t model_dim = xs.heads * xs.head_dim;
    if (w.rows != model_dim || w.cols != model_dim) {
        throw ShapeError("projection is " + std::to_string(w.rows) + "x" +
                         std::to_string(w.cols) + ", tokens have H*D = " +
                         std::to_string(model_dim));
    }
    Tensor4 out(xs);
    for (std::int64_t b = 0; b < xs.batch; ++b) {
        for (std::int64_t s = 0; s < xs.seq; ++s) {
            const double* in_row = x.data() + x.offset(b, s, 0, 0);
            double* out_row = out.data() + out.offset(b, s, 0, 0);
            for (std::int64_t o = 0; o < model_dim; ++o) {
                const double* wrow = w.w.data() + o * model_dim;
                double acc = 0.0;
                for (std::int64_t j = 0; j < model_dim; ++j) {
                    acc += wrow[j] * in_row[j];
                }
                out_row[o] = acc;
            }
        }
    }
    return out;
}

std::string pipeline_kind_name(PipelineKind kind) {
    switch (kind) {
        case PipelineKind::Reference: return "reference";
        case PipelineKind::BaselineSP: return "baseline";
        case PipelineKind::OptimizedSP: return "optimized";
    }
    return "?";
}

std::vector<std::string> CallProfile::stage_order() const {
    std::vector<std::string> order;
    order.reserve(stages.size());
    for (const Stage& s : stages) {
        order.push_back(s.label);
    }
    return order;
}

const CallProfile::Stage* CallProfile::find(const std::string& label) const {
    for (const Stage& s : stages) {
        if (s.label == label) {
            return &s;
        }
    }
    return nullptr;
}

CallProfile CallProfile::merged_qkv_rope() const {
    CallProfile out = *this;
    for (std::size_t i = 0; i + 1 < out.stages.size(); ++i) {
        if (out.stages[i].label == kStageQkv && out.stages[i + 1].label == kStageRope) {
            Stage merged;
            merged.label = "qkv_rope_fused";
            merged.time_us = out.stages[i].time_us + out.stages[i + 1].time_us;
            merged.ledger_delta.all_gather =
                out.stages[i].ledger_delta.all_gather + out.stages[i + 1].ledger_delta.all_gather;
            merged.ledger_delta.all_to_all =
                out.stages[i].ledger_delta.all_to_all + out.stages[i + 1].ledger_delta.all_to_all;
            merged.ledger_delta.fused_all_to_all = out.stages[i].ledger_delta.fused_all_to_all +
                                                   out.stages[i + 1].ledger_delta.fused_all_to_all;
            merged.ledger_delta.elements_sent = out.stages[i].ledger_delta.elements_sent +
                                                out.stages[i + 1].ledger_delta.elements_sent;
            merged.ledger_delta.rounds =
                out.stages[i].ledger_delta.rounds + out.stages[i + 1].ledger_delta.rounds;
            out.stages[i] = std::move(merged);
            out.stages.erase(out.stages.begin() + static_cast<std::ptrdiff_t>(i) + 1);
            break;
        }
    }
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

// Stage bookkeeping: contiguous clock reads, so stage times sum exactly to
// the total.
class StageRecorder {
  public:
    StageRecorder(CallProfile* profile, const CommWorld* world)
        : profile_(profile), world_(world) {
        if (profile_) {
            start_ = Clock::now();
            last_ = start_;
            last_stats_ = world_ ? world_->stats() : CommStats{};
        }
    }

    void stage(const char* label) {
        if (!profile_) {
            return;
        }
        const Clock::time_point now = Clock::now();
        const CommStats stats = world_ ? world_->stats() : CommStats{};
        CallProfile::Stage s;
        s.label = label;
        s.time_us = std::chrono::duration<double, std::micro>(now - last_).count();
        s.ledger_delta = stats - last_stats_;
        profile_->stages.push_back(std::move(s));
        last_ = now;
        last_stats_ = stats;
    }

    void finish(const std::string& variant, const AblationFlags& flags) {
        if (!profile_) {
            return;
        }
        profile_->variant = variant;
        profile_->ablation = flags;
        profile_->total_us = 0.0;
        CommStats total{};
        for (const CallProfile::Stage& s : profile_->stages) {
            profile_->total_us += s.time_us;
            total.all_gather += s.ledger_delta.all_gather;
            total.all_to_all += s.ledger_delta.all_to_all;
            total.fused_all_to_all += s.ledger_delta.fused_all_to_all;
            total.elements_sent += s.ledger_delta.elements_sent;
            total.rounds += s.ledger_delta.rounds;
        }
        profile_->ledger_delta = total;
    }

  private:
    CallProfile* profile_;
    const CommWorld* world_;
    Clock::time_point start_{};
    Clock::time_point last_{};
    CommStats last_stats_;
};

// When precomputed frequencies are disabled the needed slices are rebuilt on
// every call; the angles are identical, the table construction is the extra
// work being modeled.
RopeFrequencyTable recompute_slice(const RopeFrequencyTable& table, const GridSpec& grid,
                                   std::int64_t start_frame) {
    return precompute_frequencies(start_frame + grid.frames, grid.height, grid.width,
                                  table.split().total() * 2, table.base(), table.split());
}

Tensor4 sp_self_attention_engine(const Tensor4& x_local, int rank, CommWorld& world,
                                 const AttentionLayerParams& params, const GridSpec& grid,
                                 const RopeFrequencyTable& table, std::int64_t start_frame,
                                 KvCache& cache, std::int64_t block_index,
                                 const AblationFlags& flags, const std::string& variant_name,
                                 CallProfile* profile) {
    const int P = world.world_size();
    const std::int64_t full_len = grid.seq_len();
    if (full_len % P != 0) {
        throw PartitionError("block length " + std::to_string(full_len) +
                             " not divisible by world size " + std::to_string(P));
    }
    if (x_local.shape().seq != full_len / P) {
        throw ShapeError("local input has seq " + std::to_string(x_local.shape().seq) +
                         ", expected L/P = " + std::to_string(full_len / P));
    }
    if (x_local.shape().heads % P != 0) {
        throw PartitionError("heads " + std::to_string(x_local.shape().heads) +
                             " not divisible by world size " + std::to_string(P));
    }

    StageRecorder rec(profile, &world);

    // local projections
    Tensor4 q = project_tokens(x_local, params.w_q);
    Tensor4 k = project_tokens(x_local, params.w_k);
    Tensor4 v = project_tokens(x_local, params.w_v);
    rec.stage(kStageQkv);

    Tensor4 k_shard, v_shard, q_full;
    bool q_needs_split = false;

    if (flags.use_local_rope) {
        // rank-local RoPE: global indices derived from the rank offset,
        // nothing to exchange yet
        if (flags.use_precomputed_freqs) {
            q = apply_rope_causal_local(q, grid, table, start_frame, rank, P);
            k = apply_rope_causal_local(k, grid, table, start_frame, rank, P);
        } else {
            const RopeFrequencyTable fresh = recompute_slice(table, grid, start_frame);
            q = apply_rope_causal_local(q, grid, fresh, start_frame, rank, P);
            k = apply_rope_causal_local(k, grid, fresh, start_frame, rank, P);
        }
        rec.stage(kStageRope);

        if (flags.use_fused_all_to_all) {
            // one exchange gathers the sequence and splits the heads
            FusedQkv ex = world.fused_all_to_all(rank, q, k, v);
            rec.stage(kStageGatherOrFused);
            q_full = std::move(ex.q);
            k_shard = std::move(ex.k);
            v_shard = std::move(ex.v);
        } else {
            q = world.all_gather(rank, q, Axis::Seq);
            k = world.all_gather(rank, k, Axis::Seq);
            v = world.all_gather(rank, v, Axis::Seq);
            rec.stage(kStageGatherOrFused);
            k_shard = split_heads(k, P, rank);
            v_shard = split_heads(v, P, rank);
            q_full = std::move(q);
            q_needs_split = true;
        }
    } else if (flags.use_fused_all_to_all) {
        // Exchange first, then RoPE on the gathered head shard.
        FusedQkv ex = world.fused_all_to_all(rank, q, k, v);
        rec.stage(kStageGatherOrFused);
        if (flags.use_precomputed_freqs) {
            q_full = apply_rope_global(ex.q, grid, table, start_frame);
            k_shard = apply_rope_global(ex.k, grid, table, start_frame);
        } else {
            const RopeFrequencyTable fresh = recompute_slice(table, grid, start_frame);
            q_full = apply_rope_global(ex.q, grid, fresh, start_frame);
            k_shard = apply_rope_global(ex.k, grid, fresh, start_frame);
        }
        rec.stage(kStageRope);
        v_shard = std::move(ex.v);
    } else {
        // gather the full sequence, rotate globally, split heads
        q = world.all_gather(rank, q, Axis::Seq);
        k = world.all_gather(rank, k, Axis::Seq);
        v = world.all_gather(rank, v, Axis::Seq);
        rec.stage(kStageGatherOrFused);
        if (flags.use_precomputed_freqs) {
            q = apply_rope_global(q, grid, table, start_frame);
            k = apply_rope_global(k, grid, table, start_frame);
        } else {
            const RopeFrequencyTable fresh = recompute_slice(table, grid, start_frame);
            q = apply_rope_global(q, grid, fresh, start_frame);
            k = apply_rope_global(k, grid, fresh, start_frame);
        }
        rec.stage(kStageRope);
        k_shard = split_heads(k, P, rank);
        v_shard = split_heads(v, P, rank);
        q_full = std::move(q);
        q_needs_split = true;
    }

    // the cache holds the full sequence for this rank's head shard
    cache.update(block_index, k_shard, v_shard);
    rec.stage(kStageCache);

    // attention over everything cached so far
    if (q_needs_split) {
        q_full = split_heads(q_full, P, rank);
    }
    auto [ck, cv] = cache.read();
    Tensor4 o = scaled_dot_product_attention(q_full, ck, cv);
    rec.stage(kStageAttention);

    // restore the sequence partitioning, then project the local slab
    o = world.all_to_all(rank, o, Axis::Seq, Axis::Heads);
    o = project_tokens(o, params.w_o);
    rec.stage(kStageOutputExchange);

    rec.finish(variant_name, flags);
    return o;
}

} // namespace

Tensor4 reference_self_attention(const Tensor4& x_full, const AttentionLayerParams& params,
                                 const GridSpec& grid, const RopeFrequencyTable& table,
                                 std::int64_t start_frame, KvCache& cache,
                                 std::int64_t block_index, CallProfile* profile) {
    if (x_full.shape().seq != grid.seq_len()) {
        throw ShapeError("reference input has seq " + std::to_string(x_full.shape().seq) +
                         ", expected L = " + std::to_string(grid.seq_len()));
    }
    StageRecorder rec(profile, nullptr);

    Tensor4 q = project_tokens(x_full, params.w_q);
    Tensor4 k = project_tokens(x_full, params.w_k);
    Tensor4 v = project_tokens(x_full, params.w_v);
    rec.stage(kStageQkv);

    q = apply_rope_global(q, grid, table, start_frame);
    k = apply_rope_global(k, grid, table, start_frame);
    rec.stage(kStageRope);

    cache.update(block_index, k, v);
    rec.stage(kStageCache);

    auto [ck, cv] = cache.read();
    Tensor4 o = scaled_dot_product_attention(q, ck, cv);
    rec.stage(kStageAttention);

    o = project_tokens(o, params.w_o);
    rec.stage(kStageOutputExchange);

    rec.finish(pipeline_kind_name(PipelineKind::Reference), AblationFlags::all_on());
    return o;
}

Tensor4 baseline_sp_self_attention(const Tensor4& x_local, int rank, CommWorld& world,
                                   const AttentionLayerParams& params, const GridSpec& grid,
                                   const RopeFrequencyTable& table, std::int64_t start_frame,
                                   KvCache& cache, std::int64_t block_index,
                                   CallProfile* profile) {
    return sp_self_attention_engine(x_local, rank, world, params, grid, table, start_frame, cache,
                                    block_index, AblationFlags::all_off(),
                                    pipeline_kind_name(PipelineKind::BaselineSP), profile);
}

Tensor4 optimized_sp_self_attention(const Tensor4& x_local, int rank, CommWorld& world,
                                    const AttentionLayerParams& params, const GridSpec& grid,
                                    const RopeFrequencyTable& table, std::int64_t start_frame,
                                    KvCache& cache, std::int64_t block_index,
                                    const AblationFlags& flags, CallProfile* profile) {
    return sp_self_attention_engine(x_local, rank, world, params, grid, table, start_frame, cache,
                                    block_index, flags,
                                    pipeline_kind_name(PipelineKind::OptimizedSP), profile);
}

Tensor4 run_self_attention(const PipelineVariant& variant, const Tensor4& x_local, int rank,
                           CommWorld& world, const AttentionLayerParams& params,
                           const GridSpec& grid, const RopeFrequencyTable& table,
                           std::int64_t start_frame, KvCache& cache, std::int64_t block_index,
                           CallProfile* profile) {
    switch (variant.kind) {
        case PipelineKind::Reference:
            if (world.world_size() != 1) {
                throw ConfigError("reference pipeline requires world size 1");
            }
            return reference_self_attention(x_local, params, grid, table, start_frame, cache,
                                            block_index, profile);
        case PipelineKind::BaselineSP:
            return baseline_sp_self_attention(x_local, rank, world, params, grid, table,
                                              start_frame, cache, block_index, profile);
        case PipelineKind::OptimizedSP:
            return optimized_sp_self_attention(x_local, rank, world, params, grid, table,
                                               start_frame, cache, block_index, variant.ablation,
                                               profile);
    }
    throw ConfigError("unknown pipeline kind");
}

CallProfile profile_call(const PipelineVariant& variant, const ProfileCallInputs& in) {
    const int P = variant.kind == PipelineKind::Reference ? 1 : in.world_size;
    in.grid.validate();
    const std::int64_t L = in.grid.seq_len();
    if (L % P != 0 || in.heads % P != 0) {
        throw PartitionError("profile grid/heads not divisible by world size " +
                             std::to_string(P));
    }

    const RopeFrequencyTable table = precompute_frequencies(
        (in.block_index + 1) * in.grid.frames, in.grid.height, in.grid.width, in.head_dim,
        in.rope_base, BandSplit::defaults_for(in.head_dim));
    const AttentionLayerParams params =
        AttentionLayerParams::seeded(in.heads * in.head_dim, derive_seed(in.seed, 1, 0));

    Rng rng(derive_seed(in.seed, 2, static_cast<std::uint64_t>(in.block_index), 0));
    const Tensor4 x_full = random_tensor(Shape4{in.batch, L, in.heads, in.head_dim}, rng);
    const std::int64_t start_frame = in.block_index * in.grid.frames;

    CommWorld world(P);
    std::vector<CallProfile> profiles(static_cast<std::size_t>(P));
    world.run([&](int rank) {
        KvCache cache(in.grid.tokens_per_frame());
        const Tensor4 x_local = x_full.slice(Axis::Seq, rank * (L / P), L / P);
        run_self_attention(variant, x_local, rank, world, params, in.grid, table, start_frame,
                           cache, in.block_index, &profiles[static_cast<std::size_t>(rank)]);
    });

    return in.merge_qkv_rope ? profiles[0].merged_qkv_rope() : profiles[0];
}

} // namespace spattn
