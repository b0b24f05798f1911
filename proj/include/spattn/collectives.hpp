#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "spattn/tensor.hpp"

namespace spattn {

// Exact traffic ledger. Per-kind counters count logical collective
// invocations (one per group operation, not per rank). elements_sent counts
// scalars that cross a rank boundary, sender side; self-to-self chunks are
// excluded. rounds counts collective invocations of any kind.
struct CommStats {
    std::int64_t all_gather = 0;
    std::int64_t all_to_all = 0;
    std::int64_t fused_all_to_all = 0;
    std::int64_t elements_sent = 0;
    std::int64_t rounds = 0;

    CommStats operator-(const CommStats& rhs) const {
        return CommStats{all_gather - rhs.all_gather, all_to_all - rhs.all_to_all,
                         fused_all_to_all - rhs.fused_all_to_all,
                         elements_sent - rhs.elements_sent, rounds - rhs.rounds};
    }
    bool operator==(const CommStats&) const = default;
};

struct FusedQkv {
    Tensor4 q, k, v;
};

// Simulated P-rank communicator. Ranks execute as worker threads spawned by
// run(); collectives are rendezvous points: all P ranks must enter with
// compatible arguments before any rank leaves. Outputs and stats depend only
// on the inputs and rank order, never on thread scheduling.
//
// A rank that exits (or throws) while peers are blocked inside a collective
// marks the world broken and the blocked peers fail with CollectiveError
// instead of hanging.
class CommWorld {
  public:
    explicit CommWorld(int world_size);
    CommWorld(const CommWorld&) = delete;
    CommWorld& operator=(const CommWorld&) = delete;

    int world_size() const { return world_size_; }
    CommStats stats() const;
    void reset_stats();

    // Spawns world_size workers running body(rank) and joins them. Worker
    // exceptions are re-thrown after the join, root-cause errors first.
    void run(const std::function<void(int rank)>& body);

    // Rank-order concatenation along dim; every rank receives the full
    // result. Traffic: (P-1) * E per rank.
    Tensor4 all_gather(int rank, const Tensor4& local, Axis dim);

    // Splits each rank's tensor into P chunks along scatter_dim; rank j
    // receives chunk j from every rank, concatenated along gather_dim in
    // rank order. Traffic: (P-1) * E/P per rank.
    Tensor4 all_to_all(int rank, const Tensor4& local, Axis scatter_dim, Axis gather_dim);

    // One collective moving q, k and v together: semantically three
    // independent all_to_alls, but one invocation and one round in the
    // ledger. Defaults exchange head shards for full sequence.
    FusedQkv fused_all_to_all(int rank, const Tensor4& q, const Tensor4& k, const Tensor4& v,
                              Axis scatter_dim = Axis::Heads, Axis gather_dim = Axis::Seq);

    void barrier(int rank);

  private:
    enum class Kind { AllGather, AllToAll, FusedAllToAll, Barrier };

    struct Pending {
        Kind kind;
        Axis axis0, axis1;
        std::vector<const Tensor4*> in_q, in_k, in_v;
        std::vector<FusedQkv> out;
        int arrived = 0;
        int picked = 0;
        bool ready = false;
    };

    FusedQkv enter(int rank, Kind kind, Axis axis0, Axis axis1, const Tensor4* q,
                   const Tensor4* k, const Tensor4* v);
    void complete(Pending& p); // compute outputs + stats; caller holds mu_
    void mark_broken(const std::string& reason);
    void worker_exited();

    static const char* kind_name(Kind k);

    const int world_size_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    CommStats stats_;
    std::map<std::uint64_t, std::shared_ptr<Pending>> pending_;
    std::vector<std::uint64_t> rank_seq_;
    int running_workers_ = -1; // -1 outside run()
    bool broken_ = false;
    std::string break_reason_;
};

// The r-th contiguous H/P slab along the heads axis. Local, no communication.
Tensor4 split_heads(const Tensor4& local, int world_size, int rank);

} // namespace spattn
