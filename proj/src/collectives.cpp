#include "spattn/collectives.hpp"

#include <thread>

namespace spattn {

CommWorld::CommWorld(int world_size) : world_size_(world_size) {
    if (world_size < 1) {
        throw ConfigError("world size must be >= 1, got " + std::to_string(world_size));
    }
    rank_seq_.assign(static_cast<std::size_t>(world_size), 0);
}

CommStats CommWorld::stats() const {
    std::lock_guard<std::mutex> lk(mu_);
    return stats_;
}

void CommWorld::reset_stats() {
    std::lock_guard<std::mutex> lk(mu_);
    stats_ = CommStats{};
}

const char* CommWorld::kind_name(Kind k) {
    switch (k) {
        case Kind::AllGather: return "all_gather";
        case Kind::AllToAll: return "all_to_all";
        case Kind::FusedAllToAll: return "fused_all_to_all";
        case Kind::Barrier: return "barrier";
    }
    return "?";
}

void CommWorld::mark_broken(const std::string& reason) {
    if (!broken_) {
        broken_ = true;
        break_reason_ = reason;
    }
    cv_.notify_all();
}

void CommWorld::worker_exited() {
    std::lock_guard<std::mutex> lk(mu_);
    --running_workers_;
    for (const auto& [seq, p] : pending_) {
        if (!p->ready && p->arrived > 0) {
            mark_broken("rank exited while collective #" + std::to_string(seq) +
                        " (" + kind_name(p->kind) + ") was pending");
            break;
        }
    }
}

void CommWorld::run(const std::function<void(int)>& body) {
    {
        std::lock_guard<std::mutex> lk(mu_);
        if (running_workers_ != -1) {
            throw std::logic_error("CommWorld::run is not re-entrant");
        }
        broken_ = false;
        break_reason_.clear();
        pending_.clear();
        rank_seq_.assign(static_cast<std::size_t>(world_size_), 0);
        running_workers_ = world_size_;
    }

    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(world_size_));
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(world_size_));
    for (int r = 0; r < world_size_; ++r) {
        workers.emplace_back([this, &body, &errors, r] {
            try {
                body(r);
            } catch (...) {
                errors[static_cast<std::size_t>(r)] = std::current_exception();
            }
            worker_exited();
        });
    }
    for (std::thread& t : workers) {
        t.join();
    }
    {
        std::lock_guard<std::mutex> lk(mu_);
        running_workers_ = -1;
    }

    // Root-cause errors outrank the CollectiveError a blocked peer reports.
    std::exception_ptr first;
    for (const std::exception_ptr& e : errors) {
        if (!e) continue;
        if (!first) first = e;
        try {
            std::rethrow_exception(e);
        } catch (const CollectiveError&) {
        } catch (...) {
            std::rethrow_exception(e);
        }
    }
    if (first) {
        std::rethrow_exception(first);
    }
}

FusedQkv CommWorld::enter(int rank, Kind kind, Axis axis0, Axis axis1, const Tensor4* q,
                          const Tensor4* k, const Tensor4* v) {
    std::unique_lock<std::mutex> lk(mu_);
    if (rank < 0 || rank >= world_size_) {
        throw CollectiveError("rank " + std::to_string(rank) + " out of range");
    }
    if (broken_) {
        throw CollectiveError(break_reason_);
    }
    if (running_workers_ == -1 && world_size_ > 1) {
        throw CollectiveError("collective on a multi-rank world outside run()");
    }
    if (running_workers_ != -1 && running_workers_ < world_size_) {
        mark_broken("collective " + std::string(kind_name(kind)) +
                    " entered after a peer rank exited");
        throw CollectiveError(break_reason_);
    }

    const std::uint64_t seq = rank_seq_[static_cast<std::size_t>(rank)]++;
    std::shared_ptr<Pending> p;
    if (auto it = pending_.find(seq); it != pending_.end()) {
        p = it->second;
        if (p->kind != kind || p->axis0 != axis0 || p->axis1 != axis1) {
            mark_broken("collective mismatch at #" + std::to_string(seq) + ": rank " +
                        std::to_string(rank) + " called " + kind_name(kind) + ", peers called " +
                        kind_name(p->kind));
            throw CollectiveError(break_reason_);
        }
    } else {
        p = std::make_shared<Pending>();
        p->kind = kind;
        p->axis0 = axis0;
        p->axis1 = axis1;
        p->in_q.assign(static_cast<std::size_t>(world_size_), nullptr);
        p->in_k.assign(static_cast<std::size_t>(world_size_), nullptr);
        p->in_v.assign(static_cast<std::size_t>(world_size_), nullptr);
        p->out.resize(static_cast<std::size_t>(world_size_));
        pending_.emplace(seq, p);
    }
    p->in_q[static_cast<std::size_t>(rank)] = q;
    p->in_k[static_cast<std::size_t>(rank)] = k;
    p->in_v[static_cast<std::size_t>(rank)] = v;
    ++p->arrived;

    if (p->arrived == world_size_) {
        try {
            complete(*p);
        } catch (const std::exception& e) {
            mark_broken(e.what());
            throw;
        }
        p->ready = true;
        cv_.notify_all();
    } else {
        cv_.wait(lk, [&] { return p->ready || broken_; });
        if (!p->ready) {
            throw CollectiveError(break_reason_);
        }
    }

    FusedQkv result = std::move(p->out[static_cast<std::size_t>(rank)]);
    if (++p->picked == world_size_) {
        pending_.erase(seq);
    }
    return result;
}

void CommWorld::complete(Pending& p) {
    const int P = world_size_;
    const auto& first = *p.in_q[0];

    switch (p.kind) {
        case Kind::Barrier:
            return;

        case Kind::AllGather: {
            std::vector<Tensor4> parts;
            parts.reserve(static_cast<std::size_t>(P));
            std::int64_t cross = 0;
            for (int i = 0; i < P; ++i) {
                const Tensor4& x = *p.in_q[static_cast<std::size_t>(i)];
                if (x.shape().with_extent(p.axis0, 1) != first.shape().with_extent(p.axis0, 1)) {
                    throw CollectiveError("all_gather extent mismatch across ranks: " +
                                          x.shape().str() + " vs " + first.shape().str());
                }
                parts.push_back(x);
                cross += (P - 1) * x.numel(); // rank i sends its chunk to P-1 peers
            }
            Tensor4 gathered = concat(parts, p.axis0);
            for (int j = 0; j < P; ++j) {
                p.out[static_cast<std::size_t>(j)].q = gathered;
            }
            stats_.all_gather += 1;
            stats_.rounds += 1;
            stats_.elements_sent += cross;
            return;
        }

        case Kind::AllToAll: {
            for (int i = 0; i < P; ++i) {
                const Tensor4& x = *p.in_q[static_cast<std::size_t>(i)];
                if (x.shape() != first.shape()) {
                    throw CollectiveError("all_to_all shape mismatch across ranks: " +
                                          x.shape().str() + " vs " + first.shape().str());
                }
            }
            const std::int64_t ext = first.extent(p.axis0);
            if (ext % P != 0) {
                throw PartitionError("all_to_all scatter extent " + std::to_string(ext) +
                                     " not divisible by world size " + std::to_string(P));
            }
            const std::int64_t chunk = ext / P;
            std::int64_t cross = 0;
            for (int j = 0; j < P; ++j) {
                std::vector<Tensor4> parts;
                parts.reserve(static_cast<std::size_t>(P));
                for (int i = 0; i < P; ++i) {
                    Tensor4 piece =
                        p.in_q[static_cast<std::size_t>(i)]->slice(p.axis0, j * chunk, chunk);
                    if (i != j) {
                        cross += piece.numel();
                    }
                    parts.push_back(std::move(piece));
                }
                p.out[static_cast<std::size_t>(j)].q = concat(parts, p.axis1);
            }
            stats_.all_to_all += 1;
            stats_.rounds += 1;
            stats_.elements_sent += cross;
            return;
        }

        case Kind::FusedAllToAll: {
            const std::int64_t ext = first.extent(p.axis0);
            if (ext % P != 0) {
                throw PartitionError("fused_all_to_all scatter extent " + std::to_string(ext) +
                                     " not divisible by world size " + std::to_string(P));
            }
            const std::int64_t chunk = ext / P;
            std::int64_t cross = 0;
            const std::vector<const Tensor4*>* ins[3] = {&p.in_q, &p.in_k, &p.in_v};
            for (int which = 0; which < 3; ++which) {
                for (int i = 0; i < P; ++i) {
                    const Tensor4& x = *(*ins[which])[static_cast<std::size_t>(i)];
                    if (x.shape() != first.shape()) {
                        throw CollectiveError("fused_all_to_all shape mismatch: " +
                                              x.shape().str() + " vs " + first.shape().str());
                    }
                }
                for (int j = 0; j < P; ++j) {
                    std::vector<Tensor4> parts;
                    parts.reserve(static_cast<std::size_t>(P));
                    for (int i = 0; i < P; ++i) {
                        Tensor4 piece = (*ins[which])[static_cast<std::size_t>(i)]->slice(
                            p.axis0, j * chunk, chunk);
                        if (i != j) {
                            cross += piece.numel();
                        }
                        parts.push_back(std::move(piece));
                    }
                    Tensor4 full = concat(parts, p.axis1);
                    FusedQkv& out = p.out[static_cast<std::size_t>(j)];
                    if (which == 0) out.q = std::move(full);
                    if (which == 1) out.k = std::move(full);
                    if (which == 2) out.v = std::move(full);
                }
            }
            stats_.fused_all_to_all += 1;
            stats_.rounds += 1;
            stats_.elements_sent += cross;
            return;
        }
    }
}

Tensor4 CommWorld::all_gather(int rank, const Tensor4& local, Axis dim) {
    return enter(rank, Kind::AllGather, dim, dim, &local, nullptr, nullptr).q;
}

Tensor4 CommWorld::all_to_all(int rank, const Tensor4& local, Axis scatter_dim, Axis gather_dim) {
    return enter(rank, Kind::AllToAll, scatter_dim, gather_dim, &local, nullptr, nullptr).q;
}

FusedQkv CommWorld::fused_all_to_all(int rank, const Tensor4& q, const Tensor4& k,
                                     const Tensor4& v, Axis scatter_dim, Axis gather_dim) {
    return enter(rank, Kind::FusedAllToAll, scatter_dim, gather_dim, &q, &k, &v);
}

void CommWorld::barrier(int rank) {
    Tensor4 token(Shape4{1, 1, 1, 2});
    enter(rank, Kind::Barrier, Axis::Seq, Axis::Seq, &token, nullptr, nullptr);
}

Tensor4 split_heads(const Tensor4& local, int world_size, int rank) {
    const std::int64_t H = local.extent(Axis::Heads);
    if (world_size < 1 || H % world_size != 0) {
        throw PartitionError("heads " + std::to_string(H) + " not divisible by world size " +
                             std::to_string(world_size));
    }
    if (rank < 0 || rank >= world_size) {
        throw PartitionError("rank " + std::to_string(rank) + " out of range");
    }
    const std::int64_t shard = H / world_size;
    if (world_size == 1) {
        return local;
    }
    return local.slice(Axis::Heads, rank * shard, shard);
}

} // namespace spattn
