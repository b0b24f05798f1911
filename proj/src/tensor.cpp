#include "spattn/tensor.hpp"

#include <cmath>
#include <sstream>

namespace spattn {

std::int64_t Shape4::extent(Axis a) const {
    switch (a) {
        case Axis::Batch: return batch;
        case Axis::Seq: return seq;
        case Axis::Heads: return heads;
        case Axis::HeadDim: return head_dim;
    }
    throw ShapeError("unknown axis");
}

Shape4 Shape4::with_extent(Axis a, std::int64_t value) const {
    Shape4 out = *this;
    switch (a) {
        case Axis::Batch: out.batch = value; break;
        case Axis::Seq: out.seq = value; break;
        case Axis::Heads: out.heads = value; break;
        case Axis::HeadDim: out.head_dim = value; break;
    }
    return out;
}

void Shape4::validate() const {
    if (batch < 1 || seq < 1 || heads < 1 || head_dim < 1) {
        throw ShapeError("all extents must be >= 1, got " + str());
    }
    if (head_dim % 2 != 0) {
        throw ShapeError("head_dim must be even, got " + std::to_string(head_dim));
    }
}

std::string Shape4::str() const {
    std::ostringstream os;
    os << "(" << batch << ", " << seq << ", " << heads << ", " << head_dim << ")";
    return os.str();
}

Tensor4::Tensor4(Shape4 shape) : shape_(shape), data_(static_cast<std::size_t>(shape.numel()), 0.0) {}

Tensor4::Tensor4(Shape4 shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
        throw ShapeError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
    }
}

Tensor4 Tensor4::slice(Axis a, std::int64_t start, std::int64_t len) const {
    const std::int64_t ext = shape_.extent(a);
    if (start < 0 || len < 1 || start + len > ext) {
        throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of range for extent " + std::to_string(ext));
    }
    Tensor4 out(shape_.with_extent(a, len));
    const int ai = axis_index(a);
    for (std::int64_t b = 0; b < out.shape_.batch; ++b) {
        for (std::int64_t s = 0; s < out.shape_.seq; ++s) {
            for (std::int64_t h = 0; h < out.shape_.heads; ++h) {
                for (std::int64_t d = 0; d < out.shape_.head_dim; ++d) {
                    std::int64_t src[4] = {b, s, h, d};
                    src[ai] += start;
                    out.at(b, s, h, d) = at(src[0], src[1], src[2], src[3]);
                }
            }
        }
    }
    return out;
}

Tensor4 concat(const std::vector<Tensor4>& parts, Axis a) {
    if (parts.empty()) {
        throw ShapeError("concat of zero tensors");
    }
    Shape4 base = parts[0].shape();
    std::int64_t total = 0;
    for (const Tensor4& p : parts) {
        if (p.shape().with_extent(a, 1) != base.with_extent(a, 1)) {
            throw ShapeError("concat shape mismatch: " + p.shape().str() + " vs " + base.str());
        }
        total += p.extent(a);
    }
    Tensor4 out(base.with_extent(a, total));
    const int ai = axis_index(a);
    std::int64_t pos = 0;
    for (const Tensor4& p : parts) {
        const Shape4& ps = p.shape();
        for (std::int64_t b = 0; b < ps.batch; ++b) {
            for (std::int64_t s = 0; s < ps.seq; ++s) {
                for (std::int64_t h = 0; h < ps.heads; ++h) {
                    for (std::int64_t d = 0; d < ps.head_dim; ++d) {
                        std::int64_t dst[4] = {b, s, h, d};
                        dst[ai] += pos;
                        out.at(dst[0], dst[1], dst[2], dst[3]) = p.at(b, s, h, d);
                    }
                }
            }
        }
        pos += ps.extent(a);
    }
    return out;
}

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::next_uniform() {
    // 53-bit mantissa in [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::next_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    if (u1 <= 0.0) {
        u1 = 0x1.0p-53; // keep the draw count fixed instead of resampling
    }
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(phi);
    have_spare_ = true;
    return r * std::cos(phi);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    // splitmix64 finalizer over each component
    auto mix = [](std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    };
    std::uint64_t s = mix(base);
    s = mix(s ^ mix(a + 0x1000));
    s = mix(s ^ mix(b + 0x2000));
    s = mix(s ^ mix(c + 0x3000));
    return s;
}

Tensor4 random_tensor(const Shape4& shape, Rng& rng) {
    shape.validate();
    Tensor4 out(shape);
    const double scale = 1.0 / std::sqrt(static_cast<double>(shape.head_dim));
    double* p = out.data();
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        p[i] = rng.next_normal() * scale;
    }
    return out;
}

Tensor4 scaled_dot_product_attention(const Tensor4& q, const Tensor4& k, const Tensor4& v) {
    const Shape4& qs = q.shape();
    const Shape4& ks = k.shape();
    const Shape4& vs = v.shape();
    if (ks != vs) {
        throw ShapeError("k/v shape mismatch: " + ks.str() + " vs " + vs.str());
    }
    if (qs.batch != ks.batch || qs.heads != ks.heads || qs.head_dim != ks.head_dim) {
        throw ShapeError("q/kv mismatch on batch, heads or head_dim: " + qs.str() + " vs " +
                         ks.str());
    }
    const std::int64_t B = qs.batch, Sq = qs.seq, Skv = ks.seq, H = qs.heads, D = qs.head_dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));

    Tensor4 out(qs);
    std::vector<double> logits(static_cast<std::size_t>(Skv));
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t h = 0; h < H; ++h) {
            for (std::int64_t i = 0; i < Sq; ++i) {
                // logits + running max (softmax with max subtraction)
                double m = -HUGE_VAL;
                for (std::int64_t t = 0; t < Skv; ++t) {
                    double dot = 0.0;
                    for (std::int64_t d = 0; d < D; ++d) {
                        dot += q.at(b, i, h, d) * k.at(b, t, h, d);
                    }
                    const double l = dot * inv_sqrt_d;
                    logits[static_cast<std::size_t>(t)] = l;
                    if (l > m) m = l;
                }
                double denom = 0.0;
                for (std::int64_t t = 0; t < Skv; ++t) {
                    const double w = std::exp(logits[static_cast<std::size_t>(t)] - m);
                    logits[static_cast<std::size_t>(t)] = w;
                    denom += w;
                }
                const double inv_denom = 1.0 / denom;
                for (std::int64_t d = 0; d < D; ++d) {
                    double acc = 0.0;
                    for (std::int64_t t = 0; t < Skv; ++t) {
                        acc += logits[static_cast<std::size_t>(t)] * v.at(b, t, h, d);
                    }
                    out.at(b, i, h, d) = acc * inv_denom;
                }
            }
        }
    }
    return out;
}

bool allclose(const Tensor4& a, const Tensor4& b, double abs_tol, double rel_tol) {
    if (a.shape() != b.shape()) {
        throw ShapeError("allclose shape mismatch: " + a.shape().str() + " vs " +
                         b.shape().str());
    }
    const double* pa = a.data();
    const double* pb = b.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        if (std::abs(pa[i] - pb[i]) > abs_tol + rel_tol * std::abs(pb[i])) {
            return false;
        }
    }
    return true;
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("max_abs_diff shape mismatch: " + a.shape().str() + " vs " +
                         b.shape().str());
    }
    double m = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        m = std::max(m, std::abs(pa[i] - pb[i]));
    }
    return m;
}

} // namespace spattn
