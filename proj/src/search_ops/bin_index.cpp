#include "pm/search_ops/bin_index.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace pm {

namespace {

void patch_vector(const ImageBuffer& img, Point z, const PatchGeometry& geom, std::vector<float>& v) {
    const int h = geom.half(), c = img.channels();
    v.clear();
    for (int dy = -h; dy <= h; ++dy) {
        const float* row = img.pixel(z.x - h, z.y + dy);
        v.insert(v.end(), row, row + geom.size() * c);
    }
}

std::vector<float> patch_vector(const ImageBuffer& img, Point z, const PatchGeometry& geom) {
    std::vector<float> v;
    patch_vector(img, z, geom, v);
    return v;
}

std::uint32_t ipow(std::uint32_t b, int e) {
    std::uint32_t r = 1;
    while (e-- > 0) r *= b;
    return r;
}

}  // namespace

std::size_t BinIndex::bin_count() const { return ipow(std::uint32_t(opts_.parts), opts_.dims); }

double BinIndex::project(std::size_t d, std::span<const float> patch) const {
    const std::vector<float>& b = basis_[d];
    double p = 0.0;
    for (std::size_t i = 0; i < patch.size(); ++i) p += double(b[i]) * double(patch[i]);
    return p - offset_[d];
}

std::uint32_t BinIndex::bin_of(std::span<const float> patch) const {
    if (patch.size() != mean_.size()) throw InvalidArgument("query patch has the wrong length");
    if (degenerate_) return 0;
    std::uint32_t id = 0, stride = 1;
    for (std::size_t d = 0; d < basis_.size(); ++d, stride *= std::uint32_t(opts_.parts)) {
        const auto& cut = cutoffs_[d];
        id += stride * std::uint32_t(std::upper_bound(cut.begin(), cut.end(), project(d, patch)) - cut.begin());
    }
    return id;
}

std::uint32_t BinIndex::bin_of(const ImageBuffer& img, Point z) const {
    if (img.channels() != channels_) throw InvalidArgument("query image has the wrong channel count");
    if (!geom_.valid_rect(img).contains(z)) throw InvalidArgument("query patch outside image");
    return bin_of(patch_vector(img, z, geom_));
}

const std::vector<Point>* BinIndex::bucket(std::uint32_t id) const {
    const auto it = buckets_.find(id);
    return it == buckets_.end() ? nullptr : &it->second;
}

std::uint32_t BinIndex::nearest_nonempty(std::uint32_t id) const {
    if (nonempty_.empty()) throw InvalidArgument("bin index is empty");
    if (id >= bin_count()) throw InvalidArgument("bucket id out of range");
    if (!nearest_.empty()) return nearest_[id];
    if (buckets_.count(id)) return id;
    const int dims = opts_.dims;
    const auto parts = std::uint32_t(opts_.parts);
    std::vector<int> cell(static_cast<std::size_t>(dims));
    for (int d = 0; d < dims; ++d, id /= parts) cell[std::size_t(d)] = int(id % parts);

    // Rings of growing L1 radius around the query cell; small radii cover
    // almost every query, larger ones fall back to a scan of nonempty buckets.
    constexpr int kRingLimit = 3;
    std::uint32_t best = ~0u;
    std::vector<int> off(static_cast<std::size_t>(dims), 0);
    auto visit = [&](auto&& self, int d, int left) -> void {
        if (d == dims - 1) {
            for (const int sign : {1, -1}) {
                const int c = cell[std::size_t(d)] + sign * left;
                if (c >= 0 && c < int(parts)) {
                    off[std::size_t(d)] = c;
                    std::uint32_t cand = 0;
                    for (int k = dims - 1; k >= 0; --k) cand = cand * parts + std::uint32_t(off[std::size_t(k)]);
                    if (cand < best && buckets_.count(cand)) best = cand;
                }
                if (left == 0) break;
            }
            return;
        }
        for (int used = 0; used <= left; ++used) {
            for (const int sign : {1, -1}) {
                const int c = cell[std::size_t(d)] + sign * used;
                if (c >= 0 && c < int(parts)) {
                    off[std::size_t(d)] = c;
                    self(self, d + 1, left - used);
                }
                if (used == 0) break;
            }
        }
    };
    for (int r = 1; r <= kRingLimit; ++r) {
        visit(visit, 0, r);
        if (best != ~0u) return best;
    }
    std::uint32_t best_dist = ~0u;
    for (const std::uint32_t cand : nonempty_) {
        std::uint32_t dist = 0, c = cand;
        for (int d = 0; d < dims; ++d, c /= parts) dist += std::uint32_t(std::abs(int(c % parts) - cell[std::size_t(d)]));
        if (dist < best_dist) best_dist = dist, best = cand;
    }
    return best;
}

void BinIndex::build_nearest_table() {
    const std::size_t total = bin_count();
    if (total > (std::size_t(1) << 22)) return;  // ring search instead
    const auto parts = std::uint32_t(opts_.parts);
    std::vector<std::uint32_t> stride(std::size_t(opts_.dims), 1);
    for (std::size_t d = 1; d < stride.size(); ++d) stride[d] = stride[d - 1] * parts;
    constexpr std::uint32_t kNone = ~0u;
    nearest_.assign(total, kNone);
    std::vector<std::uint32_t> frontier = nonempty_;
    for (const std::uint32_t id : frontier) nearest_[id] = id;
    // Level-synchronous BFS on the cell grid (graph distance = L1); a cell
    // reached from several frontier cells takes the smallest label.
    std::vector<std::uint32_t> next, label(total, kNone);
    while (!frontier.empty()) {
        next.clear();
        for (const std::uint32_t c : frontier) {
            for (std::size_t d = 0; d < stride.size(); ++d) {
                const std::uint32_t coord = (c / stride[d]) % parts;
                for (const int sign : {-1, 1}) {
                    if ((sign < 0 && coord == 0) || (sign > 0 && coord + 1 == parts)) continue;
                    const std::uint32_t n = sign < 0 ? c - stride[d] : c + stride[d];
                    if (nearest_[n] != kNone) continue;
                    if (label[n] == kNone) next.push_back(n);
                    label[n] = std::min(label[n], nearest_[c]);
                }
            }
        }
        for (const std::uint32_t n : next) nearest_[n] = label[n];
        frontier.swap(next);
    }
}

BinIndex build_bin_index(const ImageBuffer& B, const PatchGeometry& geom, const BinOptions& opts) {
    if (opts.dims < 1 || opts.parts < 1 || opts.sample_stride < 1 || opts.index_every < 1)
        throw InvalidArgument("bin options must be positive");
    if (std::pow(double(opts.parts), opts.dims) > 4.0e9) throw InvalidArgument("too many bins");
    BinIndex idx;
    idx.opts_ = opts;
    idx.geom_ = geom;
    idx.channels_ = B.channels();
    const Rect r = geom.valid_rect(B);
    const int n = geom.area() * B.channels();
    if (n < opts.dims) throw InvalidArgument("patch space smaller than the number of PCA dimensions");

    std::vector<std::size_t> samples;
    for (std::size_t i = 0; i < r.area(); i += std::size_t(opts.sample_stride)) samples.push_back(i);
    if (samples.size() < std::size_t(10 * opts.dims))
        throw InvalidArgument("not enough patches to estimate the projection");

    Eigen::MatrixXd X(Eigen::Index(samples.size()), n);
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto v = patch_vector(B, r.at(samples[s]), geom);
        for (int j = 0; j < n; ++j) X(Eigen::Index(s), j) = v[std::size_t(j)];
    }
    const Eigen::RowVectorXd mean = X.colwise().mean();
    X.rowwise() -= mean;
    const Eigen::MatrixXd cov = (X.adjoint() * X) / double(std::max<std::size_t>(1, samples.size() - 1));
    idx.mean_.assign(std::size_t(n), 0.0f);
    for (int j = 0; j < n; ++j) idx.mean_[std::size_t(j)] = float(mean(j));

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const double total = cov.trace();
    idx.degenerate_ = !(total > 1e-12) || eig.info() != Eigen::Success;

    std::vector<Point> coords;
    for (std::size_t i = 0; i < r.area(); i += std::size_t(opts.index_every)) coords.push_back(r.at(i));
    idx.indexed_ = coords.size();

    if (idx.degenerate_) {
        idx.buckets_[0] = coords;
        idx.nonempty_ = {0};
        idx.build_nearest_table();
        return idx;
    }

    // Eigenvalues ascend; the leading components are the last columns.
    for (int d = 0; d < opts.dims; ++d) {
        const auto col = eig.eigenvectors().col(n - 1 - d);
        std::vector<float> row(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) row[std::size_t(j)] = float(col(j));
        idx.basis_.push_back(std::move(row));
    }

    for (const auto& row : idx.basis_) {
        double o = 0.0;
        for (int j = 0; j < n; ++j) o += double(row[std::size_t(j)]) * double(idx.mean_[std::size_t(j)]);
        idx.offset_.push_back(o);
    }

    // Bucketing uses the same projection as queries, so a coordinate's own
    // patch always maps to the bucket that holds it.
    std::vector<std::vector<double>> proj(std::size_t(opts.dims), std::vector<double>(coords.size()));
    std::vector<float> v;
    for (std::size_t c = 0; c < coords.size(); ++c) {
        patch_vector(B, coords[c], geom, v);
        for (std::size_t d = 0; d < idx.basis_.size(); ++d) proj[d][c] = idx.project(d, v);
    }
    for (std::size_t d = 0; d < proj.size(); ++d) {
        std::vector<double> sorted = proj[d];
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> cut;
        for (int q = 1; q < opts.parts; ++q) cut.push_back(sorted[sorted.size() * std::size_t(q) / std::size_t(opts.parts)]);
        idx.cutoffs_.push_back(std::move(cut));
    }
    for (std::size_t c = 0; c < coords.size(); ++c) {
        std::uint32_t id = 0, stride = 1;
        for (std::size_t d = 0; d < proj.size(); ++d, stride *= std::uint32_t(opts.parts)) {
            const auto& cut = idx.cutoffs_[d];
            id += stride * std::uint32_t(std::upper_bound(cut.begin(), cut.end(), proj[d][c]) - cut.begin());
        }
        idx.buckets_[id].push_back(coords[c]);
    }
    for (const auto& [id, members] : idx.buckets_) idx.nonempty_.push_back(id);
    std::sort(idx.nonempty_.begin(), idx.nonempty_.end());
    idx.build_nearest_table();
    return idx;
}

Point bin_candidate(const BinIndex& index, std::span<const float> query_patch, CounterRng& rng) {
    if (index.empty()) throw InvalidArgument("bin index is empty");
    const std::uint32_t id = index.bin_of(query_patch);
    const std::vector<Point>* b = index.bucket(id);
    if (!b) b = index.bucket(index.nearest_nonempty(id));
    return (*b)[rng.below(b->size())];
}

Point bin_candidate(const BinIndex& index, const ImageBuffer& A, Point z, CounterRng& rng) {
    if (index.empty()) throw InvalidArgument("bin index is empty");
    if (!index.geom().valid_rect(A).contains(z)) throw InvalidArgument("query patch outside image");
    thread_local std::vector<float> buf;
    patch_vector(A, z, index.geom(), buf);
    return bin_candidate(index, buf, rng);
}

}  // namespace pm
