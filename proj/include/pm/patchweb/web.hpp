#pragma once

#include <filesystem>
#include <memory>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pm/annf/nnf.hpp"
#include "pm/core/image.hpp"
#include "pm/core/rng.hpp"
#include "pm/patchweb/web_entry.hpp"
#include "pm/search_ops/bin_index.hpp"

namespace pm {

struct ManifestEntry {
    std::string path;
    int width = 0;
    int height = 0;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

using Manifest = std::vector<ManifestEntry>;

/// Reads the dimensions of each image file. Throws InputError for images
/// larger than 4096 px per side or collections above 65536 images.
Manifest make_manifest(const std::vector<std::filesystem::path>& images);
/// One "path<TAB>width<TAB>height" line per image.
void write_manifest(const std::filesystem::path& file, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& file);

/// Loads a collection image as 3-channel sRGB (gray is replicated, alpha dropped).
ImageBuffer load_web_image(const std::filesystem::path& path);

/// Field of one collection (or query) image: one packed entry per valid
/// patch center, raster order.
class WebNnf {
public:
    WebNnf() = default;
    WebNnf(int image, Extent extent, PatchGeometry geom)
        : image_(image), extent_(extent), geom_(geom), entries_(geom.valid_rect(extent).area(), kWebSentinel) {}

    int image() const { return image_; }
    Extent extent() const { return extent_; }
    const PatchGeometry& geom() const { return geom_; }
    Rect valid_rect() const { return geom_.valid_rect(extent_); }
    std::size_t size() const { return entries_.size(); }

    std::vector<std::uint64_t>& words() { return entries_; }
    const std::vector<std::uint64_t>& words() const { return entries_; }
    bool assigned(std::size_t i) const { return entries_[i] != kWebSentinel; }
    std::uint32_t qdist(std::size_t i) const { return assigned(i) ? unpack_web_entry(entries_[i]).dist : kWebDistMax; }
    std::size_t assigned_count() const;
    /// Mean quantized distance; unassigned entries count as the maximum.
    double mean_qdist() const;
    /// Mean distance in SSD units over `channels`-channel images.
    double mean_distance(int channels = 3) const;
    /// Pointwise min by distance; ties keep this field's entry.
    void merge_min(const WebNnf& other);
    /// As a plain field into image `target` (entries to other images and
    /// unassigned entries keep an infinite distance).
    Nnf to_nnf(Extent target_extent, int target_image, int channels = 3) const;

    friend bool operator==(const WebNnf&, const WebNnf&) = default;

private:
    int image_ = 0;
    Extent extent_;
    PatchGeometry geom_;
    std::vector<std::uint64_t> entries_;
};

/// "WEB1", u32 width, u32 height, u16 patch size, then a zlib stream of
/// little-endian u64 entries.
std::vector<std::uint8_t> encode_web_nnf(const WebNnf& f);
WebNnf decode_web_nnf(std::span<const std::uint8_t> bytes, int image);

std::filesystem::path web_manifest_path(const std::filesystem::path& dir);
std::filesystem::path web_field_path(const std::filesystem::path& dir, int image);
WebNnf load_web_nnf(const std::filesystem::path& dir, int image);
/// Merge-by-min save under an exclusive lock on the field's lock file. The
/// merged result is written back into `f` as well.
void save_web_nnf(const std::filesystem::path& dir, WebNnf& f);

/// Fractions of the working-set capacity filled by keeping previous members,
/// uniform fresh draws, and images most targeted by the kept members.
struct WorkingSetPolicy {
    double keep = 1.0 / 3.0;
    double fresh = 1.0 / 3.0;
    double enrich = 1.0 / 3.0;
};

/// Image indices of the next working set. `previous_fields` (parallel to
/// `previous`) drive the enrichment slots; `query` (if >= 0) is always a member.
std::vector<int> select_working_set(int collection_size, const std::vector<int>& previous,
                                    const std::vector<const WebNnf*>& previous_fields, const WorkingSetPolicy& policy,
                                    int capacity, CounterRng& rng, int query = -1);

enum WebOperator : unsigned {
    kOpPropagation = 1u << 0,
    kOpRandomSearch = 1u << 1,
    kOpBinning = 1u << 2,
    kOpEnrichment = 1u << 3,
    kOpUniform = 1u << 4,
    kOpAll = 0x1F,
};

struct RelaxOptions {
    int sweeps = 2;
    unsigned operators = kOpAll;
    double alpha = 0.5;
    std::uint64_t seed = 0;
    BinOptions bins;
};

struct WebMember {
    int index = 0;
    ImageBuffer image;
    WebNnf field;
    /// Shared with the loader's cache; null when the member is not binned.
    std::shared_ptr<const BinIndex> bins;
    /// Only writable members are swept and receive mirror updates.
    bool writable = true;
};

struct WorkingSet {
    std::vector<WebMember> members;
    const WebMember* find(int index) const;
    WebMember* find(int index);
};

struct RelaxStats {
    std::size_t evaluations = 0;
    std::size_t updates = 0;
    std::size_t mirror_updates = 0;
};

/// Sweeps every writable member's field; each improvement (z, i) -> (z', j)
/// is mirrored into j's field when j is writable and the mirror is better.
RelaxStats relax(WorkingSet& ws, const RelaxOptions& opts, int round = 0);

struct WebBuildOptions {
    int patch = PatchGeometry::kDefaultSize;
    int capacity = 8;
    int rounds = 10;
    WorkingSetPolicy policy;
    RelaxOptions relax;
    /// Called after each round with the round number and the working-set
    /// wall time so far (excluding callbacks).
    std::function<void(int round, double seconds)> on_round;
};

/// Creates (or resumes) a web in `dir` for the manifest's images.
void build_web(const std::filesystem::path& dir, const Manifest& manifest, const WebBuildOptions& opts);

/// Mean distance over every field in the web directory.
double web_mean_distance(const std::filesystem::path& dir, const Manifest& manifest);

struct WebQueryOptions {
    int capacity = 8;
    int rounds = 4;
    int workers = 1;
    WorkingSetPolicy policy;
    RelaxOptions relax;
};

/// Matches a query image against a built web without modifying it. The
/// result's image index is the collection size. With several workers each
/// runs its own working-set sequence and the fields are merged by min.
WebNnf query_web(const std::filesystem::path& dir, const ImageBuffer& query, const WebQueryOptions& opts);

/// Probability that two fixed images share a uniformly drawn m-subset of n.
double coincidence_probability(int n, int m);

}  // namespace pm
