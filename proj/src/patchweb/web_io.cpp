#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>
#include <zlib.h>

#include <fstream>
#include <sstream>

#include "pm/core/binary_io.hpp"
#include "pm/core/io.hpp"
#include "pm/patchweb/web.hpp"

namespace pm {

namespace {

void check_collection_image(Extent e, const std::string& what) {
    if (e.width > kWebCoordMax + 1 || e.height > kWebCoordMax + 1)
        throw InputError(what + ": images larger than 4096 px per side are not supported");
}

// RAII exclusive advisory lock on a sidecar file.
class FileLock {
public:
    explicit FileLock(const std::filesystem::path& p) {
        fd_ = ::open(p.c_str(), O_RDWR | O_CREAT, 0644);
        if (fd_ < 0) throw Error("cannot open lock file " + p.string());
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw Error("cannot lock " + p.string());
        }
    }
    ~FileLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

}  // namespace

Manifest make_manifest(const std::vector<std::filesystem::path>& images) {
    if (images.size() > std::size_t(kWebImageMax) + 1) throw InputError("collection exceeds 65536 images");
    Manifest m;
    for (const auto& p : images) {
        const ImageBuffer img = load_image(p);
        check_collection_image(img.extent(), p.string());
        m.push_back({std::filesystem::absolute(p).string(), img.width(), img.height()});
    }
    return m;
}

void write_manifest(const std::filesystem::path& file, const Manifest& m) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw Error("cannot write " + file.string());
    for (const auto& e : m) out << e.path << '\t' << e.width << '\t' << e.height << '\n';
    if (!out) throw Error("write failed: " + file.string());
}

Manifest read_manifest(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot read manifest " + file.string());
    Manifest m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto t2 = line.rfind('\t');
        const auto t1 = t2 == std::string::npos ? std::string::npos : line.rfind('\t', t2 - 1);
        if (t1 == std::string::npos) throw InputError("malformed manifest line: " + line);
        ManifestEntry e;
        e.path = line.substr(0, t1);
        try {
            e.width = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
            e.height = std::stoi(line.substr(t2 + 1));
        } catch (const std::exception&) {
            throw InputError("malformed manifest line: " + line);
        }
        m.push_back(std::move(e));
    }
    return m;
}

ImageBuffer load_web_image(const std::filesystem::path& path) {
    const ImageBuffer img = load_image(path);
    check_collection_image(img.extent(), path.string());
    if (img.channels() == 3) return img;
    ImageBuffer out(img.width(), img.height(), 3);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, img.channels() < 3 ? 0 : c);
    return out;
}

std::size_t WebNnf::assigned_count() const {
    std::size_t n = 0;
    for (const auto w : entries_) n += w != kWebSentinel;
    return n;
}

double WebNnf::mean_qdist() const {
    if (entries_.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < entries_.size(); ++i) s += qdist(i);
    return s / double(entries_.size());
}

double WebNnf::mean_distance(int channels) const {
    return mean_qdist() * web_max_distance(geom_, channels) / double(kWebDistMax);
}

void WebNnf::merge_min(const WebNnf& other) {
    if (!(other.extent_ == extent_) || !(other.geom_ == geom_)) throw InvalidArgument("merging fields of different shape");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!other.assigned(i)) continue;
        if (!assigned(i) || other.qdist(i) < qdist(i)) entries_[i] = other.entries_[i];
    }
}

Nnf WebNnf::to_nnf(Extent target_extent, int target_image, int channels) const {
    Nnf f(extent_, target_extent, geom_);
    const double dmax = web_max_distance(geom_, channels);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!assigned(i)) continue;
        const WebEntry e = unpack_web_entry(entries_[i]);
        if (e.image != target_image) continue;
        f.entries()[i] = {e.target(), dequantize_distance(e.dist, dmax)};
    }
    return f;
}

std::vector<std::uint8_t> encode_web_nnf(const WebNnf& f) {
    ByteWriter raw;
    raw.reserve(f.size() * 8);
    for (const auto w : f.words()) raw.u64(w);
    const auto& payload = raw.bytes();
    uLongf len = compressBound(uLong(payload.size()));
    std::vector<std::uint8_t> z(len);
    if (compress2(z.data(), &len, payload.data(), uLong(payload.size()), Z_DEFAULT_COMPRESSION) != Z_OK)
        throw Error("deflate failed");
    z.resize(len);

    ByteWriter w;
    w.magic("WEB1");
    w.u32(std::uint32_t(f.extent().width));
    w.u32(std::uint32_t(f.extent().height));
    w.u16(std::uint16_t(f.geom().size()));
    std::vector<std::uint8_t> out = w.take();
    out.insert(out.end(), z.begin(), z.end());
    return out;
}

WebNnf decode_web_nnf(std::span<const std::uint8_t> bytes, int image) {
    ByteReader r(bytes);
    r.expect_magic("WEB1");
    const Extent e{int(r.u32()), int(r.u32())};
    const int patch = r.u16();
    if (patch < 1 || patch % 2 == 0) throw InputError("web field: invalid patch size");
    check_collection_image(e, "web field");
    WebNnf f(image, e, PatchGeometry(patch));
    const auto z = r.rest();
    std::vector<std::uint8_t> raw(f.size() * 8);
    uLongf len = uLongf(raw.size());
    if (uncompress(raw.data(), &len, z.data(), uLong(z.size())) != Z_OK || len != raw.size())
        throw InputError("web field: corrupt or truncated compressed data");
    ByteReader rr(raw);
    for (auto& w : f.words()) w = rr.u64();
    return f;
}

std::filesystem::path web_manifest_path(const std::filesystem::path& dir) { return dir / "manifest.txt"; }

std::filesystem::path web_field_path(const std::filesystem::path& dir, int image) {
    return dir / (std::to_string(image) + ".wnnf.z");
}

WebNnf load_web_nnf(const std::filesystem::path& dir, int image) {
    return decode_web_nnf(read_binary_file(web_field_path(dir, image).string()), image);
}

void save_web_nnf(const std::filesystem::path& dir, WebNnf& f) {
    const auto path = web_field_path(dir, f.image());
    FileLock lock(path.string() + ".lock");
    if (std::filesystem::exists(path)) f.merge_min(load_web_nnf(dir, f.image()));
    const auto tmp = path.string() + ".tmp";
    write_binary_file(tmp, encode_web_nnf(f));
    std::filesystem::rename(tmp, path);
}

}  // namespace pm
