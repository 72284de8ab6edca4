#include "pm/core/io.hpp"

#include <fstream>
#include <map>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "pm/core/color.hpp"

namespace pm {

namespace {

bool has_png_signature(std::span<const std::uint8_t> b) {
    static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

bool has_jpeg_signature(std::span<const std::uint8_t> b) {
    return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

// PNG must end with an IEND chunk, JPEG with an EOI marker; OpenCV happily
// returns partial images for truncated files otherwise.
bool looks_complete(std::span<const std::uint8_t> b) {
    if (has_png_signature(b)) {
        static constexpr std::uint8_t iend[8] = {'I', 'E', 'N', 'D', 0xAE, 0x42, 0x60, 0x82};
        return b.size() >= 20 && std::equal(iend, iend + 8, b.end() - 8);
    }
    for (std::size_t i = b.size(); i >= 2 && i + 16 >= b.size(); --i)
        if (b[i - 2] == 0xFF && b[i - 1] == 0xD9) return true;
    return false;
}

cv::Mat decode_raw(std::span<const std::uint8_t> bytes, int flags) {
    if (!has_png_signature(bytes) && !has_jpeg_signature(bytes))
        throw InputError("unsupported image format (expected PNG or JPEG)");
    if (!looks_complete(bytes)) throw InputError("image data is truncated");
    cv::Mat buf(1, int(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data()));
    cv::Mat m;
    try {
        m = cv::imdecode(buf, flags);
    } catch (const cv::Exception& e) {
        throw InputError(std::string("image decode failed: ") + e.what());
    }
    if (m.empty()) throw InputError("image decode failed");
    return m;
}

ImageBuffer from_mat(const cv::Mat& m) {
    const int ch = m.channels();
    if (ch != 1 && ch != 3 && ch != 4) throw InputError("unsupported channel count");
    const double scale = m.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
    cv::Mat f;
    m.convertTo(f, CV_MAKETYPE(CV_32F, ch), scale);
    ImageBuffer img(f.cols, f.rows, ch, ColorSpace::SRGB);
    for (int y = 0; y < f.rows; ++y) {
        const float* row = f.ptr<float>(y);
        for (int x = 0; x < f.cols; ++x) {
            float* o = img.pixel(x, y);
            const float* p = row + std::size_t(x) * std::size_t(ch);
            if (ch == 1) {
                o[0] = p[0];
            } else {
                // OpenCV stores BGR(A).
                o[0] = p[2];
                o[1] = p[1];
                o[2] = p[0];
                if (ch == 4) o[3] = p[3];
            }
        }
    }
    return img;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error("write failed: " + path.string());
}

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
    return from_mat(decode_raw(bytes, cv::IMREAD_UNCHANGED));
}

ImageBuffer load_image(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_image(bytes);
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
    const ImageBuffer srgb = img.space() == ColorSpace::SRGB ? img : convert(img, ColorSpace::SRGB);
    const int ch = srgb.channels();
    if (ch == 2) throw InvalidArgument("encode_png: unsupported channel count 2");
    cv::Mat m(srgb.height(), srgb.width(), CV_MAKETYPE(CV_8U, ch));
    for (int y = 0; y < srgb.height(); ++y) {
        auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < srgb.width(); ++x) {
            const float* p = srgb.pixel(x, y);
            auto q = [](float v) { return std::uint8_t(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); };
            std::uint8_t* o = row + std::size_t(x) * std::size_t(ch);
            if (ch == 1) {
                o[0] = q(p[0]);
            } else {
                o[0] = q(p[2]);
                o[1] = q(p[1]);
                o[2] = q(p[0]);
                if (ch == 4) o[3] = q(p[3]);
            }
        }
    }
    std::vector<std::uint8_t> out;
    if (!cv::imencode(".png", m, out)) throw Error("PNG encoding failed");
    return out;
}

void save_png(const std::filesystem::path& path, const ImageBuffer& img) {
    write_file(path, encode_png(img));
}

std::vector<std::uint8_t> decode_mask(std::span<const std::uint8_t> bytes, Extent expected) {
    const ImageBuffer img = decode_image(bytes);
    if (img.extent() != expected) throw InputError("mask dimensions do not match the image");
    std::vector<std::uint8_t> mask(img.pixel_count());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const float* p = img.pixel(x, y);
            bool on;
            if (img.channels() == 4) on = p[3] > 0.0f;
            else if (img.channels() == 1) on = p[0] > 0.0f;
            else on = p[0] > 0.0f || p[1] > 0.0f || p[2] > 0.0f;
            mask[std::size_t(y) * std::size_t(img.width()) + std::size_t(x)] = on ? 1 : 0;
        }
    }
    return mask;
}

std::vector<std::uint8_t> load_mask(const std::filesystem::path& path, Extent expected) {
    return decode_mask(read_file(path), expected);
}

std::vector<int> decode_labels(std::span<const std::uint8_t> bytes, Extent expected) {
    const cv::Mat m = decode_raw(bytes, cv::IMREAD_COLOR);
    if (m.cols != expected.width || m.rows != expected.height)
        throw InputError("label map dimensions do not match the image");
    std::map<std::uint32_t, int> ids;
    std::vector<int> labels(std::size_t(m.cols) * std::size_t(m.rows), 0);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < m.cols; ++x) {
            const cv::Vec3b c = row[x];
            const std::uint32_t key = (std::uint32_t(c[2]) << 16) | (std::uint32_t(c[1]) << 8) | c[0];
            if (key == 0) continue;
            auto [it, inserted] = ids.emplace(key, int(ids.size()) + 1);
            labels[std::size_t(y) * std::size_t(m.cols) + std::size_t(x)] = it->second;
        }
    }
    return labels;
}

std::vector<int> load_labels(const std::filesystem::path& path, Extent expected) {
    return decode_labels(read_file(path), expected);
}

void save_mask_png(const std::filesystem::path& path, std::span<const std::uint8_t> mask, Extent e) {
    if (mask.size() != std::size_t(e.width) * std::size_t(e.height))
        throw InvalidArgument("mask size does not match extent");
    ImageBuffer img(e.width, e.height, 1);
    for (std::size_t i = 0; i < mask.size(); ++i) img.data()[i] = mask[i] ? 1.0f : 0.0f;
    save_png(path, img);
}

}  // namespace pm
