#include "iscp/io_image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace iscp {

namespace {

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void put_chunk(std::vector<unsigned char>& out, const char type[4],
               const std::vector<unsigned char>& payload) {
    put_be32(out, static_cast<std::uint32_t>(payload.size()));
    const size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const auto crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

unsigned char quantize(double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png_bytes(const std::string& path, const std::vector<unsigned char>& pixels,
                     int w, int h, int channels) {
    // One filter byte (0 = none) per scanline.
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * channels));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        const size_t row = static_cast<size_t>(y) * w * channels;
        raw.insert(raw.end(), pixels.begin() + static_cast<long>(row),
                   pixels.begin() + static_cast<long>(row + static_cast<size_t>(w) * channels));
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw std::runtime_error(path + ": zlib compression failed");
    comp.resize(comp_len);

    std::vector<unsigned char> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<unsigned char> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(w));
    put_be32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);                                   // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);               // gray / rgb
    ihdr.push_back(0);                                   // deflate
    ihdr.push_back(0);                                   // filter method
    ihdr.push_back(0);                                   // no interlace
    put_chunk(png, "IHDR", ihdr);
    put_chunk(png, "IDAT", comp);
    put_chunk(png, "IEND", {});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

void tensor_to_png(const std::string& path, const Tensor& image, double offset) {
    if (image.ndim() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
        throw ShapeError("write_png: expected 1×H×W or 3×H×W, got " + shape_str(image.shape));
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    std::vector<unsigned char> pixels(static_cast<size_t>(h) * w * c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                pixels[(static_cast<size_t>(y) * w + x) * c + ch] =
                    quantize(image.data[(ch * h + y) * w + x] + offset);
    write_png_bytes(path, pixels, w, h, c);
}

} // namespace

void write_png(const std::string& path, const Tensor& image) { tensor_to_png(path, image, 0.0); }

void write_png_centered(const std::string& path, const Tensor& delta) {
    tensor_to_png(path, delta, 0.5);
}

void write_pgm_mask(const std::string& path, const Tensor& mask) {
    if (mask.ndim() != 2) throw ShapeError("write_pgm_mask: expected H×W mask");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "P5\n" << mask.dim(1) << " " << mask.dim(0) << "\n255\n";
    for (double v : mask.data) {
        const unsigned char b = v != 0.0 ? 255 : 0;
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
}

void write_tensor(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    const char magic[8] = {'I', 'S', 'C', 'P', 'T', 'N', 'S', '1'};
    out.write(magic, 8);
    const std::uint32_t nd = static_cast<std::uint32_t>(t.shape.size());
    out.write(reinterpret_cast<const char*>(&nd), 4);
    for (int d : t.shape) {
        const std::int32_t v = d;
        out.write(reinterpret_cast<const char*>(&v), 4);
    }
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!out) throw std::runtime_error(path + ": write failed");
}

Tensor read_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "ISCPTNS1", 8) != 0)
        throw std::runtime_error(path + ": bad tensor magic");
    std::uint32_t nd = 0;
    in.read(reinterpret_cast<char*>(&nd), 4);
    std::vector<int> shape;
    for (std::uint32_t i = 0; i < nd; ++i) {
        std::int32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        shape.push_back(v);
    }
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error(path + ": truncated tensor file");
    return t;
}

} // namespace iscp
