#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mapfuse/errors.hpp"
#include "mapfuse/tensor.hpp"

namespace mapfuse {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct ClassSet {
    std::vector<std::string> names;

    int size() const { return static_cast<int>(names.size()); }

    void validate() const {
        if (names.size() < 2) throw DataError("class set needs at least 2 classes");
        for (size_t i = 0; i < names.size(); ++i) {
            if (names[i].empty()) throw DataError("class name " + std::to_string(i) + " is empty");
            for (size_t j = 0; j < i; ++j)
                if (names[i] == names[j]) throw DataError("duplicate class name '" + names[i] + "'");
        }
    }
};

inline ClassSet default_class_set(int n) {
    ClassSet cs;
    for (int i = 0; i < n; ++i) cs.names.push_back("class_" + std::to_string(i));
    cs.validate();
    return cs;
}

// Sidecar text file: one class name per line, line index = id.
inline void save_class_set(const ClassSet& cs, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    for (const auto& n : cs.names) f << n << "\n";
}

inline ClassSet load_class_set(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    ClassSet cs;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) cs.names.push_back(line);
    }
    cs.validate();
    return cs;
}

// Channel-major float raster, values in [0, 1].
struct ImageRaster {
    int height = 0, width = 0, channels = 0;
    std::vector<float> values;  // [c][i][j]

    float at(int c, int i, int j) const {
        return values[(static_cast<size_t>(c) * height + i) * width + j];
    }
    float& at(int c, int i, int j) {
        return values[(static_cast<size_t>(c) * height + i) * width + j];
    }
};

struct SemanticMap {
    int height = 0, width = 0;
    int num_classes = 0;
    std::vector<uint8_t> labels;  // row-major

    uint8_t at(int i, int j) const { return labels[static_cast<size_t>(i) * width + j]; }
    uint8_t& at(int i, int j) { return labels[static_cast<size_t>(i) * width + j]; }

    void validate() const {
        if (static_cast<int64_t>(labels.size()) != static_cast<int64_t>(height) * width)
            throw DataError("semantic map size mismatch");
        for (uint8_t l : labels)
            if (l >= num_classes)
                throw DataError("label " + std::to_string(l) + " >= |C|=" + std::to_string(num_classes));
    }
};

struct ChangeMask {
    int height = 0, width = 0;
    std::vector<uint8_t> values;  // 0/1 row-major

    uint8_t at(int i, int j) const { return values[static_cast<size_t>(i) * width + j]; }
    uint8_t& at(int i, int j) { return values[static_cast<size_t>(i) * width + j]; }

    int64_t count_changed() const {
        int64_t n = 0;
        for (uint8_t v : values) n += v;
        return n;
    }

    void validate() const {
        for (uint8_t v : values)
            if (v > 1) throw DataError("change mask must be binary");
    }
};

// ---------------------------------------------------------------------------
// Target derivation and degradations
// ---------------------------------------------------------------------------

inline ChangeMask derive_change(const SemanticMap& m1, const SemanticMap& m2) {
    if (m1.height != m2.height || m1.width != m2.width)
        throw DataError("derive_change: spatial size mismatch");
    if (m1.num_classes != m2.num_classes) throw DataError("derive_change: class set mismatch");
    ChangeMask b;
    b.height = m1.height;
    b.width = m1.width;
    b.values.resize(m1.labels.size());
    for (size_t i = 0; i < m1.labels.size(); ++i)
        b.values[i] = m1.labels[i] != m2.labels[i] ? 1 : 0;
    return b;
}

// mapping[i] = superclass id of class i; must cover every class.
inline SemanticMap merge_classes(const SemanticMap& m, const std::vector<uint8_t>& mapping,
                                 int num_superclasses) {
    if (static_cast<int>(mapping.size()) != m.num_classes)
        throw ConfigError("merge_classes: mapping covers " + std::to_string(mapping.size()) +
                          " classes, map has " + std::to_string(m.num_classes));
    for (uint8_t s : mapping)
        if (s >= num_superclasses) throw ConfigError("merge_classes: superclass id out of range");
    SemanticMap out = m;
    out.num_classes = num_superclasses;
    for (auto& l : out.labels) l = mapping[l];
    return out;
}

// Majority label per factor x factor block (ties -> smallest id), then
// nearest-neighbor upsample back to the original size.
inline SemanticMap degrade_resolution(const SemanticMap& m, int factor) {
    if (factor < 1) throw ConfigError("degrade_resolution: factor must be >= 1");
    if (factor > std::min(m.height, m.width))
        throw ConfigError("degrade_resolution: factor " + std::to_string(factor) +
                          " exceeds raster extent");
    if (factor == 1) return m;
    SemanticMap out = m;
    std::vector<int> hist(m.num_classes);
    for (int by = 0; by < m.height; by += factor)
        for (int bx = 0; bx < m.width; bx += factor) {
            std::fill(hist.begin(), hist.end(), 0);
            const int ey = std::min(by + factor, m.height), ex = std::min(bx + factor, m.width);
            for (int i = by; i < ey; ++i)
                for (int j = bx; j < ex; ++j) ++hist[m.at(i, j)];
            int best = 0;
            for (int c = 1; c < m.num_classes; ++c)
                if (hist[c] > hist[best]) best = c;
            for (int i = by; i < ey; ++i)
                for (int j = bx; j < ex; ++j) out.at(i, j) = static_cast<uint8_t>(best);
        }
    return out;
}

template <typename T>
Tensor<T> one_hot(const SemanticMap& m) {
    m.validate();
    Tensor<T> t = Tensor<T>::zeros({m.num_classes, m.height, m.width});
    const int64_t p = static_cast<int64_t>(m.height) * m.width;
    for (int64_t i = 0; i < p; ++i) t.data()[m.labels[i] * p + i] = T(1);
    return t;
}

// ---------------------------------------------------------------------------
// CDR1 file format
// ---------------------------------------------------------------------------
// Little-endian: magic "CDR1" | dtype u8 (0 = u8, 1 = f32) | channels u16 |
// height u32 | width u32 | payload [c][i][j], f32 as IEEE-754 LE.

struct RasterFile {
    uint8_t dtype = 0;
    uint16_t channels = 1;
    uint32_t height = 0, width = 0;
    std::vector<uint8_t> u8_data;
    std::vector<float> f32_data;
};

namespace detail {

inline void put_le(std::vector<uint8_t>& out, uint32_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

inline uint32_t get_le(const std::vector<uint8_t>& in, size_t& pos, int bytes) {
    uint32_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<uint32_t>(in[pos + i]) << (8 * i);
    pos += bytes;
    return v;
}

}  // namespace detail

inline std::vector<uint8_t> encode_raster(const RasterFile& r) {
    std::vector<uint8_t> out;
    out.insert(out.end(), {'C', 'D', 'R', '1'});
    out.push_back(r.dtype);
    detail::put_le(out, r.channels, 2);
    detail::put_le(out, r.height, 4);
    detail::put_le(out, r.width, 4);
    const uint64_t n = static_cast<uint64_t>(r.channels) * r.height * r.width;
    if (r.dtype == 0) {
        if (r.u8_data.size() != n) throw DataError("encode_raster: u8 payload size mismatch");
        out.insert(out.end(), r.u8_data.begin(), r.u8_data.end());
    } else if (r.dtype == 1) {
        if (r.f32_data.size() != n) throw DataError("encode_raster: f32 payload size mismatch");
        for (float f : r.f32_data) {
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            detail::put_le(out, bits, 4);
        }
    } else {
        throw DataError("encode_raster: unknown dtype " + std::to_string(r.dtype));
    }
    return out;
}

inline RasterFile decode_raster(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 15) throw ParseError("truncated header (" + std::to_string(bytes.size()) + " bytes)");
    if (bytes[0] != 'C' || bytes[1] != 'D' || bytes[2] != 'R' || bytes[3] != '1')
        throw ParseError("bad magic, expected CDR1");
    size_t pos = 4;
    RasterFile r;
    r.dtype = bytes[pos++];
    if (r.dtype > 1) throw ParseError("unknown dtype code " + std::to_string(r.dtype));
    r.channels = static_cast<uint16_t>(detail::get_le(bytes, pos, 2));
    r.height = detail::get_le(bytes, pos, 4);
    r.width = detail::get_le(bytes, pos, 4);
    const uint64_t n = static_cast<uint64_t>(r.channels) * r.height * r.width;
    const uint64_t payload = n * (r.dtype == 0 ? 1 : 4);
    if (bytes.size() != 15 + payload)
        throw ParseError("truncated payload: have " + std::to_string(bytes.size() - 15) +
                         " bytes, need " + std::to_string(payload));
    if (r.dtype == 0) {
        r.u8_data.assign(bytes.begin() + 15, bytes.end());
    } else {
        r.f32_data.resize(n);
        size_t p = 15;
        for (uint64_t i = 0; i < n; ++i) {
            const uint32_t bits = detail::get_le(bytes, p, 4);
            float f;
            std::memcpy(&f, &bits, 4);
            if (!std::isfinite(f)) throw ParseError("non-finite float at element " + std::to_string(i));
            r.f32_data[i] = f;
        }
    }
    return r;
}

inline void write_raster(const RasterFile& r, const std::string& path) {
    const auto bytes = encode_raster(r);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + path);
}

inline RasterFile read_raster(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_raster(bytes);
}

// ---------------------------------------------------------------------------
// Conversions
// ---------------------------------------------------------------------------

inline RasterFile to_raster_file(const ImageRaster& img) {
    RasterFile r;
    r.dtype = 1;
    r.channels = static_cast<uint16_t>(img.channels);
    r.height = static_cast<uint32_t>(img.height);
    r.width = static_cast<uint32_t>(img.width);
    r.f32_data = img.values;
    return r;
}

inline RasterFile to_raster_file(const SemanticMap& m) {
    RasterFile r;
    r.channels = 1;
    r.height = static_cast<uint32_t>(m.height);
    r.width = static_cast<uint32_t>(m.width);
    r.u8_data = m.labels;
    return r;
}

inline RasterFile to_raster_file(const ChangeMask& b) {
    RasterFile r;
    r.channels = 1;
    r.height = static_cast<uint32_t>(b.height);
    r.width = static_cast<uint32_t>(b.width);
    r.u8_data = b.values;
    return r;
}

inline ImageRaster image_from_raster(const RasterFile& r) {
    if (r.dtype != 1) throw ParseError("image raster must have f32 dtype");
    ImageRaster img;
    img.height = static_cast<int>(r.height);
    img.width = static_cast<int>(r.width);
    img.channels = static_cast<int>(r.channels);
    img.values = r.f32_data;
    for (float v : img.values)
        if (v < 0.f || v > 1.f) throw DataError("image value outside [0,1]");
    return img;
}

inline SemanticMap map_from_raster(const RasterFile& r, int num_classes) {
    if (r.dtype != 0) throw ParseError("semantic map raster must have u8 dtype");
    if (r.channels != 1) throw ParseError("semantic map raster must have one channel");
    SemanticMap m;
    m.height = static_cast<int>(r.height);
    m.width = static_cast<int>(r.width);
    m.num_classes = num_classes;
    m.labels = r.u8_data;
    m.validate();
    return m;
}

inline ChangeMask mask_from_raster(const RasterFile& r) {
    if (r.dtype != 0) throw ParseError("change mask raster must have u8 dtype");
    if (r.channels != 1) throw ParseError("change mask raster must have one channel");
    ChangeMask b;
    b.height = static_cast<int>(r.height);
    b.width = static_cast<int>(r.width);
    b.values = r.u8_data;
    b.validate();
    return b;
}

// ---------------------------------------------------------------------------
// Bi-temporal sample
// ---------------------------------------------------------------------------

struct Sample {
    ImageRaster image_pre, image_post;
    SemanticMap map_pre, map_post;
    ChangeMask change;

    void validate() const {
        const int h = image_pre.height, w = image_pre.width;
        if (image_post.height != h || image_post.width != w || map_pre.height != h ||
            map_pre.width != w || map_post.height != h || map_post.width != w ||
            change.height != h || change.width != w)
            throw DataError("sample rasters disagree on spatial size");
        map_pre.validate();
        map_post.validate();
        change.validate();
        const ChangeMask derived = derive_change(map_pre, map_post);
        if (derived.values != change.values)
            throw DataError("change mask inconsistent with semantic maps");
    }
};

// Converts an image raster to a [C,H,W] tensor.
template <typename T>
Tensor<T> image_to_tensor(const ImageRaster& img) {
    Tensor<T> t = Tensor<T>::zeros({img.channels, img.height, img.width});
    for (size_t i = 0; i < img.values.size(); ++i) t.data()[i] = static_cast<T>(img.values[i]);
    return t;
}

}  // namespace mapfuse
