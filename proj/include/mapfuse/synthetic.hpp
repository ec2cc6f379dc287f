#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mapfuse/raster.hpp"
#include "mapfuse/rng.hpp"

namespace mapfuse {

struct WorldConfig {
    int height = 64, width = 64;
    int num_classes = 5;
    int num_seed_regions = 24;
    double change_rate_target = 0.05;
    int change_blob_count = 3;
    double appearance_noise_sigma = 0.04;
    double temporal_drift_sigma = 0.08;
    uint64_t seed = 0;

    void validate() const {
        if (height < 1 || width < 1) throw ConfigError("world extents must be positive");
        if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
        if (num_seed_regions < 1) throw ConfigError("num_seed_regions must be >= 1");
        if (change_rate_target <= 0.0 || change_rate_target >= 1.0)
            throw ConfigError("change_rate_target must lie in (0,1)");
        if (change_blob_count < 0) throw ConfigError("change_blob_count must be >= 0");
        if (appearance_noise_sigma < 0.0 || temporal_drift_sigma < 0.0)
            throw ConfigError("noise sigmas must be >= 0");
    }
};

namespace detail {

// Seed-stream tags keep the independent random draws decoupled.
constexpr uint64_t kStreamMap = 0x11;
constexpr uint64_t kStreamBlobs = 0x22;
constexpr uint64_t kStreamPalette = 0x33;
constexpr uint64_t kStreamDrift = 0x44;
constexpr uint64_t kStreamNoisePre = 0x55;
constexpr uint64_t kStreamNoisePost = 0x66;

}  // namespace detail

// Voronoi partition over seeded sites, each region labeled uniformly at random.
inline SemanticMap generate_map(const WorldConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed, detail::kStreamMap));
    struct Site {
        double y, x;
        uint8_t cls;
    };
    std::vector<Site> sites(cfg.num_seed_regions);
    for (auto& s : sites) {
        s.y = rng.uniform(0.0, cfg.height);
        s.x = rng.uniform(0.0, cfg.width);
        s.cls = static_cast<uint8_t>(rng.uniform_index(cfg.num_classes));
    }
    SemanticMap m;
    m.height = cfg.height;
    m.width = cfg.width;
    m.num_classes = cfg.num_classes;
    m.labels.resize(static_cast<size_t>(cfg.height) * cfg.width);
    for (int i = 0; i < cfg.height; ++i)
        for (int j = 0; j < cfg.width; ++j) {
            int best = 0;
            double bd = 1e300;
            for (size_t s = 0; s < sites.size(); ++s) {
                const double dy = sites[s].y - (i + 0.5), dx = sites[s].x - (j + 0.5);
                const double d = dy * dy + dx * dx;
                if (d < bd) {
                    bd = d;
                    best = static_cast<int>(s);
                }
            }
            m.at(i, j) = sites[best].cls;
        }
    return m;
}

namespace detail {

struct Blob {
    double cy, cx, ry, rx;
    uint64_t class_draw;
};

// Stamps the blobs at a radius scale; returns the post map.
inline SemanticMap stamp_blobs(const SemanticMap& m1, const std::vector<Blob>& blobs,
                               double radius_scale) {
    SemanticMap m2 = m1;
    std::vector<int> hist(m1.num_classes);
    for (const auto& b : blobs) {
        const double ry = std::max(0.5, b.ry * radius_scale);
        const double rx = std::max(0.5, b.rx * radius_scale);
        const int y0 = std::max(0, static_cast<int>(std::floor(b.cy - ry)));
        const int y1 = std::min(m1.height - 1, static_cast<int>(std::ceil(b.cy + ry)));
        const int x0 = std::max(0, static_cast<int>(std::floor(b.cx - rx)));
        const int x1 = std::min(m1.width - 1, static_cast<int>(std::ceil(b.cx + rx)));
        std::fill(hist.begin(), hist.end(), 0);
        for (int i = y0; i <= y1; ++i)
            for (int j = x0; j <= x1; ++j) {
                const double dy = (i + 0.5 - b.cy) / ry, dx = (j + 0.5 - b.cx) / rx;
                if (dy * dy + dx * dx <= 1.0) ++hist[m1.at(i, j)];
            }
        int majority = 0;
        for (int c = 1; c < m1.num_classes; ++c)
            if (hist[c] > hist[majority]) majority = c;
        const uint8_t new_class = static_cast<uint8_t>(
            (majority + 1 + b.class_draw % (m1.num_classes - 1)) % m1.num_classes);
        for (int i = y0; i <= y1; ++i)
            for (int j = x0; j <= x1; ++j) {
                const double dy = (i + 0.5 - b.cy) / ry, dx = (j + 0.5 - b.cx) / rx;
                if (dy * dy + dx * dx <= 1.0) m2.at(i, j) = new_class;
            }
    }
    return m2;
}

}  // namespace detail

// Stamps elliptical change blobs, bisecting a global radius scale until the
// achieved change rate lies within +-20% of the target.
inline SemanticMap inject_changes(const SemanticMap& m1, const WorldConfig& cfg) {
    cfg.validate();
    if (cfg.change_blob_count == 0) return m1;
    Rng rng(mix_seed(cfg.seed, detail::kStreamBlobs));
    const double base = 0.08 * std::min(m1.height, m1.width);
    std::vector<detail::Blob> blobs(cfg.change_blob_count);
    for (auto& b : blobs) {
        b.cy = rng.uniform(0.0, m1.height);
        b.cx = rng.uniform(0.0, m1.width);
        b.ry = base * rng.uniform(0.5, 1.5);
        b.rx = base * rng.uniform(0.5, 1.5);
        b.class_draw = rng.next_u64();
    }
    const double total = static_cast<double>(m1.height) * m1.width;
    auto rate_at = [&](double s) {
        return derive_change(m1, detail::stamp_blobs(m1, blobs, s)).count_changed() / total;
    };
    const double lo_band = 0.8 * cfg.change_rate_target, hi_band = 1.2 * cfg.change_rate_target;
    double lo = 1e-3, hi = 2.0 * std::max(m1.height, m1.width) / base;
    double s = 1.0, best_s = 1.0, best_err = std::abs(rate_at(1.0) - cfg.change_rate_target);
    for (int step = 0; step < 32; ++step) {
        const double r = rate_at(s);
        if (r >= lo_band && r <= hi_band) return detail::stamp_blobs(m1, blobs, s);
        const double err = std::abs(r - cfg.change_rate_target);
        if (err < best_err) {
            best_err = err;
            best_s = s;
        }
        if (r < cfg.change_rate_target)
            lo = s;
        else
            hi = s;
        s = 0.5 * (lo + hi);
    }
    std::cerr << "warning: change rate target " << cfg.change_rate_target
              << " unreachable, using best-effort radius scale " << best_s << "\n";
    return detail::stamp_blobs(m1, blobs, best_s);
}

enum class Epoch { pre, post };

// Class-conditional palette plus per-pixel noise. The pre epoch perturbs the
// palette with a drift drawn per sample, modeling archival imagery whose
// season and sensor vary from scene to scene; the post epoch renders with the
// stable palette of the current sensor.
inline ImageRaster render_image(const SemanticMap& m, Epoch epoch, const WorldConfig& cfg,
                                uint64_t noise_stream = 0) {
    cfg.validate();
    Rng palette_rng(mix_seed(cfg.seed, detail::kStreamPalette));
    std::vector<std::array<double, 3>> palette(m.num_classes);
    for (auto& col : palette)
        for (auto& ch : col) ch = palette_rng.uniform(0.15, 0.85);
    if (epoch == Epoch::pre) {
        Rng drift_rng(mix_seed(mix_seed(cfg.seed, detail::kStreamDrift), noise_stream));
        for (auto& col : palette)
            for (auto& ch : col) ch += drift_rng.normal(0.0, cfg.temporal_drift_sigma);
    }
    const uint64_t tag = epoch == Epoch::pre ? detail::kStreamNoisePre : detail::kStreamNoisePost;
    Rng noise(mix_seed(mix_seed(cfg.seed, tag), noise_stream));
    ImageRaster img;
    img.height = m.height;
    img.width = m.width;
    img.channels = 3;
    img.values.resize(static_cast<size_t>(3) * m.height * m.width);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < m.height; ++i)
            for (int j = 0; j < m.width; ++j) {
                double v = palette[m.at(i, j)][c] + noise.normal(0.0, cfg.appearance_noise_sigma);
                img.at(c, i, j) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
    return img;
}

// Generates one sample from a per-index seed stream.
inline Sample generate_sample(const WorldConfig& cfg, uint64_t index) {
    WorldConfig c = cfg;
    c.seed = mix_seed(cfg.seed, index);
    Sample s;
    s.map_pre = generate_map(c);
    s.map_post = inject_changes(s.map_pre, c);
    s.change = derive_change(s.map_pre, s.map_post);
    // Palette and drift come from the dataset-level seed so classes look the
    // same across samples; the per-pixel noise stream is per sample.
    WorldConfig render_cfg = cfg;
    s.image_pre = render_image(s.map_pre, Epoch::pre, render_cfg, index);
    s.image_post = render_image(s.map_post, Epoch::post, render_cfg, index);
    return s;
}

struct ManifestEntry {
    std::string id;
    std::string img_pre, img_post, map_pre, map_post, change;
    double change_rate = 0.0;
};

inline std::string manifest_line(const ManifestEntry& e) {
    char rate[32];
    std::snprintf(rate, sizeof(rate), "%.6f", e.change_rate);
    std::ostringstream os;
    os << e.id << '\t' << e.img_pre << '\t' << e.img_post << '\t' << e.map_pre << '\t'
       << e.map_post << '\t' << e.change << '\t' << rate;
    return os.str();
}

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read manifest " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream is(line);
        ManifestEntry e;
        std::string rate;
        if (!std::getline(is, e.id, '\t') || !std::getline(is, e.img_pre, '\t') ||
            !std::getline(is, e.img_post, '\t') || !std::getline(is, e.map_pre, '\t') ||
            !std::getline(is, e.map_post, '\t') || !std::getline(is, e.change, '\t') ||
            !std::getline(is, rate, '\t'))
            throw ParseError("manifest line " + std::to_string(lineno) + " malformed");
        e.change_rate = std::stod(rate);
        entries.push_back(std::move(e));
    }
    return entries;
}

inline Sample load_sample(const std::string& dir, const ManifestEntry& e, int num_classes) {
    namespace fs = std::filesystem;
    Sample s;
    s.image_pre = image_from_raster(read_raster((fs::path(dir) / e.img_pre).string()));
    s.image_post = image_from_raster(read_raster((fs::path(dir) / e.img_post).string()));
    s.map_pre = map_from_raster(read_raster((fs::path(dir) / e.map_pre).string()), num_classes);
    s.map_post = map_from_raster(read_raster((fs::path(dir) / e.map_post).string()), num_classes);
    s.change = mask_from_raster(read_raster((fs::path(dir) / e.change).string()));
    return s;
}

// Writes n_samples CDR1 bundles plus manifest.txt and classes.txt; returns the
// manifest path.
inline std::string generate_dataset(const WorldConfig& cfg, int n_samples,
                                    const std::string& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) throw IoError("cannot create directory " + out_dir);

    std::vector<ManifestEntry> entries;
    for (int i = 0; i < n_samples; ++i) {
        const Sample s = generate_sample(cfg, static_cast<uint64_t>(i));
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "%05d", i);
        ManifestEntry e;
        e.id = idbuf;
        e.img_pre = e.id + "_img_pre.cdr";
        e.img_post = e.id + "_img_post.cdr";
        e.map_pre = e.id + "_map_pre.cdr";
        e.map_post = e.id + "_map_post.cdr";
        e.change = e.id + "_change.cdr";
        e.change_rate =
            static_cast<double>(s.change.count_changed()) / (s.change.height * s.change.width);
        write_raster(to_raster_file(s.image_pre), (fs::path(out_dir) / e.img_pre).string());
        write_raster(to_raster_file(s.image_post), (fs::path(out_dir) / e.img_post).string());
        write_raster(to_raster_file(s.map_pre), (fs::path(out_dir) / e.map_pre).string());
        write_raster(to_raster_file(s.map_post), (fs::path(out_dir) / e.map_post).string());
        write_raster(to_raster_file(s.change), (fs::path(out_dir) / e.change).string());
        entries.push_back(std::move(e));
    }
    save_class_set(default_class_set(cfg.num_classes), (fs::path(out_dir) / "classes.txt").string());
    const std::string manifest_path = (fs::path(out_dir) / "manifest.txt").string();
    std::ofstream mf(manifest_path, std::ios::binary);
    if (!mf) throw IoError("cannot write " + manifest_path);
    for (const auto& e : entries) mf << manifest_line(e) << "\n";
    return manifest_path;
}

}  // namespace mapfuse
