#include "meada/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "meada/rng.hpp"

namespace meada {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

std::uint32_t read_u32be(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw format_error(what + ": truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32be(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

// foreground test used by the background shifts: mean channel value > 0.3
bool is_foreground(const Tensor& images, int i, int y, int x) {
    const int c = images.shape[3];
    double m = 0.0;
    for (int ch = 0; ch < c; ++ch) m += images.at4(i, y, x, ch);
    return m / c > 0.3;
}

const std::vector<double>& table_entry(
    const std::map<std::string, std::map<std::string, std::vector<double>>>& section,
    const std::string& kind, const std::string& name, const char* which) {
    const auto k = section.find(kind);
    if (k == section.end())
        throw std::invalid_argument(std::string(which) + ": unknown kind '" + kind + "'");
    const auto p = k->second.find(name);
    if (p == k->second.end())
        throw std::invalid_argument(std::string(which) + ": kind '" + kind + "' has no parameter '" +
                                    name + "'");
    return p->second;
}

double severity_value(const std::vector<double>& ladder, int severity, const char* which) {
    if (severity < 1 || severity > 5)
        throw std::invalid_argument(std::string(which) + ": severity must be in 1..5, got " +
                                    std::to_string(severity));
    return ladder[static_cast<size_t>(severity - 1)];
}

// 5x7 digit glyphs, one byte per row, bit 4 = leftmost column
const unsigned char kGlyphs[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

}  // namespace

void validate_dataset(const ImageDataset& ds) {
    if (ds.images.ndim() != 4)
        throw shape_error("dataset: images must be [N,H,W,C], got " + shape_str(ds.images.shape));
    const int n = ds.images.shape[0], c = ds.images.shape[3];
    if (c != 1 && c != 3)
        throw shape_error("dataset: channels must be 1 or 3, got " + std::to_string(c));
    if (static_cast<size_t>(n) != ds.labels.size())
        throw std::invalid_argument("dataset: " + std::to_string(n) + " images vs " +
                                    std::to_string(ds.labels.size()) + " labels");
    for (int label : ds.labels)
        if (label < 0) throw std::invalid_argument("dataset: negative label");
    for (double v : ds.images.data)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("dataset: pixel value outside [0,1]");
}

double SeverityTables::shift_param(const std::string& kind, const std::string& name,
                                   int severity) const {
    return severity_value(table_entry(shifts, kind, name, "shift"), severity, "shift");
}

double SeverityTables::corruption_param(const std::string& kind, const std::string& name,
                                        int severity) const {
    return severity_value(table_entry(corruptions, kind, name, "corruption"), severity,
                          "corruption");
}

SeverityTables load_severity_tables(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw format_error("severity tables: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("severity tables: " + std::string(e.what()));
    }
    if (!j.is_object() || !j.contains("version") || !j.contains("shifts") ||
        !j.contains("corruptions"))
        throw format_error("severity tables: need version, shifts, corruptions");

    SeverityTables t;
    t.version = j.at("version").get<int>();
    if (t.version < 1) throw format_error("severity tables: version must be >= 1");
    const auto read_section = [&](const char* key) {
        std::map<std::string, std::map<std::string, std::vector<double>>> section;
        for (const auto& [kind, params] : j.at(key).items()) {
            if (!params.is_object())
                throw format_error("severity tables: " + std::string(key) + "." + kind +
                                   " must be an object");
            for (const auto& [name, ladder] : params.items()) {
                if (!ladder.is_array() || ladder.size() != 5)
                    throw format_error("severity tables: " + std::string(key) + "." + kind + "." +
                                       name + " must hold 5 values");
                section[kind][name] = ladder.get<std::vector<double>>();
            }
        }
        return section;
    };
    t.shifts = read_section("shifts");
    t.corruptions = read_section("corruptions");
    return t;
}

ImageDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw format_error("images: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw format_error("labels: cannot open " + labels_path);

    const std::uint32_t img_magic = read_u32be(img, "images");
    int h = 0, w = 0, c = 1;
    std::uint32_t n = 0;
    if (img_magic == 0x00000803u) {
        n = read_u32be(img, "images");
        h = static_cast<int>(read_u32be(img, "images"));
        w = static_cast<int>(read_u32be(img, "images"));
    } else if (img_magic == 0x00000804u) {
        n = read_u32be(img, "images");
        h = static_cast<int>(read_u32be(img, "images"));
        w = static_cast<int>(read_u32be(img, "images"));
        c = static_cast<int>(read_u32be(img, "images"));
        if (c != 1 && c != 3)
            throw format_error("images: channels must be 1 or 3, got " + std::to_string(c));
    } else {
        throw format_error("images: bad magic " + std::to_string(img_magic));
    }

    const std::uint32_t lab_magic = read_u32be(lab, "labels");
    if (lab_magic != 0x00000801u)
        throw format_error("labels: bad magic " + std::to_string(lab_magic));
    const std::uint32_t n_labels = read_u32be(lab, "labels");
    if (n_labels != n)
        throw format_error("labels: count " + std::to_string(n_labels) + " vs images " +
                           std::to_string(n));

    ImageDataset ds;
    ds.images = Tensor({static_cast<int>(n), h, w, c});
    std::vector<unsigned char> buf(static_cast<size_t>(n) * h * w * c);
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
        throw format_error("images: truncated payload in " + images_path);
    for (size_t i = 0; i < buf.size(); ++i)
        ds.images[static_cast<std::int64_t>(i)] = buf[i] / 255.0;

    std::vector<unsigned char> lbuf(n);
    if (!lab.read(reinterpret_cast<char*>(lbuf.data()), static_cast<std::streamsize>(lbuf.size())))
        throw format_error("labels: truncated payload in " + labels_path);
    ds.labels.assign(lbuf.begin(), lbuf.end());
    ds.name = images_path;
    ds.provenance = "idx:" + images_path;
    return ds;
}

void save_idx(const ImageDataset& ds, const std::string& images_path,
              const std::string& labels_path) {
    validate_dataset(ds);
    const int n = ds.images.shape[0], h = ds.images.shape[1], w = ds.images.shape[2],
              c = ds.images.shape[3];
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw format_error("images: cannot write " + images_path);
    if (c == 1) {
        write_u32be(img, 0x00000803u);
        write_u32be(img, static_cast<std::uint32_t>(n));
        write_u32be(img, static_cast<std::uint32_t>(h));
        write_u32be(img, static_cast<std::uint32_t>(w));
    } else {
        write_u32be(img, 0x00000804u);
        write_u32be(img, static_cast<std::uint32_t>(n));
        write_u32be(img, static_cast<std::uint32_t>(h));
        write_u32be(img, static_cast<std::uint32_t>(w));
        write_u32be(img, static_cast<std::uint32_t>(c));
    }
    std::vector<unsigned char> buf(ds.images.data.size());
    for (size_t i = 0; i < buf.size(); ++i)
        buf[i] = static_cast<unsigned char>(
            std::lround(clamp01(ds.images[static_cast<std::int64_t>(i)]) * 255.0));
    img.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!img) throw format_error("images: write failed on " + images_path);

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw format_error("labels: cannot write " + labels_path);
    write_u32be(lab, 0x00000801u);
    write_u32be(lab, static_cast<std::uint32_t>(n));
    for (int label : ds.labels) {
        if (label > 255) throw format_error("labels: value exceeds one byte");
        const unsigned char b = static_cast<unsigned char>(label);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!lab) throw format_error("labels: write failed on " + labels_path);
}

ImageDataset to_rgb32(const ImageDataset& ds, bool bilinear) {
    validate_dataset(ds);
    if (ds.images.shape[1] != 28 || ds.images.shape[2] != 28 || ds.images.shape[3] != 1)
        throw shape_error("to_rgb32: expected [N,28,28,1], got " + shape_str(ds.images.shape));
    const int n = ds.images.shape[0];

    ImageDataset out;
    out.images = Tensor({n, 32, 32, 3});
    out.labels = ds.labels;
    out.name = ds.name;
    out.provenance = ds.provenance + (bilinear ? " |rgb32:bilinear" : " |rgb32:pad");

    for (int i = 0; i < n; ++i) {
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                double v = 0.0;
                if (bilinear) {
                    const double sy = (y + 0.5) * 28.0 / 32.0 - 0.5;
                    const double sx = (x + 0.5) * 28.0 / 32.0 - 0.5;
                    const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, 27);
                    const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, 27);
                    const int y1 = std::min(y0 + 1, 27);
                    const int x1 = std::min(x0 + 1, 27);
                    const double fy = std::clamp(sy - y0, 0.0, 1.0);
                    const double fx = std::clamp(sx - x0, 0.0, 1.0);
                    v = (1 - fy) * ((1 - fx) * ds.images.at4(i, y0, x0, 0) +
                                    fx * ds.images.at4(i, y0, x1, 0)) +
                        fy * ((1 - fx) * ds.images.at4(i, y1, x0, 0) +
                              fx * ds.images.at4(i, y1, x1, 0));
                } else if (y >= 2 && y < 30 && x >= 2 && x < 30) {
                    v = ds.images.at4(i, y - 2, x - 2, 0);
                }
                for (int ch = 0; ch < 3; ++ch) out.images.at4(i, y, x, ch) = v;
            }
    }
    return out;
}

ImageDataset apply_shift(const ImageDataset& ds, const ShiftSpec& spec,
                         const SeverityTables& tables) {
    validate_dataset(ds);
    if (ds.images.shape[3] != 3)
        throw shape_error("apply_shift: expected RGB images, got " + shape_str(ds.images.shape));
    const int n = ds.images.shape[0], h = ds.images.shape[1], w = ds.images.shape[2];

    ImageDataset out = ds;
    out.provenance += " |shift:" + spec.kind + ":s" + std::to_string(spec.severity);

    if (spec.kind == "tint") {
        const double s = tables.shift_param(spec.kind, "strength", spec.severity);
        for (int i = 0; i < n; ++i) {
            Rng r(derive_seed(spec.seed, "shift_tint", static_cast<std::uint64_t>(i)));
            double t[3];
            for (double& ch : t) ch = r.uniform();
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        out.images.at4(i, y, x, ch) =
                            (1.0 - s) * ds.images.at4(i, y, x, ch) + s * t[ch];
        }
    } else if (spec.kind == "invert") {
        const double s = tables.shift_param(spec.kind, "strength", spec.severity);
        for (std::int64_t i = 0; i < out.images.numel(); ++i)
            out.images[i] = s * (1.0 - ds.images[i]) + (1.0 - s) * ds.images[i];
    } else if (spec.kind == "noise-background") {
        const double a = tables.shift_param(spec.kind, "amplitude", spec.severity);
        for (int i = 0; i < n; ++i) {
            Rng r(derive_seed(spec.seed, "shift_noise-background", static_cast<std::uint64_t>(i)));
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (is_foreground(ds.images, i, y, x)) {
                        r.uniform();  // keep the stream aligned across masks
                        r.uniform();
                        r.uniform();
                        continue;
                    }
                    for (int ch = 0; ch < 3; ++ch)
                        out.images.at4(i, y, x, ch) =
                            (1.0 - a) * ds.images.at4(i, y, x, ch) + a * r.uniform();
                }
        }
    } else if (spec.kind == "texture-background") {
        const double b = tables.shift_param(spec.kind, "blend", spec.severity);
        const int period =
            std::max(1, static_cast<int>(tables.shift_param(spec.kind, "period", spec.severity)));
        for (int i = 0; i < n; ++i) {
            Rng r(derive_seed(spec.seed, "shift_texture-background", static_cast<std::uint64_t>(i)));
            const double hi = 0.55 + 0.45 * r.uniform();
            const double lo = 0.45 * r.uniform();
            const int oy = static_cast<int>(r.uniform_int(static_cast<std::uint64_t>(period)));
            const int ox = static_cast<int>(r.uniform_int(static_cast<std::uint64_t>(period)));
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (is_foreground(ds.images, i, y, x)) continue;
                    const bool odd = (((y + oy) / period) + ((x + ox) / period)) % 2 == 1;
                    const double t = odd ? hi : lo;
                    for (int ch = 0; ch < 3; ++ch)
                        out.images.at4(i, y, x, ch) =
                            (1.0 - b) * ds.images.at4(i, y, x, ch) + b * t;
                }
        }
    } else {
        throw std::invalid_argument("apply_shift: unknown kind '" + spec.kind + "'");
    }
    return out;
}

ImageDataset apply_corruption(const ImageDataset& ds, const std::string& kind, int severity,
                              std::uint64_t seed, const SeverityTables& tables) {
    validate_dataset(ds);
    const int n = ds.images.shape[0], h = ds.images.shape[1], w = ds.images.shape[2],
              c = ds.images.shape[3];
    const std::int64_t per_image = static_cast<std::int64_t>(h) * w * c;

    ImageDataset out = ds;
    out.provenance += " |corrupt:" + kind + ":s" + std::to_string(severity);

    if (kind == "gaussian_noise") {
        const double sigma = tables.corruption_param(kind, "sigma", severity);
        for (int i = 0; i < n; ++i) {
            Rng r(derive_seed(seed, "corrupt_gaussian_noise", static_cast<std::uint64_t>(i)));
            for (std::int64_t k = 0; k < per_image; ++k) {
                const std::int64_t idx = i * per_image + k;
                out.images[idx] = clamp01(ds.images[idx] + sigma * r.normal());
            }
        }
    } else if (kind == "shot_noise") {
        const double photons = tables.corruption_param(kind, "photons", severity);
        for (int i = 0; i < n; ++i) {
            Rng r(derive_seed(seed, "corrupt_shot_noise", static_cast<std::uint64_t>(i)));
            for (std::int64_t k = 0; k < per_image; ++k) {
                const std::int64_t idx = i * per_image + k;
                out.images[idx] =
                    clamp01(static_cast<double>(r.poisson(ds.images[idx] * photons)) / photons);
            }
        }
    } else if (kind == "impulse_noise") {
        const double fraction = tables.corruption_param(kind, "fraction", severity);
        for (int i = 0; i < n; ++i) {
            Rng r(derive_seed(seed, "corrupt_impulse_noise", static_cast<std::uint64_t>(i)));
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const bool hit = r.uniform() < fraction;
                    const double v = r.uniform() < 0.5 ? 0.0 : 1.0;
                    if (!hit) continue;
                    for (int ch = 0; ch < c; ++ch) out.images.at4(i, y, x, ch) = v;
                }
        }
    } else if (kind == "gaussian_blur") {
        const double sigma = tables.corruption_param(kind, "sigma", severity);
        const int rad = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
        std::vector<double> kernel(static_cast<size_t>(2 * rad + 1));
        double ksum = 0.0;
        for (int k = -rad; k <= rad; ++k) {
            kernel[static_cast<size_t>(k + rad)] = std::exp(-0.5 * k * k / (sigma * sigma));
            ksum += kernel[static_cast<size_t>(k + rad)];
        }
        for (double& kv : kernel) kv /= ksum;
        Tensor tmp({h, w});
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch) {
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        double acc = 0.0;
                        for (int k = -rad; k <= rad; ++k) {
                            const int xx = std::clamp(x + k, 0, w - 1);
                            acc += kernel[static_cast<size_t>(k + rad)] *
                                   ds.images.at4(i, y, xx, ch);
                        }
                        tmp.at2(y, x) = acc;
                    }
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        double acc = 0.0;
                        for (int k = -rad; k <= rad; ++k) {
                            const int yy = std::clamp(y + k, 0, h - 1);
                            acc += kernel[static_cast<size_t>(k + rad)] * tmp.at2(yy, x);
                        }
                        out.images.at4(i, y, x, ch) = clamp01(acc);
                    }
            }
    } else if (kind == "contrast") {
        const double factor = tables.corruption_param(kind, "factor", severity);
        for (int i = 0; i < n; ++i) {
            double mean = 0.0;
            for (std::int64_t k = 0; k < per_image; ++k) mean += ds.images[i * per_image + k];
            mean /= static_cast<double>(per_image);
            for (std::int64_t k = 0; k < per_image; ++k) {
                const std::int64_t idx = i * per_image + k;
                out.images[idx] = clamp01(mean + factor * (ds.images[idx] - mean));
            }
        }
    } else if (kind == "brightness") {
        const double delta = tables.corruption_param(kind, "delta", severity);
        for (std::int64_t i = 0; i < out.images.numel(); ++i)
            out.images[i] = clamp01(ds.images[i] + delta);
    } else {
        throw std::invalid_argument("apply_corruption: unknown kind '" + kind + "'");
    }
    return out;
}

ImageDataset take(const ImageDataset& ds, const std::vector<int>& indices) {
    ImageDataset out;
    out.name = ds.name;
    out.provenance = ds.provenance;
    if (indices.empty()) return out;  // empty marker, images left unshaped
    const int n = ds.images.shape[0];
    const std::int64_t per_image = ds.images.numel() / std::max(1, n);
    Shape s = ds.images.shape;
    s[0] = static_cast<int>(indices.size());
    out.images = Tensor(s);
    for (size_t j = 0; j < indices.size(); ++j) {
        const int i = indices[j];
        if (i < 0 || i >= n)
            throw std::invalid_argument("take: index " + std::to_string(i) + " out of range");
        std::copy(ds.images.data.begin() + i * per_image,
                  ds.images.data.begin() + (i + 1) * per_image,
                  out.images.data.begin() + static_cast<std::int64_t>(j) * per_image);
        out.labels.push_back(ds.labels[static_cast<size_t>(i)]);
    }
    return out;
}

SplitResult split(const ImageDataset& ds, double train_frac, double val_frac, double test_frac,
                  std::uint64_t seed) {
    validate_dataset(ds);
    if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
        std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must be nonnegative and sum to 1");

    std::map<int, std::vector<int>> by_class;
    for (size_t i = 0; i < ds.labels.size(); ++i)
        by_class[ds.labels[i]].push_back(static_cast<int>(i));

    std::vector<int> idx_train, idx_val, idx_test;
    for (auto& [label, idx] : by_class) {
        Rng r(derive_seed(seed, "split_class", static_cast<std::uint64_t>(label)));
        for (size_t j = idx.size(); j > 1; --j)
            std::swap(idx[j - 1], idx[static_cast<size_t>(r.uniform_int(j))]);

        const double fracs[3] = {train_frac, val_frac, test_frac};
        const auto n_c = static_cast<double>(idx.size());
        std::int64_t counts[3];
        double rema[3];
        std::int64_t assigned = 0;
        for (int k = 0; k < 3; ++k) {
            counts[k] = static_cast<std::int64_t>(std::floor(fracs[k] * n_c + 1e-12));
            rema[k] = fracs[k] * n_c - static_cast<double>(counts[k]);
            assigned += counts[k];
        }
        std::int64_t leftover = static_cast<std::int64_t>(idx.size()) - assigned;
        while (leftover > 0) {
            int best = 0;
            for (int k = 1; k < 3; ++k)
                if (rema[k] > rema[best]) best = k;
            ++counts[best];
            rema[best] = -1.0;
            --leftover;
        }
        size_t pos = 0;
        for (std::int64_t k = 0; k < counts[0]; ++k) idx_train.push_back(idx[pos++]);
        for (std::int64_t k = 0; k < counts[1]; ++k) idx_val.push_back(idx[pos++]);
        for (std::int64_t k = 0; k < counts[2]; ++k) idx_test.push_back(idx[pos++]);
    }

    const auto shuffle_order = [&](std::vector<int>& v, const char* tag) {
        Rng r(derive_seed(seed, tag));
        for (size_t j = v.size(); j > 1; --j)
            std::swap(v[j - 1], v[static_cast<size_t>(r.uniform_int(j))]);
    };
    shuffle_order(idx_train, "split_order_train");
    shuffle_order(idx_val, "split_order_val");
    shuffle_order(idx_test, "split_order_test");

    SplitResult out{take(ds, idx_train), take(ds, idx_val), take(ds, idx_test)};
    out.train.name = ds.name + "/train";
    out.val.name = ds.name + "/val";
    out.test.name = ds.name + "/test";
    return out;
}

ImageDataset make_synth_digits(int n, std::uint64_t seed) {
    if (n < 0) throw std::invalid_argument("make_synth_digits: n must be >= 0");
    ImageDataset ds;
    ds.images = Tensor({n, 28, 28, 1});
    ds.labels.reserve(static_cast<size_t>(n));
    ds.name = "synth-digits";
    ds.provenance = "synth-digits-v1 seed=" + std::to_string(seed);

    for (int i = 0; i < n; ++i) {
        const int digit = i % 10;
        ds.labels.push_back(digit);
        Rng r(derive_seed(seed, "synth", static_cast<std::uint64_t>(i)));
        const double scale = 4.0 * r.uniform(0.8, 1.15);  // glyph cell in pixels
        const double intensity = r.uniform(0.6, 1.0);
        const double cx = 13.5 + r.uniform(-3.0, 3.0);
        const double cy = 13.5 + r.uniform(-3.0, 3.0);

        for (int y = 0; y < 28; ++y)
            for (int x = 0; x < 28; ++x) {
                const double gx = (x - cx) / scale + 2.5;
                const double gy = (y - cy) / scale + 3.5;
                double v = 0.0;
                if (gx >= 0.0 && gx < 5.0 && gy >= 0.0 && gy < 7.0) {
                    const int col = static_cast<int>(gx);
                    const int row = static_cast<int>(gy);
                    if ((kGlyphs[digit][row] >> (4 - col)) & 1) v = intensity;
                }
                ds.images.at4(i, y, x, 0) = clamp01(v + r.uniform(0.0, 0.04));
            }
    }
    return ds;
}

}  // namespace meada
