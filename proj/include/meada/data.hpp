#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "meada/tensor.hpp"

namespace meada {

struct ImageDataset {
    Tensor images;            // [N, H, W, C], values in [0,1], C in {1,3}
    std::vector<int> labels;  // class indices, one per image
    std::string name;
    std::string provenance;

    int size() const { return images.ndim() == 4 ? images.shape[0] : 0; }
};

void validate_dataset(const ImageDataset& ds);

struct ShiftSpec {
    std::string kind;  // tint | invert | noise-background | texture-background
    int severity = 3;  // 1..5
    std::uint64_t seed = 0;
};

// Severity-to-parameter ladders, loaded from a versioned JSON config so every
// experiment is self-describing. Each parameter array holds 5 values indexed
// by severity - 1.
struct SeverityTables {
    int version = 0;
    std::map<std::string, std::map<std::string, std::vector<double>>> shifts;
    std::map<std::string, std::map<std::string, std::vector<double>>> corruptions;

    double shift_param(const std::string& kind, const std::string& name, int severity) const;
    double corruption_param(const std::string& kind, const std::string& name, int severity) const;
};

SeverityTables load_severity_tables(const std::string& path);

// ---- IDX ingestion and export (big-endian, ubyte payload) ----
// images: magic 0x00000803 ([N,H,W], C=1) or 0x00000804 ([N,H,W,C]);
// labels: magic 0x00000801. Bytes scale to [0,1] on load and quantize back
// with round(v * 255) on save.
ImageDataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const ImageDataset& ds, const std::string& images_path,
              const std::string& labels_path);

// Grayscale 28x28 -> 32x32x3: bilinear resize by default, zero-padding when
// bilinear = false; the single channel is replicated to RGB.
ImageDataset to_rgb32(const ImageDataset& ds, bool bilinear = true);

// Deterministic per-seed domain shifts; labels and shapes are unchanged.
ImageDataset apply_shift(const ImageDataset& ds, const ShiftSpec& spec,
                         const SeverityTables& tables);

// Deterministic corruptions: gaussian_noise, shot_noise, impulse_noise,
// gaussian_blur, contrast, brightness. Output clipped to [0,1].
ImageDataset apply_corruption(const ImageDataset& ds, const std::string& kind, int severity,
                              std::uint64_t seed, const SeverityTables& tables);

struct SplitResult {
    ImageDataset train;
    ImageDataset val;
    ImageDataset test;
};

// Label-stratified disjoint split; fractions must sum to 1. Within each class
// the per-split counts follow floor allocation with largest remainders.
SplitResult split(const ImageDataset& ds, double train_frac, double val_frac, double test_frac,
                  std::uint64_t seed);

// Procedural digit corpus: 5x7 glyphs rendered into 28x28x1 with per-image
// affine jitter (translation, scale, intensity) and light background noise.
// Labels cycle 0..9 so classes stay balanced.
ImageDataset make_synth_digits(int n, std::uint64_t seed);

// Subset by index list, preserving order.
ImageDataset take(const ImageDataset& ds, const std::vector<int>& indices);

}  // namespace meada
