#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace embedclf {

enum class Normalization { ImageNetConstants, MedianMAD };

inline constexpr std::array<float, 3> kImageNetMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImageNetStd{0.229f, 0.224f, 0.225f};
inline constexpr float kMadEpsilon = 1e-6f;

struct PreprocessSpec {
    int resize_short_side = 224;
    int crop_height = 224;
    int crop_width = 224;
    Normalization normalization = Normalization::ImageNetConstants;
    static constexpr int channels = 3;

    /// Throws Error{Validation} unless crop <= resize_short_side and all sizes are positive.
    void validate() const;

    /// Canonical textual form; every field that changes pixels is in here,
    /// including the normalization constants and the interpolation kernel.
    std::string canonical() const;

    /// FNV-1a of canonical(); keys embedding caches.
    std::uint64_t hash() const;

    friend bool operator==(const PreprocessSpec&, const PreprocessSpec&) = default;
};

/// Named dataset presets: cbis-ddsm, chexpert, ham10000, pad-ufes-20, odir.
PreprocessSpec preset(std::string_view name);
std::vector<std::string> preset_names();

std::string_view to_string(Normalization n);
Normalization parse_normalization(std::string_view text);

/// Float image in channels x height x width layout.
struct ImageTensor {
    int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<float> data;
    std::string sample_id;
    std::uint64_t spec_hash = 0;

    std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
    float at(int c, int y, int x) const noexcept { return data[c * plane() + y * width + x]; }
};

/// Bilinear resampling with half-pixel centres and edge clamping, no antialiasing.
/// `src` is CHW; returns CHW at the new size.
std::vector<float> resize_bilinear(std::span<const float> src, int channels, int height, int width,
                                   int new_height, int new_width);

/// Resize so the shorter side equals `short_side`; the longer side is
/// truncated to an integer (long * short_side / short).
std::vector<float> resize_short_side(std::span<const float> src, int channels, int& height, int& width,
                                     int short_side);

/// Central window; offsets are floor((H - h) / 2), floor((W - w) / 2).
std::vector<float> center_crop(std::span<const float> src, int channels, int height, int width,
                               int crop_height, int crop_width);

/// Decodes PNG/JPEG/TIFF (8 or 16 bit, gray/RGB/RGBA) into [0,1] floats,
/// resizes and center-crops. Grayscale is replicated to three channels; a
/// missing image yields an all-zero tensor of the spec's shape.
ImageTensor decode_resize_crop(const std::filesystem::path& image_path, bool image_missing,
                               const PreprocessSpec& spec, std::string sample_id = {});

/// Same, from an already decoded interleaved (HWC) buffer in [0,1].
ImageTensor resize_crop_pixels(std::span<const float> hwc, int height, int width, int channels,
                               const PreprocessSpec& spec, std::string sample_id = {});

ImageTensor normalize_imagenet(ImageTensor t);
ImageTensor denormalize_imagenet(ImageTensor t);

/// (x - median) / max(MAD, eps) over all channels jointly; no 1.4826 factor.
ImageTensor normalize_median_mad(ImageTensor t);

ImageTensor apply_normalization(ImageTensor t, Normalization n);

/// Median of a copy of `values`; the mean of the two middle elements for even sizes.
double median_of(std::span<const float> values);

/// decode_resize_crop followed by the spec's normalization.
ImageTensor preprocess_image(const std::filesystem::path& image_path, bool image_missing,
                             const PreprocessSpec& spec, std::string sample_id = {});

}  // namespace embedclf
