#include "embedclf/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "embedclf/error.hpp"
#include "embedclf/hash.hpp"

namespace embedclf {

void PreprocessSpec::validate() const {
    if (resize_short_side <= 0 || crop_height <= 0 || crop_width <= 0)
        fail(ErrorKind::Validation, "preprocess sizes must be positive");
    if (crop_height > resize_short_side || crop_width > resize_short_side)
        fail(ErrorKind::Validation, "center crop " + std::to_string(crop_height) + "x" +
                                        std::to_string(crop_width) + " exceeds the resized short side " +
                                        std::to_string(resize_short_side));
}

std::string PreprocessSpec::canonical() const {
    char buf[256];
    if (normalization == Normalization::ImageNetConstants) {
        std::snprintf(buf, sizeof buf,
                      "v1;resize_short=%d;crop=%dx%d;interp=bilinear-halfpixel;channels=%d;"
                      "norm=imagenet(mean=%.9g,%.9g,%.9g;std=%.9g,%.9g,%.9g)",
                      resize_short_side, crop_height, crop_width, channels, kImageNetMean[0],
                      kImageNetMean[1], kImageNetMean[2], kImageNetStd[0], kImageNetStd[1], kImageNetStd[2]);
    } else {
        std::snprintf(buf, sizeof buf,
                      "v1;resize_short=%d;crop=%dx%d;interp=bilinear-halfpixel;channels=%d;"
                      "norm=median_mad(eps=%.9g)",
                      resize_short_side, crop_height, crop_width, channels, kMadEpsilon);
    }
    return buf;
}

std::uint64_t PreprocessSpec::hash() const { return fnv1a64(canonical()); }

std::string_view to_string(Normalization n) {
    return n == Normalization::ImageNetConstants ? "imagenet" : "median_mad";
}

Normalization parse_normalization(std::string_view text) {
    if (text == "imagenet") return Normalization::ImageNetConstants;
    if (text == "median_mad" || text == "median-mad") return Normalization::MedianMAD;
    fail(ErrorKind::Config, "unknown normalization '" + std::string(text) + "' (expected imagenet or median_mad)");
}

PreprocessSpec preset(std::string_view name) {
    if (name == "cbis-ddsm") return {1024, 1024, 1024, Normalization::MedianMAD};
    if (name == "chexpert") return {512, 512, 512, Normalization::ImageNetConstants};
    if (name == "ham10000" || name == "pad-ufes-20") return {224, 224, 224, Normalization::ImageNetConstants};
    if (name == "odir") return {224, 224, 224, Normalization::MedianMAD};
    fail(ErrorKind::Config, "unknown preset '" + std::string(name) +
                                "' (expected cbis-ddsm, chexpert, ham10000, pad-ufes-20 or odir)");
}

std::vector<std::string> preset_names() { return {"cbis-ddsm", "chexpert", "ham10000", "pad-ufes-20", "odir"}; }

std::vector<float> resize_bilinear(std::span<const float> src, int channels, int height, int width,
                                   int new_height, int new_width) {
    std::vector<float> out(static_cast<std::size_t>(channels) * new_height * new_width);
    if (height == new_height && width == new_width) {
        std::copy(src.begin(), src.end(), out.begin());
        return out;
    }
    struct Tap {
        int lo, hi;
        float frac;
    };
    auto taps = [](int in, int out_size) {
        std::vector<Tap> t(out_size);
        const double scale = static_cast<double>(in) / out_size;
        for (int o = 0; o < out_size; ++o) {
            double s = (o + 0.5) * scale - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(in - 1));
            const int lo = static_cast<int>(std::floor(s));
            const int hi = std::min(lo + 1, in - 1);
            t[o] = {lo, hi, static_cast<float>(s - lo)};
        }
        return t;
    };
    const auto ty = taps(height, new_height);
    const auto tx = taps(width, new_width);

    std::vector<float> rows(static_cast<std::size_t>(new_height) * width);
    for (int c = 0; c < channels; ++c) {
        const float* plane = src.data() + static_cast<std::size_t>(c) * height * width;
        for (int y = 0; y < new_height; ++y) {
            const float* a = plane + static_cast<std::size_t>(ty[y].lo) * width;
            const float* b = plane + static_cast<std::size_t>(ty[y].hi) * width;
            const float f = ty[y].frac;
            float* r = rows.data() + static_cast<std::size_t>(y) * width;
            for (int x = 0; x < width; ++x) r[x] = a[x] + (b[x] - a[x]) * f;
        }
        float* dst = out.data() + static_cast<std::size_t>(c) * new_height * new_width;
        for (int y = 0; y < new_height; ++y) {
            const float* r = rows.data() + static_cast<std::size_t>(y) * width;
            for (int x = 0; x < new_width; ++x) {
                const auto& t = tx[x];
                dst[static_cast<std::size_t>(y) * new_width + x] = r[t.lo] + (r[t.hi] - r[t.lo]) * t.frac;
            }
        }
    }
    return out;
}

std::vector<float> resize_short_side(std::span<const float> src, int channels, int& height, int& width,
                                     int short_side) {
    int nh, nw;
    if (height <= width) {
        nh = short_side;
        nw = static_cast<int>(static_cast<long long>(width) * short_side / height);
    } else {
        nw = short_side;
        nh = static_cast<int>(static_cast<long long>(height) * short_side / width);
    }
    auto out = resize_bilinear(src, channels, height, width, nh, nw);
    height = nh;
    width = nw;
    return out;
}

std::vector<float> center_crop(std::span<const float> src, int channels, int height, int width,
                               int crop_height, int crop_width) {
    if (crop_height > height || crop_width > width)
        fail(ErrorKind::Validation, "crop larger than image");
    const int top = (height - crop_height) / 2;
    const int left = (width - crop_width) / 2;
    std::vector<float> out(static_cast<std::size_t>(channels) * crop_height * crop_width);
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < crop_height; ++y) {
            const float* s = src.data() + (static_cast<std::size_t>(c) * height + top + y) * width + left;
            std::copy(s, s + crop_width,
                      out.data() + (static_cast<std::size_t>(c) * crop_height + y) * crop_width);
        }
    return out;
}

ImageTensor resize_crop_pixels(std::span<const float> hwc, int height, int width, int channels,
                               const PreprocessSpec& spec, std::string sample_id) {
    spec.validate();
    if (channels != 1 && channels != 3 && channels != 4)
        fail(ErrorKind::Decode, "sample '" + sample_id + "': unsupported channel count " + std::to_string(channels));
    // HWC -> CHW, keeping RGB and replicating gray.
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    std::vector<float> chw(3 * plane);
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c)
            chw[c * plane + p] = hwc[p * channels + (channels == 1 ? 0 : c)];

    int h = height, w = width;
    auto resized = resize_short_side(chw, 3, h, w, spec.resize_short_side);
    ImageTensor t;
    t.channels = 3;
    t.height = spec.crop_height;
    t.width = spec.crop_width;
    t.data = center_crop(resized, 3, h, w, spec.crop_height, spec.crop_width);
    t.sample_id = std::move(sample_id);
    t.spec_hash = spec.hash();
    return t;
}

ImageTensor decode_resize_crop(const std::filesystem::path& image_path, bool image_missing,
                               const PreprocessSpec& spec, std::string sample_id) {
    spec.validate();
    if (image_missing) {
        ImageTensor t;
        t.height = spec.crop_height;
        t.width = spec.crop_width;
        t.data.assign(t.plane() * 3, 0.0f);
        t.sample_id = std::move(sample_id);
        t.spec_hash = spec.hash();
        return t;
    }
    cv::Mat img;
    try {
        img = cv::imread(image_path.string(), cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception& e) {
        fail(ErrorKind::Decode, "sample '" + sample_id + "': cannot decode '" + image_path.string() + "': " + e.what());
    }
    if (img.empty())
        fail(ErrorKind::Decode, "sample '" + sample_id + "': cannot decode '" + image_path.string() + "'");

    double scale = 1.0;
    switch (img.depth()) {
        case CV_8U: scale = 1.0 / 255.0; break;
        case CV_16U: scale = 1.0 / 65535.0; break;
        case CV_32F: scale = 1.0; break;
        default:
            fail(ErrorKind::Decode, "sample '" + sample_id + "': unsupported pixel depth in '" +
                                        image_path.string() + "'");
    }
    const int channels = img.channels();
    cv::Mat f;
    img.convertTo(f, CV_MAKETYPE(CV_32F, channels), scale);
    if (!f.isContinuous()) f = f.clone();
    // OpenCV decodes to BGR(A); swap to RGB.
    std::vector<float> hwc(f.ptr<float>(), f.ptr<float>() + f.total() * channels);
    if (channels >= 3)
        for (std::size_t p = 0; p < f.total(); ++p) std::swap(hwc[p * channels], hwc[p * channels + 2]);
    return resize_crop_pixels(hwc, img.rows, img.cols, channels, spec, std::move(sample_id));
}

ImageTensor normalize_imagenet(ImageTensor t) {
    const std::size_t plane = t.plane();
    for (int c = 0; c < 3; ++c) {
        const float mean = kImageNetMean[c], sd = kImageNetStd[c];
        for (std::size_t p = 0; p < plane; ++p) {
            float& v = t.data[c * plane + p];
            v = (v - mean) / sd;
        }
    }
    return t;
}

ImageTensor denormalize_imagenet(ImageTensor t) {
    const std::size_t plane = t.plane();
    for (int c = 0; c < 3; ++c) {
        const float mean = kImageNetMean[c], sd = kImageNetStd[c];
        for (std::size_t p = 0; p < plane; ++p) {
            float& v = t.data[c * plane + p];
            v = v * sd + mean;
        }
    }
    return t;
}

double median_of(std::span<const float> values) {
    if (values.empty()) return 0.0;
    std::vector<float> v(values.begin(), values.end());
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lower + upper);
}

ImageTensor normalize_median_mad(ImageTensor t) {
    if (t.data.empty()) return t;
    const double m = median_of(t.data);
    std::vector<float> dev(t.data.size());
    for (std::size_t i = 0; i < dev.size(); ++i) dev[i] = static_cast<float>(std::abs(t.data[i] - m));
    const double mad = std::max(median_of(dev), static_cast<double>(kMadEpsilon));
    for (auto& v : t.data) v = static_cast<float>((v - m) / mad);
    return t;
}

ImageTensor apply_normalization(ImageTensor t, Normalization n) {
    return n == Normalization::ImageNetConstants ? normalize_imagenet(std::move(t))
                                                 : normalize_median_mad(std::move(t));
}

ImageTensor preprocess_image(const std::filesystem::path& image_path, bool image_missing,
                             const PreprocessSpec& spec, std::string sample_id) {
    return apply_normalization(decode_resize_crop(image_path, image_missing, spec, std::move(sample_id)),
                               spec.normalization);
}

}  // namespace embedclf
