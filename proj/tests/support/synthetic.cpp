#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "onnx_builder.hpp"

namespace testsupport {

using embedclf::Features;
using embedclf::SplitMix64;

double normal(SplitMix64& rng) {
    // Box-Muller; u1 in (0,1]
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Blobs gaussian_blobs(std::size_t n, std::size_t d, double separation, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Blobs b;
    std::vector<double> v(n * d);
    b.cls.resize(n);
    const double offset = separation / (2.0 * std::sqrt(static_cast<double>(d)));
    for (std::size_t i = 0; i < n; ++i) {
        b.cls[i] = static_cast<int>(i % 2);
        const double mu = b.cls[i] ? offset : -offset;
        for (std::size_t j = 0; j < d; ++j) v[i * d + j] = mu + normal(rng);
    }
    b.X = Features(n, d, std::move(v));
    return b;
}

Blobs planted_c_problem() {
    const std::size_t n = 80, d = 30;
    SplitMix64 rng(4 * 1000 + d);
    std::vector<double> v(n * d);
    std::vector<int> cls(n);
    for (std::size_t i = 0; i < n; ++i) {
        cls[i] = static_cast<int>(i % 2);
        const double s = cls[i] ? 1 : -1;
        v[i * d] = 0.2 * (s + normal(rng));
        for (std::size_t j = 1; j < d; ++j) v[i * d + j] = normal(rng);
        if (rng.uniform() < 0.1) cls[i] = 1 - cls[i];
    }
    return {Features(n, d, std::move(v)), std::move(cls)};
}

BinaryProblem random_binary_problem(std::size_t n, std::size_t d, std::uint64_t seed, double noise, double scale) {
    SplitMix64 rng(seed);
    std::vector<double> w(d), v(n * d);
    for (auto& x : w) x = normal(rng);
    const double b0 = 0.3 * normal(rng);
    BinaryProblem p;
    p.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double z = b0;
        for (std::size_t j = 0; j < d; ++j) {
            v[i * d + j] = scale * normal(rng);
            z += w[j] * v[i * d + j] / scale;
        }
        p.y[i] = z + noise * normal(rng) > 0 ? 1.0 : -1.0;
    }
    p.y[0] = 1.0;
    p.y[1] = -1.0;
    p.X = Features(n, d, std::move(v));
    return p;
}

BinaryProblem random_separable_problem(std::size_t n, std::size_t d, std::uint64_t seed, double margin) {
    SplitMix64 rng(seed);
    std::vector<double> w(d);
    double norm = 0.0;
    for (auto& x : w) {
        x = normal(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : w) x /= norm;
    std::vector<double> v(n * d);
    BinaryProblem p;
    p.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double label = i % 2 ? 1.0 : -1.0;
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            v[i * d + j] = normal(rng);
            z += w[j] * v[i * d + j];
        }
        // push the point to the right side with at least `margin` clearance
        const double shift = label * (margin + std::fabs(normal(rng))) - z;
        for (std::size_t j = 0; j < d; ++j) v[i * d + j] += shift * w[j];
        p.y[i] = label;
    }
    p.X = Features(n, d, std::move(v));
    return p;
}

ImageDataset write_blob_images(const std::filesystem::path& dir, std::size_t n, double separation,
                               std::uint64_t seed) {
    std::filesystem::create_directories(dir / "images");
    const Blobs b = gaussian_blobs(n, 8, separation, seed);
    std::ofstream manifest(dir / "manifest.csv");
    manifest << "id,image_path,negative,positive\n";
    for (std::size_t i = 0; i < n; ++i) {
        cv::Mat img(32, 32, CV_16UC1);
        for (int band = 0; band < 8; ++band) {
            const double x = std::clamp(0.5 + b.X.row(i)[band] / 16.0, 0.0, 1.0);
            const auto level = static_cast<std::uint16_t>(std::lround(x * 65535.0));
            img.rowRange(band * 4, band * 4 + 4).setTo(cv::Scalar(level));
        }
        char name[32];
        std::snprintf(name, sizeof name, "s%04zu", i);
        cv::imwrite((dir / "images" / (std::string(name) + ".png")).string(), img);
        manifest << name << ",images/" << name << ".png," << (b.cls[i] ? "0,1" : "1,0") << "\n";
    }
    ImageDataset out{dir / "manifest.csv", dir / "band_encoder.onnx"};
    write_band_encoder(out.graph);
    return out;
}

void write_image(const std::filesystem::path& path, int height, int width, int channels, int bits,
                 std::span<const std::uint16_t> rgb) {
    cv::Mat img(height, width, CV_MAKETYPE(bits == 8 ? CV_8U : CV_16U, channels));
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c) {
                // OpenCV stores BGR(A)
                const int src = channels >= 3 && c < 3 ? 2 - c : c;
                const auto v = rgb[(static_cast<std::size_t>(y) * width + x) * channels + src];
                if (bits == 8) img.ptr<std::uint8_t>(y)[x * channels + c] = static_cast<std::uint8_t>(v);
                else img.ptr<std::uint16_t>(y)[x * channels + c] = v;
            }
    cv::imwrite(path.string(), img);
}

}  // namespace testsupport
