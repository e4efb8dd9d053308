#ifndef SMAL_FEATURES_HPP
#define SMAL_FEATURES_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace smal {

/**
 * @brief An RGB image, row-major, three interleaved channels per pixel.
 *
 * Channel intensities live in [0, 1].
 */
struct Frame {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // (y * width + x) * 3 + c

    Frame() = default;
    Frame(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

    double& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    double luminance(int x, int y) const { return (at(x, y, 0) + at(x, y, 1) + at(x, y, 2)) / 3.0; }

    bool operator==(const Frame&) const = default;
};

inline void validate(const Frame& frame) {
    if (frame.width <= 0 || frame.height <= 0)
        throw std::invalid_argument("frame dimensions must be positive");
    if (frame.pixels.size() != static_cast<std::size_t>(frame.width) * frame.height * 3)
        throw std::invalid_argument("frame pixel count does not match width*height*3");
    for (double v : frame.pixels)
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("frame intensity outside [0,1]");
}

struct GridSize {
    int rows = 1;
    int cols = 1;
    bool operator==(const GridSize&) const = default;
};

/// Layout of the two feature modalities: block-mean color and cell gradient histograms.
struct ModalityConfig {
    GridSize color_downsample{8, 8};
    int gradient_bins = 4;
    GridSize gradient_downsample{4, 4};

    std::size_t color_length() const {
        return static_cast<std::size_t>(color_downsample.rows) * color_downsample.cols * 3;
    }
    std::size_t gradient_length() const {
        return static_cast<std::size_t>(gradient_downsample.rows) * gradient_downsample.cols * gradient_bins;
    }
    std::size_t length() const { return color_length() + gradient_length(); }

    void validate() const {
        if (color_downsample.rows < 1 || color_downsample.cols < 1 || gradient_downsample.rows < 1 ||
            gradient_downsample.cols < 1)
            throw std::invalid_argument("modality grid sizes must be >= 1");
        if (gradient_bins < 2) throw std::invalid_argument("gradient_bins must be >= 2");
    }

    bool operator==(const ModalityConfig&) const = default;
};

/// Concatenated multimodal feature vector. modality_offsets holds the end index of each block.
struct FeatureVector {
    Eigen::VectorXd values;
    std::vector<std::size_t> modality_offsets;

    std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

namespace detail {

// Half-open integer range [begin, end) of block `i` out of `blocks` over `extent` samples.
inline std::pair<int, int> block_range(int i, int blocks, int extent) {
    return {static_cast<int>(static_cast<long>(i) * extent / blocks),
            static_cast<int>(static_cast<long>(i + 1) * extent / blocks)};
}

inline void normalize_block(Eigen::Ref<Eigen::VectorXd> block) {
    const double norm = block.norm();
    if (norm > 0.0) block /= norm;
}

}  // namespace detail

/// Block means of each channel on a rows x cols grid; output is cell-major, RGB within a cell.
inline Eigen::VectorXd downsample_color(const Frame& frame, int rows, int cols) {
    validate(frame);
    if (rows < 1 || cols < 1 || rows > frame.height || cols > frame.width)
        throw std::invalid_argument("downsample grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                                    " does not fit frame " + std::to_string(frame.height) + "x" +
                                    std::to_string(frame.width));

    Eigen::VectorXd out(static_cast<Eigen::Index>(rows) * cols * 3);
    for (int r = 0; r < rows; ++r) {
        const auto [y0, y1] = detail::block_range(r, rows, frame.height);
        for (int c = 0; c < cols; ++c) {
            const auto [x0, x1] = detail::block_range(c, cols, frame.width);
            double sum[3] = {0.0, 0.0, 0.0};
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x)
                    for (int ch = 0; ch < 3; ++ch) sum[ch] += frame.at(x, y, ch);
            const double count = static_cast<double>((y1 - y0) * (x1 - x0));
            for (int ch = 0; ch < 3; ++ch) out[(static_cast<Eigen::Index>(r) * cols + c) * 3 + ch] = sum[ch] / count;
        }
    }
    return out;
}

/**
 * @brief Per-cell histograms of unsigned gradient orientation.
 *
 * Gradients are central differences of luminance with replicated borders.
 * Orientation is folded into [0, pi) and split into cfg.gradient_bins equal
 * bins; each pixel votes its gradient magnitude into a single bin. Bin 0
 * collects horizontal gradients (vertical edges).
 */
inline Eigen::VectorXd gradient_histogram(const Frame& frame, const ModalityConfig& cfg) {
    validate(frame);
    cfg.validate();
    const int rows = std::min(cfg.gradient_downsample.rows, frame.height);
    const int cols = std::min(cfg.gradient_downsample.cols, frame.width);
    const int bins = cfg.gradient_bins;
    const double bin_width = std::numbers::pi / bins;

    Eigen::VectorXd hist = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.gradient_length()));
    for (int r = 0; r < rows; ++r) {
        const auto [y0, y1] = detail::block_range(r, rows, frame.height);
        for (int c = 0; c < cols; ++c) {
            const auto [x0, x1] = detail::block_range(c, cols, frame.width);
            const Eigen::Index base = (static_cast<Eigen::Index>(r) * cfg.gradient_downsample.cols + c) * bins;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    const double gx = frame.luminance(std::min(x + 1, frame.width - 1), y) -
                                      frame.luminance(std::max(x - 1, 0), y);
                    const double gy = frame.luminance(x, std::min(y + 1, frame.height - 1)) -
                                      frame.luminance(x, std::max(y - 1, 0));
                    const double mag = std::hypot(gx, gy);
                    if (mag == 0.0) continue;
                    double theta = std::atan2(gy, gx);
                    if (theta < 0.0) theta += std::numbers::pi;
                    if (theta >= std::numbers::pi) theta -= std::numbers::pi;
                    const int bin = std::min(static_cast<int>(theta / bin_width), bins - 1);
                    hist[base + bin] += mag;
                }
            }
        }
    }
    return hist;
}

/**
 * @brief Color block then gradient block, each scaled to unit l2 norm.
 *
 * An all-black color block becomes the uniform unit vector, the common
 * direction of every uniform grey, so no encoded frame is the zero vector.
 * A zero gradient block (featureless frame) stays zero.
 */
inline FeatureVector encode(const Frame& frame, const ModalityConfig& cfg) {
    cfg.validate();
    const Eigen::VectorXd color = downsample_color(frame, cfg.color_downsample.rows, cfg.color_downsample.cols);
    const Eigen::VectorXd grad = gradient_histogram(frame, cfg);

    FeatureVector fv;
    fv.values.resize(color.size() + grad.size());
    fv.values.head(color.size()) = color;
    fv.values.tail(grad.size()) = grad;
    if (color.isZero(0.0)) fv.values.head(color.size()).setConstant(1.0 / std::sqrt(static_cast<double>(color.size())));
    detail::normalize_block(fv.values.head(color.size()));
    detail::normalize_block(fv.values.tail(grad.size()));
    fv.modality_offsets = {static_cast<std::size_t>(color.size()), static_cast<std::size_t>(fv.values.size())};
    return fv;
}

}  // namespace smal

#endif  // SMAL_FEATURES_HPP
