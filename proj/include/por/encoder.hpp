#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "por/error.hpp"
#include "por/matrix.hpp"
#include "por/rng.hpp"

namespace por {

// Channel-last image: pixel (y, x, c) sits at ((y * width + x) * channels + c).
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
        : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

    double& at(std::size_t y, std::size_t x, std::size_t c) {
        return pixels[(y * width + x) * channels + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
};

// Which patches of one image survive masking. Both lists sorted ascending,
// together they partition [0, num_patches).
struct MaskPlan {
    std::vector<std::uint64_t> kept;
    std::vector<std::uint64_t> masked;
};

// Linear patch encoder: shared projection plus one additive positional row
// per patch slot.
struct EncoderWeights {
    std::size_t patch_size = 0;
    Matrix projection;  // (patch_size^2 * channels) x d_enc
    Matrix positional;  // num_patches x d_enc

    std::size_t patch_dim() const { return projection.rows; }
    std::size_t encoding_dim() const { return projection.cols; }
    std::size_t num_patches() const { return positional.rows; }
};

struct EncodedPatch {
    std::uint64_t patch_index = 0;
    std::vector<double> values;

    bool operator==(const EncodedPatch&) const = default;
};

// Encodings of the kept patches of one image, ordered by patch index.
using EncodedDatapoint = std::vector<EncodedPatch>;

// Cuts the image into non-overlapping patch_size x patch_size tiles, row-major
// over the patch grid. Each patch is flattened in the same channel-last order
// as the image itself.
inline std::vector<std::vector<double>> patchify(const Image& image, std::size_t patch_size) {
    if (patch_size == 0) throw InvalidInput("patchify: patch_size must be positive");
    if (image.height % patch_size != 0 || image.width % patch_size != 0) {
        throw InvalidInput("patchify: image dimensions not divisible by patch size");
    }
    if (image.channels == 0) throw ShapeError("patchify: image has zero channels");
    if (image.pixels.size() != image.height * image.width * image.channels) {
        throw ShapeError("patchify: pixel buffer does not match image dimensions");
    }

    const std::size_t grid_h = image.height / patch_size;
    const std::size_t grid_w = image.width / patch_size;
    std::vector<std::vector<double>> patches;
    patches.reserve(grid_h * grid_w);

    for (std::size_t gy = 0; gy < grid_h; ++gy) {
        for (std::size_t gx = 0; gx < grid_w; ++gx) {
            std::vector<double> patch;
            patch.reserve(patch_size * patch_size * image.channels);
            for (std::size_t py = 0; py < patch_size; ++py) {
                for (std::size_t px = 0; px < patch_size; ++px) {
                    for (std::size_t c = 0; c < image.channels; ++c) {
                        patch.push_back(image.at(gy * patch_size + py, gx * patch_size + px, c));
                    }
                }
            }
            patches.push_back(std::move(patch));
        }
    }
    return patches;
}

// Inverse of patchify for a full patch list.
inline Image unpatchify(const std::vector<std::vector<double>>& patches, std::size_t height,
                        std::size_t width, std::size_t channels, std::size_t patch_size) {
    if (patch_size == 0) throw InvalidInput("unpatchify: patch_size must be positive");
    if (height % patch_size != 0 || width % patch_size != 0) {
        throw InvalidInput("unpatchify: image dimensions not divisible by patch size");
    }
    const std::size_t grid_h = height / patch_size;
    const std::size_t grid_w = width / patch_size;
    if (patches.size() != grid_h * grid_w) {
        throw ShapeError("unpatchify: wrong number of patches");
    }
    Image image(height, width, channels);
    const std::size_t patch_dim = patch_size * patch_size * channels;
    for (std::size_t gy = 0; gy < grid_h; ++gy) {
        for (std::size_t gx = 0; gx < grid_w; ++gx) {
            const auto& patch = patches[gy * grid_w + gx];
            if (patch.size() != patch_dim) throw ShapeError("unpatchify: patch has wrong length");
            std::size_t k = 0;
            for (std::size_t py = 0; py < patch_size; ++py) {
                for (std::size_t px = 0; px < patch_size; ++px) {
                    for (std::size_t c = 0; c < channels; ++c) {
                        image.at(gy * patch_size + py, gx * patch_size + px, c) = patch[k++];
                    }
                }
            }
        }
    }
    return image;
}

// Draws a uniformly random subset of patches to keep. The number masked is
// round(mask_ratio * num_patches), capped so at least one patch survives.
inline MaskPlan sample_mask(std::size_t num_patches, double mask_ratio, Rng& rng) {
    if (num_patches == 0) throw InvalidInput("sample_mask: num_patches must be positive");
    if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) {
        throw InvalidInput("sample_mask: mask_ratio must lie in [0, 1)");
    }

    std::size_t masked_count =
        static_cast<std::size_t>(std::llround(mask_ratio * static_cast<double>(num_patches)));
    if (masked_count >= num_patches) masked_count = num_patches - 1;
    const std::size_t kept_count = num_patches - masked_count;

    std::vector<std::uint64_t> order(num_patches);
    for (std::size_t i = 0; i < num_patches; ++i) order[i] = i;
    rng.shuffle(order);

    MaskPlan plan;
    plan.kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kept_count));
    plan.masked.assign(order.begin() + static_cast<std::ptrdiff_t>(kept_count), order.end());
    std::sort(plan.kept.begin(), plan.kept.end());
    std::sort(plan.masked.begin(), plan.masked.end());
    return plan;
}

// Encodes the kept patches only. Masked patches are never read, so their
// contents cannot influence the result.
inline EncodedDatapoint encode(const std::vector<std::vector<double>>& patches,
                               const MaskPlan& plan, const EncoderWeights& enc) {
    if (enc.projection.rows == 0 || enc.projection.cols == 0) {
        throw ShapeError("encode: empty projection");
    }
    if (patches.size() != enc.num_patches()) {
        throw ShapeError("encode: patch count does not match encoder positional table");
    }
    if (enc.positional.cols != enc.projection.cols) {
        throw ShapeError("encode: positional width does not match projection width");
    }
    if (plan.kept.empty()) throw InvalidInput("encode: mask keeps no patches");

    const std::size_t d = enc.encoding_dim();
    EncodedDatapoint out;
    out.reserve(plan.kept.size());
    for (std::uint64_t idx : plan.kept) {
        if (idx >= patches.size()) throw InvalidInput("encode: kept patch index out of range");
        const auto& patch = patches[idx];
        if (patch.size() != enc.patch_dim()) {
            throw ShapeError("encode: patch length does not match projection height");
        }
        EncodedPatch ep;
        ep.patch_index = idx;
        ep.values.assign(d, 0.0);
        for (std::size_t i = 0; i < patch.size(); ++i) {
            const double p = patch[i];
            for (std::size_t j = 0; j < d; ++j) {
                ep.values[j] += p * enc.projection(i, j);
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            ep.values[j] += enc.positional(idx, j);
        }
        out.push_back(std::move(ep));
    }
    return out;
}

// Element-wise uniform mean of encoder weights. All inputs must agree on
// every dimension.
inline EncoderWeights aggregate_encoders(const std::vector<EncoderWeights>& encoders) {
    if (encoders.empty()) throw InvalidInput("aggregate_encoders: empty input");
    const EncoderWeights& first = encoders.front();
    for (const EncoderWeights& e : encoders) {
        if (e.patch_size != first.patch_size || !e.projection.same_shape(first.projection) ||
            !e.positional.same_shape(first.positional)) {
            throw ShapeError("aggregate_encoders: encoder shapes differ");
        }
    }
    EncoderWeights avg;
    avg.patch_size = first.patch_size;
    avg.projection = Matrix(first.projection.rows, first.projection.cols);
    avg.positional = Matrix(first.positional.rows, first.positional.cols);
    const double inv = 1.0 / static_cast<double>(encoders.size());
    for (const EncoderWeights& e : encoders) {
        for (std::size_t i = 0; i < avg.projection.data.size(); ++i) {
            avg.projection.data[i] += e.projection.data[i] * inv;
        }
        for (std::size_t i = 0; i < avg.positional.data.size(); ++i) {
            avg.positional.data[i] += e.positional.data[i] * inv;
        }
    }
    return avg;
}

// Fresh random encoder. Projection entries scale with 1/sqrt(patch_dim) so
// encoding magnitudes stay comparable across patch sizes.
inline EncoderWeights init_encoder(std::size_t patch_size, std::size_t channels,
                                   std::size_t num_patches, std::size_t encoding_dim, Rng& rng) {
    if (patch_size == 0 || channels == 0 || num_patches == 0 || encoding_dim == 0) {
        throw InvalidInput("init_encoder: all dimensions must be positive");
    }
    const std::size_t patch_dim = patch_size * patch_size * channels;
    EncoderWeights enc;
    enc.patch_size = patch_size;
    enc.projection = Matrix(patch_dim, encoding_dim);
    enc.positional = Matrix(num_patches, encoding_dim);
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(patch_dim));
    const double pos_scale = 1.0 / std::sqrt(static_cast<double>(encoding_dim));
    for (double& v : enc.projection.data) v = rng.normal(0.0, proj_scale);
    for (double& v : enc.positional.data) v = rng.normal(0.0, pos_scale);
    return enc;
}

} // namespace por
