#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pyroprop/errors.hpp"

namespace pyroprop {

enum class RasterKind { Height, LandClass, Gradient, Probability, Generic };

const char* raster_kind_name(RasterKind k);
RasterKind raster_kind_from_name(const std::string& name);

// 2D single-precision grid. Data is row-major, channel-minor (channel varies
// fastest), matching the on-disk PFR1 payload byte for byte.
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 1;
    float cell_size = 30.0f; // meters
    RasterKind kind = RasterKind::Generic;
    std::vector<float> data;
    nlohmann::json metadata = nlohmann::json::object();

    Raster() = default;
    Raster(int h, int w, int ch, RasterKind k, float cell = 30.0f, float fill = 0.0f)
        : width(w), height(h), channels(ch), cell_size(cell), kind(k),
          data(static_cast<std::size_t>(w) * h * ch, fill) {}

    std::size_t index(int r, int c, int ch = 0) const {
        return (static_cast<std::size_t>(r) * width + c) * channels + ch;
    }
    float& at(int r, int c, int ch = 0) { return data[index(r, c, ch)]; }
    float at(int r, int c, int ch = 0) const { return data[index(r, c, ch)]; }

    bool same_shape(const Raster& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

// Identifies one of the 8 symmetries of a square: an optional mirror in x
// followed by `rotation` quarter-turns. Rotation convention is the matrix
// [[0,-1],[1,0]] acting on (x=column, y=row) offsets from the raster centre.
struct DihedralElement {
    int rotation = 0;      // quarter turns, 0..3
    bool reflected = false;

    static DihedralElement identity() { return {0, false}; }
    bool is_identity() const { return rotation == 0 && !reflected; }
};

DihedralElement compose(DihedralElement first, DihedralElement then);

// Applies the element to a 2D vector (x, y).
std::pair<float, float> dihedral_apply_vector(DihedralElement e, float x, float y);

struct CropSpec {
    int center_row = 0;
    int center_col = 0;
    int crop = 0; // c, interior loss-evaluation size
    int pad = 0;  // p, context band on every side

    int window() const { return crop + 2 * pad; }

    // Training crops fix p = c/8.
    static CropSpec training(int center_row, int center_col, int crop_size);
};

// Central differences (one-sided at borders) on a single-channel height map.
// Output channel 0 = dz/dx (x = column), channel 1 = dz/dy (y = row);
// units are rise/run.
Raster height_to_gradient(const Raster& height);

// (c+2p)x(c+2p) window centred at spec.center. Windows that would leave the
// raster are shifted inward (never zero-filled); the shift is flagged in
// metadata["clamped"], and metadata["interior"] records the central c x c
// loss-evaluation region in window coordinates.
Raster crop_with_padding(const Raster& src, const CropSpec& spec);

// Permutes pixels of a square raster by e. Channel pairs listed in
// vector_channels (e.g. gradient x/y) additionally have their component
// values rotated/reflected so directions stay consistent with the pixels.
Raster dihedral_transform(const Raster& src, DihedralElement e,
                          const std::vector<std::pair<int, int>>& vector_channels = {});

// Drops a pad-wide border on every side, e.g. to restrict evaluation to the
// interior c x c region of a (c+2p)-sized window.
Raster strip_border(const Raster& src, int pad);

// PFR1 container: "PFR1" magic, u32 little-endian JSON header length, UTF-8
// JSON header, then width*height*channels little-endian f32 payload.
void save_raster(const Raster& r, const std::filesystem::path& path);
Raster load_raster(const std::filesystem::path& path);

// 8-bit binary PGM of one channel, pixel = round(255 * value). Values are
// clamped to [0,1] first; threshold < 0 disables blanking.
void save_pgm(const Raster& r, const std::filesystem::path& path, int channel = 0,
              float threshold = -1.0f, bool contour = false);
Raster load_pgm(const std::filesystem::path& path);

} // namespace pyroprop
