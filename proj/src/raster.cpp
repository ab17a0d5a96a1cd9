#include "pyroprop/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace pyroprop {

const char* raster_kind_name(RasterKind k) {
    switch (k) {
        case RasterKind::Height: return "height";
        case RasterKind::LandClass: return "landclass";
        case RasterKind::Gradient: return "gradient";
        case RasterKind::Probability: return "probability";
        case RasterKind::Generic: return "generic";
    }
    return "generic";
}

RasterKind raster_kind_from_name(const std::string& name) {
    if (name == "height") return RasterKind::Height;
    if (name == "landclass") return RasterKind::LandClass;
    if (name == "gradient") return RasterKind::Gradient;
    if (name == "probability") return RasterKind::Probability;
    if (name == "generic") return RasterKind::Generic;
    throw FormatError("unknown raster kind: " + name);
}

CropSpec CropSpec::training(int center_row, int center_col, int crop_size) {
    if (crop_size <= 0 || crop_size % 8 != 0)
        throw InvalidInput("training crop size must be a positive multiple of 8");
    return CropSpec{center_row, center_col, crop_size, crop_size / 8};
}

Raster height_to_gradient(const Raster& height) {
    if (height.channels != 1)
        throw InvalidInput("height_to_gradient expects a single-channel raster");
    if (height.cell_size <= 0.0f)
        throw InvalidInput("height_to_gradient requires cell_size > 0");

    Raster out(height.height, height.width, 2, RasterKind::Gradient, height.cell_size);
    const int H = height.height, W = height.width;
    const float d = height.cell_size;
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            float gx, gy;
            if (W == 1) {
                gx = 0.0f;
            } else if (c == 0) {
                gx = (height.at(r, 1) - height.at(r, 0)) / d;
            } else if (c == W - 1) {
                gx = (height.at(r, W - 1) - height.at(r, W - 2)) / d;
            } else {
                gx = (height.at(r, c + 1) - height.at(r, c - 1)) / (2.0f * d);
            }
            if (H == 1) {
                gy = 0.0f;
            } else if (r == 0) {
                gy = (height.at(1, c) - height.at(0, c)) / d;
            } else if (r == H - 1) {
                gy = (height.at(H - 1, c) - height.at(H - 2, c)) / d;
            } else {
                gy = (height.at(r + 1, c) - height.at(r - 1, c)) / (2.0f * d);
            }
            out.at(r, c, 0) = gx;
            out.at(r, c, 1) = gy;
        }
    }
    return out;
}

Raster crop_with_padding(const Raster& src, const CropSpec& spec) {
    const int S = spec.window();
    if (spec.crop <= 0 || spec.pad < 0)
        throw InvalidInput("crop_with_padding: crop must be positive, pad non-negative");
    if (S > src.width || S > src.height)
        throw InvalidInput("crop_with_padding: window larger than source raster");

    int top = spec.center_row - S / 2;
    int left = spec.center_col - S / 2;
    bool clamped = false;
    if (top < 0) { top = 0; clamped = true; }
    if (left < 0) { left = 0; clamped = true; }
    if (top + S > src.height) { top = src.height - S; clamped = true; }
    if (left + S > src.width) { left = src.width - S; clamped = true; }

    Raster out(S, S, src.channels, src.kind, src.cell_size);
    for (int r = 0; r < S; ++r) {
        const float* srow = &src.data[src.index(top + r, left, 0)];
        float* drow = &out.data[out.index(r, 0, 0)];
        std::memcpy(drow, srow, sizeof(float) * static_cast<std::size_t>(S) * src.channels);
    }
    out.metadata["clamped"] = clamped;
    out.metadata["origin"] = {top, left};
    out.metadata["interior"] = {{"row", spec.pad}, {"col", spec.pad}, {"size", spec.crop}};
    return out;
}

DihedralElement compose(DihedralElement first, DihedralElement then) {
    // Elements are written as R^q M^m with M = mirror in x. Using
    // M R = R^-1 M:  R^q2 M^m2 R^q1 M^m1 = R^(q2 + s q1) M^(m2 xor m1),
    // s = -1 if m2 else +1.
    int q = then.rotation + (then.reflected ? -first.rotation : first.rotation);
    q = ((q % 4) + 4) % 4;
    return DihedralElement{q, first.reflected != then.reflected};
}

std::pair<float, float> dihedral_apply_vector(DihedralElement e, float x, float y) {
    if (e.reflected) x = -x;
    for (int q = 0; q < e.rotation; ++q) {
        const float nx = -y;
        const float ny = x;
        x = nx;
        y = ny;
    }
    return {x, y};
}

Raster dihedral_transform(const Raster& src, DihedralElement e,
                          const std::vector<std::pair<int, int>>& vector_channels) {
    if (src.width != src.height)
        throw InvalidInput("dihedral_transform requires a square raster");
    for (auto [cx, cy] : vector_channels) {
        if (cx < 0 || cy < 0 || cx >= src.channels || cy >= src.channels || cx == cy)
            throw InvalidInput("dihedral_transform: bad vector channel pair");
    }

    const int n = src.width;
    Raster out = src;
    // Pixel map: mirror in x first (c -> n-1-c), then q quarter turns with
    // (r, c) -> (c, n-1-r); this matches [[0,-1],[1,0]] on centred (x, y).
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            int rr = r, cc = c;
            if (e.reflected) cc = n - 1 - cc;
            for (int q = 0; q < e.rotation; ++q) {
                const int nr = cc;
                const int nc = n - 1 - rr;
                rr = nr;
                cc = nc;
            }
            for (int ch = 0; ch < src.channels; ++ch)
                out.at(rr, cc, ch) = src.at(r, c, ch);
        }
    }
    for (auto [cx, cy] : vector_channels) {
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                auto [vx, vy] = dihedral_apply_vector(e, out.at(r, c, cx), out.at(r, c, cy));
                out.at(r, c, cx) = vx;
                out.at(r, c, cy) = vy;
            }
        }
    }
    return out;
}

Raster strip_border(const Raster& src, int pad) {
    if (pad < 0) throw InvalidInput("strip_border: negative pad");
    if (2 * pad >= src.width || 2 * pad >= src.height)
        throw InvalidShape("strip_border: pad consumes the whole raster");
    Raster out(src.height - 2 * pad, src.width - 2 * pad, src.channels, src.kind, src.cell_size);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c)
            for (int ch = 0; ch < src.channels; ++ch)
                out.at(r, c, ch) = src.at(r + pad, c + pad, ch);
    return out;
}

namespace {

constexpr char kMagic[4] = {'P', 'F', 'R', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("truncated raster file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void save_raster(const Raster& r, const std::filesystem::path& path) {
    if (r.data.size() != static_cast<std::size_t>(r.width) * r.height * r.channels)
        throw InvalidInput("raster data length does not match its shape");
    nlohmann::json header = {
        {"width", r.width},     {"height", r.height},
        {"channels", r.channels}, {"cell_size", r.cell_size},
        {"kind", raster_kind_name(r.kind)}, {"metadata", r.metadata},
    };
    const std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for write: " + path.string());
    os.write(kMagic, 4);
    write_u32(os, static_cast<std::uint32_t>(hs.size()));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    static_assert(sizeof(float) == 4);
    // little-endian host assumed (x86/aarch64); payload is the raw f32 array
    os.write(reinterpret_cast<const char*>(r.data.data()),
             static_cast<std::streamsize>(r.data.size() * sizeof(float)));
    if (!os) throw FormatError("short write: " + path.string());
}

Raster load_raster(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open for read: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a PFR1 raster: " + path.string());
    const std::uint32_t hlen = read_u32(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), hlen);
    if (!is) throw FormatError("truncated raster header: " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad raster header JSON: ") + e.what());
    }
    Raster r;
    try {
        r.width = header.at("width").get<int>();
        r.height = header.at("height").get<int>();
        r.channels = header.at("channels").get<int>();
        r.cell_size = header.at("cell_size").get<float>();
        r.kind = raster_kind_from_name(header.at("kind").get<std::string>());
        r.metadata = header.at("metadata");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("raster header missing field: ") + e.what());
    }
    if (r.width <= 0 || r.height <= 0 || r.channels <= 0)
        throw FormatError("raster header has non-positive dimensions");
    const std::size_t count = static_cast<std::size_t>(r.width) * r.height * r.channels;
    r.data.resize(count);
    is.read(reinterpret_cast<char*>(r.data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!is || is.gcount() != static_cast<std::streamsize>(count * sizeof(float)))
        throw FormatError("truncated raster payload: " + path.string());
    return r;
}

void save_pgm(const Raster& r, const std::filesystem::path& path, int channel,
              float threshold, bool contour) {
    if (channel < 0 || channel >= r.channels)
        throw InvalidInput("save_pgm: channel out of range");
    std::vector<unsigned char> px(static_cast<std::size_t>(r.width) * r.height);
    auto value_at = [&](int rr, int cc) {
        float v = r.at(rr, cc, channel);
        if (threshold >= 0.0f && v < threshold) v = 0.0f;
        return v;
    };
    for (int rr = 0; rr < r.height; ++rr) {
        for (int cc = 0; cc < r.width; ++cc) {
            float v = std::clamp(value_at(rr, cc), 0.0f, 1.0f);
            px[static_cast<std::size_t>(rr) * r.width + cc] =
                static_cast<unsigned char>(std::lround(255.0 * v));
        }
    }
    if (contour && threshold >= 0.0f) {
        // boundary of the supra-threshold set, drawn white
        auto above = [&](int rr, int cc) { return r.at(rr, cc, channel) >= threshold; };
        for (int rr = 0; rr < r.height; ++rr) {
            for (int cc = 0; cc < r.width; ++cc) {
                if (!above(rr, cc)) continue;
                bool edge = rr == 0 || rr == r.height - 1 || cc == 0 || cc == r.width - 1 ||
                            !above(rr - 1, cc) || !above(rr + 1, cc) || !above(rr, cc - 1) ||
                            !above(rr, cc + 1);
                if (edge) px[static_cast<std::size_t>(rr) * r.width + cc] = 255;
            }
        }
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for write: " + path.string());
    os << "P5\n" << r.width << " " << r.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!os) throw FormatError("short write: " + path.string());
}

Raster load_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open for read: " + path.string());
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    is >> magic >> w >> h >> maxval;
    if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255)
        throw FormatError("unsupported PGM: " + path.string());
    is.get(); // single whitespace after maxval
    std::vector<unsigned char> px(static_cast<std::size_t>(w) * h);
    is.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!is) throw FormatError("truncated PGM payload: " + path.string());
    Raster r(h, w, 1, RasterKind::Probability);
    for (std::size_t i = 0; i < px.size(); ++i)
        r.data[i] = static_cast<float>(px[i]) / 255.0f;
    return r;
}

} // namespace pyroprop
