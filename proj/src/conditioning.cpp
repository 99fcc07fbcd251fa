#include "adgen/conditioning.hpp"

#include <algorithm>
#include <cmath>

#include "adgen/errors.hpp"
#include "adgen/image_io.hpp"

namespace adgen {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

PoseClass pose_class_of(double yaw_deg) {
    if (yaw_deg < -90.0 || yaw_deg > 90.0) throw InputError("pose: yaw outside [-90, 90]");
    if (yaw_deg >= 20.0) return PoseClass::Right;
    if (yaw_deg > -20.0) return PoseClass::Front;
    return PoseClass::Left;
}

const char* pose_class_name(PoseClass c) {
    switch (c) {
        case PoseClass::Left: return "left";
        case PoseClass::Front: return "front";
        case PoseClass::Right: return "right";
    }
    return "?";
}

ScaleMap scale_map_from_keypoints(const FaceKeypoints& kps, int h, int w) {
    if (kps.top_x < 0 || kps.top_x >= w || kps.chin_x < 0 || kps.chin_x >= w ||
        kps.top_y < 0 || kps.top_y >= h || kps.chin_y < 0 || kps.chin_y >= h)
        throw InputError("scale_map_from_keypoints: keypoints outside image");
    if (kps.top_y >= kps.chin_y)
        throw InputError("scale_map_from_keypoints: degenerate keypoints (top not above chin)");
    ScaleMap m;
    m.face_top_row = kps.top_y;
    m.face_bottom_row = kps.chin_y;
    m.grid = Tensor::zeros({h, w});
    for (int y = m.face_top_row; y <= m.face_bottom_row; ++y)
        for (int x = 0; x < w; ++x) m.grid.at(y, x) = 1.0;
    return m;
}

ScaleMap scale_map_from_ratio(int accessory_top_row, double face_height_ratio, int h, int w) {
    if (!(face_height_ratio > 0.0) || face_height_ratio > 1.0)
        throw InputError("scale_map_from_ratio: ratio must be in (0, 1]");
    if (accessory_top_row < 0 || accessory_top_row >= h)
        throw InputError("scale_map_from_ratio: row outside image");
    const int band = std::max(1, static_cast<int>(std::lround(face_height_ratio * h)));
    int top = accessory_top_row - band / 2;
    int bottom = top + band - 1;
    top = std::max(0, top);
    bottom = std::min(h - 1, bottom);
    ScaleMap m;
    m.face_top_row = top;
    m.face_bottom_row = bottom;
    m.grid = Tensor::zeros({h, w});
    for (int y = top; y <= bottom; ++y)
        for (int x = 0; x < w; ++x) m.grid.at(y, x) = 1.0;
    return m;
}

namespace {

// Axis-aligned square marker centered at (px, py), mirror-safe rasterization.
void draw_marker(Tensor& img, double px, double py, double r, double cr, double cg, double cb) {
    const int h = img.dim(1), w = img.dim(2);
    for (int y = 0; y < h; ++y) {
        if (std::fabs(y - py) > r) continue;
        for (int x = 0; x < w; ++x) {
            if (std::fabs(x - px) > r) continue;
            img.at(0, y, x) = cr;
            img.at(1, y, x) = cg;
            img.at(2, y, x) = cb;
        }
    }
}

}  // namespace

Tensor render_pose_proxy(const PoseSpec& spec, int h, int w) {
    if (spec.yaw_deg < -90.0 || spec.yaw_deg > 90.0)
        throw InputError("render_pose_proxy: yaw outside [-90, 90]");
    Tensor img = Tensor::full({3, h, w}, -1.0);  // black background
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const double a = 0.30 * w, b = 0.38 * h;
    const double beta = spec.yaw_deg * kPi / 180.0;

    const double head = byte_to_unit(150);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double dx = (x - cx) / a, dy = (y - cy) / b;
            if (dx * dx + dy * dy <= 1.0) {
                img.at(0, y, x) = head;
                img.at(1, y, x) = head;
                img.at(2, y, x) = head;
            }
        }

    const double k = w / 4.0;
    const double nose_dx = std::round(k * std::sin(beta));
    const double eye_off = std::round(0.15 * w * std::cos(beta));
    const double eye_y = cy - 0.12 * h;
    const double eye_r = std::max(1.0, 0.035 * w);
    const double ec = byte_to_unit(235);
    draw_marker(img, cx + nose_dx - eye_off, eye_y, eye_r, ec, ec, ec);
    draw_marker(img, cx + nose_dx + eye_off, eye_y, eye_r, ec, ec, ec);

    const double nose_y = cy + 0.10 * h;
    const double nose_r = std::max(1.0, 0.03 * w);
    draw_marker(img, cx + nose_dx, nose_y, nose_r, byte_to_unit(200), byte_to_unit(40),
                byte_to_unit(70));
    return img;
}

AugmentDraws sample_augment_draws(Rng& rng) {
    AugmentDraws d;
    d.rotation_deg = rng.uniform(-30.0, 30.0);
    d.flip = rng.bernoulli(0.5);
    d.crop_area = rng.uniform(0.25, 1.0);
    d.crop_u = rng.uniform();
    d.crop_v = rng.uniform();
    return d;
}

namespace {

double sample_clamped(const Tensor& src, int c, double y, double x) {
    const int h = src.dim(1), w = src.dim(2);
    x = std::min(static_cast<double>(w - 1), std::max(0.0, x));
    y = std::min(static_cast<double>(h - 1), std::max(0.0, y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(w - 1, x0 + 1);
    const int y1 = std::min(h - 1, y0 + 1);
    const double fx = x - x0, fy = y - y0;
    const double v00 = src.at(c, y0, x0), v01 = src.at(c, y0, x1);
    const double v10 = src.at(c, y1, x0), v11 = src.at(c, y1, x1);
    return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
}

}  // namespace

Tensor resize_bilinear(const Tensor& src, int oh, int ow) {
    if (src.rank() != 3) throw InputError("resize_bilinear: rank-3 required");
    const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
    Tensor out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                const double sy = (y + 0.5) * h / oh - 0.5;
                const double sx = (x + 0.5) * w / ow - 0.5;
                out.at(ch, y, x) = sample_clamped(src, ch, sy, sx);
            }
    return out;
}

Tensor augment_appearance_with(const Tensor& face, int out_size, const AugmentDraws& draws) {
    if (face.rank() != 3 || face.dim(0) != 3)
        throw InputError("augment_appearance: 3-channel image required");
    const int h = face.dim(1), w = face.dim(2);
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const double theta = draws.rotation_deg * kPi / 180.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double s = std::sqrt(draws.crop_area);
    const double cw = s * w, chh = s * h;
    const double x0 = draws.crop_u * (w - cw);
    const double y0 = draws.crop_v * (h - chh);

    Tensor out({3, out_size, out_size});
    for (int oy = 0; oy < out_size; ++oy)
        for (int ox = 0; ox < out_size; ++ox) {
            // position inside the crop window
            double px = x0 + (ox + 0.5) * cw / out_size - 0.5;
            double py = y0 + (oy + 0.5) * chh / out_size - 0.5;
            if (draws.flip) px = (w - 1) - px;
            // inverse rotation about the center
            const double rx = ct * (px - cx) + st * (py - cy) + cx;
            const double ry = -st * (px - cx) + ct * (py - cy) + cy;
            for (int c = 0; c < 3; ++c)
                out.at(c, oy, ox) =
                    std::min(1.0, std::max(-1.0, sample_clamped(face, c, ry, rx)));
        }
    return out;
}

Tensor augment_appearance(const Tensor& face, int out_size, Rng& rng) {
    return augment_appearance_with(face, out_size, sample_augment_draws(rng));
}

Tensor assemble_condition(const AccessoryCondition& acc, const ScaleMap& map) {
    const int h = acc.mask.dim(0), w = acc.mask.dim(1);
    if (acc.rgb.rank() != 3 || acc.rgb.dim(0) != 3 || acc.rgb.dim(1) != h || acc.rgb.dim(2) != w)
        throw InputError("assemble_condition: accessory shape mismatch");
    if (map.grid.dim(0) != h || map.grid.dim(1) != w)
        throw InputError("assemble_condition: scale map size mismatch");
    Tensor cond({4, h, w});
    std::copy(acc.rgb.data.begin(), acc.rgb.data.end(), cond.data.begin());
    std::copy(map.grid.data.begin(), map.grid.data.end(),
              cond.data.begin() + static_cast<size_t>(3) * h * w);
    return cond;
}

void split_condition(const Tensor& cond, Tensor& rgb_out, Tensor& scale_out) {
    if (cond.rank() != 3 || cond.dim(0) != 4) throw InputError("split_condition: need 4xHxW");
    const int h = cond.dim(1), w = cond.dim(2);
    rgb_out = Tensor({3, h, w});
    scale_out = Tensor({h, w});
    std::copy(cond.data.begin(), cond.data.begin() + static_cast<size_t>(3) * h * w,
              rgb_out.data.begin());
    std::copy(cond.data.begin() + static_cast<size_t>(3) * h * w, cond.data.end(),
              scale_out.data.begin());
}

void validate_accessory(const AccessoryCondition& acc) {
    if (acc.rgb.rank() != 3 || acc.rgb.dim(0) != 3 || acc.mask.rank() != 2 ||
        acc.rgb.dim(1) != acc.mask.dim(0) || acc.rgb.dim(2) != acc.mask.dim(1))
        throw InputError("accessory: bad shapes");
    const int h = acc.mask.dim(0), w = acc.mask.dim(1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double m = acc.mask.at(y, x);
            if (m != 0.0 && m != 1.0) throw InputError("accessory: mask is not binary");
            if (m == 0.0) {
                for (int c = 0; c < 3; ++c)
                    if (acc.rgb.at(c, y, x) != 0.0)
                        throw InputError("accessory: nonzero pixels outside mask");
            }
        }
}

Tensor composite(const AccessoryCondition& acc, const Tensor& generated) {
    validate_accessory(acc);
    if (!generated.same_shape(acc.rgb))
        throw InputError("composite: generated image shape mismatch");
    const int h = acc.mask.dim(0), w = acc.mask.dim(1);
    Tensor out = generated;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (acc.mask.at(y, x) == 1.0)
                for (int c = 0; c < 3; ++c) out.at(c, y, x) = acc.rgb.at(c, y, x);
    return out;
}

AccessoryCondition accessory_from_scene(const Tensor& image, const Tensor& mask) {
    if (image.rank() != 3 || image.dim(0) != 3 || mask.rank() != 2 ||
        image.dim(1) != mask.dim(0) || image.dim(2) != mask.dim(1))
        throw InputError("accessory_from_scene: bad shapes");
    AccessoryCondition acc;
    acc.mask = mask;
    acc.rgb = Tensor::zeros(image.shape);
    const int h = mask.dim(0), w = mask.dim(1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(y, x) == 1.0)
                for (int c = 0; c < 3; ++c) acc.rgb.at(c, y, x) = image.at(c, y, x);
    return acc;
}

}  // namespace adgen
