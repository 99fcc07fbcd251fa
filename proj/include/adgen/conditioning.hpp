#pragma once

#include <cstdint>
#include <string>

#include "adgen/rng.hpp"
#include "adgen/tensor.hpp"

namespace adgen {

// Vertical extent of the face; the binary scale map is 1 exactly on rows
// [face_top_row, face_bottom_row].
struct ScaleMap {
    Tensor grid;  // HxW, {0,1}
    int face_top_row = 0;
    int face_bottom_row = 0;
};

// Segmented accessory: rgb is exactly zero outside the mask so pasting it onto
// a generated image is purely additive.
struct AccessoryCondition {
    Tensor rgb;   // 3xHxW in [-1,1], 0 outside mask
    Tensor mask;  // HxW, {0,1}
};

enum class PoseClass { Left, Front, Right };

struct PoseSpec {
    double yaw_deg = 0.0;  // [-90, 90]
};

PoseClass pose_class_of(double yaw_deg);
const char* pose_class_name(PoseClass c);

struct FaceKeypoints {
    int top_x = 0, top_y = 0;
    int chin_x = 0, chin_y = 0;
};

ScaleMap scale_map_from_keypoints(const FaceKeypoints& kps, int h, int w);

// Band of height round(r*h) vertically centered at the accessory's top row,
// clipped (never shifted) at the image borders.
ScaleMap scale_map_from_ratio(int accessory_top_row, double face_height_ratio, int h, int w);

// Normalized head rendering that depends on yaw only: fixed-scale ellipse
// centered in the canvas, nose marker displaced by round(k*sin(yaw)) with
// k = W/4, eye markers with cos(yaw)-foreshortened spacing. Black background.
// render(yaw) and render(-yaw) are exact mirror images.
Tensor render_pose_proxy(const PoseSpec& spec, int h, int w);

// The random draws behind one appearance augmentation, exposed separately so
// tests can pin them and the statistical oracle can inspect their law.
struct AugmentDraws {
    double rotation_deg = 0.0;  // U(-30, 30)
    bool flip = false;          // p = 0.5
    double crop_area = 1.0;     // U(0.25, 1)
    double crop_u = 0.0;        // U(0,1) horizontal placement
    double crop_v = 0.0;        // U(0,1) vertical placement
};

AugmentDraws sample_augment_draws(Rng& rng);

// rotate -> optional horizontal flip -> aspect-preserving random resized crop,
// bilinear with edge clamp, output clamped to [-1,1].
Tensor augment_appearance_with(const Tensor& face, int out_size, const AugmentDraws& draws);
Tensor augment_appearance(const Tensor& face, int out_size, Rng& rng);

Tensor resize_bilinear(const Tensor& src, int oh, int ow);

// Channels [R,G,B of the accessory, scale map].
Tensor assemble_condition(const AccessoryCondition& acc, const ScaleMap& map);
void split_condition(const Tensor& cond, Tensor& rgb_out, Tensor& scale_out);

// I_f: accessory pixels inside the mask, generated pixels outside, bit-exact
// on both sides. Rejects inputs whose rgb is nonzero outside the mask.
Tensor composite(const AccessoryCondition& acc, const Tensor& generated);

// Builds the condition from a full scene render: pixels inside the mask are
// kept, everything else is zeroed.
AccessoryCondition accessory_from_scene(const Tensor& image, const Tensor& mask);

void validate_accessory(const AccessoryCondition& acc);

}  // namespace adgen
