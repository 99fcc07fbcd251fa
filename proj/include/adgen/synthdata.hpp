#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adgen/conditioning.hpp"
#include "adgen/image_io.hpp"
#include "adgen/tensor.hpp"

namespace adgen::synth {

struct Color {
    uint8_t r = 0, g = 0, b = 0;
};

// Fixed color vocabulary of the synthetic domain. Face palettes are mutually
// separated by far more than the per-sample jitter band, and accessory colors
// are disjoint from every face palette so color-threshold mask detection works.
struct ColorModel {
    static constexpr int kPalettes = 6;
    static constexpr int kAccessoryColors = 4;
    Color palettes[kPalettes];
    Color background;
    Color accessory[kAccessoryColors];
    Color eye, nose, glasses, hat;
    static const ColorModel& get();
};

enum class ScaleClass { Small, Medium, Big };
enum class ExtraItem { None, Glasses, Hat };
enum class AccessoryKind { Ring, Drop, Stud };

ScaleClass scale_class_of(double face_height_ratio);
const char* scale_class_name(ScaleClass c);
const char* extra_item_name(ExtraItem e);
const char* accessory_kind_name(AccessoryKind k);

struct Labels {
    ScaleClass scale = ScaleClass::Medium;
    PoseClass pose = PoseClass::Front;
    int palette_id = 0;
};

struct SceneSpec {
    uint64_t seed = 0;
    int canvas = 64;
    int face_cx = 0, face_cy = 0;
    double face_half_height = 0.0;  // b; half width is kFaceAspect * b
    double yaw_deg = 0.0;
    int palette_id = 0;
    double jitter[3] = {0, 0, 0};  // per-channel byte offset of the face color
    AccessoryKind kind = AccessoryKind::Drop;
    int accessory_color_id = 0;
    double accessory_area_frac = 0.04;
    ExtraItem extra = ExtraItem::None;
    bool caption_has_palette = false;
    bool caption_has_extra = false;
};

struct Scene {
    SceneSpec spec;
    Tensor image;       // x0, 3xSxS
    Tensor mask;        // SxS, exact accessory footprint
    Tensor appearance;  // accessory-removed render, differs from x0 only inside mask
    FaceKeypoints kps;
    PoseSpec pose;
    Labels labels;
    std::vector<int> caption;  // token ids, padded
    double face_height_ratio = 0.0;  // from the rasterized extent
};

constexpr double kFaceAspect = 0.78;    // half width / half height
constexpr int kCaptionLen = 16;

// Draws a feasible scene specification; placement is resampled up to 100
// times before giving up.
SceneSpec sample_scene_spec(uint64_t seed, int canvas);
Scene generate_scene(const SceneSpec& spec);
Scene generate_scene(uint64_t seed, int canvas);

// Accessory footprint alone (mask exactness oracle).
Tensor rasterize_accessory(const SceneSpec& spec);

/*----------------------------------- captions --------------------------------*/

class Vocab {
  public:
    static const Vocab& get();
    int id(const std::string& word) const;           // InputError when unknown
    const std::string& word(int token_id) const;     // InputError when out of range
    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;
    int size() const { return static_cast<int>(words_.size()); }

  private:
    Vocab();
    std::vector<std::string> words_;
};

std::vector<int> build_caption(const SceneSpec& spec, const Labels& labels);

struct DecodedCaption {
    std::optional<ScaleClass> scale;
    std::optional<PoseClass> pose;
    std::optional<int> palette_id;
    std::optional<ExtraItem> extra;
    std::optional<AccessoryKind> kind;
};
DecodedCaption decode_caption(const std::vector<int>& ids);

/*----------------------------------- dataset ---------------------------------*/

struct SampleMeta {
    uint64_t seed = 0;
    FaceKeypoints kps;
    double yaw_deg = 0.0;
    Labels labels;
    std::vector<int> caption;
    AccessoryKind kind = AccessoryKind::Drop;
    int accessory_color_id = 0;
    ExtraItem extra = ExtraItem::None;
    double face_height_ratio = 0.0;
};

struct SampleRecord {
    Image8 image, mask, appearance;
    SampleMeta meta;
};

// On-disk layout under <root>: images/*.png, masks/*.png, appearance/*.png,
// meta/*.json, manifest.jsonl. Returns the manifest checksum.
uint64_t generate_dataset(const std::string& root, int n, uint64_t seed, int canvas);

class Dataset {
  public:
    static Dataset load(const std::string& root);
    size_t size() const { return records_.size(); }
    const SampleRecord& at(size_t i) const { return records_[i]; }
    int canvas() const;

  private:
    std::vector<SampleRecord> records_;
};

}  // namespace adgen::synth
