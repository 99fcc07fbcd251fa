#include "adgen/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "adgen/checkpoint.hpp"
#include "adgen/errors.hpp"
#include "adgen/rng.hpp"

namespace adgen::synth {

namespace fs = std::filesystem;
using nlohmann::json;

const ColorModel& ColorModel::get() {
    static const ColorModel m = [] {
        ColorModel c;
        c.palettes[0] = {246, 222, 198};  // porcelain
        c.palettes[1] = {232, 188, 152};  // fair
        c.palettes[2] = {210, 160, 100};  // golden
        c.palettes[3] = {176, 122, 66};   // tan
        c.palettes[4] = {124, 82, 48};    // deep
        c.palettes[5] = {240, 150, 150};  // rosy
        c.background = {24, 26, 30};
        c.accessory[0] = {255, 196, 40};   // gold
        c.accessory[1] = {168, 192, 234};  // silver
        c.accessory[2] = {36, 200, 196};   // teal
        c.accessory[3] = {216, 60, 176};   // magenta
        c.eye = {244, 248, 252};
        c.nose = {164, 24, 56};
        c.glasses = {64, 64, 76};
        c.hat = {96, 64, 148};
        return c;
    }();
    return m;
}

ScaleClass scale_class_of(double r) {
    if (r < 0.0 || r > 1.0) throw InputError("scale_class_of: ratio outside [0,1]");
    if (r < 0.4) return ScaleClass::Small;
    if (r < 0.7) return ScaleClass::Medium;
    return ScaleClass::Big;
}

const char* scale_class_name(ScaleClass c) {
    switch (c) {
        case ScaleClass::Small: return "small";
        case ScaleClass::Medium: return "medium";
        case ScaleClass::Big: return "big";
    }
    return "?";
}

const char* extra_item_name(ExtraItem e) {
    switch (e) {
        case ExtraItem::None: return "none";
        case ExtraItem::Glasses: return "glasses";
        case ExtraItem::Hat: return "hat";
    }
    return "?";
}

const char* accessory_kind_name(AccessoryKind k) {
    switch (k) {
        case AccessoryKind::Ring: return "ring";
        case AccessoryKind::Drop: return "drop";
        case AccessoryKind::Stud: return "stud";
    }
    return "?";
}

/*---------------------------------- geometry ---------------------------------*/

namespace {

bool in_ellipse(int x, int y, double cx, double cy, double a, double b) {
    const double dx = (x - cx) / a, dy = (y - cy) / b;
    return dx * dx + dy * dy <= 1.0;
}

// Rows with at least two face pixels; the rasterized vertical extent.
std::pair<int, int> face_row_extent(int canvas, double cx, double cy, double a, double b) {
    int top = -1, bottom = -1;
    for (int y = 0; y < canvas; ++y) {
        int count = 0;
        for (int x = 0; x < canvas; ++x)
            if (in_ellipse(x, y, cx, cy, a, b)) count++;
        if (count >= 2) {
            if (top < 0) top = y;
            bottom = y;
        }
    }
    return {top, bottom};
}

struct AccessoryGeometry {
    double center_x = 0.0, top_y = 0.0;
    double radius = 0.0;  // stud radius / ring outer radius / drop half width
    double half_width() const { return radius; }
    double height(AccessoryKind k) const {
        switch (k) {
            case AccessoryKind::Ring: return 2.0 * radius;
            case AccessoryKind::Stud: return 2.0 * radius;
            case AccessoryKind::Drop: return 3.0 * radius;
        }
        return 0.0;
    }
};

AccessoryGeometry accessory_geometry(const SceneSpec& s) {
    AccessoryGeometry g;
    const double area = s.accessory_area_frac * s.canvas * s.canvas;
    switch (s.kind) {
        case AccessoryKind::Stud:
            g.radius = std::sqrt(area / M_PI);
            break;
        case AccessoryKind::Ring:
            g.radius = std::sqrt(area / (0.75 * M_PI));
            break;
        case AccessoryKind::Drop:
            g.radius = std::sqrt(area / (1.5 * M_PI));
            break;
    }
    const double a = kFaceAspect * s.face_half_height;
    g.center_x = s.face_cx - std::lround(a) - 1.0;
    g.top_y = s.face_cy + std::lround(0.10 * s.face_half_height);
    return g;
}

bool accessory_pixel(const SceneSpec& s, const AccessoryGeometry& g, int x, int y) {
    switch (s.kind) {
        case AccessoryKind::Stud: {
            const double dx = x - g.center_x, dy = y - (g.top_y + g.radius);
            return dx * dx + dy * dy <= g.radius * g.radius;
        }
        case AccessoryKind::Ring: {
            const double dx = x - g.center_x, dy = y - (g.top_y + g.radius);
            const double d2 = dx * dx + dy * dy;
            const double rin = 0.5 * g.radius;
            return d2 <= g.radius * g.radius && d2 >= rin * rin;
        }
        case AccessoryKind::Drop: {
            const double w = g.radius, h = 1.5 * g.radius;
            const double dx = (x - g.center_x) / w, dy = (y - (g.top_y + h)) / h;
            return dx * dx + dy * dy <= 1.0;
        }
    }
    return false;
}

void fill_rect(Image8& img, int x0, int y0, int x1, int y1, Color c) {
    x0 = std::max(0, x0);
    y0 = std::max(0, y0);
    x1 = std::min(img.w - 1, x1);
    y1 = std::min(img.h - 1, y1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            img.at(y, x, 0) = c.r;
            img.at(y, x, 1) = c.g;
            img.at(y, x, 2) = c.b;
        }
}

uint8_t clamp_byte(double v) {
    return static_cast<uint8_t>(std::min(255.0, std::max(0.0, std::round(v))));
}

}  // namespace

Tensor rasterize_accessory(const SceneSpec& spec) {
    const AccessoryGeometry g = accessory_geometry(spec);
    Tensor mask = Tensor::zeros({spec.canvas, spec.canvas});
    for (int y = 0; y < spec.canvas; ++y)
        for (int x = 0; x < spec.canvas; ++x)
            if (accessory_pixel(spec, g, x, y)) mask.at(y, x) = 1.0;
    return mask;
}

/*---------------------------------- sampling ---------------------------------*/

SceneSpec sample_scene_spec(uint64_t seed, int canvas) {
    if (canvas < 32) throw ConfigError("scene: canvas too small");
    Rng rng(mix_seed(seed, 0x5ce9e5ULL));
    SceneSpec s;
    s.seed = seed;
    s.canvas = canvas;

    // scale class first, then a target ratio whose rasterized extent lands
    // inside the class with a safety margin from the class boundaries
    const int scale_class = rng.uniform_int(0, 2);
    const double lo[3] = {0.30, 0.42, 0.72};
    const double hi[3] = {0.38, 0.68, 0.80};
    double b = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        const double target = rng.uniform(lo[scale_class], hi[scale_class]);
        b = target * canvas / 2.0;
        const double cx = canvas / 2.0, cy = canvas / 2.0;
        auto [top, bot] = face_row_extent(canvas, cx, cy, kFaceAspect * b, b);
        if (top < 0) continue;
        const double raster = static_cast<double>(bot - top + 1) / canvas;
        if (raster < 0.26 || raster > 0.88) continue;
        const double margin = std::min(std::fabs(raster - 0.4), std::fabs(raster - 0.7));
        if (margin < 0.015) continue;
        ScaleClass got = scale_class_of(raster);
        if (static_cast<int>(got) == scale_class) ok = true;
    }
    if (!ok) throw InputError("scene: could not fit requested scale class");
    s.face_half_height = b;

    const int pose_class = rng.uniform_int(0, 2);
    if (pose_class == 0) s.yaw_deg = rng.uniform(-85.0, -35.0);       // left
    else if (pose_class == 1) s.yaw_deg = rng.uniform(-10.0, 10.0);   // front
    else s.yaw_deg = rng.uniform(35.0, 85.0);                         // right

    s.palette_id = rng.uniform_int(0, ColorModel::kPalettes - 1);
    for (double& j : s.jitter) j = rng.uniform(-6.0, 6.0);
    s.kind = static_cast<AccessoryKind>(rng.uniform_int(0, 2));
    s.accessory_color_id = rng.uniform_int(0, ColorModel::kAccessoryColors - 1);
    s.accessory_area_frac = rng.uniform(0.02, 0.06);
    const double extra_draw = rng.uniform();
    s.extra = extra_draw < 0.5 ? ExtraItem::None
                               : (extra_draw < 0.75 ? ExtraItem::Glasses : ExtraItem::Hat);
    s.caption_has_palette = rng.bernoulli(0.5);
    s.caption_has_extra = rng.bernoulli(0.5);

    // placement: face and accessory fully on canvas, room for the hat.
    // Candidate centers are drawn from the feasible ranges implied by the
    // geometry, then re-checked against the exact raster constraints.
    const double a = kFaceAspect * b;
    SceneSpec probe = s;
    probe.face_cx = probe.face_cy = 0;
    const AccessoryGeometry g0 = accessory_geometry(probe);
    const double hat_h = s.extra == ExtraItem::Hat ? std::max(2.0, 0.22 * b) : 0.0;
    const int xmin = static_cast<int>(std::ceil(std::lround(a) + 2 + g0.half_width()));
    const int xmax = static_cast<int>(std::floor(canvas - 2 - (a + 2)));
    const int ymin = static_cast<int>(std::ceil(b + hat_h + 1));
    const int ymax_face = static_cast<int>(std::floor(canvas - 2 - b));
    const int ymax_acc = static_cast<int>(
        std::floor(canvas - 2 - g0.height(probe.kind) - std::lround(0.10 * b)));
    const int ymax = std::min(ymax_face, ymax_acc);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        if (xmin > xmax || ymin > ymax) break;
        probe.face_cx = rng.uniform_int(xmin, xmax);
        probe.face_cy = rng.uniform_int(ymin, ymax);
        const AccessoryGeometry g = accessory_geometry(probe);
        const double acc_left = g.center_x - g.half_width();
        const double acc_bottom = g.top_y + g.height(probe.kind);
        if (probe.face_cx + a + 2 > canvas - 1) continue;
        if (acc_left < 1) continue;
        if (probe.face_cy - b - hat_h < 1) continue;
        if (probe.face_cy + b > canvas - 2) continue;
        if (acc_bottom > canvas - 2) continue;
        placed = true;
    }
    if (!placed) throw InputError("scene: accessory placement failed after 100 attempts");
    s.face_cx = probe.face_cx;
    s.face_cy = probe.face_cy;
    return s;
}

/*---------------------------------- rendering --------------------------------*/

Scene generate_scene(const SceneSpec& spec) {
    const ColorModel& cm = ColorModel::get();
    const int S = spec.canvas;
    const double b = spec.face_half_height;
    const double a = kFaceAspect * b;
    const double cx = spec.face_cx, cy = spec.face_cy;

    Image8 img(S, S, 3);
    fill_rect(img, 0, 0, S - 1, S - 1, cm.background);

    const Color base = cm.palettes[spec.palette_id];
    const Color face{clamp_byte(base.r + spec.jitter[0]), clamp_byte(base.g + spec.jitter[1]),
                     clamp_byte(base.b + spec.jitter[2])};
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
            if (in_ellipse(x, y, cx, cy, a, b)) {
                img.at(y, x, 0) = face.r;
                img.at(y, x, 1) = face.g;
                img.at(y, x, 2) = face.b;
            }

    // markers shift horizontally with yaw; the nose offset is the pose signal
    const double beta = spec.yaw_deg * M_PI / 180.0;
    const int dx = static_cast<int>(std::lround(a * std::sin(beta)));
    const int eye_y = spec.face_cy - static_cast<int>(std::lround(0.30 * b));
    const int eye_off = std::max(1, static_cast<int>(std::lround(0.55 * a * std::cos(beta))));
    const int re = std::max(1, static_cast<int>(std::lround(0.16 * a)));
    fill_rect(img, spec.face_cx + dx - eye_off - re / 2, eye_y - re / 2,
              spec.face_cx + dx - eye_off + (re - 1) / 2, eye_y + (re - 1) / 2, cm.eye);
    fill_rect(img, spec.face_cx + dx + eye_off - re / 2, eye_y - re / 2,
              spec.face_cx + dx + eye_off + (re - 1) / 2, eye_y + (re - 1) / 2, cm.eye);
    const int nose_y = spec.face_cy + static_cast<int>(std::lround(0.08 * b));
    const int rn = std::max(1, static_cast<int>(std::lround(0.16 * a)));
    fill_rect(img, spec.face_cx + dx - rn / 2, nose_y - rn / 2,
              spec.face_cx + dx + (rn + 1) / 2, nose_y + (rn + 1) / 2, cm.nose);

    auto [top_row, bottom_row] = face_row_extent(S, cx, cy, a, b);
    if (top_row < 0) throw InputError("scene: face rasterized to nothing");

    if (spec.extra == ExtraItem::Glasses) {
        const int gh = std::max(1, re / 2);
        fill_rect(img, static_cast<int>(std::lround(cx - a)), eye_y - gh,
                  static_cast<int>(std::lround(cx + a)), eye_y + gh, cm.glasses);
    } else if (spec.extra == ExtraItem::Hat) {
        const int hat_h = std::max(2, static_cast<int>(std::lround(0.22 * b)));
        fill_rect(img, static_cast<int>(std::lround(cx - a)) - 1, top_row - hat_h,
                  static_cast<int>(std::lround(cx + a)) + 1, top_row - 1, cm.hat);
    }

    Scene scene;
    scene.spec = spec;
    scene.appearance = image_to_tensor(img);

    // accessory drawn last; the mask is its exact footprint
    scene.mask = rasterize_accessory(spec);
    const Color ac = cm.accessory[spec.accessory_color_id];
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
            if (scene.mask.at(y, x) == 1.0) {
                img.at(y, x, 0) = ac.r;
                img.at(y, x, 1) = ac.g;
                img.at(y, x, 2) = ac.b;
            }
    double mask_area = 0.0;
    for (double v : scene.mask.data) mask_area += v;
    if (mask_area < 4.0) throw InputError("scene: accessory off canvas or degenerate");
    scene.image = image_to_tensor(img);

    scene.kps = {spec.face_cx, top_row, spec.face_cx, bottom_row};
    scene.pose = {spec.yaw_deg};
    scene.face_height_ratio = static_cast<double>(bottom_row - top_row + 1) / S;
    scene.labels.scale = scale_class_of(scene.face_height_ratio);
    scene.labels.pose = pose_class_of(spec.yaw_deg);
    scene.labels.palette_id = spec.palette_id;
    scene.caption = build_caption(spec, scene.labels);
    return scene;
}

Scene generate_scene(uint64_t seed, int canvas) {
    return generate_scene(sample_scene_spec(seed, canvas));
}

/*---------------------------------- captions ---------------------------------*/

Vocab::Vocab() {
    words_ = {"<pad>", "a",      "woman", "wears",  "ring",   "drop", "stud",
              "earring", "small", "medium", "big",   "face",   "facing", "left",
              "front",   "right", "porcelain", "fair", "golden", "tan", "deep",
              "rosy",    "skin",  "glasses", "hat",  "with",   "best", "quality"};
}

const Vocab& Vocab::get() {
    static const Vocab v;
    return v;
}

int Vocab::id(const std::string& word) const {
    for (size_t i = 0; i < words_.size(); ++i)
        if (words_[i] == word) return static_cast<int>(i);
    throw InputError("vocab: unknown word '" + word + "'");
}

const std::string& Vocab::word(int token_id) const {
    if (token_id < 0 || token_id >= size()) throw InputError("vocab: id out of range");
    return words_[static_cast<size_t>(token_id)];
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
    std::vector<int> out;
    std::string cur;
    for (char ch : text + " ") {
        if (ch == ' ' || ch == '\t') {
            if (!cur.empty()) out.push_back(id(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    return out;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == 0) continue;
        if (!out.empty()) out += ' ';
        out += word(id);
    }
    return out;
}

std::vector<int> build_caption(const SceneSpec& spec, const Labels& labels) {
    const Vocab& v = Vocab::get();
    std::vector<int> ids;
    ids.push_back(v.id("a"));
    ids.push_back(v.id("woman"));
    ids.push_back(v.id("wears"));
    ids.push_back(v.id(accessory_kind_name(spec.kind)));
    ids.push_back(v.id("earring"));
    ids.push_back(v.id(scale_class_name(labels.scale)));
    ids.push_back(v.id("face"));
    ids.push_back(v.id("facing"));
    ids.push_back(v.id(pose_class_name(labels.pose)));
    if (spec.caption_has_palette) {
        static const char* palette_words[ColorModel::kPalettes] = {"porcelain", "fair", "golden",
                                                                   "tan",       "deep", "rosy"};
        ids.push_back(v.id(palette_words[labels.palette_id]));
        ids.push_back(v.id("skin"));
    }
    if (spec.caption_has_extra && spec.extra != ExtraItem::None) {
        ids.push_back(v.id("with"));
        ids.push_back(v.id(extra_item_name(spec.extra)));
    }
    ids.push_back(v.id("best"));
    ids.push_back(v.id("quality"));
    ids.resize(kCaptionLen, 0);
    return ids;
}

DecodedCaption decode_caption(const std::vector<int>& ids) {
    const Vocab& v = Vocab::get();
    DecodedCaption d;
    static const char* palette_words[ColorModel::kPalettes] = {"porcelain", "fair", "golden",
                                                               "tan",       "deep", "rosy"};
    for (int id : ids) {
        if (id == 0) continue;
        const std::string& w = v.word(id);
        if (w == "small") d.scale = ScaleClass::Small;
        else if (w == "medium") d.scale = ScaleClass::Medium;
        else if (w == "big") d.scale = ScaleClass::Big;
        else if (w == "left") d.pose = PoseClass::Left;
        else if (w == "front") d.pose = PoseClass::Front;
        else if (w == "right") d.pose = PoseClass::Right;
        else if (w == "glasses") d.extra = ExtraItem::Glasses;
        else if (w == "hat") d.extra = ExtraItem::Hat;
        else if (w == "ring") d.kind = AccessoryKind::Ring;
        else if (w == "drop") d.kind = AccessoryKind::Drop;
        else if (w == "stud") d.kind = AccessoryKind::Stud;
        else {
            for (int p = 0; p < ColorModel::kPalettes; ++p)
                if (w == palette_words[p]) d.palette_id = p;
        }
    }
    return d;
}

/*---------------------------------- dataset ----------------------------------*/

namespace {

std::string index_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", i);
    return std::string(buf);
}

json meta_to_json(const SampleMeta& m) {
    json j;
    j["seed"] = m.seed;
    j["keypoints"] = {{"top_x", m.kps.top_x},
                      {"top_y", m.kps.top_y},
                      {"chin_x", m.kps.chin_x},
                      {"chin_y", m.kps.chin_y}};
    j["yaw"] = m.yaw_deg;
    j["labels"] = {{"scale", scale_class_name(m.labels.scale)},
                   {"pose", pose_class_name(m.labels.pose)},
                   {"palette", m.labels.palette_id}};
    j["caption_ids"] = m.caption;
    j["accessory"] = {{"kind", accessory_kind_name(m.kind)}, {"color", m.accessory_color_id}};
    j["extra"] = extra_item_name(m.extra);
    j["face_height_ratio"] = m.face_height_ratio;
    return j;
}

ScaleClass scale_from_name(const std::string& s) {
    if (s == "small") return ScaleClass::Small;
    if (s == "medium") return ScaleClass::Medium;
    if (s == "big") return ScaleClass::Big;
    throw IoError("dataset: bad scale label " + s);
}

PoseClass pose_from_name(const std::string& s) {
    if (s == "left") return PoseClass::Left;
    if (s == "front") return PoseClass::Front;
    if (s == "right") return PoseClass::Right;
    throw IoError("dataset: bad pose label " + s);
}

AccessoryKind kind_from_name(const std::string& s) {
    if (s == "ring") return AccessoryKind::Ring;
    if (s == "drop") return AccessoryKind::Drop;
    if (s == "stud") return AccessoryKind::Stud;
    throw IoError("dataset: bad accessory kind " + s);
}

ExtraItem extra_from_name(const std::string& s) {
    if (s == "none") return ExtraItem::None;
    if (s == "glasses") return ExtraItem::Glasses;
    if (s == "hat") return ExtraItem::Hat;
    throw IoError("dataset: bad extra item " + s);
}

SampleMeta meta_from_json(const json& j) {
    SampleMeta m;
    m.seed = j.at("seed").get<uint64_t>();
    m.kps.top_x = j.at("keypoints").at("top_x").get<int>();
    m.kps.top_y = j.at("keypoints").at("top_y").get<int>();
    m.kps.chin_x = j.at("keypoints").at("chin_x").get<int>();
    m.kps.chin_y = j.at("keypoints").at("chin_y").get<int>();
    m.yaw_deg = j.at("yaw").get<double>();
    m.labels.scale = scale_from_name(j.at("labels").at("scale").get<std::string>());
    m.labels.pose = pose_from_name(j.at("labels").at("pose").get<std::string>());
    m.labels.palette_id = j.at("labels").at("palette").get<int>();
    m.caption = j.at("caption_ids").get<std::vector<int>>();
    m.kind = kind_from_name(j.at("accessory").at("kind").get<std::string>());
    m.accessory_color_id = j.at("accessory").at("color").get<int>();
    m.extra = extra_from_name(j.at("extra").get<std::string>());
    m.face_height_ratio = j.at("face_height_ratio").get<double>();
    return m;
}

}  // namespace

uint64_t generate_dataset(const std::string& root, int n, uint64_t seed, int canvas) {
    if (n < 1) throw ConfigError("generate_dataset: n must be >= 1");
    fs::create_directories(fs::path(root) / "images");
    fs::create_directories(fs::path(root) / "masks");
    fs::create_directories(fs::path(root) / "appearance");
    fs::create_directories(fs::path(root) / "meta");

    std::ofstream manifest(fs::path(root) / "manifest.jsonl");
    if (!manifest) throw IoError("generate_dataset: cannot write manifest");
    for (int i = 0; i < n; ++i) {
        const uint64_t s = seed + static_cast<uint64_t>(i);
        Scene scene = generate_scene(s, canvas);
        const std::string name = index_name(i);
        write_png((fs::path(root) / "images" / (name + ".png")).string(),
                  tensor_to_image(scene.image));
        write_png((fs::path(root) / "masks" / (name + ".png")).string(),
                  mask_to_image(scene.mask));
        write_png((fs::path(root) / "appearance" / (name + ".png")).string(),
                  tensor_to_image(scene.appearance));

        SampleMeta meta;
        meta.seed = s;
        meta.kps = scene.kps;
        meta.yaw_deg = scene.pose.yaw_deg;
        meta.labels = scene.labels;
        meta.caption = scene.caption;
        meta.kind = scene.spec.kind;
        meta.accessory_color_id = scene.spec.accessory_color_id;
        meta.extra = scene.spec.extra;
        meta.face_height_ratio = scene.face_height_ratio;
        {
            std::ofstream mf(fs::path(root) / "meta" / (name + ".json"));
            mf << meta_to_json(meta).dump(2) << "\n";
        }

        json line;
        line["index"] = i;
        line["seed"] = s;
        line["image"] = "images/" + name + ".png";
        line["mask"] = "masks/" + name + ".png";
        line["appearance"] = "appearance/" + name + ".png";
        line["meta"] = "meta/" + name + ".json";
        line["labels"] = {{"scale", scale_class_name(scene.labels.scale)},
                          {"pose", pose_class_name(scene.labels.pose)},
                          {"palette", scene.labels.palette_id}};
        manifest << line.dump() << "\n";
    }
    manifest.close();
    return file_checksum((fs::path(root) / "manifest.jsonl").string());
}

Dataset Dataset::load(const std::string& root) {
    std::ifstream manifest(fs::path(root) / "manifest.jsonl");
    if (!manifest) throw IoError("dataset: missing manifest under " + root);
    Dataset ds;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        SampleRecord rec;
        rec.image = read_png((fs::path(root) / j.at("image").get<std::string>()).string());
        rec.mask = read_png((fs::path(root) / j.at("mask").get<std::string>()).string());
        rec.appearance =
            read_png((fs::path(root) / j.at("appearance").get<std::string>()).string());
        std::ifstream mf(fs::path(root) / j.at("meta").get<std::string>());
        if (!mf) throw IoError("dataset: missing meta file");
        json mj;
        mf >> mj;
        rec.meta = meta_from_json(mj);
        ds.records_.push_back(std::move(rec));
    }
    if (ds.records_.empty()) throw IoError("dataset: empty manifest under " + root);
    return ds;
}

int Dataset::canvas() const {
    return records_.empty() ? 0 : records_[0].image.w;
}

}  // namespace adgen::synth
