#include "adgen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>

#include <json.hpp>

#include "adgen/conditioning.hpp"
#include "adgen/errors.hpp"
#include "adgen/image_io.hpp"
#include "adgen/parallel.hpp"
#include "adgen/rng.hpp"

namespace adgen::eval {

namespace fs = std::filesystem;
using nlohmann::json;
using synth::ColorModel;

double mask_iou(const Tensor& m1, const Tensor& m2) {
    if (!m1.same_shape(m2)) throw InputError("mask_iou: shape mismatch");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < m1.data.size(); ++i) {
        const bool a = m1.data[i] > 0.5, b = m2.data[i] > 0.5;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

constexpr double kAccessoryTolerance = 60.0;  // byte-space L2
constexpr double kPoseFrontThreshold = 0.37;  // |nose offset| / face half width

double byte_of(double unit) { return (std::min(1.0, std::max(-1.0, unit)) + 1.0) * 127.5; }

double color_dist(double r, double g, double b, const synth::Color& c) {
    const double dr = r - c.r, dg = g - c.g, db = b - c.b;
    return std::sqrt(dr * dr + dg * dg + db * db);
}

// All color classes of the synthetic domain, in a fixed order.
struct ColorClasses {
    std::vector<synth::Color> centers;
    int first_palette = 0, n_palettes = 0;
    int background = 0;
    int first_accessory = 0, n_accessory = 0;
    int eye = 0, nose = 0, glasses = 0, hat = 0;

    static const ColorClasses& get() {
        static const ColorClasses cc = [] {
            const ColorModel& cm = ColorModel::get();
            ColorClasses c;
            c.first_palette = 0;
            c.n_palettes = ColorModel::kPalettes;
            for (int i = 0; i < ColorModel::kPalettes; ++i) c.centers.push_back(cm.palettes[i]);
            c.background = static_cast<int>(c.centers.size());
            c.centers.push_back(cm.background);
            c.first_accessory = static_cast<int>(c.centers.size());
            c.n_accessory = ColorModel::kAccessoryColors;
            for (int i = 0; i < ColorModel::kAccessoryColors; ++i)
                c.centers.push_back(cm.accessory[i]);
            c.eye = static_cast<int>(c.centers.size());
            c.centers.push_back(cm.eye);
            c.nose = static_cast<int>(c.centers.size());
            c.centers.push_back(cm.nose);
            c.glasses = static_cast<int>(c.centers.size());
            c.centers.push_back(cm.glasses);
            c.hat = static_cast<int>(c.centers.size());
            c.centers.push_back(cm.hat);
            return c;
        }();
        return cc;
    }

    int nearest(double r, double g, double b) const {
        int best = 0;
        double bd = 1e300;
        for (size_t i = 0; i < centers.size(); ++i) {
            const double d = color_dist(r, g, b, centers[i]);
            if (d < bd) {
                bd = d;
                best = static_cast<int>(i);
            }
        }
        return best;
    }

    bool is_palette(int cls) const { return cls >= first_palette && cls < first_palette + n_palettes; }
};

}  // namespace

Tensor detect_accessory_mask(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw InputError("detect_accessory_mask: 3-channel image required");
    const ColorModel& cm = ColorModel::get();
    const int h = image.dim(1), w = image.dim(2);
    Tensor mask = Tensor::zeros({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double r = byte_of(image.at(0, y, x));
            const double g = byte_of(image.at(1, y, x));
            const double b = byte_of(image.at(2, y, x));
            for (int i = 0; i < ColorModel::kAccessoryColors; ++i)
                if (color_dist(r, g, b, cm.accessory[i]) <= kAccessoryTolerance) {
                    mask.at(y, x) = 1.0;
                    break;
                }
        }
    return mask;
}

Classification classify_generated(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw InputError("classify_generated: 3-channel image required");
    const ColorClasses& cc = ColorClasses::get();
    const int h = image.dim(1), w = image.dim(2);

    // per-pixel nearest color class
    std::vector<int> cls(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            cls[static_cast<size_t>(y) * w + x] =
                cc.nearest(byte_of(image.at(0, y, x)), byte_of(image.at(1, y, x)),
                           byte_of(image.at(2, y, x)));

    Classification out;

    // face rows: at least two palette pixels
    std::vector<int> row_count(static_cast<size_t>(h), 0);
    std::vector<int> row_min(static_cast<size_t>(h), w), row_max(static_cast<size_t>(h), -1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (cc.is_palette(cls[static_cast<size_t>(y) * w + x])) {
                row_count[static_cast<size_t>(y)]++;
                row_min[static_cast<size_t>(y)] = std::min(row_min[static_cast<size_t>(y)], x);
                row_max[static_cast<size_t>(y)] = std::max(row_max[static_cast<size_t>(y)], x);
            }
    int top = -1, bottom = -1;
    for (int y = 0; y < h; ++y)
        if (row_count[static_cast<size_t>(y)] >= 2) {
            if (top < 0) top = y;
            bottom = y;
        }
    if (top < 0) return out;  // unclassifiable
    out.face_found = true;

    const double ratio = static_cast<double>(bottom - top + 1) / h;
    out.scale = synth::scale_class_of(std::min(1.0, ratio));

    // face center and half width from the widest rows
    int max_width = 0;
    for (int y = top; y <= bottom; ++y)
        if (row_count[static_cast<size_t>(y)] >= 2)
            max_width = std::max(max_width, row_max[static_cast<size_t>(y)] -
                                               row_min[static_cast<size_t>(y)] + 1);
    double cx_sum = 0.0;
    int cx_n = 0;
    for (int y = top; y <= bottom; ++y)
        if (row_count[static_cast<size_t>(y)] >= 2 &&
            row_max[static_cast<size_t>(y)] - row_min[static_cast<size_t>(y)] + 1 == max_width) {
            cx_sum += 0.5 * (row_min[static_cast<size_t>(y)] + row_max[static_cast<size_t>(y)]);
            cx_n++;
        }
    const double face_cx = cx_sum / cx_n;
    const double half_width = 0.5 * max_width;

    // nose marker inside the band
    double nx_sum = 0.0;
    int nose_n = 0;
    for (int y = top; y <= bottom; ++y)
        for (int x = 0; x < w; ++x)
            if (cls[static_cast<size_t>(y) * w + x] == cc.nose) {
                nx_sum += x;
                nose_n++;
            }
    if (nose_n > 0 && half_width > 0.0) {
        const double offset = (nx_sum / nose_n - face_cx) / half_width;
        if (offset >= kPoseFrontThreshold) out.pose = PoseClass::Right;
        else if (offset <= -kPoseFrontThreshold) out.pose = PoseClass::Left;
        else out.pose = PoseClass::Front;
    }

    // palette: nearest center to the face-region mean color
    double mr = 0, mg = 0, mb = 0;
    int fn = 0;
    for (int y = top; y <= bottom; ++y)
        for (int x = 0; x < w; ++x)
            if (cc.is_palette(cls[static_cast<size_t>(y) * w + x])) {
                mr += byte_of(image.at(0, y, x));
                mg += byte_of(image.at(1, y, x));
                mb += byte_of(image.at(2, y, x));
                fn++;
            }
    if (fn > 0) {
        mr /= fn;
        mg /= fn;
        mb /= fn;
        const ColorModel& cm = ColorModel::get();
        int best = 0;
        double bd = 1e300;
        for (int i = 0; i < ColorModel::kPalettes; ++i) {
            const double d = color_dist(mr, mg, mb, cm.palettes[i]);
            if (d < bd) {
                bd = d;
                best = i;
            }
        }
        out.palette_id = best;
    }
    return out;
}

/*---------------------------------- probing ----------------------------------*/

ProbeReport branch_std_probe(const Denoiser& model, const std::vector<train::TrainItem>& items,
                             int t, const NoiseSchedule& sched, const TDWConfig& tdw,
                             uint64_t seed, bool appearance_enabled) {
    if (items.empty()) throw InputError("branch_std_probe: no samples");
    ProbeReport rep;
    rep.t = t;
    rep.n_samples = static_cast<int>(items.size());
    std::map<std::string, LayerStdSummary> acc;
    std::map<std::string, int> counts;
    const int vis = model.config().vis_input_size;
    for (const train::TrainItem& item : items) {
        Rng rng(mix_seed(seed, 0x70726f62ULL, item.identity));
        Tensor eps = rng.normal_tensor(item.x0.shape);
        Tensor x_t = forward_diffuse(item.x0, eps, t, sched);
        ConditionBundle b;
        b.cond_image = item.cond_image;
        b.caption_tokens = item.caption;
        b.pose_image = item.pose_image;
        b.appearance_enabled = appearance_enabled;
        if (appearance_enabled) {
            b.appearance_image = resize_bilinear(item.appearance_ref, vis, vis);
            b.alpha = tdw_alpha(t, tdw);
        }
        DenoiseProbe probe;
        (void)model.denoise(x_t, t, b, &probe);
        for (const attn::LayerProbe& lp : probe) {
            LayerStdSummary& s = acc[lp.layer];
            s.layer = lp.layer;
            s.std_text += lp.std_text;
            s.std_pose += lp.std_pose;
            s.std_appearance_raw += lp.std_appearance_raw;
            s.std_appearance_post += lp.std_appearance_post;
            if (lp.std_text > 0.0) {
                s.ratio_raw += lp.std_appearance_raw / lp.std_text;
                s.ratio_post += lp.std_appearance_post / lp.std_text;
            }
            counts[lp.layer]++;
        }
    }
    for (auto& [name, s] : acc) {
        const double n = counts[name];
        s.std_text /= n;
        s.std_pose /= n;
        s.std_appearance_raw /= n;
        s.std_appearance_post /= n;
        s.ratio_raw /= n;
        s.ratio_post /= n;
        rep.layers.push_back(s);
    }
    return rep;
}

/*--------------------------------- evaluation --------------------------------*/

namespace {

struct SampleScore {
    double iou = 0.0;
    bool id_exact = false;
    bool scale_ok = false, pose_ok = false, palette_ok = false;
};

}  // namespace

EvalReport evaluate(const Denoiser& model, const synth::Dataset& eval_set,
                    const NoiseSchedule& sched, const TDWConfig& tdw, const EvalOptions& opt) {
    const int n = static_cast<int>(eval_set.size());
    if (n == 0) throw InputError("evaluate: empty eval set");
    const int vis = model.config().vis_input_size;

    if (!opt.out_dir.empty()) {
        fs::create_directories(fs::path(opt.out_dir) / "generated");
        fs::create_directories(fs::path(opt.out_dir) / "composited");
    }

    std::vector<SampleScore> scores(static_cast<size_t>(n));
    std::vector<json> rows(static_cast<size_t>(n));
    std::vector<std::string> errors(static_cast<size_t>(std::max(1, opt.threads)));

    parallel_for(n, opt.threads, [&](int i, int thread_id) {
        try {
            const synth::SampleRecord& rec = eval_set.at(static_cast<size_t>(i));
            train::TrainItem item = train::make_train_item(rec, vis);
            const Tensor appearance = resize_bilinear(item.appearance_ref, vis, vis);

            ConditionBundle base;
            base.cond_image = item.cond_image;
            base.caption_tokens = item.caption;
            base.pose_image = item.pose_image;
            base.appearance_image = appearance;
            base.appearance_enabled = true;

            DenoiseFn fn = [&](const Tensor& x, int t, double alpha, bool with_caption) {
                ConditionBundle b = base;
                b.alpha = alpha;
                if (!with_caption) b.caption_tokens = model.empty_caption();
                return model.denoise(x, t, b);
            };
            SamplerConfig sc = opt.sampler;
            sc.seed = mix_seed(opt.sampler.seed, 0x6576616cULL, static_cast<uint64_t>(i));
            Tensor gen = ddim_sample(fn, item.x0.shape, sc, sched, tdw);

            Tensor mask = mask_to_tensor(rec.mask);
            AccessoryCondition acc = accessory_from_scene(item.x0, mask);
            Tensor detected = detect_accessory_mask(gen);
            SampleScore& s = scores[static_cast<size_t>(i)];
            s.iou = mask_iou(detected, mask);

            Tensor composited = composite(acc, gen);
            bool exact = true;
            const int h = mask.dim(0), w = mask.dim(1);
            for (int y = 0; y < h && exact; ++y)
                for (int x = 0; x < w && exact; ++x)
                    if (mask.at(y, x) == 1.0)
                        for (int c = 0; c < 3; ++c)
                            if (composited.at(c, y, x) != acc.rgb.at(c, y, x)) exact = false;
            s.id_exact = exact;

            Classification cl = classify_generated(gen);
            s.scale_ok = cl.scale && *cl.scale == rec.meta.labels.scale;
            s.pose_ok = cl.pose && *cl.pose == rec.meta.labels.pose;
            s.palette_ok = cl.palette_id && *cl.palette_id == rec.meta.labels.palette_id;

            json row;
            row["index"] = i;
            row["iou"] = s.iou;
            row["id_exact"] = s.id_exact;
            row["scale_ok"] = s.scale_ok;
            row["pose_ok"] = s.pose_ok;
            row["palette_ok"] = s.palette_ok;
            row["labels"] = {{"scale", synth::scale_class_name(rec.meta.labels.scale)},
                             {"pose", pose_class_name(rec.meta.labels.pose)},
                             {"palette", rec.meta.labels.palette_id}};
            row["detected"] = {
                {"scale", cl.scale ? synth::scale_class_name(*cl.scale) : "unclassifiable"},
                {"pose", cl.pose ? pose_class_name(*cl.pose) : "unclassifiable"},
                {"palette", cl.palette_id ? *cl.palette_id : -1}};
            rows[static_cast<size_t>(i)] = std::move(row);

            if (!opt.out_dir.empty()) {
                char name[32];
                std::snprintf(name, sizeof(name), "%06d.png", i);
                write_png((fs::path(opt.out_dir) / "generated" / name).string(),
                          tensor_to_image(gen));
                write_png((fs::path(opt.out_dir) / "composited" / name).string(),
                          tensor_to_image(composited));
            }
        } catch (const std::exception& e) {
            if (errors[static_cast<size_t>(thread_id)].empty())
                errors[static_cast<size_t>(thread_id)] = e.what();
        }
    });
    for (const std::string& err : errors)
        if (!err.empty()) throw InputError("evaluate: " + err);

    EvalReport rep;
    rep.n_samples = n;
    for (const SampleScore& s : scores) {
        rep.mask_iou_mean += s.iou;
        rep.composite_id_exactness += s.id_exact ? 1.0 : 0.0;
        rep.scale_alignment_rate += s.scale_ok ? 1.0 : 0.0;
        rep.pose_alignment_rate += s.pose_ok ? 1.0 : 0.0;
        rep.appearance_alignment_rate += s.palette_ok ? 1.0 : 0.0;
    }
    rep.mask_iou_mean /= n;
    rep.composite_id_exactness /= n;
    rep.scale_alignment_rate /= n;
    rep.pose_alignment_rate /= n;
    rep.appearance_alignment_rate /= n;

    if (!opt.out_dir.empty()) {
        std::ofstream rows_file(fs::path(opt.out_dir) / "per_sample.jsonl");
        for (const json& row : rows) rows_file << row.dump() << "\n";
    }

    if (opt.probe_samples > 0) {
        std::vector<train::TrainItem> probe_items;
        for (int i = 0; i < std::min(n, opt.probe_samples); ++i)
            probe_items.push_back(train::make_train_item(eval_set.at(static_cast<size_t>(i)), vis));
        ProbeReport probe = branch_std_probe(model, probe_items, opt.probe_t, sched, tdw,
                                             opt.sampler.seed);
        rep.branch_stds = probe.layers;
    }
    return rep;
}

std::string report_to_json(const EvalReport& r) {
    json j;
    j["n_samples"] = r.n_samples;
    j["mask_iou_mean"] = r.mask_iou_mean;
    j["scale_alignment_rate"] = r.scale_alignment_rate;
    j["pose_alignment_rate"] = r.pose_alignment_rate;
    j["appearance_alignment_rate"] = r.appearance_alignment_rate;
    j["composite_id_exactness"] = r.composite_id_exactness;
    json layers = json::array();
    for (const LayerStdSummary& s : r.branch_stds) {
        layers.push_back({{"layer", s.layer},
                          {"std_text", s.std_text},
                          {"std_pose", s.std_pose},
                          {"std_appearance_raw", s.std_appearance_raw},
                          {"std_appearance_post", s.std_appearance_post},
                          {"ratio_raw", s.ratio_raw},
                          {"ratio_post", s.ratio_post}});
    }
    j["branch_stds"] = layers;
    return j.dump(2);
}

}  // namespace adgen::eval
