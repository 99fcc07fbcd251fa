#include "adgen/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "adgen/errors.hpp"
#include "adgen/synthdata.hpp"

namespace adgen {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (...) {
        throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    }
}

uint64_t to_u64(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (...) {
        throw ConfigError("config: bad unsigned integer for " + key + ": '" + v + "'");
    }
}

double to_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (...) {
        throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<int> to_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    std::string cur;
    for (char c : v + ",") {
        if (c == ',') {
            const std::string t = trim(cur);
            if (!t.empty()) out.push_back(to_int(t, key));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

std::string from_int_list(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

template <class T>
void read_if(const ConfigMap& m, const std::string& sec, const std::string& key, T& out);

template <>
void read_if<int>(const ConfigMap& m, const std::string& sec, const std::string& key, int& out) {
    auto s = m.find(sec);
    if (s == m.end()) return;
    auto k = s->second.find(key);
    if (k != s->second.end()) out = to_int(k->second, sec + "." + key);
}

template <>
void read_if<uint64_t>(const ConfigMap& m, const std::string& sec, const std::string& key,
                       uint64_t& out) {
    auto s = m.find(sec);
    if (s == m.end()) return;
    auto k = s->second.find(key);
    if (k != s->second.end()) out = to_u64(k->second, sec + "." + key);
}

template <>
void read_if<double>(const ConfigMap& m, const std::string& sec, const std::string& key,
                     double& out) {
    auto s = m.find(sec);
    if (s == m.end()) return;
    auto k = s->second.find(key);
    if (k != s->second.end()) out = to_double(k->second, sec + "." + key);
}

template <>
void read_if<bool>(const ConfigMap& m, const std::string& sec, const std::string& key, bool& out) {
    auto s = m.find(sec);
    if (s == m.end()) return;
    auto k = s->second.find(key);
    if (k != s->second.end()) out = to_bool(k->second, sec + "." + key);
}

template <>
void read_if<std::vector<int>>(const ConfigMap& m, const std::string& sec, const std::string& key,
                               std::vector<int>& out) {
    auto s = m.find(sec);
    if (s == m.end()) return;
    auto k = s->second.find(key);
    if (k != s->second.end()) out = to_int_list(k->second, sec + "." + key);
}

}  // namespace

ConfigMap parse_ini(const std::string& text) {
    ConfigMap m;
    std::string section;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        lineno++;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("config: bad section header at line " + std::to_string(lineno));
            section = trim(t.substr(1, t.size() - 2));
            m[section];
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected key=value at line " + std::to_string(lineno));
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError("config: empty key at line " + std::to_string(lineno));
        m[section][key] = val;
    }
    return m;
}

std::string serialize_ini(const ConfigMap& m) {
    std::string out;
    for (const auto& [sec, kv] : m) {
        out += "[" + sec + "]\n";
        for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
        out += "\n";
    }
    return out;
}

RunConfig config_from_map(const ConfigMap& m) {
    RunConfig c;
    read_if(m, "denoiser", "image_size", c.denoiser.image_size);
    read_if(m, "denoiser", "channels", c.denoiser.channels);
    read_if(m, "denoiser", "attn_resolutions", c.denoiser.attn_resolutions);
    read_if(m, "denoiser", "groups", c.denoiser.groups);
    read_if(m, "denoiser", "d_ctx", c.denoiser.d_ctx);
    read_if(m, "denoiser", "temb_dim", c.denoiser.temb_dim);
    read_if(m, "denoiser", "vocab_size", c.denoiser.vocab_size);
    read_if(m, "denoiser", "caption_len", c.denoiser.caption_len);
    read_if(m, "denoiser", "patch_grid", c.denoiser.patch_grid);
    read_if(m, "denoiser", "d_enc", c.denoiser.d_enc);
    read_if(m, "denoiser", "vis_input_size", c.denoiser.vis_input_size);
    read_if(m, "denoiser", "vis_channels", c.denoiser.vis_channels);
    read_if(m, "denoiser", "enc_kernel", c.denoiser.enc_kernel);
    read_if(m, "denoiser", "heads", c.denoiser.heads);
    read_if(m, "denoiser", "separate_visual_encoders", c.denoiser.separate_visual_encoders);
    read_if(m, "denoiser", "control_middle_multibranch", c.denoiser.control_middle_multibranch);
    read_if(m, "denoiser", "std_norm", c.denoiser.std_norm_enabled);
    read_if(m, "denoiser", "std_norm_detach", c.denoiser.std_norm_detach);
    read_if(m, "denoiser", "std_norm_floor", c.denoiser.std_norm_floor);

    read_if(m, "train", "epochs", c.train.epochs);
    read_if(m, "train", "batch_size", c.train.batch_size);
    read_if(m, "train", "lr", c.train.lr);
    read_if(m, "train", "appearance_dropout_p", c.train.appearance_dropout_p);
    read_if(m, "train", "caption_dropout_p", c.train.caption_dropout_p);
    read_if(m, "train", "seed", c.train.seed);
    read_if(m, "train", "checkpoint_every_epochs", c.train.checkpoint_every_epochs);
    read_if(m, "train", "threads", c.train.threads);
    read_if(m, "train", "freeze_base_after_epoch", c.train.freeze_base_after_epoch);
    read_if(m, "train", "tdw", c.train.tdw_enabled);
    read_if(m, "train", "ema", c.train.ema_enabled);

    read_if(m, "schedule", "num_steps", c.schedule.num_steps);
    read_if(m, "schedule", "beta_start", c.schedule.beta_start);
    read_if(m, "schedule", "beta_end", c.schedule.beta_end);

    read_if(m, "tdw", "gamma", c.tdw.gamma);

    read_if(m, "sampler", "steps", c.sampler.num_inference_steps);
    read_if(m, "sampler", "cfg_scale", c.sampler.cfg_scale);
    read_if(m, "sampler", "seed", c.sampler.seed);
    return c;
}

ConfigMap config_to_map(const RunConfig& c) {
    ConfigMap m;
    auto& d = m["denoiser"];
    d["image_size"] = std::to_string(c.denoiser.image_size);
    d["channels"] = from_int_list(c.denoiser.channels);
    d["attn_resolutions"] = from_int_list(c.denoiser.attn_resolutions);
    d["groups"] = std::to_string(c.denoiser.groups);
    d["d_ctx"] = std::to_string(c.denoiser.d_ctx);
    d["temb_dim"] = std::to_string(c.denoiser.temb_dim);
    d["vocab_size"] = std::to_string(c.denoiser.vocab_size);
    d["caption_len"] = std::to_string(c.denoiser.caption_len);
    d["patch_grid"] = std::to_string(c.denoiser.patch_grid);
    d["d_enc"] = std::to_string(c.denoiser.d_enc);
    d["vis_input_size"] = std::to_string(c.denoiser.vis_input_size);
    d["vis_channels"] = std::to_string(c.denoiser.vis_channels);
    d["enc_kernel"] = std::to_string(c.denoiser.enc_kernel);
    d["heads"] = std::to_string(c.denoiser.heads);
    d["separate_visual_encoders"] = c.denoiser.separate_visual_encoders ? "true" : "false";
    d["control_middle_multibranch"] = c.denoiser.control_middle_multibranch ? "true" : "false";
    d["std_norm"] = c.denoiser.std_norm_enabled ? "true" : "false";
    d["std_norm_detach"] = c.denoiser.std_norm_detach ? "true" : "false";
    d["std_norm_floor"] = fmt_double(c.denoiser.std_norm_floor);

    auto& t = m["train"];
    t["epochs"] = std::to_string(c.train.epochs);
    t["batch_size"] = std::to_string(c.train.batch_size);
    t["lr"] = fmt_double(c.train.lr);
    t["appearance_dropout_p"] = fmt_double(c.train.appearance_dropout_p);
    t["caption_dropout_p"] = fmt_double(c.train.caption_dropout_p);
    t["seed"] = std::to_string(c.train.seed);
    t["checkpoint_every_epochs"] = std::to_string(c.train.checkpoint_every_epochs);
    t["threads"] = std::to_string(c.train.threads);
    t["freeze_base_after_epoch"] = std::to_string(c.train.freeze_base_after_epoch);
    t["tdw"] = c.train.tdw_enabled ? "true" : "false";
    t["ema"] = c.train.ema_enabled ? "true" : "false";

    auto& s = m["schedule"];
    s["num_steps"] = std::to_string(c.schedule.num_steps);
    s["beta_start"] = fmt_double(c.schedule.beta_start);
    s["beta_end"] = fmt_double(c.schedule.beta_end);

    m["tdw"]["gamma"] = std::to_string(c.tdw.gamma);

    auto& sa = m["sampler"];
    sa["steps"] = std::to_string(c.sampler.num_inference_steps);
    sa["cfg_scale"] = fmt_double(c.sampler.cfg_scale);
    sa["seed"] = std::to_string(c.sampler.seed);
    return m;
}

RunConfig parse_config(const std::string& text) { return config_from_map(parse_ini(text)); }

RunConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("config: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) { return serialize_ini(config_to_map(cfg)); }

void RunConfig::validate() const {
    denoiser.validate();
    train.validate();
    if (schedule.num_steps < 2) throw ConfigError("config: schedule.num_steps must be >= 2");
    validate_tdw(tdw, schedule.num_steps);
    if (sampler.num_inference_steps < 1 ||
        sampler.num_inference_steps > schedule.num_steps)
        throw ConfigError("config: sampler steps must lie in [1, schedule.num_steps]");
    if (sampler.cfg_scale < 0.0) throw ConfigError("config: cfg_scale must be nonnegative");
    if (denoiser.vocab_size < synth::Vocab::get().size())
        throw ConfigError("config: vocab_size smaller than the caption vocabulary");
}

}  // namespace adgen
