#include "selfc/config.hpp"

#include "selfc/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace selfc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::pair<std::string, std::string> split_assignment(const std::string& line, const std::string& where) {
    const auto eq = line.find('=');
    if (eq == std::string::npos)
        throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    auto key = trim(line.substr(0, eq));
    if (key.empty())
        throw ConfigError(where + ": empty key");
    return {key, trim(line.substr(eq + 1))};
}

} // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty() || t[0] == '#')
            continue;
        auto [k, v] = split_assignment(t, origin + ":" + std::to_string(lineno));
        cfg.values_[k] = v;
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void KeyValueConfig::set_override(const std::string& assignment) {
    auto [k, v] = split_assignment(assignment, "--override");
    values_[k] = v;
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
        return std::nullopt;
    return it->second;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const char* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end)
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(parse_number<int>(key, trim(item)));
    if (out.empty())
        throw ConfigError("config key '" + key + "': empty list");
    return out;
}

std::string fmt_double(double d) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", d);
    return buf;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::string fmt_list(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

struct Field {
    const char* key;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

#define SELFC_INT(name, member)                                                                       \
    Field {                                                                                           \
        name, [](TrainConfig& c, const std::string& v) { c.member = parse_number<decltype(c.member)>(name, v); }, \
            [](const TrainConfig& c) { return std::to_string(c.member); }                             \
    }
#define SELFC_DOUBLE(name, member)                                                                    \
    Field {                                                                                           \
        name, [](TrainConfig& c, const std::string& v) { c.member = parse_number<double>(name, v); }, \
            [](const TrainConfig& c) { return fmt_double(c.member); }                                 \
    }
#define SELFC_BOOL(name, member)                                                                      \
    Field {                                                                                           \
        name, [](TrainConfig& c, const std::string& v) { c.member = parse_bool(name, v); },           \
            [](const TrainConfig& c) { return fmt_bool(c.member); }                                   \
    }
#define SELFC_STRING(name, member)                                                                    \
    Field {                                                                                           \
        name, [](TrainConfig& c, const std::string& v) { c.member = v; },                             \
            [](const TrainConfig& c) { return c.member; }                                             \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> kFields{
        Field{"task", [](TrainConfig& c, const std::string& v) {
                  if (v == "rescale") c.task = Task::Rescale;
                  else if (v == "compress") c.task = Task::Compress;
                  else throw ConfigError("config key 'task': expected rescale or compress, got '" + v + "'");
              },
              [](const TrainConfig& c) { return std::string(c.task == Task::Compress ? "compress" : "rescale"); }},
        SELFC_INT("k", k),
        Field{"transform", [](TrainConfig& c, const std::string& v) {
                  if (v == "invertible") c.transform = TransformKind::Invertible;
                  else if (v == "plain") c.transform = TransformKind::Plain;
                  else throw ConfigError("config key 'transform': expected invertible or plain, got '" + v + "'");
              },
              [](const TrainConfig& c) {
                  return std::string(c.transform == TransformKind::Plain ? "plain" : "invertible");
              }},
        SELFC_INT("blocks", blocks),
        SELFC_INT("growth", growth),
        SELFC_BOOL("temporal", temporal),
        SELFC_DOUBLE("coupling_clamp", coupling_clamp),
        SELFC_INT("components", components),
        SELFC_INT("stp_width", stp_width),
        SELFC_INT("stp_stages", stp_stages),
        SELFC_INT("stp_pool", stp_pool),
        SELFC_INT("stp_descriptor", stp_descriptor),
        SELFC_INT("stp_hidden", stp_hidden),
        SELFC_BOOL("stp_attention", stp_attention),
        SELFC_INT("batch_size", batch_size),
        SELFC_DOUBLE("lr", lr),
        SELFC_INT("total_iters", total_iters),
        SELFC_INT("lr_halving_period", lr_halving_period),
        SELFC_DOUBLE("adam_beta1", adam_beta1),
        SELFC_DOUBLE("adam_beta2", adam_beta2),
        SELFC_INT("seed", seed),
        SELFC_INT("clip_length", clip_length),
        SELFC_INT("patch", patch),
        SELFC_BOOL("augment", augment),
        SELFC_DOUBLE("lambda_c", weights.conditional),
        SELFC_DOUBLE("lambda_mimic", weights.mimic),
        SELFC_DOUBLE("lambda_pen", weights.penalize),
        SELFC_DOUBLE("lambda_recons", weights.recons),
        SELFC_DOUBLE("lambda_rho", weights.rho),
        SELFC_DOUBLE("lambda_codec", weights.codec),
        SELFC_DOUBLE("lambda_c_decay_fraction", conditional_decay_fraction),
        Field{"codec", [](TrainConfig& c, const std::string& v) { c.codec.codec = parse_codec_kind(v); },
              [](const TrainConfig& c) { return to_string(c.codec.codec); }},
        Field{"codec_mode", [](TrainConfig& c, const std::string& v) { c.codec.mode = parse_codec_mode(v); },
              [](const TrainConfig& c) { return to_string(c.codec.mode); }},
        Field{"rate_control", [](TrainConfig& c, const std::string& v) { c.codec.rate_control = parse_rate_control(v); },
              [](const TrainConfig& c) {
                  return std::string(c.codec.rate_control == RateControl::Crf ? "crf" : "qp");
              }},
        SELFC_INT("codec_quality", codec.quality),
        SELFC_BOOL("codec_lossless", codec.lossless),
        Field{"train_qualities", [](TrainConfig& c, const std::string& v) { c.train_qualities = parse_int_list("train_qualities", v); },
              [](const TrainConfig& c) { return fmt_list(c.train_qualities); }},
        SELFC_INT("surrogate_blocks", surrogate_blocks),
        SELFC_STRING("corpus", corpus),
        SELFC_STRING("train_split", train_split),
        SELFC_STRING("eval_split", eval_split),
        SELFC_INT("eval_draws", eval_draws),
        Field{"hf_mode", [](TrainConfig& c, const std::string& v) {
                  if (v == "sample") c.hf_mode = HfMode::Sample;
                  else if (v == "mean") c.hf_mode = HfMode::Mean;
                  else if (v == "zero") c.hf_mode = HfMode::Zero;
                  else throw ConfigError("config key 'hf_mode': expected sample, mean or zero, got '" + v + "'");
              },
              [](const TrainConfig& c) {
                  return std::string(c.hf_mode == HfMode::Mean ? "mean" : c.hf_mode == HfMode::Zero ? "zero" : "sample");
              }},
        Field{"eval_qualities", [](TrainConfig& c, const std::string& v) { c.eval_qualities = parse_int_list("eval_qualities", v); },
              [](const TrainConfig& c) { return fmt_list(c.eval_qualities); }},
        SELFC_STRING("checkpoint", checkpoint),
        SELFC_INT("threads", threads),
        SELFC_BOOL("double_precision", double_precision),
        SELFC_INT("checkpoint_every", checkpoint_every),
    };
    return kFields;
}

#undef SELFC_INT
#undef SELFC_DOUBLE
#undef SELFC_BOOL
#undef SELFC_STRING

} // namespace

TrainConfig TrainConfig::from(const KeyValueConfig& kv) {
    TrainConfig cfg;
    if (auto task = kv.get("task"))
        fields().front().set(cfg, *task);
    if (cfg.task == Task::Compress) {
        cfg.k = 2;
        cfg.blocks = 4;
        cfg.clip_length = 3;
        cfg.weights = LossWeights::compression(2);
    }
    std::map<std::string, const Field*> by_key;
    for (const auto& f : fields())
        by_key[f.key] = &f;
    for (const auto& [key, value] : kv.values()) {
        auto it = by_key.find(key);
        if (it == by_key.end())
            throw ConfigError("unknown config key '" + key + "'");
        it->second->set(cfg, value);
    }
    cfg.weights.k = cfg.k;
    cfg.validate();
    return cfg;
}

std::string TrainConfig::to_text() const {
    std::string out;
    for (const auto& f : fields())
        out += std::string(f.key) + " = " + f.get(*this) + "\n";
    return out;
}

void TrainConfig::validate() const {
    auto positive = [](bool ok, const char* what) {
        if (!ok)
            throw ConfigError(std::string("config: ") + what);
    };
    positive(k == 2 || k == 4, "k must be 2 or 4");
    positive(blocks >= 1, "blocks must be >= 1");
    positive(coupling_clamp >= 0.0, "coupling_clamp must be non-negative");
    positive(growth >= 1 && components >= 1 && stp_width >= 1 && stp_stages >= 0, "network widths must be positive");
    positive(stp_pool >= 1 && stp_descriptor >= 1 && stp_hidden >= 1, "prior widths must be positive");
    positive(batch_size >= 1, "batch_size must be >= 1");
    positive(lr > 0.0, "lr must be positive");
    positive(total_iters >= 1, "total_iters must be >= 1");
    positive(clip_length >= 1, "clip_length must be >= 1");
    positive(patch >= 1 && patch % k == 0, "patch must be a positive multiple of k");
    positive(eval_draws >= 1, "eval_draws must be >= 1");
    positive(threads >= 1, "threads must be >= 1");
    positive(weights.conditional >= 0 && weights.mimic >= 0 && weights.penalize >= 0 && weights.recons >= 0 &&
                 weights.rho >= 0 && weights.codec >= 0,
             "loss weights must be non-negative");
    positive(conditional_decay_fraction >= 0.0 && conditional_decay_fraction <= 1.0,
             "lambda_c_decay_fraction must lie in [0, 1]");
    if (task == Task::Compress) {
        positive(batch_size >= 2, "compression training needs batch_size >= 2 for the correlation term");
        positive(!train_qualities.empty(), "train_qualities must not be empty");
    }
    codec.validate();
    for (int q : train_qualities)
        positive(q >= 0 && q <= 51, "train_qualities must lie in [0, 51]");
    for (int q : eval_qualities)
        positive(q >= 0 && q <= 51, "eval_qualities must lie in [0, 51]");
}

} // namespace selfc
