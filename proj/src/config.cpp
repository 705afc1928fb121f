#include "cprl/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>

using nlohmann::json;

namespace cprl {

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: key '") + key + "' has the wrong type");
    }
}

const char* const kKeys[] = {
    "model",         "channels",    "b",
    "tau",           "style_complement", "epochs",
    "batch_size",    "lr",          "beta1",
    "beta2",         "adam_eps",    "weight_decay",
    "grad_clip",     "pns",         "full_objective",
    "attack",        "epsilon",     "pgd_steps",
    "pgd_alpha",     "epsilon_grid", "scenes",
    "levels",        "image_side",  "dataset_dir",
    "seed",          "out",         "checkpoint",
    "landscape_resolution", "landscape_extent_px", "landscape_images",
};

}  // namespace

void RunConfig::finalize() {
    if (model != "baseline" && model != "cprl")
        throw ConfigError("config: model must be baseline or cprl, got '" + model + "'");
    if (attack != "fgsm" && attack != "pgd" && attack != "reflect")
        throw ConfigError("config: attack must be fgsm, pgd or reflect, got '" + attack + "'");
    if (channels < 2) throw ConfigError("config: channels must be >= 2");
    if (!(tau > 0.0)) throw ConfigError("config: tau must be > 0");
    if (b < 0.0 || b > 1.0) throw ConfigError("config: b must lie in [0, 1]");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("config: lr must be > 0");
    if (epsilon < 0.0 || epsilon > 1.0) throw ConfigError("config: epsilon must lie in [0, 1]");
    if (pgd_steps < 1) throw ConfigError("config: pgd_steps must be >= 1");
    if (epsilon_grid.empty()) throw ConfigError("config: epsilon_grid must not be empty");
    if (!std::is_sorted(epsilon_grid.begin(), epsilon_grid.end()))
        throw ConfigError("config: epsilon_grid must be ascending");
    for (double e : epsilon_grid)
        if (e < 0.0 || e > 1.0)
            throw ConfigError("config: epsilon_grid entries must lie in [0, 1]");
    if (scenes < 5) throw ConfigError("config: scenes must be >= 5");
    if (levels < 3) throw ConfigError("config: levels must be >= 3");
    if (image_side < 8 || image_side % 4 != 0)
        throw ConfigError("config: image_side must be a multiple of 4, >= 8");
    if (landscape_resolution < 2) throw ConfigError("config: landscape_resolution must be >= 2");
    if (landscape_extent_px < 0.0) throw ConfigError("config: landscape_extent_px must be >= 0");
    if (landscape_images < 1) throw ConfigError("config: landscape_images must be >= 1");
    if (pgd_alpha < 0.0) throw ConfigError("config: pgd_alpha must be >= 0");
    if (pgd_alpha == 0.0) pgd_alpha = epsilon / 4.0;
    if (out.empty()) {
        const char* env = std::getenv("CPRL_OUT_ROOT");
        out = env && *env ? env : "runs";
    }
}

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: document must be a JSON object");
    for (const auto& item : j.items()) {
        const bool known = std::any_of(std::begin(kKeys), std::end(kKeys),
                                       [&](const char* k) { return item.key() == k; });
        if (!known) throw ConfigError("config: unknown key '" + item.key() + "'");
    }
    RunConfig c;
    read_key(j, "model", c.model);
    read_key(j, "channels", c.channels);
    read_key(j, "b", c.b);
    read_key(j, "tau", c.tau);
    read_key(j, "style_complement", c.style_complement);
    read_key(j, "epochs", c.epochs);
    read_key(j, "batch_size", c.batch_size);
    read_key(j, "lr", c.lr);
    read_key(j, "beta1", c.beta1);
    read_key(j, "beta2", c.beta2);
    read_key(j, "adam_eps", c.adam_eps);
    read_key(j, "weight_decay", c.weight_decay);
    read_key(j, "grad_clip", c.grad_clip);
    read_key(j, "pns", c.pns);
    read_key(j, "full_objective", c.full_objective);
    read_key(j, "attack", c.attack);
    read_key(j, "epsilon", c.epsilon);
    read_key(j, "pgd_steps", c.pgd_steps);
    read_key(j, "pgd_alpha", c.pgd_alpha);
    read_key(j, "epsilon_grid", c.epsilon_grid);
    read_key(j, "scenes", c.scenes);
    read_key(j, "levels", c.levels);
    read_key(j, "image_side", c.image_side);
    read_key(j, "dataset_dir", c.dataset_dir);
    read_key(j, "seed", c.seed);
    read_key(j, "out", c.out);
    read_key(j, "checkpoint", c.checkpoint);
    read_key(j, "landscape_resolution", c.landscape_resolution);
    read_key(j, "landscape_extent_px", c.landscape_extent_px);
    read_key(j, "landscape_images", c.landscape_images);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
    return config_from_json(j);
}

json config_to_json(const RunConfig& c) {
    json j;
    j["model"] = c.model;
    j["channels"] = c.channels;
    j["b"] = c.b;
    j["tau"] = c.tau;
    j["style_complement"] = c.style_complement;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.lr;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_eps"] = c.adam_eps;
    j["weight_decay"] = c.weight_decay;
    j["grad_clip"] = c.grad_clip;
    j["pns"] = c.pns;
    j["full_objective"] = c.full_objective;
    j["attack"] = c.attack;
    j["epsilon"] = c.epsilon;
    j["pgd_steps"] = c.pgd_steps;
    j["pgd_alpha"] = c.pgd_alpha;
    j["epsilon_grid"] = c.epsilon_grid;
    j["scenes"] = c.scenes;
    j["levels"] = c.levels;
    j["image_side"] = c.image_side;
    j["dataset_dir"] = c.dataset_dir;
    j["seed"] = c.seed;
    // out and checkpoint are location plumbing, not experiment parameters:
    // the echoed config and its hash stay stable across output destinations
    j["landscape_resolution"] = c.landscape_resolution;
    j["landscape_extent_px"] = c.landscape_extent_px;
    j["landscape_images"] = c.landscape_images;
    return j;
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string config_hash(const RunConfig& c) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%08llx",
                  static_cast<unsigned long long>(fnv1a64(config_to_json(c).dump()) >> 32));
    return buf;
}

}  // namespace cprl
