#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cprl {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One flat document drives every command; unknown keys are rejected and the
/// fully resolved config is echoed into each report.
struct RunConfig {
    // model
    std::string model = "cprl";  // baseline | cprl
    std::size_t channels = 32;
    double b = 0.4;
    double tau = 1.0;
    bool style_complement = false;
    // training
    std::size_t epochs = 12;
    std::size_t batch_size = 16;
    double lr = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 5.0;
    bool pns = true;
    bool full_objective = true;
    // attack
    std::string attack = "fgsm";  // fgsm | pgd | reflect
    double epsilon = 1.0 / 255.0;
    std::size_t pgd_steps = 10;
    double pgd_alpha = 0.0;  // 0 resolves to epsilon / 4
    std::vector<double> epsilon_grid = {0.0, 1.0 / 255.0, 2.0 / 255.0, 4.0 / 255.0};
    // dataset
    std::size_t scenes = 40;
    std::size_t levels = 5;
    std::size_t image_side = 32;
    std::string dataset_dir;  // archive to ingest; empty synthesizes from config
    // run
    std::uint64_t seed = 0;
    std::string out;  // empty resolves via CPRL_OUT_ROOT, then "runs"
    std::string checkpoint;
    std::size_t landscape_resolution = 17;
    double landscape_extent_px = 1.0;
    std::size_t landscape_images = 10;

    /// Resolves dependent defaults (pgd_alpha, out) and checks ranges.
    void finalize();
};

RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json config_to_json(const RunConfig& c);

std::uint64_t fnv1a64(std::string_view s);
std::string config_hash(const RunConfig& c);  // 8 hex chars

}  // namespace cprl
