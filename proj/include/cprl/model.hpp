#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cprl/autodiff.hpp"
#include "cprl/checkpoint.hpp"
#include "cprl/cprl_layer.hpp"

namespace cprl {

enum class InterventionPhase { None, SF, NC };

struct ModelConfig {
    std::size_t channels = 32;  // K, the pooled feature width
    std::size_t input_side = 32;
    double bias = 0.4;
    double tau = 1.0;
    bool use_mask = true;           // false = plain baseline
    bool style_complement = false;  // s branch variant, see cprl_layer
    bool mask_force_ones = false;   // diagnostic: mask pathway with identity gate
};

/// Three conv+relu blocks (1 -> 8 -> 16 -> K), two 2x2 average pools, global
/// average pool, then a sigmoid regression head over mask-gated features.
class Model {
  public:
    Model() = default;
    Model(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    CprlConfig cprl_config() const;
    std::string architecture() const;

    Tensor features(const Tensor& x) const;  // [n, K]
    Tensor mask_for(const Tensor& f) const;  // ones when mask disabled/forced
    Tensor predict(const Tensor& x) const;   // [n] scores in (0, 1)
    std::vector<double> predict_values(const Tensor& x) const;

    struct FullForward {
        Tensor pred;           // gated prediction, gradients attached
        Tensor pred_detached;  // same values, gradient barrier
        Tensor y_c;            // prediction through the phi intervention
        Tensor y_s;            // prediction through the xi intervention
    };
    FullForward forward_full(const Tensor& x);  // mask-enabled models only

    struct InterventionResult {
        Tensor clean;  // detached
        Tensor intervened;
    };
    InterventionResult predict_intervened(const Tensor& x, InterventionPhase phase);

    std::vector<Tensor> backbone_params();  // conv stack + head
    std::vector<Tensor> phi_params();
    std::vector<Tensor> xi_params();
    InterventionHeads& heads();

    std::vector<CheckpointRecord> to_records() const;
    void from_records(const std::vector<CheckpointRecord>& records);

  private:
    Tensor score_from(const Tensor& gated) const;
    void check_input(const Tensor& x) const;

    ModelConfig cfg_;
    Tensor conv1_w_, conv1_b_, conv2_w_, conv2_b_, conv3_w_, conv3_b_;
    Tensor head_w_, head_b_;
    InterventionHeads heads_;
};

}  // namespace cprl
