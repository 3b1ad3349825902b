#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dgfd/params.hpp"

namespace dgfd {

/// Architecture knobs for the multi-scale encoder and the MLP head.
struct ModelConfig {
    std::vector<int> kernel_sizes = {7, 31, 127};  // one parallel branch each
    int branch_channels = 16;
    int pool = 4;
    int in_channels = 6;
    int feature_dim = 64;  // contract: encoder output width
    int head_hidden = 32;
    int num_classes = 4;
};

void validate(const ModelConfig& cfg);
void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

/// Encoder parameters: branch{i}.w/.b convolutions plus proj.w/.b to the
/// 64-dim feature.
struct EncoderParams {
    ParamVector p;
};

/// Classifier head parameters: fc1.w/.b and fc2.w/.b.
struct HeadParams {
    ParamVector p;
};

/// Kaiming-style fan-in uniform init (bound sqrt(6/fan_in)), zero biases.
std::pair<EncoderParams, HeadParams> init_params(const ModelConfig& cfg, uint64_t seed);

/// Single parameter vector holding enc.* and head.* slots (Θ).
ParamVector merge_theta(const EncoderParams& enc, const HeadParams& head);
EncoderParams encoder_slice(const ParamVector& theta);
HeadParams head_slice(const ParamVector& theta);

/// Graph builders; prefix selects the slot namespace inside the binding
/// ("" for a standalone ParamVector, "enc."/"head." inside Θ).
ad::Var encoder_graph(ad::Graph& g, const ParamBinding& b, const std::string& prefix, ad::Var batch,
                      const ModelConfig& cfg);
ad::Var head_graph(ad::Graph& g, const ParamBinding& b, const std::string& prefix, ad::Var z,
                   const ModelConfig& cfg);

/// Convenience no-grad forward passes.
Tensor encoder_forward(const ModelConfig& cfg, const EncoderParams& enc, const Tensor& batch);  // [B,C,W] -> [B,64]
Tensor head_forward(const ModelConfig& cfg, const HeadParams& head, const Tensor& z);           // [B,64] -> [B,T]

/// Trained end-to-end model bundle.
struct DgeModel {
    ModelConfig cfg;
    ParamVector theta;  // enc.* and head.* slots
};

Tensor model_features(const DgeModel& m, const Tensor& batch);
Tensor model_logits(const DgeModel& m, const Tensor& batch);

/// Checkpoints: stem.json (config + named slot shapes) and stem.bin
/// (slot data concatenated row-major, 64-bit little-endian).
void save_model(const DgeModel& m, const std::string& stem);
DgeModel load_model(const std::string& stem);

}  // namespace dgfd
