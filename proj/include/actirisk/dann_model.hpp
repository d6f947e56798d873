#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "actirisk/autodiff.hpp"
#include "actirisk/rng.hpp"
#include "actirisk/tensor.hpp"
#include "actirisk/tracks.hpp"

namespace actirisk::model {

enum class PostUnitsNorm { affine, batchnorm };

// Day encoder: stem conv (size 8, 8 filters) -> 8 identical full-pre-activation
// residual units (affine -> relu -> conv, three times; kernels 1/8/1 with
// 3/3/8 filters; identity shortcut) -> dropout after each unit -> post-units
// normalization -> average pooling over the 96 time bins.
struct ArchitectureConfig {
    int input_bins = 96;
    int stem_kernel = 8;
    int stem_filters = 8;
    int n_units = 8;
    std::array<int, 3> unit_kernels{1, 8, 1};
    std::array<int, 3> unit_filters{3, 3, 8};
    double dropout_rate = 0.10;
    int descriptor_dim = 8;
    int label_classes = 2;
    int domain_classes = 2;
    PostUnitsNorm post_units_norm = PostUnitsNorm::affine;

    void validate() const;
};

// Label class convention: index 0 = healthy, index 1 = morbid; the risk score
// is logits[morbid] - logits[healthy]. Domain convention: 0 = source, 1 = target.
inline constexpr int kClassHealthy = 0;
inline constexpr int kClassMorbid = 1;
inline constexpr int kDomainSource = 0;
inline constexpr int kDomainTarget = 1;

struct UnitParams {
    nn::Tensor a1_scale, a1_shift, c1_kernel, c1_bias;
    nn::Tensor a2_scale, a2_shift, c2_kernel, c2_bias;
    nn::Tensor a3_scale, a3_shift, c3_kernel, c3_bias;
};

struct ModelParams {
    ArchitectureConfig arch;
    nn::Tensor stem_kernel, stem_bias;
    std::vector<UnitParams> units;
    nn::Tensor post_scale, post_shift;     // affine mode
    nn::Tensor bn_gamma, bn_beta;          // batchnorm mode
    nn::Tensor bn_running_mean, bn_running_var;
    nn::Tensor label_weights, label_bias;
    nn::Tensor domain_weights, domain_bias;

    // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) conv/dense weights, affines at
    // (1, 0), biases at 0.
    static ModelParams init(const ArchitectureConfig& arch, Rng& rng);
    static ModelParams zeros(const ArchitectureConfig& arch);

    // Trainable tensors in the fixed persistence order.
    std::vector<nn::Tensor*> trainable();
    // All tensors including batch-norm running statistics, with stable names.
    std::vector<std::pair<std::string, nn::Tensor*>> named_tensors();
};

// Graph-side handles to one forward pass over a bound parameter set.
struct BoundModel {
    std::vector<nn::Tensor*> param_tensors;
    std::vector<nn::Graph::NodeId> param_nodes;
};

BoundModel bind_params(nn::Graph& g, ModelParams& params, bool trainable);

// [N,96,1] day batch -> [N,8] day descriptors.
nn::Graph::NodeId encode_days(nn::Graph& g, nn::Graph::NodeId days, ModelParams& params,
                              const BoundModel& bound, bool training, Rng* dropout_rng);

nn::Graph::NodeId label_logits_node(nn::Graph& g, nn::Graph::NodeId user_desc,
                                    const BoundModel& bound, const ModelParams& params);
nn::Graph::NodeId domain_logits_node(nn::Graph& g, nn::Graph::NodeId user_desc, double lambda,
                                     const BoundModel& bound, const ModelParams& params);

// ---- eager convenience wrappers (evaluation path) --------------------------

// [N,96,1] -> [N,8]; dropout active only when training and an rng is supplied.
nn::Tensor forward_day_encoder(ModelParams& params, const nn::Tensor& days, bool training = false,
                               Rng* dropout_rng = nullptr);

// [B,D,F] -> [B,F] arithmetic mean over the day axis.
nn::Tensor aggregate_user(const nn::Tensor& daily);

nn::Tensor label_logits(ModelParams& params, const nn::Tensor& user_desc);
nn::Tensor domain_logits(ModelParams& params, const nn::Tensor& user_desc, double lambda);

// Pack week slices into a [n_slices*7, 96, 1] day tensor.
nn::Tensor slices_to_tensor(std::span<const tracks::WeekSlice> slices);

// Weekly risk score per slice: logits[morbid] - logits[healthy], dropout off.
std::vector<double> weekly_risk_scores(ModelParams& params,
                                       std::span<const tracks::WeekSlice> slices);

// Subject-level score: mean of the weekly scores.
double risk_score(ModelParams& params, std::span<const tracks::WeekSlice> slices);

// Trailing mean over min(k, available) weeks at each position.
std::vector<double> sliding_average_risk(std::span<const double> weekly_scores, int window_weeks);

// ---- checkpoint I/O ---------------------------------------------------------
// One JSON header line (format version, architecture, tensor manifest with
// shapes and byte offsets) followed by raw little-endian IEEE-754 doubles in
// manifest order.
void save_checkpoint(ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

} // namespace actirisk::model
