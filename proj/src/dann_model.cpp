#include "actirisk/dann_model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace actirisk::model {

using nn::Graph;
using nn::Tensor;
using json = nlohmann::json;

void ArchitectureConfig::validate() const {
    if (input_bins <= 0 || stem_kernel <= 0 || stem_filters <= 0 || n_units <= 0) {
        throw ValidationError("ArchitectureConfig: sizes must be positive");
    }
    if (unit_filters[2] != stem_filters) {
        throw ValidationError("ArchitectureConfig: unit output channels must equal stem filters "
                              "(identity residual shortcut)");
    }
    if (descriptor_dim != stem_filters) {
        throw ValidationError("ArchitectureConfig: descriptor_dim must equal stem_filters");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ValidationError("ArchitectureConfig: dropout_rate must lie in [0,1)");
    }
    if (label_classes < 2 || domain_classes < 2) {
        throw ValidationError("ArchitectureConfig: heads need at least two classes");
    }
}

namespace {

Tensor uniform_fan_in(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

} // namespace

ModelParams ModelParams::zeros(const ArchitectureConfig& arch) {
    arch.validate();
    ModelParams p;
    p.arch = arch;
    const int f = arch.stem_filters;
    p.stem_kernel = Tensor::zeros({arch.stem_kernel, 1, f});
    p.stem_bias = Tensor::zeros({f});
    p.units.resize(static_cast<std::size_t>(arch.n_units));
    const int c1 = arch.unit_filters[0], c2 = arch.unit_filters[1], c3 = arch.unit_filters[2];
    for (auto& u : p.units) {
        u.a1_scale = Tensor::zeros({f});
        u.a1_shift = Tensor::zeros({f});
        u.c1_kernel = Tensor::zeros({arch.unit_kernels[0], f, c1});
        u.c1_bias = Tensor::zeros({c1});
        u.a2_scale = Tensor::zeros({c1});
        u.a2_shift = Tensor::zeros({c1});
        u.c2_kernel = Tensor::zeros({arch.unit_kernels[1], c1, c2});
        u.c2_bias = Tensor::zeros({c2});
        u.a3_scale = Tensor::zeros({c2});
        u.a3_shift = Tensor::zeros({c2});
        u.c3_kernel = Tensor::zeros({arch.unit_kernels[2], c2, c3});
        u.c3_bias = Tensor::zeros({c3});
    }
    p.post_scale = Tensor::zeros({f});
    p.post_shift = Tensor::zeros({f});
    p.bn_gamma = Tensor::zeros({f});
    p.bn_beta = Tensor::zeros({f});
    p.bn_running_mean = Tensor::zeros({f});
    p.bn_running_var = Tensor::full({f}, 1.0);
    p.label_weights = Tensor::zeros({arch.descriptor_dim, arch.label_classes});
    p.label_bias = Tensor::zeros({arch.label_classes});
    p.domain_weights = Tensor::zeros({arch.descriptor_dim, arch.domain_classes});
    p.domain_bias = Tensor::zeros({arch.domain_classes});
    return p;
}

ModelParams ModelParams::init(const ArchitectureConfig& arch, Rng& rng) {
    ModelParams p = zeros(arch);
    const int f = arch.stem_filters;
    p.stem_kernel = uniform_fan_in(p.stem_kernel.shape, arch.stem_kernel * 1, rng);
    for (auto& u : p.units) {
        u.a1_scale = Tensor::full(u.a1_scale.shape, 1.0);
        u.c1_kernel = uniform_fan_in(u.c1_kernel.shape, arch.unit_kernels[0] * f, rng);
        u.a2_scale = Tensor::full(u.a2_scale.shape, 1.0);
        u.c2_kernel =
            uniform_fan_in(u.c2_kernel.shape, arch.unit_kernels[1] * arch.unit_filters[0], rng);
        u.a3_scale = Tensor::full(u.a3_scale.shape, 1.0);
        u.c3_kernel =
            uniform_fan_in(u.c3_kernel.shape, arch.unit_kernels[2] * arch.unit_filters[1], rng);
    }
    p.post_scale = Tensor::full(p.post_scale.shape, 1.0);
    p.bn_gamma = Tensor::full(p.bn_gamma.shape, 1.0);
    p.label_weights = uniform_fan_in(p.label_weights.shape, arch.descriptor_dim, rng);
    p.domain_weights = uniform_fan_in(p.domain_weights.shape, arch.descriptor_dim, rng);
    return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("stem.kernel", &stem_kernel);
    out.emplace_back("stem.bias", &stem_bias);
    for (std::size_t i = 0; i < units.size(); ++i) {
        const std::string u = "unit" + std::to_string(i) + ".";
        UnitParams& up = units[i];
        out.emplace_back(u + "affine1.scale", &up.a1_scale);
        out.emplace_back(u + "affine1.shift", &up.a1_shift);
        out.emplace_back(u + "conv1.kernel", &up.c1_kernel);
        out.emplace_back(u + "conv1.bias", &up.c1_bias);
        out.emplace_back(u + "affine2.scale", &up.a2_scale);
        out.emplace_back(u + "affine2.shift", &up.a2_shift);
        out.emplace_back(u + "conv2.kernel", &up.c2_kernel);
        out.emplace_back(u + "conv2.bias", &up.c2_bias);
        out.emplace_back(u + "affine3.scale", &up.a3_scale);
        out.emplace_back(u + "affine3.shift", &up.a3_shift);
        out.emplace_back(u + "conv3.kernel", &up.c3_kernel);
        out.emplace_back(u + "conv3.bias", &up.c3_bias);
    }
    if (arch.post_units_norm == PostUnitsNorm::affine) {
        out.emplace_back("post.scale", &post_scale);
        out.emplace_back("post.shift", &post_shift);
    } else {
        out.emplace_back("post.bn_gamma", &bn_gamma);
        out.emplace_back("post.bn_beta", &bn_beta);
        out.emplace_back("post.bn_running_mean", &bn_running_mean);
        out.emplace_back("post.bn_running_var", &bn_running_var);
    }
    out.emplace_back("label.weights", &label_weights);
    out.emplace_back("label.bias", &label_bias);
    out.emplace_back("domain.weights", &domain_weights);
    out.emplace_back("domain.bias", &domain_bias);
    return out;
}

std::vector<Tensor*> ModelParams::trainable() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named_tensors()) {
        if (name.find("running") != std::string::npos) continue;
        out.push_back(t);
    }
    return out;
}

BoundModel bind_params(Graph& g, ModelParams& params, bool trainable) {
    BoundModel b;
    for (auto& [name, t] : params.named_tensors()) {
        if (name.find("running") != std::string::npos) continue; // handled inside batch_norm
        b.param_tensors.push_back(t);
        b.param_nodes.push_back(g.leaf(*t, trainable));
    }
    return b;
}

namespace {

// Offsets of tensors inside BoundModel, matching named_tensors() order
// (running statistics excluded).
struct ParamIndex {
    std::size_t stem_k = 0, stem_b = 1;
    std::size_t unit_base = 2;
    static constexpr std::size_t per_unit = 12;
    std::size_t post0, post1, label_w, label_b, domain_w, domain_b;

    explicit ParamIndex(const ArchitectureConfig& arch) {
        const std::size_t after_units =
            unit_base + per_unit * static_cast<std::size_t>(arch.n_units);
        post0 = after_units;
        post1 = after_units + 1;
        label_w = after_units + 2;
        label_b = after_units + 3;
        domain_w = after_units + 4;
        domain_b = after_units + 5;
    }
};

} // namespace

Graph::NodeId encode_days(Graph& g, Graph::NodeId days, ModelParams& params,
                          const BoundModel& bound, bool training, Rng* dropout_rng) {
    const ArchitectureConfig& arch = params.arch;
    const Tensor& in = g.value(days);
    if (in.ndim() != 3 || in.dim(1) != arch.input_bins || in.dim(2) != 1) {
        throw ValidationError("encode_days: expected input [N," + std::to_string(arch.input_bins) +
                              ",1], got " + nn::shape_str(in.shape));
    }
    if (training && arch.dropout_rate > 0.0 && dropout_rng == nullptr) {
        throw ValidationError("encode_days: training with dropout requires an rng");
    }
    const ParamIndex ix(arch);
    const auto node = [&](std::size_t i) { return bound.param_nodes[i]; };

    Graph::NodeId x = g.conv1d(days, node(ix.stem_k), node(ix.stem_b));
    for (int u = 0; u < arch.n_units; ++u) {
        const std::size_t b = ix.unit_base + ParamIndex::per_unit * static_cast<std::size_t>(u);
        Graph::NodeId h = g.per_component_affine(x, node(b + 0), node(b + 1));
        h = g.relu(h);
        h = g.conv1d(h, node(b + 2), node(b + 3));
        h = g.per_component_affine(h, node(b + 4), node(b + 5));
        h = g.relu(h);
        h = g.conv1d(h, node(b + 6), node(b + 7));
        h = g.per_component_affine(h, node(b + 8), node(b + 9));
        h = g.relu(h);
        h = g.conv1d(h, node(b + 10), node(b + 11));
        x = g.add(x, h);
        if (training && arch.dropout_rate > 0.0) {
            x = g.dropout(x, arch.dropout_rate, true, *dropout_rng);
        }
    }
    if (arch.post_units_norm == PostUnitsNorm::affine) {
        x = g.per_component_affine(x, node(ix.post0), node(ix.post1));
    } else {
        x = g.batch_norm(x, node(ix.post0), node(ix.post1), &params.bn_running_mean,
                         &params.bn_running_var, training);
    }
    return g.avg_pool_axis1(x); // [N,96,8] -> [N,8]
}

Graph::NodeId label_logits_node(Graph& g, Graph::NodeId user_desc, const BoundModel& bound,
                                const ModelParams& params) {
    const ParamIndex ix(params.arch);
    return g.dense(user_desc, bound.param_nodes[ix.label_w], bound.param_nodes[ix.label_b]);
}

Graph::NodeId domain_logits_node(Graph& g, Graph::NodeId user_desc, double lambda,
                                 const BoundModel& bound, const ModelParams& params) {
    const ParamIndex ix(params.arch);
    const Graph::NodeId rev = g.gradient_reversal(user_desc, lambda);
    return g.dense(rev, bound.param_nodes[ix.domain_w], bound.param_nodes[ix.domain_b]);
}

Tensor forward_day_encoder(ModelParams& params, const Tensor& days, bool training,
                           Rng* dropout_rng) {
    Graph g;
    const BoundModel bound = bind_params(g, params, false);
    const Graph::NodeId in = g.leaf(days, false);
    const Graph::NodeId out = encode_days(g, in, params, bound, training, dropout_rng);
    return g.value(out);
}

Tensor aggregate_user(const Tensor& daily) {
    if (daily.ndim() != 3) throw ValidationError("aggregate_user: expected [B,D,F]");
    if (daily.dim(1) < 1) throw ValidationError("aggregate_user: zero days");
    const int B = daily.dim(0), D = daily.dim(1), F = daily.dim(2);
    Tensor out = Tensor::zeros({B, F});
    for (int b = 0; b < B; ++b) {
        for (int d = 0; d < D; ++d) {
            for (int f = 0; f < F; ++f) {
                out[static_cast<std::int64_t>(b) * F + f] +=
                    daily[(static_cast<std::int64_t>(b) * D + d) * F + f];
            }
        }
        for (int f = 0; f < F; ++f) out[static_cast<std::int64_t>(b) * F + f] /= D;
    }
    return out;
}

namespace {

Tensor eager_dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    Graph g;
    const Graph::NodeId xi = g.leaf(x, false);
    const Graph::NodeId wi = g.leaf(w, false);
    const Graph::NodeId bi = g.leaf(b, false);
    return g.value(g.dense(xi, wi, bi));
}

} // namespace

Tensor label_logits(ModelParams& params, const Tensor& user_desc) {
    return eager_dense(user_desc, params.label_weights, params.label_bias);
}

Tensor domain_logits(ModelParams& params, const Tensor& user_desc, double lambda) {
    if (lambda < 0.0) throw ValidationError("domain_logits: lambda must be >= 0");
    // Gradient reversal is the identity in the forward pass.
    return eager_dense(user_desc, params.domain_weights, params.domain_bias);
}

Tensor slices_to_tensor(std::span<const tracks::WeekSlice> slices) {
    if (slices.empty()) throw ValidationError("slices_to_tensor: no slices");
    const int n = static_cast<int>(slices.size());
    Tensor days = Tensor::zeros({n * tracks::kDaysPerSlice, tracks::kBinsPerDay, 1});
    std::int64_t at = 0;
    for (const auto& s : slices) {
        for (const auto& day : s.days) {
            for (const double v : day) days[at++] = v;
        }
    }
    return days;
}

std::vector<double> weekly_risk_scores(ModelParams& params,
                                       std::span<const tracks::WeekSlice> slices) {
    if (slices.empty()) throw ValidationError("weekly_risk_scores: no slices");
    const Tensor days = slices_to_tensor(slices);
    const Tensor desc = forward_day_encoder(params, days, false, nullptr);
    const int n = static_cast<int>(slices.size());
    Tensor per_user = Tensor::zeros({n, tracks::kDaysPerSlice, params.arch.descriptor_dim});
    per_user.data = desc.data;
    const Tensor user = aggregate_user(per_user);
    const Tensor logits = label_logits(params, user);
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        scores[static_cast<std::size_t>(i)] =
            logits[static_cast<std::int64_t>(i) * 2 + kClassMorbid] -
            logits[static_cast<std::int64_t>(i) * 2 + kClassHealthy];
    }
    return scores;
}

double risk_score(ModelParams& params, std::span<const tracks::WeekSlice> slices) {
    const std::vector<double> weekly = weekly_risk_scores(params, slices);
    double s = 0.0;
    for (const double w : weekly) s += w;
    return s / static_cast<double>(weekly.size());
}

std::vector<double> sliding_average_risk(std::span<const double> weekly_scores,
                                         int window_weeks) {
    if (weekly_scores.empty()) throw ValidationError("sliding_average_risk: empty series");
    if (window_weeks < 1) throw ValidationError("sliding_average_risk: window must be >= 1");
    std::vector<double> out(weekly_scores.size());
    double running = 0.0;
    for (std::size_t i = 0; i < weekly_scores.size(); ++i) {
        running += weekly_scores[i];
        if (i >= static_cast<std::size_t>(window_weeks)) {
            running -= weekly_scores[i - static_cast<std::size_t>(window_weeks)];
            out[i] = running / window_weeks;
        } else {
            out[i] = running / static_cast<double>(i + 1);
        }
    }
    return out;
}

// ---- checkpoint I/O ---------------------------------------------------------

namespace {

json arch_to_json(const ArchitectureConfig& a) {
    return json{{"input_bins", a.input_bins},
                {"stem_kernel", a.stem_kernel},
                {"stem_filters", a.stem_filters},
                {"n_units", a.n_units},
                {"unit_kernels", a.unit_kernels},
                {"unit_filters", a.unit_filters},
                {"dropout_rate", a.dropout_rate},
                {"descriptor_dim", a.descriptor_dim},
                {"label_classes", a.label_classes},
                {"domain_classes", a.domain_classes},
                {"post_units_norm",
                 a.post_units_norm == PostUnitsNorm::affine ? "affine" : "batchnorm"}};
}

ArchitectureConfig arch_from_json(const json& j) {
    ArchitectureConfig a;
    a.input_bins = j.at("input_bins").get<int>();
    a.stem_kernel = j.at("stem_kernel").get<int>();
    a.stem_filters = j.at("stem_filters").get<int>();
    a.n_units = j.at("n_units").get<int>();
    a.unit_kernels = j.at("unit_kernels").get<std::array<int, 3>>();
    a.unit_filters = j.at("unit_filters").get<std::array<int, 3>>();
    a.dropout_rate = j.at("dropout_rate").get<double>();
    a.descriptor_dim = j.at("descriptor_dim").get<int>();
    a.label_classes = j.at("label_classes").get<int>();
    a.domain_classes = j.at("domain_classes").get<int>();
    const std::string norm = j.at("post_units_norm").get<std::string>();
    if (norm == "affine") {
        a.post_units_norm = PostUnitsNorm::affine;
    } else if (norm == "batchnorm") {
        a.post_units_norm = PostUnitsNorm::batchnorm;
    } else {
        throw ValidationError("checkpoint: unknown post_units_norm '" + norm + "'");
    }
    a.validate();
    return a;
}

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

} // namespace

void save_checkpoint(ModelParams& params, const std::filesystem::path& path) {
    json manifest = json::array();
    std::uint64_t offset = 0;
    auto tensors = params.named_tensors();
    for (auto& [name, t] : tensors) {
        manifest.push_back({{"name", name}, {"shape", t->shape}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(t->size()) * sizeof(double);
    }
    const json header{{"format_version", 1},
                      {"arch", arch_to_json(params.arch)},
                      {"tensors", manifest}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("save_checkpoint: cannot open " + path.string());
    out << header.dump() << '\n';
    for (auto& [name, t] : tensors) {
        out.write(reinterpret_cast<const char*>(t->ptr()),
                  static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!out) throw ValidationError("save_checkpoint: write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("load_checkpoint: cannot open " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line)) {
        throw ValidationError("load_checkpoint: missing header in " + path.string());
    }
    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::exception& e) {
        throw ValidationError("load_checkpoint: bad header JSON: " + std::string(e.what()));
    }
    if (header.at("format_version").get<int>() != 1) {
        throw ValidationError("load_checkpoint: unsupported format version");
    }
    ModelParams params = ModelParams::zeros(arch_from_json(header.at("arch")));
    const std::streampos blob_start = in.tellg();
    auto tensors = params.named_tensors();
    const json& manifest = header.at("tensors");
    if (manifest.size() != tensors.size()) {
        throw ValidationError("load_checkpoint: tensor manifest size mismatch");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        auto& [name, t] = tensors[i];
        const json& entry = manifest[i];
        if (entry.at("name").get<std::string>() != name) {
            throw ValidationError("load_checkpoint: unexpected tensor '" +
                                  entry.at("name").get<std::string>() + "', wanted '" + name +
                                  "'");
        }
        if (entry.at("shape").get<std::vector<int>>() != t->shape) {
            throw ValidationError("load_checkpoint: shape mismatch for " + name);
        }
        in.seekg(blob_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
        in.read(reinterpret_cast<char*>(t->ptr()),
                static_cast<std::streamsize>(t->size() * sizeof(double)));
        if (!in) throw ValidationError("load_checkpoint: truncated tensor data for " + name);
    }
    return params;
}

} // namespace actirisk::model
