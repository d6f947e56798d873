#include "actirisk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "actirisk/csv.hpp"
#include "actirisk/numeric.hpp"

namespace actirisk::trainer {

using model::ModelParams;
using nn::Graph;
using nn::Tensor;

void TrainConfig::validate() const {
    if (batch_per_domain < 1) throw ValidationError("TrainConfig: batch_per_domain must be >= 1");
    const int lens[] = {lr_stage1_epochs, lr_stage2_epochs, lr_stage3_epochs, ramp_epochs,
                        plateau_epochs,   decay_epochs,     final_epochs};
    for (const int l : lens) {
        if (l <= 0) throw ValidationError("TrainConfig: phase lengths must be positive");
    }
    if (ramp_steps < 2) throw ValidationError("TrainConfig: ramp_steps must be >= 2");
    if (ramp_epochs % ramp_steps != 0) {
        throw ValidationError("TrainConfig: ramp_epochs must divide into ramp_steps steps");
    }
    if (lambda_max < 0.0) throw ValidationError("TrainConfig: lambda_max must be >= 0");
    if (test_fraction < 0.0 || test_fraction >= 1.0) {
        throw ValidationError("TrainConfig: test_fraction must lie in [0,1)");
    }
    if (day_dropout < 0.0 || day_dropout >= 1.0) {
        throw ValidationError("TrainConfig: day_dropout must lie in [0,1)");
    }
    if (eval_subsample < 1 || best_window < 1) {
        throw ValidationError("TrainConfig: eval_subsample and best_window must be positive");
    }
}

TrainConfig TrainConfig::scaled(int divisor) {
    if (divisor < 1) throw ValidationError("TrainConfig::scaled: divisor must be >= 1");
    TrainConfig c;
    const auto scale = [divisor](int v, const char* what) {
        if (v % divisor != 0) {
            throw ValidationError(std::string("TrainConfig::scaled: ") + what +
                                  " not divisible by divisor");
        }
        return v / divisor;
    };
    c.lr_stage1_epochs = scale(c.lr_stage1_epochs, "lr_stage1_epochs");
    c.lr_stage2_epochs = scale(c.lr_stage2_epochs, "lr_stage2_epochs");
    c.lr_stage3_epochs = scale(c.lr_stage3_epochs, "lr_stage3_epochs");
    c.ramp_epochs = scale(c.ramp_epochs, "ramp_epochs");
    c.plateau_epochs = scale(c.plateau_epochs, "plateau_epochs");
    c.decay_epochs = scale(c.decay_epochs, "decay_epochs");
    c.final_epochs = scale(c.final_epochs, "final_epochs");
    c.validate();
    return c;
}

double lambda_schedule(int epoch, const TrainConfig& config) {
    if (epoch < 0) throw ValidationError("lambda_schedule: epoch must be >= 0");
    const int phase1 = config.phase1_epochs();
    if (epoch < phase1) return 0.0;
    if (epoch < phase1 + config.ramp_epochs) {
        const int step_len = config.ramp_epochs / config.ramp_steps;
        const int n = (epoch - phase1) / step_len;
        const double rho =
            -5.0 + 9.0 * static_cast<double>(n) / static_cast<double>(config.ramp_steps - 1);
        return config.lambda_max * logistic(rho);
    }
    return config.lambda_max;
}

double lr_schedule(int epoch, const TrainConfig& config) {
    if (epoch < 0 || epoch >= config.total_epochs()) {
        throw ValidationError("lr_schedule: epoch out of range [0," +
                              std::to_string(config.total_epochs()) + ")");
    }
    if (epoch < config.lr_stage1_epochs) return config.lr1;
    if (epoch < config.lr_stage1_epochs + config.lr_stage2_epochs) return config.lr2;
    const int plateau_end = config.phase1_epochs() + config.ramp_epochs + config.plateau_epochs;
    if (epoch < plateau_end) return config.lr3;
    if (epoch < plateau_end + config.decay_epochs) return config.lr_decay;
    return config.lr_final;
}

std::pair<std::vector<TrainSubject>, std::vector<TrainSubject>> balance_age_distribution(
    std::vector<TrainSubject> source, std::vector<TrainSubject> target, std::uint64_t seed,
    int bin_years, double age_lo, double age_hi) {
    if (bin_years <= 0 || !(age_hi > age_lo)) {
        throw ValidationError("balance_age_distribution: bad bin specification");
    }
    if (source.empty() && target.empty()) {
        throw ValidationError("balance_age_distribution: both domains empty");
    }
    const int n_bins = static_cast<int>(std::ceil((age_hi - age_lo) / bin_years));
    const auto bin_of = [&](double age) -> int {
        if (age < age_lo || age >= age_hi) return -1;
        return static_cast<int>((age - age_lo) / bin_years);
    };

    Rng rng(derive_seed(seed, "age-balance"));
    const auto pick = [&](std::vector<TrainSubject>& subjects,
                          const std::vector<std::vector<std::size_t>>& bins,
                          const std::vector<std::size_t>& keep_counts) {
        std::vector<char> keep(subjects.size(), 0);
        for (int b = 0; b < n_bins; ++b) {
            const auto& members = bins[static_cast<std::size_t>(b)];
            const std::size_t k = keep_counts[static_cast<std::size_t>(b)];
            if (k >= members.size()) {
                for (const std::size_t i : members) keep[i] = 1;
            } else {
                // Seeded uniform subsample, original order preserved.
                std::vector<std::size_t> local(members.size());
                for (std::size_t i = 0; i < members.size(); ++i) local[i] = i;
                rng.shuffle(local);
                local.resize(k);
                for (const std::size_t i : local) keep[members[i]] = 1;
            }
        }
        std::vector<TrainSubject> out;
        out.reserve(subjects.size());
        for (std::size_t i = 0; i < subjects.size(); ++i) {
            if (keep[i]) out.push_back(std::move(subjects[i]));
        }
        return out;
    };

    std::vector<std::vector<std::size_t>> src_bins(static_cast<std::size_t>(n_bins));
    std::vector<std::vector<std::size_t>> tgt_bins(static_cast<std::size_t>(n_bins));
    for (std::size_t i = 0; i < source.size(); ++i) {
        const int b = bin_of(source[i].age);
        if (b >= 0) src_bins[static_cast<std::size_t>(b)].push_back(i);
    }
    for (std::size_t i = 0; i < target.size(); ++i) {
        const int b = bin_of(target[i].age);
        if (b >= 0) tgt_bins[static_cast<std::size_t>(b)].push_back(i);
    }
    std::vector<std::size_t> keep_counts(static_cast<std::size_t>(n_bins));
    for (int b = 0; b < n_bins; ++b) {
        keep_counts[static_cast<std::size_t>(b)] = std::min(
            src_bins[static_cast<std::size_t>(b)].size(), tgt_bins[static_cast<std::size_t>(b)].size());
    }
    auto source_out = pick(source, src_bins, keep_counts);
    auto target_out = pick(target, tgt_bins, keep_counts);
    return {std::move(source_out), std::move(target_out)};
}

namespace {

// Copy one slice into the day tensor at user row r and emit pooling weights.
void emit_user(const TrainSubject& s, const tracks::WeekSlice& slice, double day_dropout,
               Rng& rng, Tensor& days, std::vector<double>& day_weights, int r) {
    const int D = tracks::kDaysPerSlice;
    const int L = tracks::kBinsPerDay;
    std::array<char, tracks::kDaysPerSlice> kept;
    kept.fill(1);
    if (day_dropout > 0.0 && s.domain == model::kDomainSource) {
        int n_kept = 0;
        for (int d = 0; d < D; ++d) {
            kept[static_cast<std::size_t>(d)] = rng.uniform() >= day_dropout ? 1 : 0;
            n_kept += kept[static_cast<std::size_t>(d)];
        }
        if (n_kept == 0) {
            kept[static_cast<std::size_t>(rng.below(D))] = 1;
            n_kept = 1;
        }
    }
    int n_kept = 0;
    for (int d = 0; d < D; ++d) n_kept += kept[static_cast<std::size_t>(d)];
    for (int d = 0; d < D; ++d) {
        const bool use = kept[static_cast<std::size_t>(d)] != 0;
        double* dst = days.ptr() + (static_cast<std::int64_t>(r) * D + d) * L;
        if (use) {
            for (int l = 0; l < L; ++l) dst[l] = slice.days[static_cast<std::size_t>(d)]
                                                           [static_cast<std::size_t>(l)];
        } else {
            for (int l = 0; l < L; ++l) dst[l] = 0.0;
        }
        day_weights[static_cast<std::size_t>(r) * D + static_cast<std::size_t>(d)] =
            use ? 1.0 / n_kept : 0.0;
    }
}

const tracks::WeekSlice& random_slice(const TrainSubject& s, Rng& rng) {
    if (s.slices.empty()) {
        throw ValidationError("trainer: subject " + s.id + " has no week slices");
    }
    if (s.slices.size() == 1) return s.slices.front();
    return s.slices[static_cast<std::size_t>(rng.below(s.slices.size()))];
}

} // namespace

std::vector<Batch> make_batches(const std::vector<TrainSubject>& source,
                                const std::vector<TrainSubject>& target, int batch_per_domain,
                                double day_dropout, Rng& rng) {
    const int b = batch_per_domain;
    const bool two_domain = !target.empty();
    if (source.empty()) throw ValidationError("make_batches: empty source domain");
    const std::size_t n_batches =
        two_domain ? std::min(source.size(), target.size()) / static_cast<std::size_t>(b)
                   : source.size() / static_cast<std::size_t>(b);
    if (n_batches == 0) {
        throw ValidationError("make_batches: fewer subjects than one batch");
    }

    std::vector<std::size_t> src_order(source.size());
    for (std::size_t i = 0; i < src_order.size(); ++i) src_order[i] = i;
    rng.shuffle(src_order);
    std::vector<std::size_t> tgt_order(target.size());
    for (std::size_t i = 0; i < tgt_order.size(); ++i) tgt_order[i] = i;
    rng.shuffle(tgt_order);

    const int D = tracks::kDaysPerSlice;
    const int L = tracks::kBinsPerDay;
    std::vector<Batch> batches;
    batches.reserve(n_batches);
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
        Batch batch;
        batch.rows = two_domain ? 2 * b : b;
        batch.days = Tensor::zeros({batch.rows * D, L, 1});
        batch.labels.resize(static_cast<std::size_t>(batch.rows));
        batch.label_mask.resize(static_cast<std::size_t>(batch.rows));
        batch.domains.resize(static_cast<std::size_t>(batch.rows));
        batch.day_weights.resize(static_cast<std::size_t>(batch.rows) * D);
        for (int r = 0; r < b; ++r) {
            const TrainSubject& s = source[src_order[bi * b + static_cast<std::size_t>(r)]];
            emit_user(s, random_slice(s, rng), day_dropout, rng, batch.days, batch.day_weights,
                      r);
            batch.labels[static_cast<std::size_t>(r)] = s.label;
            batch.label_mask[static_cast<std::size_t>(r)] = 1;
            batch.domains[static_cast<std::size_t>(r)] = model::kDomainSource;
        }
        if (two_domain) {
            for (int r = 0; r < b; ++r) {
                const TrainSubject& s = target[tgt_order[bi * b + static_cast<std::size_t>(r)]];
                emit_user(s, random_slice(s, rng), day_dropout, rng, batch.days,
                          batch.day_weights, b + r);
                batch.labels[static_cast<std::size_t>(b + r)] = 0; // masked out
                batch.label_mask[static_cast<std::size_t>(b + r)] = 0;
                batch.domains[static_cast<std::size_t>(b + r)] = model::kDomainTarget;
            }
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

namespace {

struct EvalAccuracy {
    double label_acc = std::numeric_limits<double>::quiet_NaN();
    double domain_acc = std::numeric_limits<double>::quiet_NaN();
};

// Accuracy over one seeded subsample of users; one random slice per user.
EvalAccuracy evaluate(ModelParams& params, const std::vector<const TrainSubject*>& src,
                      const std::vector<const TrainSubject*>& tgt, int subsample, Rng& rng) {
    std::vector<const TrainSubject*> chosen;
    const auto take = [&](const std::vector<const TrainSubject*>& pool) {
        if (pool.empty()) return;
        if (static_cast<int>(pool.size()) <= subsample) {
            chosen.insert(chosen.end(), pool.begin(), pool.end());
            return;
        }
        const auto idx = rng.sample_indices(pool.size(), static_cast<std::size_t>(subsample));
        for (const std::size_t i : idx) chosen.push_back(pool[i]);
    };
    take(src);
    take(tgt);
    if (chosen.empty()) return {};

    const int D = tracks::kDaysPerSlice;
    const int L = tracks::kBinsPerDay;
    long label_ok = 0, label_n = 0, domain_ok = 0, domain_n = 0;
    const std::size_t chunk = 256;
    for (std::size_t at = 0; at < chosen.size(); at += chunk) {
        const std::size_t end = std::min(chosen.size(), at + chunk);
        const int rows = static_cast<int>(end - at);
        Tensor days = Tensor::zeros({rows * D, L, 1});
        for (int r = 0; r < rows; ++r) {
            const TrainSubject& s = *chosen[at + static_cast<std::size_t>(r)];
            const tracks::WeekSlice& slice = random_slice(s, rng);
            double* dst = days.ptr() + static_cast<std::int64_t>(r) * D * L;
            for (int d = 0; d < D; ++d) {
                for (int l = 0; l < L; ++l) {
                    dst[d * L + l] =
                        slice.days[static_cast<std::size_t>(d)][static_cast<std::size_t>(l)];
                }
            }
        }
        Graph g;
        const model::BoundModel bound = model::bind_params(g, params, false);
        const Graph::NodeId in = g.leaf(std::move(days), false);
        const Graph::NodeId enc = model::encode_days(g, in, params, bound, false, nullptr);
        const Graph::NodeId per_user =
            g.reshape(enc, {rows, D, params.arch.descriptor_dim});
        const Graph::NodeId user = g.avg_pool_axis1(per_user);
        const Tensor& llab = g.value(model::label_logits_node(g, user, bound, params));
        const Tensor& ldom = g.value(model::domain_logits_node(g, user, 0.0, bound, params));
        for (int r = 0; r < rows; ++r) {
            const TrainSubject& s = *chosen[at + static_cast<std::size_t>(r)];
            const double* lrow = llab.ptr() + static_cast<std::int64_t>(r) * 2;
            const double* drow = ldom.ptr() + static_cast<std::int64_t>(r) * 2;
            if (s.domain == model::kDomainSource) {
                ++label_n;
                if ((lrow[1] > lrow[0] ? 1 : 0) == s.label) ++label_ok;
            }
            ++domain_n;
            if ((drow[1] > drow[0] ? 1 : 0) == s.domain) ++domain_ok;
        }
    }
    EvalAccuracy acc;
    if (label_n > 0) acc.label_acc = static_cast<double>(label_ok) / label_n;
    if (domain_n > 0) acc.domain_acc = static_cast<double>(domain_ok) / domain_n;
    return acc;
}

std::pair<std::vector<const TrainSubject*>, std::vector<const TrainSubject*>> split_subjects(
    const std::vector<TrainSubject>& subjects, double test_fraction, Rng& rng) {
    std::vector<std::size_t> order(subjects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t n_test =
        static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(subjects.size())));
    std::vector<const TrainSubject*> train_set, test_set;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_test ? test_set : train_set).push_back(&subjects[order[i]]);
    }
    return {std::move(train_set), std::move(test_set)};
}

} // namespace

TrainResult train(const TrainConfig& config, const model::ArchitectureConfig& arch,
                  const std::vector<TrainSubject>& source,
                  const std::vector<TrainSubject>& target) {
    config.validate();
    arch.validate();
    if (source.empty()) throw ValidationError("train: empty source domain");
    const bool two_domain = !target.empty();

    Rng init_rng(derive_seed(config.seed, "model-init"));
    ModelParams params = ModelParams::init(arch, init_rng);
    nn::AdamState adam = nn::AdamState::init_like(params.trainable());

    Rng split_rng(derive_seed(config.seed, "train-test-split"));
    auto [src_train, src_test] = split_subjects(source, config.test_fraction, split_rng);
    auto [tgt_train, tgt_test] =
        two_domain ? split_subjects(target, config.test_fraction, split_rng)
                   : std::pair<std::vector<const TrainSubject*>, std::vector<const TrainSubject*>>{};

    // Materialized copies for batch assembly (reference order preserved).
    std::vector<TrainSubject> src_train_v, tgt_train_v;
    src_train_v.reserve(src_train.size());
    for (const auto* s : src_train) src_train_v.push_back(*s);
    tgt_train_v.reserve(tgt_train.size());
    for (const auto* s : tgt_train) tgt_train_v.push_back(*s);

    TrainResult result;
    const int total = config.total_epochs();
    ModelParams last_good = params;

    for (int epoch = 0; epoch < total; ++epoch) {
        const double lambda = config.ablate_lambda ? 0.0 : lambda_schedule(epoch, config);
        const double lr = lr_schedule(epoch, config);

        Rng batch_rng(derive_seed(config.seed, "batches-" + std::to_string(epoch)));
        Rng dropout_rng(derive_seed(config.seed, "dropout-" + std::to_string(epoch)));
        std::vector<Batch> batches =
            make_batches(src_train_v, tgt_train_v, config.batch_per_domain, config.day_dropout,
                         batch_rng);

        double label_loss_sum = 0.0;
        double domain_loss_sum = 0.0;
        bool exploded = false;
        for (Batch& batch : batches) {
            Graph g;
            const model::BoundModel bound = model::bind_params(g, params, true);
            const Graph::NodeId days = g.leaf(std::move(batch.days), false);
            const Graph::NodeId enc =
                model::encode_days(g, days, params, bound, true, &dropout_rng);
            const Graph::NodeId per_user =
                g.reshape(enc, {batch.rows, tracks::kDaysPerSlice, arch.descriptor_dim});
            const Graph::NodeId user = g.weighted_mean_axis1(per_user, batch.day_weights);
            const Graph::NodeId llab = model::label_logits_node(g, user, bound, params);
            const Graph::NodeId label_loss =
                g.softmax_cross_entropy(llab, batch.labels, batch.label_mask);
            Graph::NodeId loss = label_loss;
            Graph::NodeId domain_loss = -1;
            if (two_domain) {
                const Graph::NodeId ldom =
                    model::domain_logits_node(g, user, lambda, bound, params);
                domain_loss = g.softmax_cross_entropy(
                    ldom, batch.domains,
                    std::vector<std::uint8_t>(static_cast<std::size_t>(batch.rows), 1));
                loss = g.add(label_loss, domain_loss);
            }
            const double loss_value = g.value(loss)[0];
            if (!std::isfinite(loss_value)) {
                exploded = true;
                break;
            }
            label_loss_sum += g.value(label_loss)[0];
            if (two_domain) domain_loss_sum += g.value(domain_loss)[0];
            g.backward(loss);

            std::vector<const Tensor*> grads;
            grads.reserve(bound.param_nodes.size());
            for (const Graph::NodeId id : bound.param_nodes) grads.push_back(&g.grad(id));
            adam_step(bound.param_tensors, grads, adam, lr);
        }
        if (exploded) {
            result.diverged = true;
            result.diverged_epoch = epoch;
            result.params = std::move(last_good);
            return result;
        }

        Rng eval_rng(derive_seed(config.seed, "eval-" + std::to_string(epoch)));
        const EvalAccuracy train_acc =
            evaluate(params, src_train, tgt_train, config.eval_subsample, eval_rng);
        const EvalAccuracy test_acc =
            evaluate(params, src_test, tgt_test, config.eval_subsample, eval_rng);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.lambda = lambda;
        rec.label_acc_train = train_acc.label_acc;
        rec.label_acc_test = test_acc.label_acc;
        rec.domain_acc_train = train_acc.domain_acc;
        rec.domain_acc_test = test_acc.domain_acc;
        rec.label_loss = label_loss_sum / static_cast<double>(batches.size());
        rec.domain_loss =
            two_domain ? domain_loss_sum / static_cast<double>(batches.size()) : 0.0;
        result.records.push_back(rec);

        if (epoch >= total - config.best_window) {
            result.checkpoints.emplace_back(epoch, params);
        }
        last_good = params;
    }
    result.params = std::move(params);
    return result;
}

const ModelParams& select_best(const std::vector<EpochRecord>& records,
                               const std::vector<std::pair<int, ModelParams>>& checkpoints,
                               int window) {
    if (checkpoints.empty()) throw ValidationError("select_best: no checkpoints");
    if (static_cast<int>(records.size()) < window) {
        throw ValidationError("select_best: fewer records than the selection window");
    }
    const int first_epoch = records.back().epoch - window + 1;
    const ModelParams* best = nullptr;
    double best_acc = -1.0;
    int best_epoch = -1;
    for (const auto& [epoch, params] : checkpoints) {
        if (epoch < first_epoch) continue;
        const auto it = std::find_if(records.begin(), records.end(),
                                     [&](const EpochRecord& r) { return r.epoch == epoch; });
        if (it == records.end()) continue;
        const double acc = it->label_acc_train;
        if (acc > best_acc || (acc == best_acc && epoch > best_epoch)) {
            best_acc = acc;
            best_epoch = epoch;
            best = &params;
        }
    }
    if (!best) throw ValidationError("select_best: no checkpoint inside the window");
    return *best;
}

void write_learning_curves_csv(const std::vector<EpochRecord>& records,
                               const std::filesystem::path& path) {
    CsvWriter w(path);
    w.raw_line("epoch,lr,lambda,label_acc_train,label_acc_test,domain_acc_train,"
               "domain_acc_test,label_loss,domain_loss");
    for (const auto& r : records) {
        w.row({std::to_string(r.epoch), format_double(r.lr), format_double(r.lambda),
               format_double(r.label_acc_train), format_double(r.label_acc_test),
               format_double(r.domain_acc_train), format_double(r.domain_acc_test),
               format_double(r.label_loss), format_double(r.domain_loss)});
    }
}

} // namespace actirisk::trainer
