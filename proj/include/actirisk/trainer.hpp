#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "actirisk/dann_model.hpp"
#include "actirisk/rng.hpp"
#include "actirisk/tracks.hpp"

namespace actirisk::trainer {

struct TrainSubject {
    std::string id;
    double age = 0.0;
    int sex = 0;
    int domain = 0; // 0 source, 1 target
    int label = 0;  // 0 healthy, 1 morbid (meaningful for source only)
    std::vector<tracks::WeekSlice> slices;
};

// The 600-epoch schedule: 100 epochs at lambda 0 with lr 5e-3/2e-3/1e-3
// (20/40/40), a 300-epoch lambda ramp in 15 steps at lr 1e-3, 50 epochs at
// lambda 0.1, 50 at lr 3e-4 and 100 at lr 1e-5. scaled(divisor) shrinks every
// phase proportionally for desk-scale runs.
struct TrainConfig {
    int batch_per_domain = 64;

    int lr_stage1_epochs = 20;
    int lr_stage2_epochs = 40;
    int lr_stage3_epochs = 40;
    int ramp_epochs = 300;
    int ramp_steps = 15;
    int plateau_epochs = 50;
    int decay_epochs = 50;
    int final_epochs = 100;

    double lambda_max = 0.1;
    double lr1 = 5e-3, lr2 = 2e-3, lr3 = 1e-3;
    double lr_decay = 3e-4, lr_final = 1e-5;

    std::uint64_t seed = 0;
    int eval_subsample = 2000;
    int best_window = 25;
    double test_fraction = 0.2;
    double day_dropout = 0.0;   // optional sparsity transform on source slices
    bool ablate_lambda = false; // lambda held at 0 (source-only classifier analog)

    int phase1_epochs() const { return lr_stage1_epochs + lr_stage2_epochs + lr_stage3_epochs; }
    int total_epochs() const {
        return phase1_epochs() + ramp_epochs + plateau_epochs + decay_epochs + final_epochs;
    }
    void validate() const;
    static TrainConfig scaled(int divisor);
};

// lambda(epoch): 0 during phase 1, then lambda_max * sigma(-5 + 9n/14) over the
// ramp steps, then lambda_max.
double lambda_schedule(int epoch, const TrainConfig& config = {});
double lr_schedule(int epoch, const TrainConfig& config = {});

// Drops target subjects outside [age_lo, age_hi) and, within each 5-year bin,
// subsamples the larger domain down to the smaller so per-bin counts match.
std::pair<std::vector<TrainSubject>, std::vector<TrainSubject>> balance_age_distribution(
    std::vector<TrainSubject> source, std::vector<TrainSubject> target, std::uint64_t seed,
    int bin_years = 5, double age_lo = 45.0, double age_hi = 85.0);

struct Batch {
    nn::Tensor days;                     // [rows*7, 96, 1]
    std::vector<int> labels;             // per user row
    std::vector<std::uint8_t> label_mask;
    std::vector<int> domains;
    std::vector<double> day_weights;     // [rows, 7] row-normalized pooling weights
    int rows = 0;
};

// Shuffled batches of batch_per_domain source users followed by the same
// number of target users, one randomly chosen WeekSlice per subject. Trailing
// partial batches are dropped. With empty target, batches are source-only.
std::vector<Batch> make_batches(const std::vector<TrainSubject>& source,
                                const std::vector<TrainSubject>& target, int batch_per_domain,
                                double day_dropout, Rng& rng);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double lambda = 0.0;
    double label_acc_train = 0.0;
    double label_acc_test = 0.0;
    double domain_acc_train = 0.0;
    double domain_acc_test = 0.0;
    double label_loss = 0.0;
    double domain_loss = 0.0;
};

struct TrainResult {
    model::ModelParams params; // last epoch (or last good state when diverged)
    std::vector<std::pair<int, model::ModelParams>> checkpoints; // final window
    std::vector<EpochRecord> records;
    bool diverged = false;
    int diverged_epoch = -1;
};

// Full loop: per batch, total loss = label cross-entropy on source rows plus
// domain cross-entropy through gradient reversal at lambda(epoch); Adam at
// lr(epoch); per-epoch metrics on seeded eval subsamples; checkpoints over the
// final best_window epochs. NaN loss aborts with the last good parameters.
TrainResult train(const TrainConfig& config, const model::ArchitectureConfig& arch,
                  const std::vector<TrainSubject>& source,
                  const std::vector<TrainSubject>& target);

// Checkpoint with the highest training label accuracy within the final
// window; ties resolved toward the latest epoch.
const model::ModelParams& select_best(const std::vector<EpochRecord>& records,
                                      const std::vector<std::pair<int, model::ModelParams>>& checkpoints,
                                      int window = 25);

void write_learning_curves_csv(const std::vector<EpochRecord>& records,
                               const std::filesystem::path& path);

} // namespace actirisk::trainer
