#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "gptrans/checkpoint.hpp"
#include "gptrans/config.hpp"
#include "gptrans/dataset.hpp"
#include "gptrans/losses.hpp"
#include "gptrans/networks.hpp"

namespace gptrans {

// Append-only CSV: iteration, one column per term, total, wall seconds.
class Telemetry {
public:
    Telemetry() = default;
    explicit Telemetry(const std::filesystem::path& path);
    void log(std::int64_t iteration, const std::map<std::string, double>& values, double total);

private:
    std::unique_ptr<std::ofstream> out_;
    std::vector<std::string> columns_;
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Extra generator objective, e.g. a face-identity loss. Receives the
// translated batch and the content batch; its value is weighted by
// config.lambda_id.
using IdentityHook = std::function<torch::Tensor(const torch::Tensor& translated, const torch::Tensor& content)>;

struct TrainOptions {
    std::filesystem::path out_dir;  // empty: no files written
    bool telemetry = true;
    int log_every = 0;              // progress line to stderr every N iterations, 0 = silent
    IdentityHook identity_hook;
};

struct IterationRecord {
    std::int64_t iteration = 0;
    LossReport report;
    std::map<std::string, double> extra;  // stage II discriminator loss etc.
};

// ------------------------------------------------------------- stage I -----

struct Stage1Data {
    std::vector<DomainData> paired;  // train split of every domain of a paired set
    std::vector<DomainData> real;    // optional unary stream
};

// Content distillation. Each step samples a batch of correlated pairs and
// real images, encodes them with noise injected into the content code,
// evaluates appearance/shape reconstruction, the pair distillation term and
// the reversed-gradient domain regulariser, and takes one Adam step over
// Ec, Es, F and C jointly.
class Stage1Trainer {
public:
    Stage1Trainer(const Config& config, Stage1Data data, TrainOptions options = {});

    IterationRecord step();
    // Runs until config.stage1_iterations, writing periodic and final
    // checkpoints. On divergence the latest good checkpoint stays on disk and
    // the DivergenceError propagates.
    Checkpoint run();

    // Continues from a checkpoint written by this trainer: parameters,
    // optimiser moments, sampler position and iteration counter.
    void resume(const Checkpoint& ckpt);
    Checkpoint checkpoint() const;
    NetworkBundle& bundle() { return bundle_; }
    std::int64_t iteration() const { return iteration_; }

private:
    Config config_;
    TrainOptions options_;
    NetworkBundle bundle_;
    std::shared_ptr<PerceptualExtractor> perceptual_;
    Stage1Sampler sampler_;
    std::unique_ptr<torch::optim::Adam> optimizer_;
    std::vector<std::pair<std::string, torch::Tensor>> params_;
    Telemetry telemetry_;
    std::int64_t iteration_ = 0;
};

Checkpoint train_stage1(const Config& config, Stage1Data data, const TrainOptions& options = {});

// ------------------------------------------------------------ stage II -----

struct Stage2Data {
    DomainData x;  // content domain
    DomainData y;  // style domain
};

// Adversarial translation X -> Y on top of a frozen stage I content encoder.
// One discriminator step, then one generator/style-encoder step per
// iteration.
class Stage2Trainer {
public:
    // Throws CheckpointError unless `stage1` is a stage I checkpoint whose
    // encoder matches `config`.
    Stage2Trainer(const Config& config, Stage2Data data, const Checkpoint& stage1, TrainOptions options = {});

    IterationRecord step();
    Checkpoint run();

    void resume(const Checkpoint& ckpt);
    Checkpoint checkpoint() const;
    NetworkBundle& bundle() { return bundle_; }
    std::int64_t iteration() const { return iteration_; }

private:
    Config config_;
    TrainOptions options_;
    NetworkBundle bundle_;
    std::shared_ptr<PerceptualExtractor> perceptual_;
    Stage2Sampler sampler_;
    std::unique_ptr<torch::optim::Adam> opt_g_;
    std::unique_ptr<torch::optim::Adam> opt_d_;
    std::vector<std::pair<std::string, torch::Tensor>> g_params_;
    std::vector<std::pair<std::string, torch::Tensor>> d_params_;
    Telemetry telemetry_;
    std::int64_t iteration_ = 0;
};

Checkpoint train_stage2(const Config& config, Stage2Data data, const Checkpoint& stage1,
                        const TrainOptions& options = {});

// ------------------------------------------------------------ style mapper --

// Fits the noise -> style mapper to the style codes of `style_images` by
// implicit maximum likelihood: each round draws mapper_candidates noise
// vectors per code, pairs every code with its nearest generated candidate and
// regresses the mapper onto those pairs. Throws InputError when fewer than
// config.mapper_min_samples images are supplied, CheckpointError unless
// `stage2` is a stage II checkpoint.
Checkpoint fit_style_mapper(const Checkpoint& stage2, const torch::Tensor& style_images, int log_every = 0);

// Style codes of a batch, evaluated in chunks without gradients.
torch::Tensor encode_styles(NetworkBundle& bundle, const torch::Tensor& images, int chunk = 64);

} // namespace gptrans
