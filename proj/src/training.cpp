#include "gptrans/training.hpp"

#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>

#include "gptrans/errors.hpp"
#include "gptrans/layers.hpp"
#include "gptrans/rng.hpp"

namespace gptrans {
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kNoiseStream = 1000;

std::vector<std::pair<std::string, torch::Tensor>> params_of(const NetworkBundle& bundle,
                                                             std::initializer_list<const char*> prefixes) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& [name, p] : bundle.named_parameters()) {
        for (const char* prefix : prefixes) {
            if (name.rfind(std::string(prefix) + ".", 0) == 0) {
                out.emplace_back(name, p);
                break;
            }
        }
    }
    return out;
}

std::unique_ptr<torch::optim::Adam> make_adam(const std::vector<std::pair<std::string, torch::Tensor>>& params,
                                              double lr, const Config& c) {
    std::vector<torch::Tensor> tensors;
    for (const auto& [name, p] : params) tensors.push_back(p);
    return std::make_unique<torch::optim::Adam>(
        tensors, torch::optim::AdamOptions(lr).betas({c.adam_beta1, c.adam_beta2}));
}

void set_requires_grad(const std::vector<std::pair<std::string, torch::Tensor>>& params, bool on) {
    for (const auto& [name, p] : params) p.set_requires_grad(on);
}

void progress(const char* stage, std::int64_t it, const LossReport& r) {
    std::cerr << stage << " iter " << it;
    for (const auto& [k, v] : r.terms) std::cerr << " " << k << "=" << std::setprecision(4) << v;
    std::cerr << " total=" << r.total << "\n";
}

fs::path rolling_path(const fs::path& dir, const char* stage) { return dir / (std::string(stage) + "_last.ckpt"); }

} // namespace

// ------------------------------------------------------------- telemetry ---

Telemetry::Telemetry(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_ = std::make_unique<std::ofstream>(path, std::ios::app);
    if (!*out_) throw IoError("cannot open telemetry file " + path.string());
}

void Telemetry::log(std::int64_t iteration, const std::map<std::string, double>& values, double total) {
    if (!out_) return;
    if (columns_.empty()) {
        *out_ << "iteration";
        for (const auto& [k, v] : values) {
            columns_.push_back(k);
            *out_ << "," << k;
        }
        *out_ << ",total,wall_time\n";
    }
    *out_ << iteration;
    for (const auto& k : columns_) {
        const auto it = values.find(k);
        if (it == values.end()) throw InputError("telemetry: term '" + k + "' missing at iteration " + std::to_string(iteration));
        *out_ << "," << std::setprecision(9) << it->second;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    *out_ << "," << std::setprecision(9) << total << "," << std::setprecision(6) << wall << "\n";
    out_->flush();
}

// ------------------------------------------------------------- stage I -----

Stage1Trainer::Stage1Trainer(const Config& config, Stage1Data data, TrainOptions options)
    : config_(config),
      options_(std::move(options)),
      bundle_(build_networks([&] {
          auto c = config;
          c.stage = 1;
          return c;
      }(), config.seed)),
      perceptual_(make_perceptual(config)),
      sampler_(std::move(data.paired), std::move(data.real), config.batch_pairs, config.batch_real,
               derive_seed(config.seed, 7)) {
    config_.stage = 1;
    torch::set_num_threads(config_.threads);
    params_ = bundle_.named_parameters();
    optimizer_ = make_adam(params_, config_.lr_stage1, config_);
    if (!options_.out_dir.empty() && options_.telemetry) {
        telemetry_ = Telemetry(options_.out_dir / "stage1_telemetry.csv");
    }
    bundle_.train(true);
}

IterationRecord Stage1Trainer::step() {
    const auto batch = sampler_.next();
    const auto pairs = batch.x.size(0);
    const auto images = torch::cat({batch.x, batch.y, batch.real});
    const auto labels = torch::cat({batch.label_x, batch.label_y, batch.real_label});
    const auto segs = torch::cat({batch.seg_x, batch.seg_y, batch.real_seg});

    auto gen = make_generator(derive_seed(config_.seed + kNoiseStream, static_cast<std::uint64_t>(iteration_)));
    const auto content = bundle_.ec->forward(images);
    const auto noisy = inject_noise(content.code, config_.content_noise_std, gen);
    const auto style = bundle_.distill_es->forward(images);

    Stage1Terms terms;
    const auto recon = bundle_.decoder->decode_appearance(noisy, style, labels);
    terms.arec = loss_arec(recon, images, *perceptual_);
    const auto shape = bundle_.decoder->decode_shape(noisy, labels);
    terms.srec = loss_srec(shape, segs, config_.lambda_s);

    const auto code_x = content.code.narrow(0, 0, pairs);
    const auto code_y = content.code.narrow(0, pairs, pairs);
    const auto shape_from_y = bundle_.decoder->decode_shape(noisy.narrow(0, pairs, pairs), batch.label_x);
    terms.dis = loss_dis(code_x, code_y, shape_from_y, batch.seg_x, config_.lambda_s);

    const auto logits = bundle_.classifier->forward(grad_reverse(content.code));
    const auto reg = loss_reg(logits, labels, content.code, config_.lambda_r);
    terms.reg = reg.classifier + reg.norm;

    auto total = stage1_total(terms);
    optimizer_->zero_grad();
    total.total.backward();
    optimizer_->step();
    ++iteration_;

    IterationRecord rec;
    rec.iteration = iteration_;
    rec.report = total.report;
    rec.extra["reg_classifier"] = reg.classifier.item<double>();
    rec.extra["reg_norm"] = reg.norm.item<double>();
    auto logged = rec.report.terms;
    logged.insert(rec.extra.begin(), rec.extra.end());
    telemetry_.log(iteration_, logged, rec.report.total);
    if (options_.log_every > 0 && iteration_ % options_.log_every == 0) progress("stage1", iteration_, rec.report);
    return rec;
}

Checkpoint Stage1Trainer::checkpoint() const {
    nlohmann::json rng = {{"seed", config_.seed}, {"sampler", sampler_.state()}};
    return snapshot(bundle_, {{"adam", optimizer_.get(), params_}}, iteration_, rng, perceptual_->id());
}

void Stage1Trainer::resume(const Checkpoint& ckpt) {
    restore_bundle(ckpt, 1);  // stage and layout check
    for (const auto& [prefix, module] : bundle_.modules()) load_module_arrays(ckpt, prefix, *module);
    restore_optimizers(ckpt, {{"adam", optimizer_.get(), params_}});
    sampler_.restore(ckpt.rng.at("sampler"));
    iteration_ = ckpt.iteration;
}

Checkpoint Stage1Trainer::run() {
    const bool write = !options_.out_dir.empty();
    while (iteration_ < config_.stage1_iterations) {
        try {
            step();
        } catch (const DivergenceError& e) {
            const auto last = rolling_path(options_.out_dir, "stage1");
            throw DivergenceError(e.term, std::string(e.what()) + " at iteration " + std::to_string(iteration_ + 1) +
                                              (write && fs::exists(last) ? "; last good checkpoint: " + last.string()
                                                                         : ""));
        }
        if (write && config_.checkpoint_every > 0 && iteration_ % config_.checkpoint_every == 0) {
            save_checkpoint(checkpoint(), rolling_path(options_.out_dir, "stage1"));
        }
    }
    auto final = checkpoint();
    if (write) save_checkpoint(final, options_.out_dir / "stage1.ckpt");
    return final;
}

Checkpoint train_stage1(const Config& config, Stage1Data data, const TrainOptions& options) {
    Stage1Trainer trainer(config, std::move(data), options);
    return trainer.run();
}

// ------------------------------------------------------------ stage II -----

Stage2Trainer::Stage2Trainer(const Config& config, Stage2Data data, const Checkpoint& stage1, TrainOptions options)
    : config_(config),
      options_(std::move(options)),
      bundle_(build_networks([&] {
          auto c = config;
          c.stage = 2;
          return c;
      }(), config.seed)),
      perceptual_(make_perceptual(config)),
      sampler_(std::move(data.x), std::move(data.y), config.batch, derive_seed(config.seed, 8)) {
    config_.stage = 2;
    if (stage1.stage != "stage1") {
        throw CheckpointError("stage II training needs a stage1 checkpoint, got " + stage1.stage);
    }
    if (stage1.config.image_size != config_.image_size || stage1.config.channel_divisor != config_.channel_divisor) {
        throw CheckpointError("stage I checkpoint was trained with a different image_size or channel_divisor");
    }
    torch::set_num_threads(config_.threads);
    load_module_arrays(stage1, "ec", *bundle_.ec);
    for (auto& p : bundle_.ec->parameters()) p.set_requires_grad(false);
    bundle_.ec->eval();

    g_params_ = params_of(bundle_, {"es", "generator"});
    d_params_ = params_of(bundle_, {"discriminator"});
    opt_g_ = make_adam(g_params_, config_.lr_stage2, config_);
    opt_d_ = make_adam(d_params_, config_.lr_stage2, config_);
    for (auto& p : bundle_.mapper->parameters()) p.set_requires_grad(false);
    if (!options_.out_dir.empty() && options_.telemetry) {
        telemetry_ = Telemetry(options_.out_dir / "stage2_telemetry.csv");
    }
    bundle_.es->train(true);
    bundle_.generator->train(true);
    bundle_.discriminator->train(true);
}

IterationRecord Stage2Trainer::step() {
    const auto batch = sampler_.next();
    ContentCode cx, cy;
    {
        torch::NoGradGuard no_grad;
        cx = bundle_.ec->forward(batch.x);
        cy = bundle_.ec->forward(batch.y);
    }
    const auto style_y = bundle_.es->forward(batch.y);
    const auto out = bundle_.generator->forward(cx, style_y, SkipMode::Fused);

    // Discriminator step on the detached translation.
    set_requires_grad(d_params_, true);
    const auto d_real = bundle_.discriminator->forward(batch.y);
    const auto d_fake = bundle_.discriminator->forward(out.image.detach());
    const auto d_loss = loss_adv_d(d_real.logits, d_fake.logits);
    if (!std::isfinite(d_loss.item<double>())) throw DivergenceError("adv_d", "loss term 'adv_d' is not finite");
    opt_d_->zero_grad();
    d_loss.backward();
    opt_d_->step();

    // Generator / style-encoder step.
    set_requires_grad(d_params_, false);
    torch::Tensor ref_style;
    {
        torch::NoGradGuard no_grad;
        ref_style = bundle_.discriminator->forward(batch.y).style_feature;
    }
    const auto fake = bundle_.discriminator->forward(out.image);
    Stage2Terms terms;
    terms.adv = loss_adv_g(fake.logits);
    terms.con = loss_con(bundle_.ec->forward(out.image).code, cx.code);
    terms.sty = loss_sty(fake.style_feature, ref_style);
    terms.msk = out.masks.empty() ? torch::zeros({}, out.image.options()) : mask_sparsity(out.masks);
    const auto recon =
        bundle_.generator->forward(cy, style_y, config_.rec_through_dsc ? SkipMode::Fused : SkipMode::ZeroMask);
    terms.rec = loss_rec(recon.image, batch.y, *perceptual_);
    if (options_.identity_hook) terms.id = options_.identity_hook(out.image, batch.x);

    auto total = stage2_total(terms, config_);
    opt_g_->zero_grad();
    total.total.backward();
    opt_g_->step();
    ++iteration_;

    IterationRecord rec;
    rec.iteration = iteration_;
    rec.report = total.report;
    rec.extra["adv_d"] = d_loss.item<double>();
    auto logged = rec.report.terms;
    logged.insert(rec.extra.begin(), rec.extra.end());
    telemetry_.log(iteration_, logged, rec.report.total);
    if (options_.log_every > 0 && iteration_ % options_.log_every == 0) progress("stage2", iteration_, rec.report);
    return rec;
}

Checkpoint Stage2Trainer::checkpoint() const {
    nlohmann::json rng = {{"seed", config_.seed}, {"sampler", sampler_.state()}};
    return snapshot(bundle_, {{"adam_g", opt_g_.get(), g_params_}, {"adam_d", opt_d_.get(), d_params_}}, iteration_,
                    rng, perceptual_->id());
}

void Stage2Trainer::resume(const Checkpoint& ckpt) {
    restore_bundle(ckpt, 2);  // stage and layout check
    for (const auto& [prefix, module] : bundle_.modules()) load_module_arrays(ckpt, prefix, *module);
    bundle_.mapper_trained = ckpt.mapper_trained;
    restore_optimizers(ckpt, {{"adam_g", opt_g_.get(), g_params_}, {"adam_d", opt_d_.get(), d_params_}});
    sampler_.restore(ckpt.rng.at("sampler"));
    iteration_ = ckpt.iteration;
}

Checkpoint Stage2Trainer::run() {
    const bool write = !options_.out_dir.empty();
    while (iteration_ < config_.stage2_iterations) {
        try {
            step();
        } catch (const DivergenceError& e) {
            const auto last = rolling_path(options_.out_dir, "stage2");
            throw DivergenceError(e.term, std::string(e.what()) + " at iteration " + std::to_string(iteration_ + 1) +
                                              (write && fs::exists(last) ? "; last good checkpoint: " + last.string()
                                                                         : ""));
        }
        if (write && config_.checkpoint_every > 0 && iteration_ % config_.checkpoint_every == 0) {
            save_checkpoint(checkpoint(), rolling_path(options_.out_dir, "stage2"));
        }
    }
    auto final = checkpoint();
    if (write) save_checkpoint(final, options_.out_dir / "stage2.ckpt");
    return final;
}

Checkpoint train_stage2(const Config& config, Stage2Data data, const Checkpoint& stage1, const TrainOptions& options) {
    Stage2Trainer trainer(config, std::move(data), stage1, options);
    return trainer.run();
}

// ------------------------------------------------------------ style mapper --

torch::Tensor encode_styles(NetworkBundle& bundle, const torch::Tensor& images, int chunk) {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> parts;
    for (std::int64_t i = 0; i < images.size(0); i += chunk) {
        parts.push_back(bundle.style_encode(images.narrow(0, i, std::min<std::int64_t>(chunk, images.size(0) - i))));
    }
    return torch::cat(parts);
}

Checkpoint fit_style_mapper(const Checkpoint& stage2, const torch::Tensor& style_images, int log_every) {
    auto bundle = restore_bundle(stage2, 2);
    const auto& cfg = bundle.config;
    if (style_images.size(0) < cfg.mapper_min_samples) {
        throw InputError("style mapper needs at least " + std::to_string(cfg.mapper_min_samples) +
                         " style samples, got " + std::to_string(style_images.size(0)));
    }
    torch::set_num_threads(cfg.threads);
    bundle.train(false);
    const auto codes = encode_styles(bundle, style_images);
    const auto n = codes.size(0);

    auto gen = make_generator(derive_seed(cfg.seed, 31));
    init_weights(*bundle.mapper, gen);
    {
        // start at the empirical mean
        torch::NoGradGuard no_grad;
        auto last = std::dynamic_pointer_cast<torch::nn::LinearImpl>(bundle.mapper->body->children().back());
        last->bias.copy_(codes.mean(0));
    }
    for (auto& p : bundle.mapper->parameters()) p.set_requires_grad(true);
    bundle.mapper->train(true);
    torch::optim::Adam opt(bundle.mapper->parameters(), torch::optim::AdamOptions(cfg.mapper_lr));
    constexpr std::int64_t kMinibatch = 64;
    SplitMix64 order_rng(derive_seed(cfg.seed, 32));

    for (int round = 0; round < cfg.mapper_rounds; ++round) {
        const auto candidates = torch::empty({n * cfg.mapper_candidates, cfg.mapper_noise_dim}).normal_(0.0, 1.0, gen);
        torch::Tensor matched;
        {
            torch::NoGradGuard no_grad;
            const auto generated = bundle.mapper->forward(candidates);
            // nearest unused candidate, codes visited in random order
            auto dist = torch::cdist(codes, generated).contiguous();
            std::vector<std::int64_t> visit(static_cast<std::size_t>(n));
            std::iota(visit.begin(), visit.end(), 0);
            order_rng.shuffle(visit);
            std::vector<std::int64_t> nearest(static_cast<std::size_t>(n));
            for (const auto row : visit) {
                const auto j = dist[row].argmin().item<std::int64_t>();
                nearest[static_cast<std::size_t>(row)] = j;
                dist.select(1, j).fill_(std::numeric_limits<float>::infinity());
            }
            matched = candidates.index_select(0, torch::tensor(nearest, torch::kInt64));
        }
        double last = 0.0;
        for (int s = 0; s < cfg.mapper_steps_per_round; ++s) {
            std::vector<std::int64_t> pick(static_cast<std::size_t>(std::min(kMinibatch, n)));
            for (auto& v : pick) v = static_cast<std::int64_t>(order_rng.below(static_cast<std::uint64_t>(n)));
            const auto idx = torch::tensor(pick, torch::kInt64);
            const auto loss =
                (bundle.mapper->forward(matched.index_select(0, idx)) - codes.index_select(0, idx)).square().sum(1).mean();
            opt.zero_grad();
            loss.backward();
            opt.step();
            last = loss.item<double>();
        }
        if (!std::isfinite(last)) throw DivergenceError("mapper", "style mapper fit diverged");
        if (log_every > 0 && (round + 1) % log_every == 0) {
            std::cerr << "mapper round " << round + 1 << " loss=" << last << "\n";
        }
    }
    for (auto& p : bundle.mapper->parameters()) p.set_requires_grad(false);
    bundle.mapper_trained = true;
    auto out = snapshot(bundle, {}, stage2.iteration, stage2.rng, stage2.perceptual);
    // Keep the stage II optimiser moments so training can continue.
    for (const auto& [name, t] : stage2.arrays) {
        if (name.rfind("optim.", 0) == 0) out.arrays.emplace_back(name, t);
    }
    out.optimizer_steps = stage2.optimizer_steps;
    std::sort(out.arrays.begin(), out.arrays.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

} // namespace gptrans
