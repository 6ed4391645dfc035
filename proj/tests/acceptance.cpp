// Acceptance run: one line per criterion, exit status 0 only if all pass.
//
//   acceptance [N ...] [--data=DIR] [--stage1=CKPT] [--stage2=CKPT]
//
// With no numbers every criterion runs. --data/--stage1/--stage2 reuse earlier
// artifacts instead of forging/training again.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>

#include "gptrans/checkpoint.hpp"
#include "gptrans/dataset.hpp"
#include "gptrans/dynamic_skip.hpp"
#include "gptrans/errors.hpp"
#include "gptrans/inference.hpp"
#include "gptrans/layers.hpp"
#include "gptrans/losses.hpp"
#include "gptrans/metrics.hpp"
#include "gptrans/networks.hpp"
#include "gptrans/training.hpp"
#include "dsc_reference.hpp"
#include "support.hpp"

using namespace gptrans;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [x]");
    }
};

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void progress(const std::string& m) { std::cerr << "[acceptance] " << m << std::endl; }

// ------------------------------------------------------------ shared state --

struct Study {
    fs::path work;
    std::optional<fs::path> data_override, stage1_override, stage2_override;

    std::optional<DatasetManifest> manifest;
    std::optional<Checkpoint> stage1;
    std::optional<Checkpoint> stage2;
    double stage1_seconds = -1, stage2_seconds = -1;
    double con_at_init = -1;

    static constexpr std::uint64_t kSeed = 11;

    Config stage1_config() const {
        Config c;
        c.stage = 1;
        c.channel_divisor = 8;
        c.stage1_iterations = 2000;
        c.content_noise_std = 0.0;
        c.seed = kSeed;
        return c;
    }

    Config stage2_config() const {
        Config c;
        c.stage = 2;
        c.channel_divisor = 8;
        c.stage2_iterations = 3000;
        c.batch = 8;
        c.lambda_con = 10.0;
        c.lambda_rec = 20.0;
        c.seed = kSeed;
        return c;
    }

    const DatasetManifest& data() {
        if (!manifest) {
            if (data_override) {
                manifest = DatasetManifest::load(*data_override);
            } else {
                progress("forging 2 x 650 images");
                ForgeOptions o;
                o.seed = kSeed;
                manifest = forge_dataset(work / "forge", o);
            }
        }
        return *manifest;
    }
};

// Test split of a domain as a batch plus its segmentation maps.
DomainData test_split(Study& s, int domain) { return load_domain(s.data(), domain, Split::Test); }

// --------------------------------------------------------------------- 1 ---

DynamicSkip random_unit(int hidden, int channels, std::uint64_t seed, double weight_std) {
    DynamicSkip unit(hidden, channels);
    auto gen = make_generator(seed);
    torch::NoGradGuard ng;
    for (auto& p : unit->parameters()) p.normal_(0.0, weight_std, gen);
    return unit;
}

Outcome dsc_oracle() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto unit = random_unit(2, 2, seed, 0.5);
        auto gen = make_generator(1000 + seed);
        const auto h_prev = torch::randn({1, 2, 2, 2}, gen);
        const auto f_enc = torch::randn({1, 2, 4, 4}, gen);
        const auto f_gen = torch::randn({1, 2, 4, 4}, gen);
        torch::NoGradGuard ng;
        const auto out = unit->forward(h_prev, f_enc, f_gen);
        const auto ref = gptrans::testing::reference(*unit, h_prev, f_enc, f_gen);
        worst = std::max({worst, gptrans::testing::max_diff(out.fused, ref.fused),
                          gptrans::testing::max_diff(out.hidden, ref.hidden),
                          gptrans::testing::max_diff(out.mask, ref.mask)});
    }
    const double elapsed = seconds_since(t0);
    o.check(worst < 1e-5, "max abs err " + fmt(worst) + " over 100 seeds");
    o.check(elapsed < 10.0, "runtime " + fmt(elapsed, 3) + " s");
    return o;
}

// --------------------------------------------------------------------- 2 ---

Outcome dsc_sandwich() {
    Outcome o;
    int violations = 0, out_of_range = 0;
    double min_mask = 1.0, max_mask = 0.0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        auto unit = random_unit(3, 2, seed, 0.3);
        auto gen = make_generator(5000 + seed);
        const auto h_prev = torch::randn({1, 3, 2, 2}, gen);
        const auto f_enc = torch::randn({1, 2, 4, 4}, gen) * 3;
        const auto f_gen = torch::randn({1, 2, 4, 4}, gen) * 3;
        torch::NoGradGuard ng;
        const auto out = unit->forward(h_prev, f_enc, f_gen);
        const auto f_hat = torch::leaky_relu(unit->w_e->forward(torch::cat({out.hidden, f_enc}, 1)), 0.2);
        const auto lo = torch::minimum(f_gen, f_hat) - 1e-6;
        const auto hi = torch::maximum(f_gen, f_hat) + 1e-6;
        if (!((out.fused >= lo).all().item<bool>() && (out.fused <= hi).all().item<bool>())) ++violations;
        if (!((out.mask > 0).all().item<bool>() && (out.mask < 1).all().item<bool>())) ++out_of_range;
        min_mask = std::min(min_mask, out.mask.min().item<double>());
        max_mask = std::max(max_mask, out.mask.max().item<double>());
    }
    o.check(violations == 0, std::to_string(violations) + "/1000 outside [min, max]");
    o.check(out_of_range == 0, "mask range [" + fmt(min_mask) + ", " + fmt(max_mask) + "]");
    return o;
}

// --------------------------------------------------------------------- 3 ---

Outcome zero_mask_ablation() {
    Outcome o;
    Config c;
    c.stage = 2;
    c.channel_divisor = 8;
    auto bundle = build_networks(c, 4);
    auto gen = make_generator(5);
    torch::NoGradGuard ng;
    for (auto& p : bundle.generator->skip1->parameters()) p.normal_(0.0, 0.2, gen);
    for (auto& p : bundle.generator->skip2->parameters()) p.normal_(0.0, 0.2, gen);
    bundle.train(false);
    const auto x = torch::rand({4, 3, 64, 64}, gen) * 2 - 1;
    const auto y = torch::rand({4, 3, 64, 64}, gen) * 2 - 1;
    const auto code = bundle.content_encode(x);
    const auto style = bundle.style_encode(y);
    const auto zero = bundle.generate(code, style, SkipMode::ZeroMask).image;
    const auto off = bundle.generate(code, style, SkipMode::Disabled).image;
    const auto fused = bundle.generate(code, style, SkipMode::Fused).image;
    const double diff = (zero - off).abs().max().item<double>();
    o.check(diff <= 1e-6, "zero-mask vs disabled " + fmt(diff));
    o.check((fused - off).abs().max().item<double>() > 1e-6, "fused path differs");
    return o;
}

// --------------------------------------------------------------------- 4 ---

Outcome gradient_reversal() {
    Outcome o;
    auto w = torch::tensor({0.7, -0.4}, torch::kDouble).requires_grad_(true);
    const auto x = torch::tensor({1.3, 0.2}, torch::kDouble);
    auto plain = (torch::tanh(w * x) * 2).square().sum();
    const auto g_plain = torch::autograd::grad({plain}, {w})[0];
    auto reversed = (grad_reverse(torch::tanh(w * x)) * 2).square().sum();
    const auto g_rev = torch::autograd::grad({reversed}, {w})[0];
    const double rel = ((g_rev + g_plain).abs().max() / g_plain.abs().max()).item<double>();
    o.check(rel < 1e-6, "sign test rel err " + fmt(rel));

    const auto in = torch::tensor({0.8, -1.1}, torch::kDouble);
    auto f_plain = [&](const torch::Tensor& t) {
        return torch::tanh(t[0] * in[0] + t[1] * in[1] + t[2]).square().sum() * 3.0;
    };
    const auto theta0 = torch::tensor({0.3, 0.5, -0.2}, torch::kDouble);
    auto theta = theta0.clone().requires_grad_(true);
    auto rev = grad_reverse(torch::tanh(theta[0] * in[0] + theta[1] * in[1] + theta[2])).square().sum() * 3.0;
    const auto g = torch::autograd::grad({rev}, {theta})[0];
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        auto tp = theta0.clone();
        auto tm = theta0.clone();
        tp[i] += 1e-6;
        tm[i] -= 1e-6;
        const double fd = (f_plain(tp).item<double>() - f_plain(tm).item<double>()) / 2e-6;
        worst = std::max(worst, std::abs(g[i].item<double>() + fd) / std::abs(fd));
    }
    o.check(worst < 1e-4, "3-parameter finite difference rel err " + fmt(worst));
    return o;
}

// --------------------------------------------------------------------- 5 ---

Outcome adain_statistics() {
    Outcome o;
    Config c;
    c.stage = 2;
    auto bundle = build_networks(c, 5);
    auto gen = make_generator(6);
    double worst_mean = 0.0, worst_std = 0.0;
    std::set<std::int64_t> widths;
    for (const auto& child : bundle.generator->blocks->children()) {
        auto block = std::dynamic_pointer_cast<AdaResBlockImpl>(child);
        if (!block) continue;
        for (auto* mod : {&block->mod1, &block->mod2}) {
            {
                torch::NoGradGuard ng;
                for (auto& p : (*mod)->parameters()) p.normal_(0.0, 0.1, gen);
            }
            torch::NoGradGuard ng;
            const auto style = torch::randn({2, kStyleDim}, gen);
            const auto [scale, shift] = (*mod)->forward(style);
            const auto width = scale.size(1);
            widths.insert(width);
            const auto x = torch::randn({2, width, 8, 8}, gen) * 1.7 - 0.3;
            const auto y = adain(x, scale, shift).to(torch::kDouble);
            const auto mean = y.mean({2, 3});
            const auto sd = y.var({2, 3}, false).sqrt();
            worst_mean = std::max(worst_mean, (mean - shift.to(torch::kDouble)).abs().max().item<double>());
            worst_std = std::max(worst_std, (sd - scale.abs().to(torch::kDouble)).abs().max().item<double>());
        }
    }
    std::string ws;
    for (auto w : widths) ws += (ws.empty() ? "" : ",") + std::to_string(w);
    o.check(worst_mean < 1e-4, "mean err " + fmt(worst_mean));
    o.check(worst_std < 1e-3, "std err " + fmt(worst_std) + " at widths {" + ws + "}");
    return o;
}

// --------------------------------------------------------------------- 6 ---

Outcome loss_units() {
    Outcome o;
    const IdentityExtractor id;
    auto t = [](std::initializer_list<double> v, std::vector<std::int64_t> shape) {
        return torch::tensor(std::vector<double>(v), torch::kDouble).reshape(shape);
    };
    auto v = [](const torch::Tensor& x) { return x.item<double>(); };
    auto sp = [](double x) { return std::log1p(std::exp(x)); };
    const double ln2 = std::log(2.0);

    const auto a = t({0.5, 0.0, 1.0, -0.25}, {1, 1, 2, 2});
    const auto b = t({0.0, 0.5, 0.0, -0.25}, {1, 1, 2, 2});
    const auto code = t({0.2, -0.4, 0.6, 0.1}, {1, 1, 2, 2});
    const auto shape = t({0.0, 1.0, 0.5, 0.25}, {1, 1, 2, 2});
    const auto code_y = t({0.1, -0.1, 0.4, 0.1}, {1, 1, 2, 2});
    const auto shape_y = t({0.5, 1.0, 0.25, 0.0}, {1, 1, 2, 2});
    const auto gt = torch::zeros({2, 1, 4, 4}, torch::kDouble);
    const auto logits0 = torch::zeros({3, 2}, torch::kDouble);
    const auto labels = torch::tensor({0, 1, 1}, torch::kInt64);
    const auto zc = torch::zeros({3, 1, 2, 2}, torch::kDouble);
    const auto real = t({1.0, 2.0}, {2});
    const auto fake = t({0.5, 3.0}, {2});
    const auto s = t({0.1, 0.2, -0.3}, {1, 3});
    const auto one = torch::ones({}, torch::kDouble);
    const auto zero = torch::zeros({}, torch::kDouble);

    struct Example {
        const char* name;
        double got, want, tol;
    };
    const std::vector<Example> examples = {
        {"arec", v(loss_arec(a, b, id)), 0.875, 0},
        {"arec_same", v(loss_arec(a, a, id)), 0.0, 0},
        {"rec", v(loss_rec(a, b, id)), 1.0, 0},
        {"srec", v(loss_srec(torch::ones_like(gt), gt, 5.0)), 5.0, 0},
        {"dis_same", v(loss_dis(code, code, shape, shape, 5.0)), 0.0, 0},
        {"dis", v(loss_dis(code, code_y, shape_y, shape, 5.0)), 1.4, 1e-12},
        {"reg_ce", v(loss_reg(logits0, labels, zc, 0.001).classifier), ln2, 1e-12},
        {"reg_norm", v(loss_reg(logits0, labels, zc + 2.0, 0.001).norm), 0.002, 1e-15},
        {"adv_d_zero", v(loss_adv_d(torch::zeros({4}, torch::kDouble), torch::zeros({4}, torch::kDouble))), 2 * ln2,
         1e-12},
        {"adv_g_zero", v(loss_adv_g(torch::zeros({4}, torch::kDouble))), ln2, 1e-12},
        {"adv_d", v(loss_adv_d(real, fake)), (sp(-1) + sp(-2)) / 2 + (sp(0.5) + sp(3)) / 2, 1e-12},
        {"adv_g", v(loss_adv_g(fake)), (sp(-0.5) + sp(-3)) / 2, 1e-12},
        {"sty", v(loss_sty(s, s + 2.0)), 2.0, 1e-12},
        {"con", v(loss_con(code + 0.3, code)), 0.3, 1e-12},
        {"msk", v(mask_sparsity({torch::full({1, 2, 2, 2}, 0.25), torch::full({1, 2, 2, 2}, 0.5)})), 0.75, 0},
        {"stage1_total", stage1_total({one, one, one, one}).report.total, 4.0, 0},
        {"stage2_total", stage2_total({one, one, one, one, one, {}}, Config{}).report.total, 54.0, 0},
        {"stage2_zero", stage2_total({zero, zero, zero, zero, zero, {}}, Config{}).report.total, 0.0, 0},
    };
    int failed = 0;
    std::string which;
    for (const auto& e : examples) {
        if (!(std::abs(e.got - e.want) <= e.tol)) {
            ++failed;
            which += std::string(" ") + e.name + "=" + fmt(e.got, 10);
        }
    }
    o.check(failed == 0, std::to_string(examples.size() - failed) + "/" + std::to_string(examples.size()) +
                             " analytic examples" + which);

    auto gen = make_generator(13);
    auto rnd = [&](std::vector<std::int64_t> shape_) { return torch::randn(shape_, gen).to(torch::kDouble); };
    const auto target = rnd({1, 2, 2, 2});
    const auto small = rnd({1, 1, 2, 2});
    const auto other = rnd({1, 1, 2, 2});
    const auto lab2 = torch::tensor({1, 0}, torch::kInt64);
    const auto logits = rnd({2, 2});
    using Fn = std::function<torch::Tensor(const torch::Tensor&)>;
    const std::vector<std::tuple<const char*, Fn, torch::Tensor>> cases = {
        {"arec", [&](const torch::Tensor& x) { return loss_arec(x, target, id); }, rnd({1, 2, 2, 2})},
        {"rec", [&](const torch::Tensor& x) { return loss_rec(x, target, id); }, rnd({1, 2, 2, 2})},
        {"srec", [&](const torch::Tensor& x) { return loss_srec(x, small, 5.0); }, rnd({1, 1, 2, 2})},
        {"dis", [&](const torch::Tensor& x) { return loss_dis(x, other, x * 0.5, small, 5.0); }, rnd({1, 1, 2, 2})},
        {"reg_ce", [&](const torch::Tensor& x) { return loss_reg(x, lab2, other, 0.001).classifier; }, rnd({2, 4})},
        {"reg_norm", [&](const torch::Tensor& x) { return loss_reg(logits, lab2, x, 0.001).norm; }, rnd({2, 1, 2, 2})},
        {"adv_d", [&](const torch::Tensor& x) { return loss_adv_d(x.narrow(0, 0, 4), x.narrow(0, 4, 4)); }, rnd({8})},
        {"adv_g", [&](const torch::Tensor& x) { return loss_adv_g(x); }, rnd({8})},
        {"sty", [&](const torch::Tensor& x) { return loss_sty(x, other.reshape({1, 4})); }, rnd({1, 4})},
        {"con", [&](const torch::Tensor& x) { return loss_con(x, other); }, rnd({1, 1, 2, 2})},
        {"msk", [&](const torch::Tensor& x) { return mask_sparsity({x.narrow(0, 0, 1), x.narrow(0, 1, 1)}); },
         torch::rand({2, 1, 2, 2}, gen).to(torch::kDouble) + 0.05},
    };
    double worst = 0.0;
    std::string worst_name;
    for (const auto& [name, f, x] : cases) {
        const double e = gptrans::testing::gradcheck(f, x);
        if (e > worst) {
            worst = e;
            worst_name = name;
        }
    }
    o.check(worst < 1e-3, "worst gradient rel err " + fmt(worst) + " (" + worst_name + ")");
    return o;
}

// --------------------------------------------------------------------- 7 ---

const Checkpoint& stage1_model(Study& s) {
    if (!s.stage1) {
        if (s.stage1_override) {
            s.stage1 = load_checkpoint(*s.stage1_override);
        } else {
            const auto& m = s.data();
            Stage1Data data{{load_domain(m, 0, Split::Train), load_domain(m, 1, Split::Train)}, {}};
            progress("stage I: 2000 iterations");
            const auto t0 = std::chrono::steady_clock::now();
            TrainOptions opts;
            opts.log_every = 250;
            s.stage1 = train_stage1(s.stage1_config(), std::move(data), opts);
            s.stage1_seconds = seconds_since(t0);
            save_checkpoint(*s.stage1, s.work / "stage1.ckpt");
        }
    }
    return *s.stage1;
}

Outcome stage1_study(Study& s) {
    Outcome o;
    const auto& ckpt = stage1_model(s);
    auto bundle = restore_bundle(ckpt, 1);
    bundle.train(false);
    const auto d0 = test_split(s, 0);
    const auto d1 = test_split(s, 1);
    torch::NoGradGuard ng;
    const auto c0 = bundle.content_encode(d0.images);
    const auto c1 = bundle.content_encode(d1.images);
    const auto n = c0.code.size(0);

    // (a) paired vs unpaired code distance
    const auto f0 = c0.code.flatten(1);
    const auto f1 = c1.code.flatten(1);
    const auto dist = (f0.unsqueeze(1) - f1.unsqueeze(0)).abs().mean(2);  // [n, n]
    const double paired = dist.diagonal().mean().item<double>();
    const double unpaired = ((dist.sum() - dist.diagonal().sum()) / static_cast<double>(n * (n - 1))).item<double>();
    o.check(paired < 0.5 * unpaired, "(a) paired " + fmt(paired) + " vs unpaired " + fmt(unpaired) + " ratio " +
                                         fmt(paired / unpaired, 3));

    // (b) domain classifier on the codes
    const auto logits = bundle.classify_domain(torch::cat({c0.code, c1.code}));
    const auto labels = torch::cat({torch::zeros({n}, torch::kInt64), torch::ones({n}, torch::kInt64)});
    const double acc = accuracy(logits, labels);
    o.check(acc <= 0.6, "(b) classifier acc " + fmt(acc, 3));

    // (c) shape decoded from the other domain's code vs from its own
    const auto l0 = torch::zeros({n}, torch::kInt64);
    const auto l1 = torch::ones({n}, torch::kInt64);
    const double cross = 0.5 * (soft_iou(bundle.decode_shape(c1, l0), d0.segs) +
                                soft_iou(bundle.decode_shape(c0, l1), d1.segs));
    const double same = 0.5 * (soft_iou(bundle.decode_shape(c0, l0), d0.segs) +
                               soft_iou(bundle.decode_shape(c1, l1), d1.segs));
    o.check(cross >= 0.5, "(c) cross IoU " + fmt(cross, 3));
    o.check(same >= 0.6, "same IoU " + fmt(same, 3));

    // (d) appearance reconstruction
    const auto r0 = bundle.decode_appearance(c0, bundle.style_encode(d0.images), l0);
    const auto r1 = bundle.decode_appearance(c1, bundle.style_encode(d1.images), l1);
    const double p = psnr(torch::cat({r0, r1}), torch::cat({d0.images, d1.images}));
    o.check(p >= 20.0, "(d) PSNR " + fmt(p, 4) + " dB");

    if (s.stage1_seconds >= 0) {
        o.check(s.stage1_seconds <= 30 * 60, "train " + fmt(s.stage1_seconds / 60, 3) + " min");
    }
    return o;
}

// --------------------------------------------------------------------- 8 ---

struct Stage2Eval {
    double con = 0, rec_psnr = 0, mask_mean = 0, centroid = 0;
    int empty = 0;
};

Stage2Eval evaluate_stage2(NetworkBundle& bundle, const DomainData& x, const DomainData& y) {
    torch::NoGradGuard ng;
    Stage2Eval e;
    const auto n = x.images.size(0);
    // style j comes from a different sample than content i
    const auto shifted = torch::roll(y.images, 1, 0);
    const auto code = bundle.content_encode(x.images);
    const auto style = bundle.style_encode(shifted);
    const auto out = bundle.generate(code, style, SkipMode::Fused);
    e.con = loss_con(bundle.content_encode(out.image).code, code.code).item<double>();

    const auto y_code = bundle.content_encode(y.images);
    const auto recon = bundle.generate(y_code, bundle.style_encode(y.images), SkipMode::ZeroMask).image;
    e.rec_psnr = psnr(recon, y.images);

    double total = 0;
    for (const auto& m : out.masks) total += m.mean().item<double>();
    e.mask_mean = out.masks.empty() ? 0.0 : total / static_cast<double>(out.masks.size());

    const auto fg_in = forge_foreground(x.images);
    const auto fg_out = forge_foreground(out.image);
    double sum = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = centroid_distance(fg_in[i], fg_out[i]);
        if (std::isnan(d)) {
            ++e.empty;
            sum += 64.0 * std::sqrt(2.0);
        } else {
            sum += d;
        }
    }
    e.centroid = sum / static_cast<double>(n);
    return e;
}

const Checkpoint& stage2_model(Study& s) {
    if (!s.stage2) {
        const auto& s1 = stage1_model(s);
        const auto& m = s.data();
        const auto x = test_split(s, 0);
        const auto y = test_split(s, 1);
        if (s.stage2_override) {
            s.stage2 = load_checkpoint(*s.stage2_override);
            Stage2Trainer fresh(s.stage2_config(), {load_domain(m, 0, Split::Train), load_domain(m, 1, Split::Train)},
                                s1);
            s.con_at_init = evaluate_stage2(fresh.bundle(), x, y).con;
        } else {
            Stage2Trainer trainer(s.stage2_config(),
                                  {load_domain(m, 0, Split::Train), load_domain(m, 1, Split::Train)}, s1);
            s.con_at_init = evaluate_stage2(trainer.bundle(), x, y).con;
            progress("stage II: 3000 iterations (test L_con at init " + fmt(s.con_at_init) + ")");
            const auto t0 = std::chrono::steady_clock::now();
            for (int i = 0; i < s.stage2_config().stage2_iterations; ++i) {
                const auto r = trainer.step();
                if ((i + 1) % 250 == 0) {
                    std::ostringstream line;
                    line << "stage II iter " << (i + 1);
                    for (const auto& [k, v] : r.report.terms) line << " " << k << "=" << fmt(v);
                    progress(line.str());
                }
            }
            s.stage2_seconds = seconds_since(t0);
            s.stage2 = trainer.checkpoint();
            save_checkpoint(*s.stage2, s.work / "stage2.ckpt");
        }
    }
    return *s.stage2;
}

Outcome stage2_study(Study& s) {
    Outcome o;
    const auto& ckpt = stage2_model(s);
    auto bundle = restore_bundle(ckpt, 2);
    bundle.train(false);
    const auto e = evaluate_stage2(bundle, test_split(s, 0), test_split(s, 1));
    const double reduction = 1.0 - e.con / s.con_at_init;
    o.check(reduction >= 0.5, "(a) test L_con " + fmt(s.con_at_init) + " -> " + fmt(e.con) + " (" +
                                  fmt(100 * reduction, 3) + "% lower)");
    o.check(e.rec_psnr >= 20.0, "(b) PSNR(y_bar, y) " + fmt(e.rec_psnr, 4) + " dB");
    o.check(e.mask_mean <= 0.35, "(c) mean mask " + fmt(e.mask_mean, 3));
    o.check(e.centroid <= 4.0, "(d) centroid shift " + fmt(e.centroid, 3) + " px" +
                                   (e.empty ? " (" + std::to_string(e.empty) + " empty)" : ""));
    if (s.stage2_seconds >= 0) {
        o.check(s.stage2_seconds <= 45 * 60, "train " + fmt(s.stage2_seconds / 60, 3) + " min");
    }
    return o;
}

// --------------------------------------------------------------------- 9 ---

Outcome multimodality(Study& s) {
    Outcome o;
    const auto& ckpt = stage2_model(s);
    const auto styles = load_domain(s.data(), 1, Split::Train);
    progress("fitting the style mapper on " + std::to_string(styles.images.size(0)) + " images");
    const auto fitted = fit_style_mapper(ckpt, styles.images);
    const Translator tr(fitted);
    const auto content = test_split(s, 0).images.narrow(0, 0, 1);
    std::vector<torch::Tensor> outs;
    for (std::uint64_t seed = 0; seed < 10; ++seed) outs.push_back(tr.translate(content, tr.sample_style(seed)).image[0]);
    const double l1 = mean_pairwise_l1(torch::stack(outs));
    o.check(l1 > 0.05, "10 sampled styles mean pairwise L1 " + fmt(l1));

    const auto a = tr.style_of(test_split(s, 1).images.narrow(0, 0, 1));
    const auto b = tr.style_of(test_split(s, 1).images.narrow(0, 1, 1));
    const bool ends = torch::equal(tr.translate(content, Translator::blend(a, b, 0.0)).image,
                                   tr.translate(content, a).image) &&
                      torch::equal(tr.translate(content, Translator::blend(a, b, 1.0)).image,
                                   tr.translate(content, b).image);
    o.check(ends, "blend endpoints bit-exact");
    return o;
}

// -------------------------------------------------------------------- 10 ---

std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), root).string()] = ss.str();
    }
    return out;
}

template <class Trainer, class MakeTrainer>
double trajectory_gap(MakeTrainer make) {
    Trainer a = make();
    Trainer b = make();
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const auto ra = a.step().report;
        const auto rb = b.step().report;
        for (const auto& [k, v] : ra.terms) worst = std::max(worst, std::abs(v - rb.terms.at(k)));
        worst = std::max(worst, std::abs(ra.total - rb.total));
    }
    return worst;
}

Outcome engineering(Study& s) {
    Outcome o;
    const auto& s1 = stage1_model(s);
    const auto& s2 = stage2_model(s);

    const auto bytes = encode_checkpoint(s2);
    const auto path = s.work / "roundtrip.ckpt";
    save_checkpoint(s2, path);
    const auto again = encode_checkpoint(load_checkpoint(path));
    o.check(bytes == again, "checkpoint round trip " + std::to_string(bytes.size()) + " bytes");

    double drift = 0.0;
    int ec_arrays = 0;
    for (const auto& [name, t] : s2.arrays) {
        if (name.rfind("ec.", 0) != 0) continue;
        ++ec_arrays;
        drift = std::max(drift, (t - s1.array(name)).abs().max().item<double>());
    }
    o.check(ec_arrays > 0 && drift == 0.0, "Ec drift " + fmt(drift) + " over " + std::to_string(ec_arrays) + " arrays");

    fs::path small_root = s.work / "small";
    ForgeOptions fo;
    fo.n_per_domain = 26;
    fo.seed = 3;
    const auto small = forge_dataset(small_root, fo);
    const auto tree_a = read_tree(small_root);
    fs::remove_all(small_root);
    forge_dataset(small_root, fo);
    o.check(tree_a == read_tree(small_root), "forge byte-identical over " + std::to_string(tree_a.size()) + " files");

    Config c1 = s.stage1_config();
    c1.channel_divisor = 16;
    c1.batch_pairs = 8;
    c1.batch_real = 8;
    const double gap1 = trajectory_gap<Stage1Trainer>([&] {
        return Stage1Trainer(c1, {{load_domain(small, 0, Split::Train), load_domain(small, 1, Split::Train)}, {}});
    });
    Config c2 = s.stage2_config();
    c2.channel_divisor = 16;
    c2.batch = 8;
    Stage1Trainer st1(c1, {{load_domain(small, 0, Split::Train), load_domain(small, 1, Split::Train)}, {}});
    st1.step();
    const auto small_s1 = st1.checkpoint();
    const double gap2 = trajectory_gap<Stage2Trainer>([&] {
        return Stage2Trainer(c2, {load_domain(small, 0, Split::Train), load_domain(small, 1, Split::Train)}, small_s1);
    });
    o.check(std::max(gap1, gap2) <= 1e-5, "100-iteration trajectories max gap " + fmt(gap1) + " / " + fmt(gap2));
    return o;
}

} // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    Study s;
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a.rfind("--data=", 0) == 0) {
            s.data_override = a.substr(7);
        } else if (a.rfind("--stage1=", 0) == 0) {
            s.stage1_override = a.substr(9);
        } else if (a.rfind("--stage2=", 0) == 0) {
            s.stage2_override = a.substr(9);
        } else {
            only.insert(std::stoi(a));
        }
    }
    gptrans::testing::TempDir work("acceptance");
    s.work = work.path;

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"dsc oracle", dsc_oracle},
        {"fusion sandwich and mask range", dsc_sandwich},
        {"zero-mask ablation", zero_mask_ablation},
        {"gradient reversal", gradient_reversal},
        {"adain statistics", adain_statistics},
        {"loss units", loss_units},
        {"stage I forge study", [&] { return stage1_study(s); }},
        {"stage II forge study", [&] { return stage2_study(s); }},
        {"multi-modality", [&] { return multimodality(s); }},
        {"engineering", [&] { return engineering(s); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!only.empty() && !only.count(id)) continue;
        Outcome r;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        if (!r.pass) ++failures;
        std::cout << (r.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << r.detail << " ("
                  << fmt(seconds_since(t0), 3) << " s)" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
