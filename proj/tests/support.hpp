#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <torch/torch.h>

namespace gptrans::testing {

// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("gptrans_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

// Largest relative error between the autodiff gradient of `f` at `x` and
// central differences, all in double. Relative to max(|g|, 1e-3 scale floor).
inline double gradcheck(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x,
                        double h = 1e-6) {
    x = x.to(torch::kDouble).detach().clone().requires_grad_(true);
    auto y = f(x);
    auto g = torch::autograd::grad({y}, {x})[0].detach();
    auto flat = x.detach().clone().reshape({-1});
    const auto gflat = g.reshape({-1});
    double worst = 0.0;
    double scale = std::max(gflat.abs().max().item<double>(), 1e-3);
    for (std::int64_t i = 0; i < flat.numel(); ++i) {
        torch::NoGradGuard ng;
        auto xp = flat.clone();
        auto xm = flat.clone();
        xp[i] += h;
        xm[i] -= h;
        const double fp = f(xp.reshape(x.sizes())).item<double>();
        const double fm = f(xm.reshape(x.sizes())).item<double>();
        const double num = (fp - fm) / (2 * h);
        const double ana = gflat[i].item<double>();
        worst = std::max(worst, std::abs(num - ana) / std::max(std::abs(ana), scale));
    }
    return worst;
}

} // namespace gptrans::testing
