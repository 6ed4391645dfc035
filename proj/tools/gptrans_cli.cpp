#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gptrans/checkpoint.hpp"
#include "gptrans/config.hpp"
#include "gptrans/dataset.hpp"
#include "gptrans/errors.hpp"
#include "gptrans/image_io.hpp"
#include "gptrans/inference.hpp"
#include "gptrans/training.hpp"

namespace fs = std::filesystem;
using namespace gptrans;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Config file (key = value lines)")->check(CLI::ExistingFile);
    cmd->add_option("--set", args.sets, "Override one key, key=value (repeatable)");
    cmd->add_option("--seed", args.seed, "Seed for every random stream");
}

// file < --set < --seed
Config effective_config(const CommonArgs& args) {
    Config c = args.config_path.empty() ? Config{} : Config::load(args.config_path);
    for (const auto& kv : args.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        c.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (args.seed >= 0) c.seed = static_cast<std::uint64_t>(args.seed);
    c.validate();
    return c;
}

void announce(const Config& c, const fs::path& out_dir) {
    const auto text = c.to_text();
    std::cerr << "# effective config\n" << text;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream(out_dir / "effective_config.txt") << text;
    }
}

void notice(const std::string& m) { std::cerr << "notice: " << m << "\n"; }

void require_file(const fs::path& p, const char* what) {
    if (!fs::is_regular_file(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

std::vector<DomainData> load_all(const DatasetManifest& m, Split split) {
    std::vector<DomainData> out;
    for (const auto& d : m.domains) out.push_back(load_domain(m, d.id, split));
    return out;
}

void adopt_dataset(Config& c, const DatasetManifest& m) {
    if (c.image_size != m.image_size) {
        notice("image_size set to " + std::to_string(m.image_size) + " from the dataset manifest");
        c.image_size = m.image_size;
    }
    const int domains = static_cast<int>(m.domains.size());
    if (c.num_domains != domains) {
        notice("num_domains set to " + std::to_string(domains) + " from the dataset manifest");
        c.num_domains = domains;
    }
    c.validate();
}

void write_image(const fs::path& path, const torch::Tensor& image) {
    write_png(path, to_raster(image));
    std::cout << path.string() << "\n";
}

void write_masks(const fs::path& out_dir, const std::string& base, const GenerateResult& r) {
    for (std::size_t i = 0; i < r.masks.size(); ++i) {
        const auto p = out_dir / (base + "__mask" + std::to_string(i + 1) + ".png");
        write_png(p, mask_to_raster(mask_visual(r.masks[i])));
        std::cout << p.string() << "\n";
    }
}

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Config: return 3;
    case ErrorKind::Input: return 4;
    case ErrorKind::Io: return 5;
    case ErrorKind::Checkpoint: return 6;
    case ErrorKind::Divergence: return 7;
    case ErrorKind::Unavailable: return 8;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exemplar-guided image translation with content distillation and dynamic skips"};
    app.require_subcommand(1);

    // print-config
    CommonArgs pc_args;
    auto* pc = app.add_subcommand("print-config", "Print the effective configuration (all defaults by default)");
    add_common(pc, pc_args);

    // forge-data
    ForgeOptions forge;
    std::string forge_out;
    auto* fd = app.add_subcommand("forge-data", "Write a synthetic paired multi-domain dataset");
    fd->add_option("--out", forge_out, "Output directory")->required();
    fd->add_option("--domains", forge.num_domains, "Number of pseudo-domains")->capture_default_str();
    fd->add_option("--per-domain", forge.n_per_domain, "Samples per domain")->capture_default_str();
    fd->add_option("--size", forge.image_size, "Image side in pixels")->capture_default_str();
    fd->add_option("--test", forge.test_count, "Held-out samples per domain (-1: n/13)")->capture_default_str();
    std::uint64_t forge_seed = 0;
    fd->add_option("--seed", forge_seed, "Seed")->capture_default_str();

    // distill
    CommonArgs d_args;
    std::string d_data, d_real, d_out;
    int d_log = 50;
    auto* distill = app.add_subcommand("distill", "Stage I: train the content encoder on paired data");
    add_common(distill, d_args);
    distill->add_option("--data", d_data, "Paired dataset root (with manifest.json)")->required();
    distill->add_option("--real", d_real, "Optional unpaired dataset root for the real stream");
    distill->add_option("--out", d_out, "Output directory")->required();
    distill->add_option("--log-every", d_log, "Progress line every N iterations")->capture_default_str();

    // train-translate
    CommonArgs t_args;
    std::string t_data, t_stage1, t_out;
    int t_x = 0, t_y = 1, t_log = 50;
    auto* tt = app.add_subcommand("train-translate", "Stage II: train the translator X -> Y");
    add_common(tt, t_args);
    tt->add_option("--data", t_data, "Dataset root")->required();
    tt->add_option("--stage1", t_stage1, "Stage I checkpoint")->required();
    tt->add_option("--content-domain", t_x, "Domain id of X")->capture_default_str();
    tt->add_option("--style-domain", t_y, "Domain id of Y")->capture_default_str();
    tt->add_option("--out", t_out, "Output directory")->required();
    tt->add_option("--log-every", t_log, "Progress line every N iterations")->capture_default_str();

    // fit-mapper
    std::string m_ckpt, m_data, m_out;
    int m_y = 1, m_log = 10;
    auto* fm = app.add_subcommand("fit-mapper", "Fit the noise -> style mapper of a stage II checkpoint");
    fm->add_option("--checkpoint", m_ckpt, "Stage II checkpoint")->required();
    fm->add_option("--data", m_data, "Dataset root")->required();
    fm->add_option("--style-domain", m_y, "Domain id of the style images")->capture_default_str();
    fm->add_option("--out", m_out, "Output checkpoint path")->required();
    fm->add_option("--log-every", m_log, "Progress line every N rounds")->capture_default_str();

    // translate / inspect-masks
    std::string tr_ckpt, tr_content, tr_style, tr_out;
    bool tr_zero = false, tr_masks = false, tr_strict = false;
    auto* tr = app.add_subcommand("translate", "Translate one content image with an exemplar or sampled style");
    tr->add_option("--checkpoint", tr_ckpt, "Stage II checkpoint")->required();
    tr->add_option("--content", tr_content, "Content image (PNG)")->required();
    tr->add_option("--style", tr_style, "Style image path or sample:<seed>")->required();
    tr->add_option("--out", tr_out, "Output directory")->required();
    tr->add_flag("--zero-mask", tr_zero, "Force every skip mask to zero");
    tr->add_flag("--masks", tr_masks, "Also write per-site mask images");
    tr->add_flag("--strict", tr_strict, "Reject sides that are not multiples of 64 instead of resizing");

    std::string im_ckpt, im_content, im_style, im_out;
    bool im_strict = false;
    auto* im = app.add_subcommand("inspect-masks", "Write the skip masks of one translation");
    im->add_option("--checkpoint", im_ckpt, "Stage II checkpoint")->required();
    im->add_option("--content", im_content, "Content image (PNG)")->required();
    im->add_option("--style", im_style, "Style image path or sample:<seed>")->required();
    im->add_option("--out", im_out, "Output directory")->required();
    im->add_flag("--strict", im_strict, "Reject sides that are not multiples of 64 instead of resizing");

    // blend
    std::string b_ckpt, b_content, b_a, b_b, b_out;
    int b_steps = 5;
    bool b_strict = false;
    auto* bl = app.add_subcommand("blend", "Interpolate between two exemplar styles");
    bl->add_option("--checkpoint", b_ckpt, "Stage II checkpoint")->required();
    bl->add_option("--content", b_content, "Content image (PNG)")->required();
    bl->add_option("--style-a", b_a, "First style image")->required();
    bl->add_option("--style-b", b_b, "Second style image")->required();
    bl->add_option("--steps", b_steps, "Number of frames (>= 2)")->capture_default_str();
    bl->add_option("--out", b_out, "Output directory")->required();
    bl->add_flag("--strict", b_strict, "Reject sides that are not multiples of 64 instead of resizing");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error[usage]: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*pc) {
            std::cout << effective_config(pc_args).to_text();
        } else if (*fd) {
            forge.seed = forge_seed;
            const auto m = forge_dataset(forge_out, forge);
            std::cout << "wrote " << m.domains.size() << " domains to " << forge_out << " (" << m.checksum << ")\n";
        } else if (*distill) {
            auto c = effective_config(d_args);
            c.stage = 1;
            const auto m = DatasetManifest::load(d_data);
            if (m.pairing != Pairing::Paired) throw InputError("distill needs a paired dataset");
            adopt_dataset(c, m);
            Stage1Data data{load_all(m, Split::Train), {}};
            if (!d_real.empty()) {
                const auto r = DatasetManifest::load(d_real);
                if (r.image_size != c.image_size) throw InputError("real stream image size differs from the paired set");
                data.real = load_all(r, Split::Train);
                for (const auto& d : data.real) {
                    if (d.label >= c.num_domains) throw InputError("real stream domain id out of range");
                }
            }
            announce(c, d_out);
            train_stage1(c, std::move(data), {d_out, true, d_log, {}});
            std::cout << (fs::path(d_out) / "stage1.ckpt").string() << "\n";
        } else if (*tt) {
            auto c = effective_config(t_args);
            c.stage = 2;
            require_file(t_stage1, "stage I checkpoint");
            const auto s1 = load_checkpoint(t_stage1);
            const auto m = DatasetManifest::load(t_data);
            adopt_dataset(c, m);
            if (t_x == t_y) throw InputError("content and style domains must differ");
            announce(c, t_out);
            Stage2Data data{load_domain(m, t_x, Split::Train), load_domain(m, t_y, Split::Train)};
            train_stage2(c, std::move(data), s1, {t_out, true, t_log, {}});
            std::cout << (fs::path(t_out) / "stage2.ckpt").string() << "\n";
        } else if (*fm) {
            require_file(m_ckpt, "checkpoint");
            const auto s2 = load_checkpoint(m_ckpt);
            const auto m = DatasetManifest::load(m_data);
            const auto styles = load_domain(m, m_y, Split::Train);
            auto out = fit_style_mapper(s2, styles.images, m_log);
            save_checkpoint(out, m_out);
            std::cout << m_out << "\n";
        } else if (*tr || *im) {
            const bool inspect = im->parsed();
            const auto& ckpt_path = inspect ? im_ckpt : tr_ckpt;
            const fs::path content_path = inspect ? im_content : tr_content;
            const std::string style_src = inspect ? im_style : tr_style;
            const fs::path out_dir = inspect ? im_out : tr_out;
            const bool sampled = style_src.rfind("sample:", 0) == 0;
            std::uint64_t sample_seed = 0;
            if (sampled) {
                try {
                    sample_seed = std::stoull(style_src.substr(7));
                } catch (const std::exception&) {
                    throw InputError("bad style source '" + style_src + "', expected sample:<seed>");
                }
            }
            require_file(ckpt_path, "checkpoint");
            require_file(content_path, "content image");
            if (!sampled) require_file(style_src, "style image");

            const Translator translator(load_checkpoint(ckpt_path));
            const PrepareOptions prep{inspect ? im_strict : tr_strict, notice};
            const auto content = load_image(content_path, translator.image_size(), prep);
            const auto style = sampled ? translator.sample_style(sample_seed)
                                       : translator.style_of(load_image(style_src, translator.image_size(), prep));
            const auto result = translator.translate(content, style, !inspect && tr_zero);

            fs::create_directories(out_dir);
            std::string tag = sampled ? std::to_string(sample_seed) : "ref";
            if (!inspect && tr_zero) tag += "-zeromask";
            const auto name =
                output_name(content_path.stem().string(), sampled ? "sample" : fs::path(style_src).stem().string(), tag);
            if (!inspect) write_image(out_dir / name, result.image[0]);
            if (inspect || tr_masks) {
                if (result.masks.empty()) notice("this model has no active skip sites");
                write_masks(out_dir, fs::path(name).stem().string(), result);
            }
        } else if (*bl) {
            require_file(b_ckpt, "checkpoint");
            require_file(b_content, "content image");
            require_file(b_a, "style image");
            require_file(b_b, "style image");
            const auto ts = blend_steps(b_steps);
            const Translator translator(load_checkpoint(b_ckpt));
            const PrepareOptions prep{b_strict, notice};
            const auto content = load_image(b_content, translator.image_size(), prep);
            const auto sa = translator.style_of(load_image(b_a, translator.image_size(), prep));
            const auto sb = translator.style_of(load_image(b_b, translator.image_size(), prep));
            fs::create_directories(b_out);
            const auto cstem = fs::path(b_content).stem().string();
            const auto sstem = fs::path(b_a).stem().string() + "-" + fs::path(b_b).stem().string();
            std::vector<Raster> frames;
            for (double t : ts) {
                const auto r = translator.translate(content, Translator::blend(sa, sb, t));
                frames.push_back(to_raster(r.image[0]));
                const auto p = fs::path(b_out) / output_name(cstem, sstem, format_t(t));
                write_png(p, frames.back());
                std::cout << p.string() << "\n";
            }
            const auto grid = fs::path(b_out) / output_name(cstem, sstem, "grid");
            write_png(grid, horizontal_strip(frames));
            std::cout << grid.string() << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const c10::Error& e) {
        std::cerr << "error[internal]: " << e.what_without_backtrace() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
