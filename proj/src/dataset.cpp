#include "gptrans/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "gptrans/errors.hpp"
#include "gptrans/image_io.hpp"

namespace gptrans {
namespace fs = std::filesystem;

namespace {

constexpr int kSegFactor = 16;
constexpr const char* kManifestFormat = "gptrans-dataset";
constexpr int kManifestVersion = 1;

struct Rgb {
    double r, g, b;
};

// Silhouette half-extents in units of (scale * canvas). Every family fits in
// a disc of radius 0.22 * scale, so shapes stay inside the canvas for
// positions in [0.2, 0.8] and scales up to 0.9.
bool inside(ShapeFamily family, double a, double b, double s) {
    switch (family) {
    case ShapeFamily::EllipseBlob: {
        const double ea = a / (0.22 * s);
        const double eb = b / (0.16 * s);
        return ea * ea + eb * eb <= 1.0;
    }
    case ShapeFamily::BoxVehicle: return std::abs(a) <= 0.17 * s && std::abs(b) <= 0.135 * s;
    case ShapeFamily::CrossGlyph:
        return (std::abs(a) <= 0.21 * s && std::abs(b) <= 0.085 * s) ||
               (std::abs(b) <= 0.21 * s && std::abs(a) <= 0.085 * s);
    case ShapeFamily::DiamondKite: return std::abs(a) / (0.22 * s) + std::abs(b) / (0.17 * s) <= 1.0;
    }
    return false;
}

Rgb permute(Rgb c, int variant) {
    switch (variant % 3) {
    case 1: return {c.b, c.r, c.g};
    case 2: return {c.g, c.b, c.r};
    default: return c;
    }
}

// Domain-private texture program parameters derived from the appearance seed.
struct Palette {
    Rgb fg;
    Rgb bg;
    double frequency;
    double phase;
};

Palette make_palette(ShapeFamily family, int variant, std::uint64_t appearance_seed, int domain) {
    SplitMix64 rng(derive_seed(appearance_seed, static_cast<std::uint64_t>(domain) + 1));
    static const std::array<Rgb, 4> fg_base = {{{0.95, 0.55, 0.30}, {0.35, 0.60, 0.95}, {0.40, 0.90, 0.40},
                                               {0.95, 0.85, 0.35}}};
    static const std::array<Rgb, 4> bg_base = {{{-0.75, -0.70, -0.45}, {-0.55, -0.55, -0.60},
                                               {-0.55, -0.80, -0.55}, {-0.50, -0.75, -0.80}}};
    const auto idx = static_cast<std::size_t>(family);
    auto jitter = [&](double v, double lo, double hi) { return std::clamp(v + rng.uniform(-0.2, 0.2), lo, hi); };
    Rgb fg = fg_base[idx];
    Rgb bg = bg_base[idx];
    fg = {jitter(fg.r, 0.25, 1.0), jitter(fg.g, 0.25, 1.0), jitter(fg.b, 0.25, 1.0)};
    bg = {jitter(bg.r, -1.0, -0.35), jitter(bg.g, -1.0, -0.35), jitter(bg.b, -1.0, -0.35)};
    Palette p{permute(fg, variant), permute(bg, variant), rng.uniform(0.6, 1.4), rng.uniform(0.0, 2.0 * std::numbers::pi)};
    return p;
}

// Foreground modulation factor in [0.7, 1].
double fg_texture(ShapeFamily family, const Palette& p, double a, double b, double s) {
    const double na = a / (0.21 * s);
    const double nb = b / (0.21 * s);
    switch (family) {
    case ShapeFamily::EllipseBlob: return 1.0 - 0.3 * std::min(1.0, na * na + nb * nb);
    case ShapeFamily::BoxVehicle:
        return std::sin(p.frequency * 12.0 * nb + p.phase) > 0.0 ? 1.0 : 0.75;
    case ShapeFamily::CrossGlyph: {
        const int ca = static_cast<int>(std::floor(na * 4.0 * p.frequency + 8.0));
        const int cb = static_cast<int>(std::floor(nb * 4.0 * p.frequency + 8.0));
        return ((ca + cb) % 2 == 0) ? 1.0 : 0.78;
    }
    case ShapeFamily::DiamondKite: return 0.85 + 0.15 * std::clamp(nb, -1.0, 1.0);
    }
    return 1.0;
}

// Background modulation factor in [0.8, 1].
double bg_texture(ShapeFamily family, const Palette& p, double u, double v) {
    switch (family) {
    case ShapeFamily::EllipseBlob: return 0.8 + 0.2 * v;
    case ShapeFamily::BoxVehicle: return 0.8 + 0.2 * u;
    case ShapeFamily::CrossGlyph: return 0.9 + 0.1 * std::sin(p.frequency * 10.0 * (u + v) + p.phase);
    case ShapeFamily::DiamondKite: return 0.8 + 0.2 * (1.0 - v);
    }
    return 1.0;
}

std::string sample_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%05d", i);
    return buf;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* pairing_name(Pairing p) { return p == Pairing::Paired ? "paired" : "unpaired"; }

} // namespace

// ---------------------------------------------------------------- latents --

ForgeLatent ForgeLatent::sample(SplitMix64& rng) {
    ForgeLatent l;
    l.x = rng.uniform(0.2, 0.8);
    l.y = rng.uniform(0.2, 0.8);
    l.scale = rng.uniform(0.4, 0.9);
    l.angle_deg = rng.uniform(-45.0, 45.0);
    l.appearance_seed = rng.next();
    return l;
}

void ForgeLatent::validate() const {
    if (x < 0.2 || x > 0.8 || y < 0.2 || y > 0.8) throw InputError("forge latent position outside [0.2, 0.8]");
    if (scale < 0.4 || scale > 0.9) throw InputError("forge latent scale outside [0.4, 0.9]");
    if (angle_deg < -45.0 || angle_deg > 45.0) throw InputError("forge latent orientation outside [-45, 45]");
}

nlohmann::json ForgeLatent::to_json() const {
    return {{"x", x}, {"y", y}, {"scale", scale}, {"angle_deg", angle_deg}, {"appearance_seed", appearance_seed}};
}

ForgeLatent ForgeLatent::from_json(const nlohmann::json& j) {
    ForgeLatent l;
    l.x = j.at("x").get<double>();
    l.y = j.at("y").get<double>();
    l.scale = j.at("scale").get<double>();
    l.angle_deg = j.at("angle_deg").get<double>();
    l.appearance_seed = j.at("appearance_seed").get<std::uint64_t>();
    return l;
}

// ------------------------------------------------------------------ forge --

ShapeFamily forge_family(int domain) { return static_cast<ShapeFamily>(domain % 4); }

std::string forge_domain_name(int domain) {
    static const char* names[] = {"ellipse-blob", "box-vehicle", "cross-glyph", "diamond-kite"};
    return std::string(names[domain % 4]) + "/" + std::to_string(domain / 4);
}

ForgeRender forge_render(const ForgeLatent& latent, int domain, int size) {
    if (domain < 0) throw InputError("unknown forge domain " + std::to_string(domain));
    if (size < 64 || size % 64 != 0) throw InputError("forge size must be a multiple of 64");
    latent.validate();
    const auto family = forge_family(domain);
    const Palette pal = make_palette(family, domain / 4, latent.appearance_seed, domain);
    const double theta = latent.angle_deg * std::numbers::pi / 180.0;
    const double ct = std::cos(theta);
    const double st = std::sin(theta);

    auto image = torch::empty({3, size, size}, torch::kFloat32);
    auto mask = torch::empty({1, size, size}, torch::kFloat32);
    auto img = image.accessor<float, 3>();
    auto msk = mask.accessor<float, 3>();
    for (int row = 0; row < size; ++row) {
        const double v = (row + 0.5) / size;
        for (int col = 0; col < size; ++col) {
            const double u = (col + 0.5) / size;
            const double du = u - latent.x;
            const double dv = v - latent.y;
            const double a = ct * du + st * dv;
            const double b = -st * du + ct * dv;
            const bool fg = inside(family, a, b, latent.scale);
            Rgb c;
            if (fg) {
                const double t = fg_texture(family, pal, a, b, latent.scale);
                c = {pal.fg.r * t, pal.fg.g * t, pal.fg.b * t};
            } else {
                const double t = bg_texture(family, pal, u, v);
                c = {pal.bg.r * t, pal.bg.g * t, pal.bg.b * t};
            }
            img[0][row][col] = static_cast<float>(c.r);
            img[1][row][col] = static_cast<float>(c.g);
            img[2][row][col] = static_cast<float>(c.b);
            msk[0][row][col] = fg ? 1.0f : 0.0f;
        }
    }
    return {image, mask, area_downsample(mask, kSegFactor)};
}

torch::Tensor forge_foreground(const torch::Tensor& image) {
    return (image.mean(image.dim() == 4 ? 1 : 0, /*keepdim=*/true) > 0).to(torch::kFloat32);
}

std::pair<double, double> mask_centroid(const torch::Tensor& mask) {
    auto m = mask.detach().to(torch::kFloat64);
    if (m.dim() == 3) m = m.squeeze(0);
    if (m.dim() != 2) throw InputError("mask_centroid expects [1, H, W] or [H, W]");
    const double total = m.sum().item<double>();
    if (total <= 0.0) return {std::nan(""), std::nan("")};
    const auto rows = torch::arange(m.size(0), torch::kFloat64).add(0.5).unsqueeze(1);
    const auto cols = torch::arange(m.size(1), torch::kFloat64).add(0.5).unsqueeze(0);
    return {(m * rows).sum().item<double>() / total, (m * cols).sum().item<double>() / total};
}

// --------------------------------------------------------------- manifest --

fs::path DatasetManifest::image_path(int domain, const std::string& name) const {
    return root / ("domain_" + std::to_string(domain)) / (name + ".png");
}

fs::path DatasetManifest::seg_path(int domain, const std::string& name) const {
    return root / ("domain_" + std::to_string(domain)) / (name + "_seg.png");
}

std::string DatasetManifest::compute_checksum() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& d : domains) {
        const auto& split = splits.at(d.id);
        std::vector<std::string> names = split.train;
        names.insert(names.end(), split.test.begin(), split.test.end());
        std::sort(names.begin(), names.end());
        for (const auto& name : names) {
            for (const auto& p : {image_path(d.id, name), seg_path(d.id, name)}) {
                if (!fs::exists(p)) continue;
                const auto rel = fs::relative(p, root).generic_string();
                h = fnv1a(h, rel.data(), rel.size());
                const auto bytes = read_bytes(p);
                h = fnv1a(h, bytes.data(), bytes.size());
            }
        }
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

nlohmann::json DatasetManifest::to_json() const {
    nlohmann::json j;
    j["format"] = kManifestFormat;
    j["version"] = kManifestVersion;
    j["pairing"] = pairing_name(pairing);
    j["image_size"] = image_size;
    j["domains"] = nlohmann::json::array();
    for (const auto& d : domains) j["domains"].push_back({{"id", d.id}, {"name", d.name}, {"family", d.family}});
    j["splits"] = nlohmann::json::object();
    for (const auto& [id, split] : splits) {
        j["splits"][std::to_string(id)] = {{"train", split.train}, {"test", split.test}};
    }
    j["latents"] = nlohmann::json::object();
    for (const auto& [name, latent] : latents) j["latents"][name] = latent.to_json();
    j["checksum"] = checksum;
    return j;
}

void DatasetManifest::save() const {
    const auto path = root / "manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json().dump(2) << "\n";
    if (!out) throw IoError("write failed for " + path.string());
}

DatasetManifest DatasetManifest::load(const fs::path& root) {
    const auto path = root / "manifest.json";
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_bytes(path));
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed " + path.string() + ": " + e.what());
    }
    DatasetManifest m;
    m.root = root;
    try {
        if (j.at("format") != kManifestFormat || j.at("version") != kManifestVersion) {
            throw InputError("unsupported manifest format in " + path.string());
        }
        const auto pairing = j.at("pairing").get<std::string>();
        if (pairing != "paired" && pairing != "unpaired") throw InputError("bad pairing mode '" + pairing + "'");
        m.pairing = pairing == "paired" ? Pairing::Paired : Pairing::Unpaired;
        m.image_size = j.at("image_size").get<int>();
        for (const auto& d : j.at("domains")) {
            m.domains.push_back({d.at("id").get<int>(), d.at("name").get<std::string>(),
                                 d.value("family", std::string{})});
        }
        for (const auto& d : m.domains) {
            const auto& s = j.at("splits").at(std::to_string(d.id));
            m.splits[d.id] = {s.at("train").get<std::vector<std::string>>(),
                              s.at("test").get<std::vector<std::string>>()};
        }
        if (j.contains("latents")) {
            for (const auto& [name, l] : j.at("latents").items()) m.latents[name] = ForgeLatent::from_json(l);
        }
        m.checksum = j.value("checksum", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed " + path.string() + ": " + e.what());
    }
    if (m.image_size < 64 || m.image_size % 64 != 0) throw InputError("manifest image_size must be a multiple of 64");
    if (m.domains.empty()) throw InputError("manifest lists no domains");

    for (const auto& d : m.domains) {
        const auto& split = m.splits.at(d.id);
        for (const auto* names : {&split.train, &split.test}) {
            for (const auto& name : *names) {
                if (!fs::exists(m.image_path(d.id, name))) {
                    throw IoError("missing dataset file " + m.image_path(d.id, name).string());
                }
            }
        }
    }
    if (m.pairing == Pairing::Paired) {
        const auto& ref = m.splits.at(m.domains.front().id);
        for (const auto& d : m.domains) {
            const auto& s = m.splits.at(d.id);
            if (s.train != ref.train || s.test != ref.test) {
                throw InputError("paired manifest: domain " + d.name + " does not share the filename set");
            }
        }
    }
    if (!m.checksum.empty() && m.compute_checksum() != m.checksum) {
        throw InputError("dataset checksum mismatch under " + root.string());
    }
    return m;
}

DatasetManifest forge_dataset(const fs::path& root, const ForgeOptions& options) {
    if (options.num_domains < 2) throw InputError("forge_dataset needs at least 2 domains");
    if (options.n_per_domain < 1) throw InputError("forge_dataset needs at least one sample per domain");
    if (options.image_size < 64 || options.image_size % 64 != 0) {
        throw InputError("forge image size must be a multiple of 64");
    }
    const int test_count = options.test_count >= 0 ? options.test_count : options.n_per_domain / 13;
    if (test_count >= options.n_per_domain) throw InputError("test split would leave no training samples");

    DatasetManifest m;
    m.root = root;
    m.pairing = Pairing::Paired;
    m.image_size = options.image_size;
    SplitMix64 rng(options.seed);
    DomainSplit split;
    for (int i = 0; i < options.n_per_domain; ++i) {
        const auto name = sample_name(i);
        m.latents[name] = ForgeLatent::sample(rng);
        (i < options.n_per_domain - test_count ? split.train : split.test).push_back(name);
    }
    try {
        for (int k = 0; k < options.num_domains; ++k) {
            m.domains.push_back({k, "domain_" + std::to_string(k), forge_domain_name(k)});
            m.splits[k] = split;
            fs::create_directories(root / ("domain_" + std::to_string(k)));
            for (const auto& [name, latent] : m.latents) {
                const auto r = forge_render(latent, k, options.image_size);
                write_png(m.image_path(k, name), to_raster(r.image));
                write_png(m.seg_path(k, name), mask_to_raster(r.mask));
            }
        }
    } catch (const fs::filesystem_error& e) {
        throw IoError(e.what());
    }
    m.checksum = m.compute_checksum();
    m.save();
    return m;
}

DatasetManifest ingest_folder(const fs::path& root, Pairing pairing, double test_fraction) {
    if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
    if (test_fraction < 0.0 || test_fraction >= 1.0) throw InputError("test_fraction must lie in [0, 1)");
    std::map<int, std::vector<std::string>> names_by_domain;
    for (const auto& entry : fs::directory_iterator(root)) {
        const auto dir = entry.path().filename().string();
        if (!entry.is_directory() || dir.rfind("domain_", 0) != 0) continue;
        int id = 0;
        try {
            std::size_t used = 0;
            id = std::stoi(dir.substr(7), &used);
            if (used != dir.size() - 7 || id < 0) continue;
        } catch (const std::logic_error&) {
            continue;
        }
        auto& names = names_by_domain[id];
        for (const auto& f : fs::directory_iterator(entry.path())) {
            const auto file = f.path().filename().string();
            if (f.path().extension() != ".png" || file.ends_with("_seg.png")) continue;
            names.push_back(f.path().stem().string());
        }
        std::sort(names.begin(), names.end());
    }
    if (names_by_domain.size() < 1) throw InputError("no domain_<k> directories under " + root.string());

    DatasetManifest m;
    m.root = root;
    m.pairing = pairing;
    if (pairing == Pairing::Paired) {
        const auto& ref = names_by_domain.begin()->second;
        for (const auto& [id, names] : names_by_domain) {
            if (names != ref) {
                throw InputError("paired ingestion: domain_" + std::to_string(id) + " has a different filename set");
            }
        }
    }
    for (const auto& [id, names] : names_by_domain) {
        if (names.empty()) throw InputError("domain_" + std::to_string(id) + " holds no images");
        const auto n_test = static_cast<std::size_t>(std::floor(names.size() * test_fraction));
        DomainSplit split;
        split.train.assign(names.begin(), names.end() - static_cast<std::ptrdiff_t>(n_test));
        split.test.assign(names.end() - static_cast<std::ptrdiff_t>(n_test), names.end());
        m.domains.push_back({id, "domain_" + std::to_string(id), ""});
        m.splits[id] = std::move(split);
    }
    const auto first = read_png(m.image_path(m.domains.front().id, m.splits.begin()->second.train.front()));
    if (first.width != first.height || first.width % 64 != 0) {
        throw InputError("ingested images must be square with a side that is a multiple of 64");
    }
    m.image_size = first.width;
    m.checksum = m.compute_checksum();
    m.save();
    return m;
}

// ------------------------------------------------------------ loaded data --

DomainData load_domain(const DatasetManifest& manifest, int domain, Split which) {
    const auto it = manifest.splits.find(domain);
    if (it == manifest.splits.end()) throw InputError("domain " + std::to_string(domain) + " not in manifest");
    const auto& names = which == Split::Train ? it->second.train : it->second.test;
    DomainData d;
    d.label = domain;
    d.names = names;
    std::vector<torch::Tensor> images;
    std::vector<torch::Tensor> segs;
    for (const auto& name : names) {
        const auto raster = read_png(manifest.image_path(domain, name));
        if (raster.width != manifest.image_size || raster.height != manifest.image_size) {
            throw InputError(manifest.image_path(domain, name).string() + " does not match image_size " +
                             std::to_string(manifest.image_size));
        }
        images.push_back(from_raster(raster));
        const auto seg = manifest.seg_path(domain, name);
        if (fs::exists(seg)) {
            segs.push_back(area_downsample(binary_mask_from_raster(read_png(seg)), kSegFactor));
        }
    }
    if (!segs.empty() && segs.size() != images.size()) {
        throw InputError("domain_" + std::to_string(domain) + " has segmentation maps for only some images");
    }
    d.images = images.empty() ? torch::empty({0, 3, manifest.image_size, manifest.image_size})
                              : torch::stack(images);
    if (!segs.empty()) d.segs = torch::stack(segs);
    return d;
}

// ---------------------------------------------------------------- samplers --

EpochSampler::EpochSampler(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    if (n == 0) throw InputError("cannot sample from an empty set");
    reshuffle();
}

void EpochSampler::reshuffle() {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    rng_.shuffle(order_);
    pos_ = 0;
}

std::size_t EpochSampler::next() {
    if (pos_ == order_.size()) reshuffle();
    return order_[pos_++];
}

std::vector<std::size_t> EpochSampler::take(std::size_t k) {
    std::vector<std::size_t> out(k);
    for (auto& v : out) v = next();
    return out;
}

nlohmann::json EpochSampler::state() const { return {{"rng", rng_.state()}, {"order", order_}, {"pos", pos_}}; }

void EpochSampler::restore(const nlohmann::json& s) {
    auto order = s.at("order").get<std::vector<std::size_t>>();
    if (order.size() != order_.size()) throw InputError("sampler state does not match the dataset size");
    rng_.set_state(s.at("rng").get<std::uint64_t>());
    order_ = std::move(order);
    pos_ = s.at("pos").get<std::size_t>();
}

Stage1Sampler::Stage1Sampler(std::vector<DomainData> paired, std::vector<DomainData> real, int batch_pairs,
                             int batch_real, std::uint64_t seed)
    : paired_(std::move(paired)),
      real_(std::move(real)),
      batch_pairs_(batch_pairs),
      batch_real_(batch_real),
      rng_(derive_seed(seed, 1)),
      pair_epoch_(paired_.empty() ? 0 : static_cast<std::size_t>(paired_.front().images.size(0)), derive_seed(seed, 2)),
      real_epoch_(1, derive_seed(seed, 3)) {
    if (paired_.size() < 2) throw InputError("stage I sampling needs a paired set with at least 2 domains");
    for (const auto& d : paired_) {
        if (d.names != paired_.front().names) throw InputError("paired domains must share their sample names");
        if (!d.segs.defined()) throw InputError("stage I needs segmentation maps for the paired set");
    }
    const auto& stream = real_.empty() ? paired_ : real_;
    for (std::size_t di = 0; di < stream.size(); ++di) {
        if (!stream[di].segs.defined()) throw InputError("stage I needs segmentation maps for the real stream");
        for (std::int64_t i = 0; i < stream[di].images.size(0); ++i) real_items_.emplace_back(static_cast<int>(di), i);
    }
    real_epoch_ = EpochSampler(real_items_.size(), derive_seed(seed, 3));
}

Stage1Batch Stage1Sampler::next() {
    Stage1Batch b;
    const auto n_domains = paired_.size();
    std::vector<torch::Tensor> x, y, sx, sy;
    std::vector<std::int64_t> lx, ly;
    for (int p = 0; p < batch_pairs_; ++p) {
        const auto idx = static_cast<std::int64_t>(pair_epoch_.next());
        const auto dx = rng_.below(n_domains);
        auto dy = rng_.below(n_domains - 1);
        if (dy >= dx) ++dy;
        x.push_back(paired_[dx].images[idx]);
        y.push_back(paired_[dy].images[idx]);
        sx.push_back(paired_[dx].segs[idx]);
        sy.push_back(paired_[dy].segs[idx]);
        lx.push_back(paired_[dx].label);
        ly.push_back(paired_[dy].label);
        b.pair_names.push_back(paired_[dx].names[idx]);
    }
    b.x = torch::stack(x);
    b.y = torch::stack(y);
    b.seg_x = torch::stack(sx);
    b.seg_y = torch::stack(sy);
    b.label_x = torch::tensor(lx, torch::kInt64);
    b.label_y = torch::tensor(ly, torch::kInt64);

    const auto& stream = real_.empty() ? paired_ : real_;
    std::vector<torch::Tensor> r, rs;
    std::vector<std::int64_t> rl;
    for (int i = 0; i < batch_real_; ++i) {
        const auto [di, idx] = real_items_[real_epoch_.next()];
        r.push_back(stream[di].images[idx]);
        rs.push_back(stream[di].segs[idx]);
        rl.push_back(stream[di].label);
    }
    const auto s = paired_.front().images.size(2);
    b.real = r.empty() ? torch::empty({0, 3, s, s}) : torch::stack(r);
    b.real_seg = rs.empty() ? torch::empty({0, 1, s / kSegFactor, s / kSegFactor}) : torch::stack(rs);
    b.real_label = torch::tensor(rl, torch::kInt64);
    return b;
}

nlohmann::json Stage1Sampler::state() const {
    return {{"rng", rng_.state()}, {"pairs", pair_epoch_.state()}, {"real", real_epoch_.state()}};
}

void Stage1Sampler::restore(const nlohmann::json& s) {
    rng_.set_state(s.at("rng").get<std::uint64_t>());
    pair_epoch_.restore(s.at("pairs"));
    real_epoch_.restore(s.at("real"));
}

Stage2Sampler::Stage2Sampler(DomainData x, DomainData y, int batch, std::uint64_t seed)
    : x_(std::move(x)),
      y_(std::move(y)),
      batch_(batch),
      x_epoch_(static_cast<std::size_t>(x_.images.size(0)), derive_seed(seed, 11)),
      y_epoch_(static_cast<std::size_t>(y_.images.size(0)), derive_seed(seed, 12)) {}

Stage2Batch Stage2Sampler::next() {
    auto pick = [&](const DomainData& d, EpochSampler& e) {
        std::vector<std::int64_t> idx;
        for (auto i : e.take(static_cast<std::size_t>(batch_))) idx.push_back(static_cast<std::int64_t>(i));
        return d.images.index_select(0, torch::tensor(idx, torch::kInt64));
    };
    Stage2Batch b;
    b.x = pick(x_, x_epoch_);
    b.y = pick(y_, y_epoch_);
    return b;
}

nlohmann::json Stage2Sampler::state() const { return {{"x", x_epoch_.state()}, {"y", y_epoch_.state()}}; }

void Stage2Sampler::restore(const nlohmann::json& s) {
    x_epoch_.restore(s.at("x"));
    y_epoch_.restore(s.at("y"));
}

} // namespace gptrans
