#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "gptrans/rng.hpp"

namespace gptrans {

// ------------------------------------------------------------------ forge --

// Shared geometry of one correlated sample. Position and scale are fractions
// of the canvas side; orientation is in degrees.
struct ForgeLatent {
    double x = 0.5;
    double y = 0.5;
    double scale = 0.6;
    double angle_deg = 0.0;
    std::uint64_t appearance_seed = 0;

    static ForgeLatent sample(SplitMix64& rng);
    void validate() const;
    nlohmann::json to_json() const;
    static ForgeLatent from_json(const nlohmann::json& j);
};

// Pseudo-domain k draws the silhouette family k % 4 and the palette variant
// k / 4. Silhouettes are point symmetric around the latent position, so every
// domain puts its foreground centroid at the same spot.
enum class ShapeFamily { EllipseBlob, BoxVehicle, CrossGlyph, DiamondKite };

ShapeFamily forge_family(int domain);
std::string forge_domain_name(int domain);

struct ForgeRender {
    torch::Tensor image;  // [3, S, S] in [-1, 1]
    torch::Tensor mask;   // [1, S, S] exact binary foreground
    torch::Tensor seg;    // [1, S/16, S/16] area-downsampled foreground
};

// Deterministic render of `latent` in pseudo-domain `domain`. Foreground
// pixels have a positive channel mean and background pixels a negative one,
// so the foreground of any forge-styled image is recoverable by thresholding
// the channel mean at zero. Throws InputError for a negative domain or a size
// that is not a multiple of 64.
ForgeRender forge_render(const ForgeLatent& latent, int domain, int size);

// Foreground estimate for forge-styled images: channel mean > 0.
torch::Tensor forge_foreground(const torch::Tensor& image);

// Centroid (row, col) in pixels of a [1, H, W] or [H, W] nonnegative mask.
std::pair<double, double> mask_centroid(const torch::Tensor& mask);

// --------------------------------------------------------------- manifest --

struct DomainEntry {
    int id = 0;
    std::string name;    // directory name, "domain_<k>"
    std::string family;  // informational
};

struct DomainSplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

enum class Pairing { Paired, Unpaired };

// `root/manifest.json`: domain table, per-domain split lists, latent table
// for forge sets and an FNV-1a checksum over every referenced file.
struct DatasetManifest {
    std::filesystem::path root;
    Pairing pairing = Pairing::Paired;
    int image_size = 0;
    std::vector<DomainEntry> domains;
    std::map<int, DomainSplit> splits;
    std::map<std::string, ForgeLatent> latents;
    std::string checksum;

    nlohmann::json to_json() const;
    // Parses and validates `root/manifest.json`; IoError / InputError on any
    // missing file or broken pairing contract.
    static DatasetManifest load(const std::filesystem::path& root);
    void save() const;

    std::filesystem::path image_path(int domain, const std::string& name) const;
    std::filesystem::path seg_path(int domain, const std::string& name) const;
    std::string compute_checksum() const;
};

struct ForgeOptions {
    int num_domains = 2;
    int n_per_domain = 650;
    int image_size = 64;
    std::uint64_t seed = 0;
    int test_count = -1;  // -1: n_per_domain / 13 (650 -> 600 train / 50 test)
};

// Writes `root/domain_<k>/sample_<i>.png` and `sample_<i>_seg.png` for every
// domain plus `root/manifest.json`. Filenames are shared across domains iff
// the latent is shared. Output is a pure function of the options.
DatasetManifest forge_dataset(const std::filesystem::path& root, const ForgeOptions& options);

// Builds (and writes) a manifest for an externally prepared folder laid out as
// `root/domain_<k>/<name>.png` with optional `<name>_seg.png`. In paired mode
// every domain directory must hold the same set of names.
DatasetManifest ingest_folder(const std::filesystem::path& root, Pairing pairing, double test_fraction = 1.0 / 13.0);

// ------------------------------------------------------------ loaded data --

// One domain of one split, decoded into memory.
struct DomainData {
    int label = 0;
    std::vector<std::string> names;
    torch::Tensor images;  // [N, 3, S, S]
    torch::Tensor segs;    // [N, 1, S/16, S/16], undefined when no seg files exist
};

enum class Split { Train, Test };

DomainData load_domain(const DatasetManifest& manifest, int domain, Split split);

// ---------------------------------------------------------------- samplers --

// Epoch permutation over [0, n): every index appears once before any repeats;
// the order is reshuffled at each epoch boundary.
class EpochSampler {
public:
    EpochSampler(std::size_t n, std::uint64_t seed);
    std::size_t next();
    std::vector<std::size_t> take(std::size_t k);

    nlohmann::json state() const;
    void restore(const nlohmann::json& state);

private:
    void reshuffle();
    SplitMix64 rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

struct Stage1Batch {
    torch::Tensor x, y;          // [P, 3, S, S] correlated pairs
    torch::Tensor label_x, label_y;
    torch::Tensor seg_x, seg_y;  // [P, 1, S/16, S/16]
    torch::Tensor real, real_label, real_seg;  // unary stream, may be empty (0 rows)
    std::vector<std::string> pair_names;
};

// Draws correlated pairs (shared filename, two distinct random domains) from a
// paired set, plus unary real images from a separate stream, falling back to
// the paired set itself when no real stream is given.
class Stage1Sampler {
public:
    Stage1Sampler(std::vector<DomainData> paired, std::vector<DomainData> real, int batch_pairs, int batch_real,
                  std::uint64_t seed);
    Stage1Batch next();

    nlohmann::json state() const;
    void restore(const nlohmann::json& state);

private:
    std::vector<DomainData> paired_;
    std::vector<DomainData> real_;
    std::vector<std::pair<int, std::size_t>> real_items_;
    int batch_pairs_;
    int batch_real_;
    SplitMix64 rng_;
    EpochSampler pair_epoch_;
    EpochSampler real_epoch_;
};

struct Stage2Batch {
    torch::Tensor x;  // content inputs from X
    torch::Tensor y;  // style inputs from Y
};

// Independent draws from the two domains; no pairing assumed.
class Stage2Sampler {
public:
    Stage2Sampler(DomainData x, DomainData y, int batch, std::uint64_t seed);
    Stage2Batch next();

    nlohmann::json state() const;
    void restore(const nlohmann::json& state);

private:
    DomainData x_, y_;
    int batch_;
    EpochSampler x_epoch_, y_epoch_;
};

} // namespace gptrans
