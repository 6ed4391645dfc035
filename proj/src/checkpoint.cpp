#include "gptrans/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gptrans/errors.hpp"

namespace gptrans {
namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'G', 'P', 'T', 'R', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

class Writer {
public:
    template <class T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void put_bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes.insert(bytes.end(), p, p + n);
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    template <class T>
    T get() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    const std::uint8_t* take(std::size_t n) {
        if (n > size_ - pos_) throw CheckpointError("corrupt checkpoint: truncated");
        const auto* p = data_ + pos_;
        pos_ += n;
        return p;
    }
    std::size_t pos() const { return pos_; }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

nlohmann::json header_json(const Checkpoint& c) {
    nlohmann::json h;
    h["format_version"] = c.version;
    h["stage"] = c.stage;
    h["config"] = c.config.to_json();
    h["iteration"] = c.iteration;
    h["rng"] = c.rng;
    h["perceptual"] = c.perceptual;
    h["mapper_trained"] = c.mapper_trained;
    h["mapper_criterion"] = c.mapper_criterion;
    h["optimizer_steps"] = c.optimizer_steps;
    return h;
}

std::string optim_key(const std::string& opt, const std::string& param, const char* what) {
    return "optim." + opt + "." + param + "." + what;
}

} // namespace

const torch::Tensor& Checkpoint::array(const std::string& name) const {
    const auto it = std::lower_bound(arrays.begin(), arrays.end(), name,
                                     [](const auto& a, const std::string& n) { return a.first < n; });
    if (it == arrays.end() || it->first != name) throw CheckpointError("checkpoint has no array '" + name + "'");
    return it->second;
}

bool Checkpoint::has_array(const std::string& name) const {
    return std::binary_search(arrays.begin(), arrays.end(), std::pair<std::string, torch::Tensor>{name, {}},
                              [](const auto& a, const auto& b) { return a.first < b.first; });
}

std::string stage_tag(int stage) { return stage == 1 ? "stage1" : "stage2"; }

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
    Writer w;
    w.put_bytes(kMagic, sizeof kMagic);
    w.put<std::uint32_t>(c.version);
    const auto header = header_json(c).dump();
    w.put<std::uint64_t>(header.size());
    w.put_bytes(header.data(), header.size());

    auto arrays = c.arrays;
    std::sort(arrays.begin(), arrays.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    w.put<std::uint32_t>(static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, tensor] : arrays) {
        const auto t = tensor.detach().to(torch::kFloat32).contiguous();
        w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.put_bytes(name.data(), name.size());
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
        for (auto d : t.sizes()) w.put<std::int64_t>(d);
        w.put<std::uint64_t>(static_cast<std::uint64_t>(t.numel()));
        w.put_bytes(t.data_ptr<float>(), static_cast<std::size_t>(t.numel()) * sizeof(float));
    }
    w.put<std::uint64_t>(fnv1a(w.bytes.data(), w.bytes.size()));
    return std::move(w.bytes);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < sizeof kMagic + 4 + 8 + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw CheckpointError("corrupt checkpoint: bad magic or truncated header");
    }
    const std::size_t body = bytes.size() - 8;
    std::uint64_t stored_sum;
    std::memcpy(&stored_sum, bytes.data() + body, 8);

    Reader r(bytes.data(), body);
    r.take(sizeof kMagic);
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
    }
    if (fnv1a(bytes.data(), body) != stored_sum) throw CheckpointError("corrupt checkpoint: checksum mismatch");

    const auto header_len = r.get<std::uint64_t>();
    if (header_len > body) throw CheckpointError("corrupt checkpoint: truncated header");
    const auto* header_bytes = r.take(header_len);
    nlohmann::json h;
    Checkpoint c;
    try {
        h = nlohmann::json::parse(header_bytes, header_bytes + header_len);
        if (h.at("format_version").get<std::uint32_t>() != version) {
            throw CheckpointError("checkpoint version mismatch between header and container");
        }
        c.version = version;
        c.stage = h.at("stage").get<std::string>();
        c.config = Config::from_json(h.at("config"));
        c.iteration = h.at("iteration").get<std::int64_t>();
        c.rng = h.at("rng");
        c.perceptual = h.at("perceptual").get<std::string>();
        c.mapper_trained = h.at("mapper_trained").get<bool>();
        c.mapper_criterion = h.at("mapper_criterion").get<std::string>();
        c.optimizer_steps = h.at("optimizer_steps").get<std::map<std::string, std::int64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    }
    if (c.stage != "stage1" && c.stage != "stage2") throw CheckpointError("unknown checkpoint stage '" + c.stage + "'");

    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.get<std::uint32_t>();
        const auto* name = r.take(name_len);
        const auto ndim = r.get<std::uint32_t>();
        if (ndim > 8) throw CheckpointError("corrupt checkpoint: implausible rank");
        std::vector<std::int64_t> dims(ndim);
        std::int64_t expected = 1;
        for (auto& d : dims) {
            d = r.get<std::int64_t>();
            if (d < 0) throw CheckpointError("corrupt checkpoint: negative dimension");
            expected *= d;
        }
        const auto numel = r.get<std::uint64_t>();
        if (numel != static_cast<std::uint64_t>(expected)) throw CheckpointError("corrupt checkpoint: size mismatch");
        const auto* data = r.take(numel * sizeof(float));
        auto t = torch::empty(dims, torch::kFloat32);
        std::memcpy(t.data_ptr<float>(), data, numel * sizeof(float));
        c.arrays.emplace_back(std::string(reinterpret_cast<const char*>(name), name_len), std::move(t));
    }
    if (r.pos() != body) throw CheckpointError("corrupt checkpoint: trailing bytes");
    if (!std::is_sorted(c.arrays.begin(), c.arrays.end(),
                        [](const auto& a, const auto& b) { return a.first < b.first; })) {
        throw CheckpointError("corrupt checkpoint: arrays out of canonical order");
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
    const auto bytes = encode_checkpoint(ckpt);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

Checkpoint snapshot(const NetworkBundle& bundle, const std::vector<NamedOptimizer>& optimizers,
                    std::int64_t iteration, const nlohmann::json& rng, const std::string& perceptual) {
    Checkpoint c;
    c.stage = stage_tag(bundle.config.stage);
    c.config = bundle.config;
    c.iteration = iteration;
    c.rng = rng;
    c.perceptual = perceptual;
    c.mapper_trained = bundle.mapper_trained;
    c.mapper_criterion = bundle.mapper_trained ? "imle-unique-nearest" : "";
    for (const auto& [name, p] : bundle.named_parameters()) {
        c.arrays.emplace_back(name, p.detach().to(torch::kFloat32).clone());
    }
    for (const auto& opt : optimizers) {
        const auto& state = opt.optimizer->state();
        std::int64_t step = 0;
        for (const auto& [pname, p] : opt.params) {
            const auto it = state.find(p.unsafeGetTensorImpl());
            if (it == state.end()) continue;
            const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
            step = s.step();
            c.arrays.emplace_back(optim_key(opt.name, pname, "exp_avg"), s.exp_avg().detach().to(torch::kFloat32).clone());
            c.arrays.emplace_back(optim_key(opt.name, pname, "exp_avg_sq"),
                                  s.exp_avg_sq().detach().to(torch::kFloat32).clone());
        }
        c.optimizer_steps[opt.name] = step;
    }
    std::sort(c.arrays.begin(), c.arrays.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return c;
}

void load_module_arrays(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    for (auto& item : module.named_parameters(/*recurse=*/true)) {
        const auto& stored = ckpt.array(prefix + "." + item.key());
        if (!stored.sizes().equals(item.value().sizes())) {
            throw CheckpointError("checkpoint array '" + prefix + "." + item.key() + "' has shape " +
                                  c10::str(stored.sizes()) + ", network expects " + c10::str(item.value().sizes()));
        }
        item.value().copy_(stored);
    }
}

NetworkBundle restore_bundle(const Checkpoint& ckpt, int expected_stage) {
    if (ckpt.stage != stage_tag(expected_stage)) {
        throw CheckpointError("expected a " + stage_tag(expected_stage) + " checkpoint, got " + ckpt.stage);
    }
    auto bundle = build_networks(ckpt.config, 0);
    for (const auto& [prefix, module] : bundle.modules()) load_module_arrays(ckpt, prefix, *module);
    bundle.mapper_trained = ckpt.mapper_trained;
    const auto n_params = std::count_if(ckpt.arrays.begin(), ckpt.arrays.end(),
                                        [](const auto& a) { return a.first.rfind("optim.", 0) != 0; });
    if (static_cast<std::size_t>(n_params) != bundle.named_parameters().size()) {
        throw CheckpointError("checkpoint parameter set does not match the network layout");
    }
    return bundle;
}

void restore_optimizers(const Checkpoint& ckpt, const std::vector<NamedOptimizer>& optimizers) {
    for (const auto& opt : optimizers) {
        const auto step_it = ckpt.optimizer_steps.find(opt.name);
        if (step_it == ckpt.optimizer_steps.end()) continue;
        auto& state = opt.optimizer->state();
        for (const auto& [pname, p] : opt.params) {
            const auto key = optim_key(opt.name, pname, "exp_avg");
            if (!ckpt.has_array(key)) continue;
            auto s = std::make_unique<torch::optim::AdamParamState>();
            s->step(step_it->second);
            s->exp_avg(ckpt.array(key).to(p.dtype()).clone());
            s->exp_avg_sq(ckpt.array(optim_key(opt.name, pname, "exp_avg_sq")).to(p.dtype()).clone());
            state[p.unsafeGetTensorImpl()] = std::move(s);
        }
    }
}

} // namespace gptrans
