#include "gptrans/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <variant>

#include "gptrans/errors.hpp"

namespace gptrans {
namespace {

using Member = std::variant<int Config::*, double Config::*, bool Config::*, std::string Config::*,
                            std::uint64_t Config::*, std::vector<int> Config::*>;

struct Field {
    const char* key;
    Member member;
    const char* doc;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"stage", &Config::stage, "1 = content distillation, 2 = adversarial translation"},
        {"image_size", &Config::image_size, "square resolution, multiple of 64"},
        {"num_domains", &Config::num_domains, "registered domain count"},
        {"channel_divisor", &Config::channel_divisor, "divides every convolution width"},
        {"content_noise_std", &Config::content_noise_std, "gaussian noise on the content code (stage I)"},
        {"style_feature_block", &Config::style_feature_block, "discriminator residual block used for f_D"},
        {"dsc_sites", &Config::dsc_sites, "active dynamic skip sites, subset of 1,2"},
        {"rec_through_dsc", &Config::rec_through_dsc, "use skip fusion when computing L_rec"},
        {"perceptual", &Config::perceptual, "perceptual extractor: random-pyramid | identity"},
        {"perceptual_seed", &Config::perceptual_seed, "seed of the frozen random pyramid"},
        {"lr_stage1", &Config::lr_stage1, "Adam learning rate, stage I"},
        {"lr_stage2", &Config::lr_stage2, "Adam learning rate, stage II"},
        {"adam_beta1", &Config::adam_beta1, ""},
        {"adam_beta2", &Config::adam_beta2, ""},
        {"batch_pairs", &Config::batch_pairs, "correlated pairs per stage I iteration"},
        {"batch_real", &Config::batch_real, "unary real images per stage I iteration"},
        {"batch", &Config::batch, "stage II batch size"},
        {"stage1_iterations", &Config::stage1_iterations, ""},
        {"stage2_iterations", &Config::stage2_iterations, ""},
        {"checkpoint_every", &Config::checkpoint_every, "iterations between checkpoints, 0 = final only"},
        {"seed", &Config::seed, ""},
        {"threads", &Config::threads, "intra-op threads"},
        {"lambda_s", &Config::lambda_s, "shape reconstruction weight"},
        {"lambda_r", &Config::lambda_r, "content-code L2 weight"},
        {"lambda_con", &Config::lambda_con, "content loss weight (lambda_1)"},
        {"lambda_sty", &Config::lambda_sty, "style loss weight (lambda_2)"},
        {"lambda_msk", &Config::lambda_msk, "mask sparsity weight (lambda_3)"},
        {"lambda_rec", &Config::lambda_rec, "reconstruction weight (lambda_4)"},
        {"lambda_id", &Config::lambda_id, "identity hook weight, unused without a hook"},
        {"mapper_noise_dim", &Config::mapper_noise_dim, ""},
        {"mapper_hidden", &Config::mapper_hidden, ""},
        {"mapper_rounds", &Config::mapper_rounds, "nearest-neighbour matching rounds"},
        {"mapper_steps_per_round", &Config::mapper_steps_per_round, ""},
        {"mapper_candidates", &Config::mapper_candidates, "noise draws per style sample per round"},
        {"mapper_lr", &Config::mapper_lr, ""},
        {"mapper_min_samples", &Config::mapper_min_samples, "minimum style codes needed to fit"},
    };
    return table;
}

const Field& find_field(const std::string& key) {
    for (const auto& f : fields()) {
        if (key == f.key) return f;
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ConfigError("bad value '" + text + "' for key '" + key + "'");
    }
    return value;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_value(const Config& c, const Member& m) {
    return std::visit(
        [&](auto ptr) -> std::string {
            using T = std::decay_t<decltype(c.*ptr)>;
            const T& v = c.*ptr;
            if constexpr (std::is_same_v<T, bool>) {
                return v ? "true" : "false";
            } else if constexpr (std::is_same_v<T, double>) {
                return format_double(v);
            } else if constexpr (std::is_same_v<T, std::string>) {
                return v;
            } else if constexpr (std::is_same_v<T, std::vector<int>>) {
                std::string out;
                for (std::size_t i = 0; i < v.size(); ++i) {
                    if (i) out += ",";
                    out += std::to_string(v[i]);
                }
                return out;
            } else {
                return std::to_string(v);
            }
        },
        m);
}

} // namespace

void Config::set(const std::string& key, const std::string& raw) {
    const Field& f = find_field(key);
    const std::string value = trim(raw);
    std::visit(
        [&](auto ptr) {
            using T = std::decay_t<decltype(this->*ptr)>;
            if constexpr (std::is_same_v<T, bool>) {
                if (value == "true" || value == "1") {
                    this->*ptr = true;
                } else if (value == "false" || value == "0") {
                    this->*ptr = false;
                } else {
                    throw ConfigError("bad boolean '" + value + "' for key '" + key + "'");
                }
            } else if constexpr (std::is_same_v<T, std::string>) {
                this->*ptr = value;
            } else if constexpr (std::is_same_v<T, std::vector<int>>) {
                std::vector<int> out;
                std::stringstream ss(value);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    item = trim(item);
                    if (!item.empty()) out.push_back(parse_number<int>(key, item));
                }
                this->*ptr = out;
            } else if constexpr (std::is_same_v<T, double>) {
                try {
                    std::size_t used = 0;
                    const double v = std::stod(value, &used);
                    if (used != value.size()) throw std::invalid_argument(value);
                    this->*ptr = v;
                } catch (const std::logic_error&) {
                    throw ConfigError("bad value '" + value + "' for key '" + key + "'");
                }
            } else {
                this->*ptr = parse_number<T>(key, value);
            }
        },
        f.member);
}

void Config::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    require(stage == 1 || stage == 2, "stage must be 1 or 2");
    require(image_size >= 64 && image_size % 64 == 0, "image_size must be a positive multiple of 64");
    require(num_domains >= 2, "num_domains must be at least 2");
    require(channel_divisor >= 1 && 512 % channel_divisor == 0 && 32 % channel_divisor == 0,
            "channel_divisor must divide 32");
    require(content_noise_std >= 0.0, "content_noise_std must be nonnegative");
    require(style_feature_block >= 1, "style_feature_block must be >= 1");
    require(style_feature_block <= 6 && (1 << (style_feature_block + 2)) <= image_size,
            "style_feature_block exceeds the discriminator depth for this image_size");
    for (int s : dsc_sites) require(s == 1 || s == 2, "dsc_sites entries must be 1 or 2");
    require(dsc_sites.empty() || dsc_sites == std::vector<int>{1} || dsc_sites == std::vector<int>{1, 2},
            "dsc_sites must be empty, 1, or 1,2 (site 2 carries the hidden state of site 1)");
    require(perceptual == "random-pyramid" || perceptual == "identity",
            "perceptual must be random-pyramid or identity");
    require(lr_stage1 > 0 && lr_stage2 > 0 && mapper_lr > 0, "learning rates must be positive");
    require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1,
            "adam betas must lie in [0, 1)");
    require(batch_pairs >= 1 && batch_real >= 0 && batch >= 1, "batch sizes must be positive");
    require(stage1_iterations > 0 && stage2_iterations > 0, "iterations must be positive");
    require(checkpoint_every >= 0, "checkpoint_every must be nonnegative");
    require(threads >= 1, "threads must be >= 1");
    for (auto [name, v] : {std::pair{"lambda_s", lambda_s}, {"lambda_r", lambda_r},
                           {"lambda_con", lambda_con}, {"lambda_sty", lambda_sty},
                           {"lambda_msk", lambda_msk}, {"lambda_rec", lambda_rec},
                           {"lambda_id", lambda_id}}) {
        require(v >= 0.0 && std::isfinite(v), std::string(name) + " must be a finite nonnegative number");
    }
    require(mapper_noise_dim >= 1 && mapper_hidden >= 1, "mapper sizes must be positive");
    require(mapper_rounds >= 1 && mapper_steps_per_round >= 1 && mapper_candidates >= 1,
            "mapper schedule must be positive");
    require(mapper_min_samples >= 1, "mapper_min_samples must be positive");
}

std::string Config::to_text() const {
    std::ostringstream os;
    for (const auto& f : fields()) {
        if (f.doc[0] != '\0') os << "# " << f.doc << "\n";
        os << f.key << " = " << format_value(*this, f.member) << "\n";
    }
    return os.str();
}

Config Config::parse_text(const std::string& text) {
    Config c;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

nlohmann::json Config::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& f : fields()) {
        std::visit([&](auto ptr) { j[f.key] = this->*ptr; }, f.member);
    }
    return j;
}

Config Config::from_json(const nlohmann::json& j) {
    Config c;
    for (const auto& f : fields()) {
        if (!j.contains(f.key)) continue;
        std::visit(
            [&](auto ptr) {
                using T = std::decay_t<decltype(c.*ptr)>;
                c.*ptr = j.at(f.key).get<T>();
            },
            f.member);
    }
    return c;
}

std::vector<std::string> Config::keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.emplace_back(f.key);
    return out;
}

} // namespace gptrans
