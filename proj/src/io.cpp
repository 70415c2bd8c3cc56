#include "shiftadd/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace shiftadd {

using nlohmann::json;

namespace {

std::map<std::string, std::string> parse_kv(const std::string& s) {
    std::map<std::string, std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value in '" + item + "'");
        out[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return out;
}

std::size_t kv_size(const std::map<std::string, std::string>& kv, const std::string& key,
                    std::size_t fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : static_cast<std::size_t>(std::stoull(it->second));
}

void normalize_images(Tensor& images) {
    double mean = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) mean += images[i];
    mean /= static_cast<double>(images.size());
    double var = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const double d = images[i] - mean;
        var += d * d;
    }
    const double inv = 1.0 / std::sqrt(var / static_cast<double>(images.size()) + 1e-12);
    for (std::size_t i = 0; i < images.size(); ++i) images[i] = (images[i] - mean) * inv;
}

Dataset make_blobs(std::size_t classes, std::size_t n, std::size_t hw, std::uint64_t seed) {
    if (classes < 2 || n < classes) throw ConfigError("blobs need classes >= 2 and n >= classes");
    Dataset d;
    d.classes = classes;
    d.images = Tensor({n, 1, hw, hw});
    d.labels.resize(n);

    std::mt19937_64 rng(seed);
    // class prototypes on a circle around the grid center
    const double cx = static_cast<double>(hw - 1) / 2.0;
    const double radius = static_cast<double>(hw) / 3.2;
    std::vector<double> crow(classes), ccol(classes), csig(classes);
    for (std::size_t k = 0; k < classes; ++k) {
        const double a = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(classes);
        crow[k] = cx + radius * std::sin(a);
        ccol[k] = cx + radius * std::cos(a);
        csig[k] = 1.2 + 0.3 * static_cast<double>(k % 3);
    }

    std::normal_distribution<double> jitter(0.0, 0.45);
    std::normal_distribution<double> amp(1.0, 0.15);
    std::normal_distribution<double> noise(0.0, 0.08);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i % classes;  // balanced within +-1
        d.labels[i] = k;
        const double row = crow[k] + jitter(rng);
        const double col = ccol[k] + jitter(rng);
        const double a = amp(rng);
        const double inv2s2 = 1.0 / (2.0 * csig[k] * csig[k]);
        double* img = d.images.data() + i * hw * hw;
        for (std::size_t r = 0; r < hw; ++r)
            for (std::size_t c = 0; c < hw; ++c) {
                const double dr = static_cast<double>(r) - row;
                const double dc = static_cast<double>(c) - col;
                img[r * hw + c] = a * std::exp(-(dr * dr + dc * dc) * inv2s2) + noise(rng);
            }
    }
    normalize_images(d.images);
    return d;
}

// 8x8 glyphs, one bitmask row per byte, digits 0..9
constexpr std::uint8_t kGlyphs[10][8] = {
    {0x3C, 0x42, 0x46, 0x5A, 0x62, 0x42, 0x3C, 0x00}, {0x08, 0x18, 0x28, 0x08, 0x08, 0x08, 0x3E, 0x00},
    {0x3C, 0x42, 0x02, 0x0C, 0x30, 0x40, 0x7E, 0x00}, {0x3C, 0x42, 0x02, 0x1C, 0x02, 0x42, 0x3C, 0x00},
    {0x04, 0x0C, 0x14, 0x24, 0x7E, 0x04, 0x04, 0x00}, {0x7E, 0x40, 0x7C, 0x02, 0x02, 0x42, 0x3C, 0x00},
    {0x1C, 0x20, 0x40, 0x7C, 0x42, 0x42, 0x3C, 0x00}, {0x7E, 0x02, 0x04, 0x08, 0x10, 0x10, 0x10, 0x00},
    {0x3C, 0x42, 0x42, 0x3C, 0x42, 0x42, 0x3C, 0x00}, {0x3C, 0x42, 0x42, 0x3E, 0x02, 0x04, 0x38, 0x00},
};

Dataset make_digits(std::size_t classes, std::size_t n, std::uint64_t seed) {
    if (classes < 2 || classes > 10) throw ConfigError("digits support 2..10 classes");
    Dataset d;
    d.classes = classes;
    d.images = Tensor({n, 1, 8, 8});
    d.labels.resize(n);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.18);
    std::uniform_int_distribution<int> shift(-1, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i % classes;
        d.labels[i] = k;
        const int dr = shift(rng), dc = shift(rng);
        double* img = d.images.data() + i * 64;
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                const int sr = r - dr, sc = c - dc;
                double v = 0.0;
                if (sr >= 0 && sr < 8 && sc >= 0 && sc < 8)
                    v = (kGlyphs[k][sr] >> (7 - sc)) & 1 ? 1.0 : 0.0;
                img[r * 8 + c] = v + noise(rng);
            }
    }
    normalize_images(d.images);
    return d;
}

constexpr char kRawMagic[8] = {'S', 'A', 'D', 'R', 'A', 'W', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("unexpected end of file");
    return v;
}

}  // namespace

Dataset load_dataset(const std::string& spec) {
    if (spec.rfind("synth:", 0) == 0) {
        const std::string rest = spec.substr(6);
        const auto colon = rest.find(':');
        const std::string kind = colon == std::string::npos ? rest : rest.substr(0, colon);
        const auto kv = colon == std::string::npos
                            ? std::map<std::string, std::string>{}
                            : parse_kv(rest.substr(colon + 1));
        const std::uint64_t seed = kv_size(kv, "seed", 0);
        if (kind == "blobs") {
            Dataset d = make_blobs(kv_size(kv, "classes", 3), kv_size(kv, "n", 600),
                                   kv_size(kv, "hw", 12), seed);
            d.source_spec = spec;
            return d;
        }
        if (kind == "digits") {
            Dataset d = make_digits(kv_size(kv, "classes", 10), kv_size(kv, "n", 500), seed);
            d.source_spec = spec;
            return d;
        }
        throw ConfigError("unknown synthetic generator '" + kind + "'");
    }
    const std::string path = spec.rfind("raw:", 0) == 0 ? spec.substr(4) : spec;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset file '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kRawMagic, 8) != 0)
        throw IoError("'" + path + "' is not a raw dataset file");
    const auto n = read_pod<std::uint64_t>(is);
    const auto c = read_pod<std::uint64_t>(is);
    const auto h = read_pod<std::uint64_t>(is);
    const auto w = read_pod<std::uint64_t>(is);
    const auto classes = read_pod<std::uint64_t>(is);
    Dataset d;
    d.classes = classes;
    d.images = Tensor({n, c, h, w});
    is.read(reinterpret_cast<char*>(d.images.data()),
            static_cast<std::streamsize>(d.images.size() * sizeof(double)));
    if (!is) throw IoError("dataset file truncated");
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.labels[i] = read_pod<std::uint64_t>(is);
        if (d.labels[i] >= classes) throw IoError("dataset label out of range");
    }
    d.source_spec = spec;
    return d;
}

void save_raw_dataset(const std::string& path, const Dataset& d) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write dataset file '" + path + "'");
    os.write(kRawMagic, 8);
    const auto& s = d.images.shape();
    write_pod<std::uint64_t>(os, s[0]);
    write_pod<std::uint64_t>(os, s[1]);
    write_pod<std::uint64_t>(os, s[2]);
    write_pod<std::uint64_t>(os, s[3]);
    write_pod<std::uint64_t>(os, d.classes);
    os.write(reinterpret_cast<const char*>(d.images.data()),
             static_cast<std::streamsize>(d.images.size() * sizeof(double)));
    for (std::size_t i = 0; i < d.labels.size(); ++i)
        write_pod<std::uint64_t>(os, d.labels[i]);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double test_fraction,
                                          std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0))
        throw ConfigError("test fraction must be in [0, 1)");
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(d.size())));
    const auto& s = d.images.shape();
    const std::size_t sample = s[1] * s[2] * s[3];
    auto take = [&](std::size_t lo, std::size_t hi) {
        Dataset out;
        out.classes = d.classes;
        out.source_spec = d.source_spec;
        out.images = Tensor({hi - lo, s[1], s[2], s[3]});
        out.labels.resize(hi - lo);
        for (std::size_t j = lo; j < hi; ++j) {
            std::copy_n(d.images.data() + idx[j] * sample, sample,
                        out.images.data() + (j - lo) * sample);
            out.labels[j - lo] = d.labels[idx[j]];
        }
        return out;
    };
    return {take(n_test, d.size()), take(0, n_test)};
}

ArchConfig parse_arch_text(const std::string& text) {
    ArchConfig arch;
    arch.layers.clear();
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string head;
        if (!(ls >> head)) continue;
        try {
            if (head == "input") {
                ls >> arch.in_channels >> arch.in_rows >> arch.in_cols;
            } else if (head == "classes") {
                ls >> arch.classes;
            } else if (head == "shift_mode") {
                std::string m;
                ls >> m;
                if (m == "fixed") arch.shift_mode = ShiftMode::Fixed;
                else if (m == "learnable") arch.shift_mode = ShiftMode::Learnable;
                else throw ConfigError("shift_mode must be fixed|learnable");
            } else if (head == "shift_p_min") {
                ls >> arch.shift_p_min;
            } else if (head == "shift_nonzero_fraction") {
                ls >> arch.shift_nonzero_fraction;
            } else if (head == "shift_update_threshold") {
                ls >> arch.shift_update_threshold;
            } else if (head == "layer") {
                std::string kind;
                ls >> kind;
                LayerSpec spec;
                spec.kind = layer_kind_from_string(kind);
                spec.pad = 0;
                std::string tok;
                while (ls >> tok) {
                    const auto eq = tok.find('=');
                    if (eq == std::string::npos)
                        throw ConfigError("expected key=value, got '" + tok + "'");
                    const std::string key = tok.substr(0, eq);
                    const std::size_t val = std::stoull(tok.substr(eq + 1));
                    if (key == "out") spec.out_channels = val;
                    else if (key == "kernel") spec.kernel = val;
                    else if (key == "stride") spec.stride = val;
                    else if (key == "pad") spec.pad = val;
                    else if (key == "pool") spec.pool = val;
                    else throw ConfigError("unknown layer key '" + key + "'");
                }
                arch.layers.push_back(spec);
            } else {
                throw ConfigError("unknown directive '" + head + "'");
            }
        } catch (const std::exception& e) {
            throw ConfigError("arch config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return arch;
}

ArchConfig parse_arch_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open arch file '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_arch_text(ss.str());
}

std::string arch_to_text(const ArchConfig& arch) {
    std::ostringstream os;
    os << "input " << arch.in_channels << " " << arch.in_rows << " " << arch.in_cols << "\n";
    os << "classes " << arch.classes << "\n";
    os << "shift_mode " << (arch.shift_mode == ShiftMode::Fixed ? "fixed" : "learnable") << "\n";
    os << "shift_p_min " << arch.shift_p_min << "\n";
    os << "shift_nonzero_fraction " << arch.shift_nonzero_fraction << "\n";
    os << "shift_update_threshold " << arch.shift_update_threshold << "\n";
    for (const auto& spec : arch.layers) {
        os << "layer " << layer_kind_name(spec.kind);
        switch (spec.kind) {
            case LayerKind::ShiftAdd:
            case LayerKind::ShiftOnly:
            case LayerKind::AddOnly:
            case LayerKind::MultConv:
                os << " out=" << spec.out_channels << " kernel=" << spec.kernel
                   << " stride=" << spec.stride << " pad=" << spec.pad;
                break;
            case LayerKind::AvgPool: os << " pool=" << spec.pool; break;
            default: break;
        }
        os << "\n";
    }
    return os.str();
}

// ---- checkpoint container ----

namespace {

constexpr char kCkptMagic[8] = {'S', 'A', 'D', 'C', 'K', 'P', 'T', '1'};

void write_record(std::ostream& os, const std::string& name, const std::string& payload) {
    write_pod<std::uint64_t>(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint64_t>(os, payload.size());
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

std::string bytes_of(const void* p, std::size_t n) {
    return std::string(static_cast<const char*>(p), n);
}

std::string tensor_payload(const Tensor& t) {
    std::ostringstream os;
    write_pod<std::uint64_t>(os, t.rank());
    for (std::size_t d : t.shape()) write_pod<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
    return os.str();
}

Tensor tensor_from_payload(const std::string& payload) {
    std::istringstream is(payload);
    const auto rank = read_pod<std::uint64_t>(is);
    if (rank > 8) throw IoError("corrupt tensor record");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = read_pod<std::uint64_t>(is);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw IoError("corrupt tensor record");
    return t;
}

json config_to_json(const TrainConfig& cfg) {
    json j;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["base_lr"] = cfg.base_lr;
    j["momentum"] = cfg.momentum;
    j["weight_decay"] = cfg.weight_decay;
    j["lr_drop_epochs"] = cfg.lr_drop_epochs;
    j["precision"] = precision_name(cfg.precision);
    j["freeze_shift"] = cfg.freeze_shift;
    j["shift_update_threshold"] = cfg.shift_update_threshold;
    j["shift_prune_ratio"] = cfg.shift_prune_ratio;
    j["add_prune_ratio"] = cfg.add_prune_ratio;
    j["add_prune_policy"] =
        cfg.add_prune_policy == PrunePolicy::Random ? "random" : "magnitude";
    j["platform"] = platform_name(cfg.platform);
    j["seed"] = cfg.seed;
    return j;
}

TrainConfig config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.epochs = j.at("epochs");
    cfg.batch_size = j.at("batch_size");
    cfg.base_lr = j.at("base_lr");
    cfg.momentum = j.at("momentum");
    cfg.weight_decay = j.at("weight_decay");
    cfg.lr_drop_epochs = j.at("lr_drop_epochs").get<std::vector<std::size_t>>();
    cfg.precision = precision_from_string(j.at("precision"));
    cfg.freeze_shift = j.at("freeze_shift");
    cfg.shift_update_threshold = j.at("shift_update_threshold");
    cfg.shift_prune_ratio = j.at("shift_prune_ratio");
    cfg.add_prune_ratio = j.at("add_prune_ratio");
    cfg.add_prune_policy =
        j.at("add_prune_policy") == "random" ? PrunePolicy::Random : PrunePolicy::Magnitude;
    cfg.platform = platform_from_string(j.at("platform"));
    cfg.seed = j.at("seed");
    return cfg;
}

json epoch_to_json(const EpochStats& e) {
    json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["train_acc"] = e.train_acc;
    j["test_loss"] = e.test_loss;
    j["test_acc"] = e.test_acc;
    j["cumulative_joules"] = e.cumulative_joules;
    j["wall_seconds"] = e.wall_seconds;
    return j;
}

EpochStats epoch_from_json(const json& j) {
    EpochStats e;
    e.epoch = j.at("epoch");
    e.train_loss = j.at("train_loss");
    e.train_acc = j.at("train_acc");
    e.test_loss = j.at("test_loss");
    e.test_acc = j.at("test_acc");
    e.cumulative_joules = j.at("cumulative_joules");
    e.wall_seconds = j.at("wall_seconds");
    return e;
}

}  // namespace

std::string train_record_jsonl(const TrainRecord& record) {
    std::ostringstream os;
    json head;
    head["config_hash"] = record.config_hash;
    head["seed"] = record.seed;
    head["energy_substituted"] = record.energy_substituted;
    os << head.dump() << "\n";
    for (const auto& e : record.epochs) os << epoch_to_json(e).dump() << "\n";
    return os.str();
}

TrainRecord train_record_from_jsonl(const std::string& text) {
    TrainRecord record;
    std::istringstream is(text);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw IoError("malformed train record line: " + line);
        if (first) {
            record.config_hash = j.at("config_hash");
            record.seed = j.at("seed");
            record.energy_substituted = j.at("energy_substituted");
            first = false;
        } else {
            record.epochs.push_back(epoch_from_json(j));
        }
    }
    if (first) throw IoError("empty train record");
    return record;
}

void save_checkpoint(const std::string& path, const TrainerState& state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint '" + path + "'");
    os.write(kCkptMagic, 8);
    write_record(os, "version", bytes_of("\x01\x00\x00\x00", 4));
    write_record(os, "arch", arch_to_text(state.model.arch));
    write_record(os, "config", config_to_json(state.cfg).dump());
    const std::uint64_t seed = state.model.seed;
    write_record(os, "model.seed", bytes_of(&seed, 8));
    write_record(os, "model.precision", precision_name(state.model.precision));
    const std::uint8_t freeze = state.model.freeze_shift ? 1 : 0;
    write_record(os, "model.freeze", bytes_of(&freeze, 1));

    for (std::size_t i = 0; i < state.model.layers.size(); ++i) {
        const std::string prefix = "L" + std::to_string(i) + ".";
        const auto& ls = state.model.layers[i].state;
        if (const auto* sl = std::get_if<ShiftLayerState>(&ls)) {
            const auto& w = sl->weights;
            write_record(os, prefix + "signs", bytes_of(w.signs.data(), w.signs.size()));
            write_record(os, prefix + "exps", bytes_of(w.exponents.data(), w.exponents.size()));
            write_record(os, prefix + "latent",
                         bytes_of(w.latent_sign.data(), w.latent_sign.size() * sizeof(double)));
            write_record(os, prefix + "prunedmask", bytes_of(w.pruned.data(), w.pruned.size()));
            write_record(os, prefix + "deadzone", bytes_of(&w.sign_deadzone, sizeof(double)));
            const std::uint8_t fr = w.frozen ? 1 : 0;
            write_record(os, prefix + "frozen", bytes_of(&fr, 1));
        } else if (const auto* al = std::get_if<AddLayerState>(&ls)) {
            write_record(os, prefix + "w", tensor_payload(al->weights.values));
            write_record(os, prefix + "mask",
                         bytes_of(al->weights.mask.data(), al->weights.mask.size()));
        } else if (const auto* cl = std::get_if<ConvLayerState>(&ls)) {
            write_record(os, prefix + "w", tensor_payload(cl->weights));
        } else if (const auto* bn = std::get_if<BatchNormState>(&ls)) {
            write_record(os, prefix + "gamma", tensor_payload(bn->gamma));
            write_record(os, prefix + "beta", tensor_payload(bn->beta));
            write_record(os, prefix + "rmean", tensor_payload(bn->running_mean));
            write_record(os, prefix + "rvar", tensor_payload(bn->running_var));
        }
        if (state.velocity_a[i].size() > 0)
            write_record(os, prefix + "va", tensor_payload(state.velocity_a[i]));
        if (state.velocity_b[i].size() > 0)
            write_record(os, prefix + "vb", tensor_payload(state.velocity_b[i]));
    }

    std::ostringstream rngs;
    rngs << state.rng;
    write_record(os, "rng", rngs.str());
    const std::uint64_t next = state.next_epoch;
    write_record(os, "next_epoch", bytes_of(&next, 8));
    write_record(os, "record", train_record_jsonl(state.record));
    if (!os) throw IoError("checkpoint write failed");
}

TrainerState load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw IoError("'" + path + "' is not a checkpoint (bad magic)");

    std::map<std::string, std::string> records;
    while (true) {
        std::uint64_t nlen;
        is.read(reinterpret_cast<char*>(&nlen), 8);
        if (is.eof()) break;
        if (!is || nlen > (1ULL << 20)) throw IoError("checkpoint truncated or corrupt");
        std::string name(nlen, '\0');
        is.read(name.data(), static_cast<std::streamsize>(nlen));
        const auto plen = read_pod<std::uint64_t>(is);
        if (plen > (1ULL << 34)) throw IoError("checkpoint record too large");
        std::string payload(plen, '\0');
        is.read(payload.data(), static_cast<std::streamsize>(plen));
        if (!is) throw IoError("checkpoint truncated");
        records[name] = std::move(payload);
    }
    auto need = [&](const std::string& name) -> const std::string& {
        auto it = records.find(name);
        if (it == records.end()) throw IoError("checkpoint missing record '" + name + "'");
        return it->second;
    };

    if (need("version").size() != 4 || need("version")[0] != 1)
        throw IoError("unsupported checkpoint version");
    const ArchConfig arch = parse_arch_text(need("arch"));
    const TrainConfig cfg = config_from_json(json::parse(need("config")));
    std::uint64_t model_seed;
    std::memcpy(&model_seed, need("model.seed").data(), 8);
    const Precision prec = precision_from_string(need("model.precision"));
    const bool freeze = need("model.freeze")[0] != 0;

    TrainerState st = make_trainer(build_model(arch, model_seed, prec, freeze), cfg);
    for (std::size_t i = 0; i < st.model.layers.size(); ++i) {
        const std::string prefix = "L" + std::to_string(i) + ".";
        auto& ls = st.model.layers[i].state;
        if (auto* sl = std::get_if<ShiftLayerState>(&ls)) {
            auto& w = sl->weights;
            const std::string& signs = need(prefix + "signs");
            const std::string& exps = need(prefix + "exps");
            const std::string& latent = need(prefix + "latent");
            const std::string& pruned = need(prefix + "prunedmask");
            if (signs.size() != w.size() || exps.size() != w.size() ||
                latent.size() != w.size() * sizeof(double) || pruned.size() != w.size())
                throw IoError("checkpoint shift layer size mismatch at layer " +
                              std::to_string(i));
            std::memcpy(w.signs.data(), signs.data(), signs.size());
            std::memcpy(w.exponents.data(), exps.data(), exps.size());
            std::memcpy(w.latent_sign.data(), latent.data(), latent.size());
            std::memcpy(w.pruned.data(), pruned.data(), pruned.size());
            std::memcpy(&w.sign_deadzone, need(prefix + "deadzone").data(), sizeof(double));
            w.frozen = need(prefix + "frozen")[0] != 0;
        } else if (auto* al = std::get_if<AddLayerState>(&ls)) {
            al->weights.values = tensor_from_payload(need(prefix + "w"));
            const std::string& mask = need(prefix + "mask");
            if (mask.size() != al->weights.mask.size())
                throw IoError("checkpoint add layer mask size mismatch");
            std::memcpy(al->weights.mask.data(), mask.data(), mask.size());
        } else if (auto* cl = std::get_if<ConvLayerState>(&ls)) {
            cl->weights = tensor_from_payload(need(prefix + "w"));
        } else if (auto* bn = std::get_if<BatchNormState>(&ls)) {
            bn->gamma = tensor_from_payload(need(prefix + "gamma"));
            bn->beta = tensor_from_payload(need(prefix + "beta"));
            bn->running_mean = tensor_from_payload(need(prefix + "rmean"));
            bn->running_var = tensor_from_payload(need(prefix + "rvar"));
        }
        if (records.count(prefix + "va"))
            st.velocity_a[i] = tensor_from_payload(records[prefix + "va"]);
        if (records.count(prefix + "vb"))
            st.velocity_b[i] = tensor_from_payload(records[prefix + "vb"]);
    }
    std::istringstream rngs(need("rng"));
    rngs >> st.rng;
    std::memcpy(&st.next_epoch, need("next_epoch").data(), 8);
    st.record = train_record_from_jsonl(need("record"));
    return st;
}

// ---- plots ----

namespace {

const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string svg_plot(const std::vector<NamedRecord>& records, bool x_is_energy) {
    const double width = 640, height = 420, ml = 60, mr = 20, mt = 20, mb = 45;
    double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = 1.0;
    for (const auto& nr : records)
        for (const auto& e : nr.record.epochs) {
            const double x = x_is_energy ? e.cumulative_joules : static_cast<double>(e.epoch);
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
        }
    if (xmax <= xmin) xmax = xmin + 1.0;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
    auto py = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };

    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
       << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    os << "<line x1='" << ml << "' y1='" << height - mb << "' x2='" << width - mr << "' y2='"
       << height - mb << "' stroke='black'/>\n";
    os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << height - mb
       << "' stroke='black'/>\n";
    os << "<text x='" << width / 2 << "' y='" << height - 10
       << "' font-size='13' text-anchor='middle'>"
       << (x_is_energy ? "cumulative training energy (J)" : "epoch") << "</text>\n";
    os << "<text x='15' y='" << height / 2
       << "' font-size='13' text-anchor='middle' transform='rotate(-90 15 " << height / 2
       << ")'>test accuracy</text>\n";
    for (int tick = 0; tick <= 5; ++tick) {
        const double y = ymin + (ymax - ymin) * tick / 5.0;
        os << "<text x='" << ml - 8 << "' y='" << py(y) + 4
           << "' font-size='11' text-anchor='end'>" << y << "</text>\n";
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        const char* color = kPalette[i % 6];
        os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (const auto& e : records[i].record.epochs) {
            const double x = x_is_energy ? e.cumulative_joules : static_cast<double>(e.epoch);
            os << px(x) << "," << py(e.test_acc) << " ";
        }
        os << "'/>\n";
        os << "<text x='" << width - mr - 140 << "' y='" << mt + 16 * (i + 1)
           << "' font-size='12' fill='" << color << "'>" << records[i].run_id << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace

std::vector<std::string> emit_curves(const std::vector<NamedRecord>& records,
                                     const std::string& out_dir) {
    if (records.empty()) throw ConfigError("emit_curves: no records");
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> written;
    for (const auto& nr : records) {
        const std::string path = out_dir + "/" + nr.run_id + ".csv";
        std::ofstream os(path);
        os << "epoch,train_loss,train_acc,test_loss,test_acc,cumulative_joules\n";
        for (const auto& e : nr.record.epochs)
            os << e.epoch << "," << e.train_loss << "," << e.train_acc << "," << e.test_loss
               << "," << e.test_acc << "," << e.cumulative_joules << "\n";
        written.push_back(path);
    }
    for (bool energy : {false, true}) {
        const std::string path =
            out_dir + (energy ? "/accuracy_vs_energy.svg" : "/accuracy_vs_epoch.svg");
        std::ofstream os(path);
        os << svg_plot(records, energy);
        written.push_back(path);
    }
    return written;
}

void write_manifest(const std::string& out_dir, const TrainConfig& cfg,
                    const std::string& dataset_spec, std::uint64_t model_seed) {
    std::filesystem::create_directories(out_dir);
    json j;
    j["config"] = config_to_json(cfg);
    j["dataset_spec"] = dataset_spec;
    j["model_seed"] = model_seed;
    j["config_hash"] = cfg.fingerprint();
    j["seeds"] = {{"train", cfg.seed}, {"model", model_seed}};
    std::ofstream os(out_dir + "/manifest.json");
    os << j.dump(2) << "\n";
}

}  // namespace shiftadd
