#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "shiftadd/io.hpp"

using namespace shiftadd;

namespace {

// exit codes by failure category
constexpr int kConfigError = 2;
constexpr int kIoErrorCode = 3;
constexpr int kNumericError = 4;
constexpr int kGeometryErrorCode = 5;

struct CommonOpts {
    std::string precision = "fp32";
    std::string platform = "asic";
    std::uint64_t seed = 0;
    std::string config_file;
};

TrainConfig base_config(const CommonOpts& c) {
    TrainConfig cfg;
    cfg.precision = precision_from_string(c.precision);
    cfg.platform = platform_from_string(c.platform);
    cfg.seed = c.seed;
    return cfg;
}

int run_train(const CommonOpts& common, const std::string& arch_path, const std::string& data,
              std::size_t epochs, std::size_t batch_size, double lr, bool freeze_shift,
              double shift_prune, double add_prune, const std::string& prune_policy,
              double test_fraction, const std::string& out_dir,
              const std::string& resume_path) {
    std::filesystem::create_directories(out_dir);

    TrainerState st = [&] {
        if (!resume_path.empty()) return load_checkpoint(resume_path);
        TrainConfig cfg = base_config(common);
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.base_lr = lr;
        cfg.freeze_shift = freeze_shift;
        cfg.shift_prune_ratio = shift_prune;
        cfg.add_prune_ratio = add_prune;
        cfg.add_prune_policy =
            prune_policy == "magnitude" ? PrunePolicy::Magnitude : PrunePolicy::Random;
        const ArchConfig arch = parse_arch_file(arch_path);
        Model model = build_model(arch, cfg.seed, cfg.precision, cfg.freeze_shift);
        return make_trainer(std::move(model), cfg);
    }();

    Dataset full = load_dataset(data);
    auto [train_set, test_set] = split_dataset(full, test_fraction, st.cfg.seed + 1);

    std::cout << st.model.summary();
    write_manifest(out_dir, st.cfg, data, st.model.seed);

    train_epochs(st, train_set, test_set, st.cfg.epochs);

    const auto& last = st.record.epochs.back();
    std::cout << "final: train_acc=" << last.train_acc << " test_acc=" << last.test_acc
              << " energy=" << last.cumulative_joules << " J\n";

    std::ofstream rec(out_dir + "/record.jsonl");
    rec << train_record_jsonl(st.record);
    save_checkpoint(out_dir + "/final.ckpt", st);
    std::cout << "wrote " << out_dir << "/record.jsonl and " << out_dir << "/final.ckpt\n";
    return 0;
}

int run_eval(const std::string& ckpt, const std::string& data, double test_fraction) {
    TrainerState st = load_checkpoint(ckpt);
    Dataset full = load_dataset(data);
    if (test_fraction > 0.0) {
        auto [train_set, test_set] = split_dataset(full, test_fraction, st.cfg.seed + 1);
        auto [loss, acc] = evaluate(st.model, test_set);
        std::cout << "test split: loss=" << loss << " acc=" << acc << "\n";
    } else {
        auto [loss, acc] = evaluate(st.model, full);
        std::cout << "loss=" << loss << " acc=" << acc << "\n";
    }
    return 0;
}

int run_energy(const CommonOpts& common, const std::string& arch_path, const std::string& phase,
               std::uint64_t steps, const std::string& out_csv) {
    const ArchConfig arch = parse_arch_file(arch_path);
    const Precision prec = precision_from_string(common.precision);
    Model model = build_model(arch, common.seed, prec);
    std::vector<Phase> phases = {Phase::Forward};
    if (phase == "train")
        phases = {Phase::Forward, Phase::Backward, Phase::Update};
    else if (phase != "inference")
        throw ConfigError("--phase must be inference|train");
    const EnergyPolicy policy = train_energy_policy(prec);
    EnergyReport report =
        estimate_energy_mapped(model, phases, policy, platform_from_string(common.platform), steps);
    std::cout << report.to_text();
    if (policy.substituted)
        std::cout << "note: some ops charged at substituted fixed-point formats (no measured "
                     "entry at "
                  << common.precision << ")\n";
    if (!out_csv.empty()) {
        std::ofstream os(out_csv);
        os << report.to_csv();
        std::cout << "wrote " << out_csv << "\n";
    }
    return 0;
}

int run_prune(const std::string& in_ckpt, const std::string& out_ckpt, double shift_ratio,
              double add_ratio, const std::string& policy, std::uint64_t seed) {
    TrainerState st = load_checkpoint(in_ckpt);
    std::size_t salt = 0;
    for (auto& layer : st.model.layers) {
        if (auto* sl = std::get_if<ShiftLayerState>(&layer.state)) {
            if (shift_ratio > 0.0) shift_prune(sl->weights, shift_ratio, seed + salt);
        } else if (auto* al = std::get_if<AddLayerState>(&layer.state)) {
            if (add_ratio > 0.0)
                add_prune(al->weights, add_ratio,
                          policy == "magnitude" ? PrunePolicy::Magnitude : PrunePolicy::Random,
                          seed + salt);
        }
        ++salt;
    }
    save_checkpoint(out_ckpt, st);
    std::cout << st.model.summary();
    std::cout << "wrote " << out_ckpt << "\n";
    return 0;
}

int run_plot(const std::vector<std::string>& record_paths, const std::string& out_dir) {
    std::vector<NamedRecord> records;
    for (const auto& p : record_paths) {
        std::ifstream is(p);
        if (!is) throw IoError("cannot open record file '" + p + "'");
        std::stringstream ss;
        ss << is.rdbuf();
        records.push_back({std::filesystem::path(p).stem().string(),
                           train_record_from_jsonl(ss.str())});
    }
    for (const auto& f : emit_curves(records, out_dir)) std::cout << "wrote " << f << "\n";
    return 0;
}

int run_inspect(const std::string& ckpt) {
    TrainerState st = load_checkpoint(ckpt);
    std::cout << st.model.summary();
    std::cout << "config_hash=" << st.record.config_hash << " seed=" << st.record.seed
              << " epochs_done=" << st.next_epoch << "/" << st.cfg.epochs << "\n";
    if (!st.record.epochs.empty()) {
        const auto& last = st.record.epochs.back();
        std::cout << "last epoch " << last.epoch << ": train_acc=" << last.train_acc
                  << " test_acc=" << last.test_acc << " energy=" << last.cumulative_joules
                  << " J\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiplication-free shift+add network training engine"};
    app.require_subcommand(1);

    CommonOpts common;
    app.add_option("--precision", common.precision, "fp32|fix32|fix16|fix8");
    app.add_option("--platform", common.platform, "asic|fpga");
    app.add_option("--seed", common.seed, "global seed");
    app.add_option("--config", common.config_file, "arch/config file (train, energy)");

    auto* train_cmd = app.add_subcommand("train", "train a model");
    std::string arch_path, data_spec, out_dir = "run", resume_path, prune_policy = "random";
    std::size_t epochs = 30, batch_size = 32;
    double lr = 0.1, shift_prune_ratio = 0.0, add_prune_ratio = 0.0, test_fraction = 0.25;
    bool freeze_shift = false;
    train_cmd->add_option("--arch", arch_path, "architecture config file");
    train_cmd->add_option("--data", data_spec, "dataset path or synth spec")->required();
    train_cmd->add_option("--epochs", epochs);
    train_cmd->add_option("--batch-size", batch_size);
    train_cmd->add_option("--lr", lr, "initial learning rate");
    train_cmd->add_flag("--freeze-shift", freeze_shift, "freeze shift layers at init");
    train_cmd->add_option("--shift-prune", shift_prune_ratio, "prune shift layers before training");
    train_cmd->add_option("--add-prune", add_prune_ratio, "prune add layers before training");
    train_cmd->add_option("--prune-policy", prune_policy, "random|magnitude");
    train_cmd->add_option("--test-fraction", test_fraction);
    train_cmd->add_option("--out", out_dir, "output directory");
    train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_data;
    double eval_fraction = 0.0;
    eval_cmd->add_option("--ckpt", eval_ckpt)->required();
    eval_cmd->add_option("--data", eval_data)->required();
    eval_cmd->add_option("--test-fraction", eval_fraction, "evaluate the held-out split only");

    auto* energy_cmd = app.add_subcommand("energy", "analytical energy estimate");
    std::string energy_arch, energy_phase = "train", energy_csv;
    std::uint64_t energy_steps = 1;
    energy_cmd->add_option("--arch", energy_arch)->required();
    energy_cmd->add_option("--phase", energy_phase, "inference|train");
    energy_cmd->add_option("--steps", energy_steps, "samples processed");
    energy_cmd->add_option("--out", energy_csv, "also write CSV");

    auto* prune_cmd = app.add_subcommand("prune", "prune a checkpointed model");
    std::string prune_in, prune_out, prune_pol = "random";
    double prune_shift = 0.0, prune_add = 0.0;
    prune_cmd->add_option("--ckpt", prune_in)->required();
    prune_cmd->add_option("--out", prune_out)->required();
    prune_cmd->add_option("--shift-ratio", prune_shift);
    prune_cmd->add_option("--add-ratio", prune_add);
    prune_cmd->add_option("--policy", prune_pol, "random|magnitude");

    auto* plot_cmd = app.add_subcommand("plot", "emit accuracy/energy curves");
    std::vector<std::string> plot_records;
    std::string plot_out = "plots";
    plot_cmd->add_option("--records", plot_records, "record.jsonl files")->required();
    plot_cmd->add_option("--out", plot_out);

    auto* inspect_cmd = app.add_subcommand("inspect-checkpoint", "describe a checkpoint");
    std::string inspect_path;
    inspect_cmd->add_option("ckpt", inspect_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            if (arch_path.empty()) arch_path = common.config_file;
            if (arch_path.empty() && resume_path.empty())
                throw ConfigError("train needs --arch (or --config), unless resuming");
            return run_train(common, arch_path, data_spec, epochs, batch_size, lr, freeze_shift,
                             shift_prune_ratio, add_prune_ratio, prune_policy, test_fraction,
                             out_dir, resume_path);
        }
        if (*eval_cmd) return run_eval(eval_ckpt, eval_data, eval_fraction);
        if (*energy_cmd)
            return run_energy(common, energy_arch, energy_phase, energy_steps, energy_csv);
        if (*prune_cmd)
            return run_prune(prune_in, prune_out, prune_shift, prune_add, prune_pol, common.seed);
        if (*plot_cmd) return run_plot(plot_records, plot_out);
        if (*inspect_cmd) return run_inspect(inspect_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kIoErrorCode;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumericError;
    } catch (const GeometryError& e) {
        std::cerr << "geometry error: " << e.what() << "\n";
        return kGeometryErrorCode;
    }
    return 1;
}
