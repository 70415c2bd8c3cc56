#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shiftadd/network.hpp"

namespace shiftadd {

enum class EnergyOp { Mult, Add, Shift };
enum class EnergyFormat { FP32, FIX32, FIX16, FIX8 };
enum class Platform { ASIC45nm, FPGA };

std::string energy_op_name(EnergyOp op);
std::string energy_format_name(EnergyFormat f);
std::string platform_name(Platform p);
Platform platform_from_string(const std::string& s);
EnergyFormat energy_format_from_precision(Precision p);

struct EnergyKey {
    EnergyOp op;
    EnergyFormat format;
    Platform platform;
    auto operator<=>(const EnergyKey&) const = default;
};

// Per-operation unit energies in picojoules. Ships with the nine measured
// defaults; lookups outside the table fail loudly.
class EnergyTable {
public:
    static EnergyTable defaults();

    bool has(EnergyOp op, EnergyFormat f, Platform p) const;
    double unit_energy(EnergyOp op, EnergyFormat f, Platform p) const;  // pJ
    void set(EnergyOp op, EnergyFormat f, Platform p, double pj);

private:
    std::map<EnergyKey, double> entries_;
};

enum class Phase { Forward, Backward, Update };

struct OpCount {
    std::uint64_t mults = 0;
    std::uint64_t adds = 0;
    std::uint64_t shifts = 0;

    OpCount& operator+=(const OpCount& o) {
        mults += o.mults;
        adds += o.adds;
        shifts += o.shifts;
        return *this;
    }
    OpCount scaled(std::uint64_t k) const { return {mults * k, adds * k, shifts * k}; }
};

// Per-sample op counts for one expanded layer. Sparse shift positions and
// masked add positions are skipped. Backward is counted as 2x the forward
// kernel work (input-grad + weight-grad passes); frozen shift layers do the
// input-grad pass only. Update covers the optimizer arithmetic.
OpCount count_layer_ops(const Layer& layer, Phase phase);

struct LayerEnergy {
    std::string name;
    Phase phase;
    OpCount count;
    double joules = 0.0;
};

struct EnergyReport {
    std::vector<LayerEnergy> rows;
    double total_joules = 0.0;
    std::string to_text() const;
    std::string to_csv() const;
};

// Sum over layers and phases, scaled by steps (samples processed). Shift-op
// lookups in FP32 are undefined in the table and raise a ConfigError.
EnergyReport estimate_energy(const Model& model, const std::vector<Phase>& phases,
                             EnergyFormat format, Platform platform, std::uint64_t steps,
                             const EnergyTable& table = EnergyTable::defaults());

// Per-op-kind formats the trainer charges a run at. FP32 runs charge shift
// ops at FIX32 (shift has no FP32 entry); FIX16 runs charge everything at
// FIX32 (no measured FIX16 entries). Substitutions are flagged so run
// metadata can report them.
struct EnergyPolicy {
    EnergyFormat mult = EnergyFormat::FIX32;
    EnergyFormat add = EnergyFormat::FIX32;
    EnergyFormat shift = EnergyFormat::FIX32;
    bool substituted = false;
};

EnergyPolicy train_energy_policy(Precision p);

EnergyReport estimate_energy_mapped(const Model& model, const std::vector<Phase>& phases,
                                    const EnergyPolicy& policy, Platform platform,
                                    std::uint64_t steps,
                                    const EnergyTable& table = EnergyTable::defaults());

}  // namespace shiftadd
