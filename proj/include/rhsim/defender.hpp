#pragma once

#include <functional>
#include <optional>
#include <unordered_map>
#include <vector>

#include "rhsim/addressmap.hpp"
#include "rhsim/dram.hpp"
#include "rhsim/qnn.hpp"
#include "rhsim/rng.hpp"

namespace rhsim {

struct ProtectionProfile {
    std::vector<RowAddress> target_rows;      // rows housing secured bits
    std::vector<RowAddress> non_target_rows;  // other protected-region rows
    std::vector<RowAddress> reserved_rows;    // scratch slot per sub-array

    void validate(const DramGeometry& geometry) const;  // throws ConfigError
};

// Partition of the weight region: rows holding at least one secured bit are
// targets, remaining weight rows are non-targets; row 0 of every sub-array
// is the reserved scratch slot.
ProtectionProfile build_protection_profile(const DramGeometry& geometry,
                                           const AddressMap& map,
                                           const std::vector<BitLocation>& secured_bits);

struct SwapRecord {
    uint64_t swap_id = 0;
    RowAddress target_row;  // address holding target content when the swap began
    RowAddress random_row;
    std::optional<RowAddress> non_target_row;
    // Step completion times; t4 == t3 when no non-target refresh piggybacked.
    Ns t1 = 0, t2 = 0, t3 = 0, t4 = 0;
};

struct DeadlineMiss {
    uint64_t swap_id = 0;
    RowAddress target_row;
    uint64_t disturbance = 0;  // neighbor activations found at restore time
    Ns time = 0;
};

struct ScheduleParams {
    bool pipeline = true;
    uint64_t seed = 1;
};

// floor(t_act * t_rh / t_swap): swaps that fit in one threshold window.
uint64_t max_swaps_per_window(const TimingParams& timing);

// Throws ConfigError naming the first sub-array whose target count exceeds
// max_swaps_per_window.
void check_schedule_feasible(const DramGeometry& geometry, const TimingParams& timing,
                             const ProtectionProfile& profile);

using ExchangeHook = std::function<void(Ns, const RowAddress&, const RowAddress&)>;

// The victim-focused swap defense. Counter-free: each bank runs bursts of
// one swap per target, separated by an idle gap of t_act*(t_rh-1) so that an
// attacker saturating the bank between bursts stays below t_rh activations
// on any victim.
class VictimSwapDefender {
  public:
    VictimSwapDefender(DramSim& sim, const ProtectionProfile& profile,
                       const ScheduleParams& params, Ns start_time = 0);

    void add_exchange_hook(ExchangeHook hook) { hooks_.push_back(std::move(hook)); }

    // Co-process interface: time of the next primitive, then execute it.
    std::optional<Ns> next_action_time();
    void step();

    // One standalone four-step swap of the target content currently at
    // `target_live_row`, run to completion.
    SwapRecord swap_protect(const RowAddress& target_live_row, Ns time);

    const std::vector<SwapRecord>& records() const { return records_; }
    const std::vector<DeadlineMiss>& misses() const { return misses_; }
    uint64_t completed_swaps() const { return records_.size(); }
    Ns idle_gap() const;

    RowAddress live_target_row(std::size_t logical_index) const;
    std::size_t target_count() const { return targets_.size(); }

  private:
    enum class Phase : uint8_t { SelectRandom, Step1, Step2, Step3, Step4, Done };

    struct BankState {
        std::vector<std::size_t> burst_order;  // logical target indices, subarray-grouped
        std::size_t cursor = 0;                // next target within the burst
        bool in_burst = false;
        Ns next_burst_start = 0;
        Ns chain = 0;  // completion time of the previous micro-op
        Phase phase = Phase::Done;
        std::size_t record = 0;                     // records_ index under construction
        std::size_t active_target = 0;              // logical index
        std::optional<RowAddress> reusable_random;  // prior step-4 row, same subarray
        uint32_t reusable_subarray = 0;
    };

    void begin_swap(BankState& bs, std::size_t logical_target);
    void finish_swap(BankState& bs);
    Ns op_time(const BankState& bs, uint32_t bank) const;
    void execute_phase(BankState& bs, uint32_t bank);
    RowAddress draw_random_row(uint32_t bank, uint32_t subarray);
    std::optional<std::size_t> next_non_target(uint32_t bank, uint32_t subarray);
    void apply_exchange(Ns time, const RowAddress& a, const RowAddress& b);
    RowAddress reserved_of(uint32_t bank, uint32_t subarray) const;

    DramSim* sim_;
    ScheduleParams params_;
    Rng rng_;
    std::vector<RowAddress> targets_;      // live address per logical target
    std::vector<RowAddress> non_targets_;  // live address per logical non-target
    std::unordered_map<uint64_t, RowAddress> reserved_;  // keyed by (bank, subarray)
    std::unordered_map<uint64_t, std::vector<std::size_t>> nt_by_subarray_;
    std::unordered_map<uint64_t, std::size_t> nt_cursor_;
    std::vector<BankState> bank_states_;
    std::vector<SwapRecord> records_;
    std::vector<DeadlineMiss> misses_;
    std::vector<ExchangeHook> hooks_;
};

// Paints target/non-target/reserved roles onto the simulator rows.
void apply_roles(DramSim& sim, const ProtectionProfile& profile);

// Runs the defense schedule with no attacker present (refreshing every
// t_ref), until the horizon. Returns the swap records.
std::vector<SwapRecord> run_schedule(DramSim& sim, const ProtectionProfile& profile,
                                     const ScheduleParams& params, Ns horizon);

// Aggressor-focused comparison baseline: granted a per-row activation
// oracle, it exchanges an aggressor row with a random row (via buffered
// read/write copies) once the row's activation count reaches
// trigger_fraction * t_rh. Victim rows are untouched.
class AggressorSwapBaseline {
  public:
    AggressorSwapBaseline(DramSim& sim, double trigger_fraction, uint64_t seed);

    void add_exchange_hook(ExchangeHook hook) { hooks_.push_back(std::move(hook)); }
    void notify_activation(const RowAddress& addr, Ns time);

    std::optional<Ns> next_action_time();
    void step();

    const std::vector<SwapRecord>& records() const { return records_; }

  private:
    struct PendingSwap {
        RowAddress aggressor;
        Ns earliest;
    };

    DramSim* sim_;
    uint64_t trigger_;
    Rng rng_;
    std::unordered_map<RowAddress, uint64_t, RowAddressHash> counts_;
    std::unordered_map<RowAddress, bool, RowAddressHash> queued_;
    std::vector<PendingSwap> queue_;
    std::vector<SwapRecord> records_;
    std::vector<ExchangeHook> hooks_;
};

}  // namespace rhsim
