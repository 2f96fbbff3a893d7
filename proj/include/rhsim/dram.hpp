#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rhsim/rng.hpp"

namespace rhsim {

using Ns = uint64_t;  // simulated nanoseconds

struct DramGeometry {
    uint32_t banks = 1;
    uint32_t subarrays_per_bank = 4;
    uint32_t rows_per_subarray = 64;
    uint32_t row_width_bits = 1024;

    uint64_t total_rows() const {
        return uint64_t(banks) * subarrays_per_bank * rows_per_subarray;
    }
    uint32_t row_bytes() const { return row_width_bits / 8; }
    void validate() const;  // throws ConfigError
};

struct TimingParams {
    Ns t_act = 45;            // single activation
    Ns t_aap = 90;            // back-to-back activation pair (one RowClone)
    Ns t_ref = 64'000'000;    // refresh interval
    uint64_t t_rh = 4800;     // activations on a neighbor that induce a flip
    Ns t_rng = 10;            // random-row generation latency

    Ns t_swap() const { return 3 * t_aap; }
    void validate() const;  // throws ConfigError
};

enum class RowRole : uint8_t { Normal, TargetVictim, NonTargetVictim, Reserved };

struct RowAddress {
    uint32_t bank = 0;
    uint32_t subarray = 0;
    uint32_t row = 0;
    auto operator<=>(const RowAddress&) const = default;
};

struct RowAddressHash {
    std::size_t operator()(const RowAddress& a) const {
        return (std::size_t(a.bank) << 42) ^ (std::size_t(a.subarray) << 24) ^ a.row;
    }
};

struct FlipEvent {
    Ns time = 0;
    RowAddress addr;
    uint32_t column = 0;
};

enum class FlipMode : uint8_t { AttackerPrecise, UniformRandom };

struct FlipModel {
    FlipMode mode = FlipMode::UniformRandom;
    uint64_t rng_seed = 1;
    // When set, only the first threshold crossing since a row's last charge
    // restore flips a bit; by default every multiple of t_rh flips one.
    bool saturate_per_window = false;
};

// Deterministic model of a DRAM device: banks of sub-arrays of rows with bit
// contents, per-row disturbance counters, and RowHammer flip injection.
// Commands serialize per bank; issuing a command before the bank is free
// throws TimingError (callers schedule against next_free()).
class DramSim {
  public:
    DramSim(const DramGeometry& geometry, const TimingParams& timing,
            const FlipModel& flip_model);

    // Commands. Each returns or logs the flips it induced on neighbors.
    std::vector<FlipEvent> activate(const RowAddress& addr, Ns time);
    Ns row_clone(const RowAddress& src, const RowAddress& dst, Ns time);
    void refresh_all(Ns time);
    std::vector<uint8_t> read_row(const RowAddress& addr, Ns time);
    void write_row(const RowAddress& addr, std::span<const uint8_t> bytes, Ns time);

    // Content access without activation semantics, for installation checks
    // and log cross-referencing.
    bool peek_bit(const RowAddress& addr, uint32_t column) const;
    void poke_bit(const RowAddress& addr, uint32_t column, bool value);
    const std::vector<uint8_t>& row_bytes(const RowAddress& addr) const;

    // AttackerPrecise flip placement: the next flip on `victim` lands on
    // `column`. Rows without a designation fall back to the seeded draw.
    void designate_flip_column(const RowAddress& victim, uint32_t column);
    void clear_flip_designation(const RowAddress& victim);

    void set_role(const RowAddress& addr, RowRole role);
    RowRole role(const RowAddress& addr) const;

    uint64_t disturbance(const RowAddress& addr) const;
    uint64_t activation_count(const RowAddress& addr) const;  // cumulative
    Ns next_free(uint32_t bank) const;

    const std::vector<FlipEvent>& flip_log() const { return flip_log_; }
    const std::vector<std::pair<uint32_t, Ns>>& flipped_bits_log(const RowAddress& addr) const;

    const DramGeometry& geometry() const { return geometry_; }
    const TimingParams& timing() const { return timing_; }

  private:
    struct Row {
        std::vector<uint8_t> content;
        uint64_t disturbance = 0;
        uint64_t activations = 0;
        uint64_t flips_since_restore = 0;
        RowRole role = RowRole::Normal;
        std::optional<uint32_t> designated_column;
        std::vector<std::pair<uint32_t, Ns>> flipped_bits;
    };

    Row& row_at(const RowAddress& addr);
    const Row& row_at(const RowAddress& addr) const;
    std::size_t flat_index(const RowAddress& addr) const;
    void check_addr(const RowAddress& addr) const;
    void claim_bank(uint32_t bank, Ns time, Ns duration);
    // Charge restore on activation of the row itself.
    void restore(Row& row);
    void disturb_neighbors(const RowAddress& addr, Ns time, std::vector<FlipEvent>& out);
    void disturb(const RowAddress& victim, Ns time, std::vector<FlipEvent>& out);

    DramGeometry geometry_;
    TimingParams timing_;
    FlipModel flip_model_;
    Rng flip_rng_;
    std::vector<Row> rows_;
    std::vector<Ns> bank_free_;
    std::vector<FlipEvent> flip_log_;
};

// The attacker's view of the device: it may activate rows (hammer) and place
// precise flip targets, but has no read/write permission.
class AttackerHandle {
  public:
    explicit AttackerHandle(DramSim& sim) : sim_(&sim) {}

    std::vector<FlipEvent> activate(const RowAddress& addr, Ns time) {
        return sim_->activate(addr, time);
    }
    void designate_flip_column(const RowAddress& victim, uint32_t column) {
        sim_->designate_flip_column(victim, column);
    }
    Ns next_free(uint32_t bank) const { return sim_->next_free(bank); }
    const DramGeometry& geometry() const { return sim_->geometry(); }

    // Denied per the threat model.
    std::vector<uint8_t> read_row(const RowAddress&, Ns) const;
    void write_row(const RowAddress&, std::span<const uint8_t>, Ns) const;

  private:
    DramSim* sim_;
};

}  // namespace rhsim
