#include "rhsim/dram.hpp"

#include <string>

#include "rhsim/errors.hpp"

namespace rhsim {

void DramGeometry::validate() const {
    if (banks < 1 || subarrays_per_bank < 1 || rows_per_subarray < 1)
        throw ConfigError("geometry counts must all be >= 1");
    if (row_width_bits < 8 || row_width_bits % 8 != 0)
        throw ConfigError("row_width_bits must be >= 8 and a multiple of 8");
}

void TimingParams::validate() const {
    if (t_act == 0) throw ConfigError("t_act must be positive");
    if (t_aap < 2 * t_act)
        throw ConfigError("t_aap must be >= 2*t_act (an AAP is two back-to-back activations)");
    if (t_rh < 1) throw ConfigError("t_rh must be >= 1");
    if (t_ref <= t_act * t_rh)
        throw ConfigError("t_ref must exceed t_act * t_rh");
}

DramSim::DramSim(const DramGeometry& geometry, const TimingParams& timing,
                 const FlipModel& flip_model)
    : geometry_(geometry),
      timing_(timing),
      flip_model_(flip_model),
      flip_rng_(Rng::substream(flip_model.rng_seed, /*tag=*/0x0f11)) {
    geometry_.validate();
    timing_.validate();
    rows_.resize(geometry_.total_rows());
    for (auto& row : rows_) row.content.assign(geometry_.row_bytes(), 0);
    bank_free_.assign(geometry_.banks, 0);
}

std::size_t DramSim::flat_index(const RowAddress& addr) const {
    return (std::size_t(addr.bank) * geometry_.subarrays_per_bank + addr.subarray) *
               geometry_.rows_per_subarray +
           addr.row;
}

void DramSim::check_addr(const RowAddress& addr) const {
    if (addr.bank >= geometry_.banks || addr.subarray >= geometry_.subarrays_per_bank ||
        addr.row >= geometry_.rows_per_subarray)
        throw AddressError("row address out of range: bank " + std::to_string(addr.bank) +
                           " subarray " + std::to_string(addr.subarray) + " row " +
                           std::to_string(addr.row));
}

DramSim::Row& DramSim::row_at(const RowAddress& addr) {
    check_addr(addr);
    return rows_[flat_index(addr)];
}

const DramSim::Row& DramSim::row_at(const RowAddress& addr) const {
    check_addr(addr);
    return rows_[flat_index(addr)];
}

void DramSim::claim_bank(uint32_t bank, Ns time, Ns duration) {
    if (time < bank_free_[bank])
        throw TimingError("command at t=" + std::to_string(time) + " issued while bank " +
                          std::to_string(bank) + " busy until " +
                          std::to_string(bank_free_[bank]));
    bank_free_[bank] = time + duration;
}

void DramSim::restore(Row& row) {
    row.disturbance = 0;
    row.flips_since_restore = 0;
    row.activations += 1;
}

void DramSim::disturb(const RowAddress& victim, Ns time, std::vector<FlipEvent>& out) {
    Row& row = rows_[flat_index(victim)];
    row.disturbance += 1;
    if (row.disturbance % timing_.t_rh != 0) return;
    if (flip_model_.saturate_per_window && row.flips_since_restore > 0) return;

    uint32_t column;
    if (flip_model_.mode == FlipMode::AttackerPrecise && row.designated_column)
        column = *row.designated_column;
    else
        column = uint32_t(flip_rng_.below(geometry_.row_width_bits));

    row.content[column >> 3] ^= uint8_t(1u << (column & 7));
    row.flips_since_restore += 1;
    row.flipped_bits.emplace_back(column, time);
    FlipEvent ev{time, victim, column};
    flip_log_.push_back(ev);
    out.push_back(ev);
}

void DramSim::disturb_neighbors(const RowAddress& addr, Ns time, std::vector<FlipEvent>& out) {
    if (addr.row > 0) disturb({addr.bank, addr.subarray, addr.row - 1}, time, out);
    if (addr.row + 1 < geometry_.rows_per_subarray)
        disturb({addr.bank, addr.subarray, addr.row + 1}, time, out);
}

std::vector<FlipEvent> DramSim::activate(const RowAddress& addr, Ns time) {
    Row& row = row_at(addr);
    claim_bank(addr.bank, time, timing_.t_act);
    restore(row);
    std::vector<FlipEvent> events;
    disturb_neighbors(addr, time, events);
    return events;
}

Ns DramSim::row_clone(const RowAddress& src, const RowAddress& dst, Ns time) {
    Row& src_row = row_at(src);
    Row& dst_row = row_at(dst);
    if (src == dst) throw AddressError("row_clone requires src != dst");
    if (src.bank != dst.bank || src.subarray != dst.subarray)
        throw UnsupportedCopyError("row_clone is an in-sub-array copy only");
    claim_bank(src.bank, time, timing_.t_aap);
    dst_row.content = src_row.content;
    restore(src_row);
    restore(dst_row);
    std::vector<FlipEvent> events;
    disturb_neighbors(src, time, events);
    disturb_neighbors(dst, time, events);
    return time + timing_.t_aap;
}

void DramSim::refresh_all(Ns) {
    for (auto& row : rows_) {
        row.disturbance = 0;
        row.flips_since_restore = 0;
    }
}

std::vector<uint8_t> DramSim::read_row(const RowAddress& addr, Ns time) {
    Row& row = row_at(addr);
    claim_bank(addr.bank, time, timing_.t_act);
    restore(row);
    std::vector<FlipEvent> events;
    disturb_neighbors(addr, time, events);
    return row.content;
}

void DramSim::write_row(const RowAddress& addr, std::span<const uint8_t> bytes, Ns time) {
    Row& row = row_at(addr);
    if (bytes.size() != row.content.size())
        throw ShapeError("write_row payload must be exactly one row wide");
    claim_bank(addr.bank, time, timing_.t_act);
    row.content.assign(bytes.begin(), bytes.end());
    restore(row);
    std::vector<FlipEvent> events;
    disturb_neighbors(addr, time, events);
}

bool DramSim::peek_bit(const RowAddress& addr, uint32_t column) const {
    const Row& row = row_at(addr);
    if (column >= geometry_.row_width_bits) throw AddressError("column out of range");
    return (row.content[column >> 3] >> (column & 7)) & 1u;
}

void DramSim::poke_bit(const RowAddress& addr, uint32_t column, bool value) {
    Row& row = row_at(addr);
    if (column >= geometry_.row_width_bits) throw AddressError("column out of range");
    uint8_t mask = uint8_t(1u << (column & 7));
    if (value)
        row.content[column >> 3] |= mask;
    else
        row.content[column >> 3] &= uint8_t(~mask);
}

const std::vector<uint8_t>& DramSim::row_bytes(const RowAddress& addr) const {
    return row_at(addr).content;
}

void DramSim::designate_flip_column(const RowAddress& victim, uint32_t column) {
    if (column >= geometry_.row_width_bits) throw AddressError("column out of range");
    row_at(victim).designated_column = column;
}

void DramSim::clear_flip_designation(const RowAddress& victim) {
    row_at(victim).designated_column.reset();
}

void DramSim::set_role(const RowAddress& addr, RowRole role) { row_at(addr).role = role; }

RowRole DramSim::role(const RowAddress& addr) const { return row_at(addr).role; }

uint64_t DramSim::disturbance(const RowAddress& addr) const { return row_at(addr).disturbance; }

uint64_t DramSim::activation_count(const RowAddress& addr) const {
    return row_at(addr).activations;
}

Ns DramSim::next_free(uint32_t bank) const {
    if (bank >= geometry_.banks) throw AddressError("bank out of range");
    return bank_free_[bank];
}

const std::vector<std::pair<uint32_t, Ns>>& DramSim::flipped_bits_log(
    const RowAddress& addr) const {
    return row_at(addr).flipped_bits;
}

std::vector<uint8_t> AttackerHandle::read_row(const RowAddress&, Ns) const {
    throw PermissionError("attacker process has no memory read permission");
}

void AttackerHandle::write_row(const RowAddress&, std::span<const uint8_t>, Ns) const {
    throw PermissionError("attacker process has no memory write permission");
}

}  // namespace rhsim
