#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rhsim/dram.hpp"
#include "rhsim/qnn.hpp"

namespace rhsim {

// Where one weight's byte lives.
struct WeightPlacement {
    RowAddress row;
    uint32_t byte_offset = 0;
};

struct BitPlacement {
    RowAddress row;
    uint32_t column = 0;
};

struct MapRevision {
    Ns time = 0;
    RowAddress a, b;  // contents of the two rows were exchanged
};

// Bijection between weight-bit locations and DRAM (bank, subarray, row,
// column), plus a revision log of row-content exchanges. This is the
// attacker's mapping file: the white-box attacker reads it live, the
// semi-white-box attacker keeps a stale copy.
class AddressMap {
  public:
    void place_weight(uint32_t layer, uint32_t weight_index, const WeightPlacement& p);

    WeightPlacement weight_placement(uint32_t layer, uint32_t weight_index) const;
    BitPlacement bit_placement(const BitLocation& loc) const;
    std::optional<BitLocation> bit_at(const RowAddress& row, uint32_t column) const;
    bool row_holds_weights(const RowAddress& row) const;
    std::vector<RowAddress> weight_rows() const;

    // Content of rows a and b swapped places at `time`.
    void exchange(Ns time, const RowAddress& a, const RowAddress& b);
    const std::vector<MapRevision>& revisions() const { return revisions_; }

  private:
    struct WeightRef {
        uint32_t layer, weight_index, byte_offset;
    };
    std::vector<std::vector<WeightPlacement>> forward_;  // [layer][weight]
    std::unordered_map<RowAddress, std::vector<WeightRef>, RowAddressHash> by_row_;
    std::vector<MapRevision> revisions_;
};

enum class LayoutMode {
    // Weight rows striped round-robin across sub-arrays (the default; matches
    // vulnerable data spread over several sub-arrays).
    Striped,
    // Weight rows packed sequentially, sub-array by sub-array.
    Packed,
    // Each secured weight alone in its own row (worst-case layout where a
    // row contains a single protected weight), remainder packed.
    IsolateSecured,
};

struct LayoutOptions {
    LayoutMode mode = LayoutMode::Striped;
    // Row 0 of each sub-array is reserved for the swap scratch slot and row 1
    // stays empty, so weights start here.
    uint32_t first_weight_row = 2;
};

// Lays the model's weight bytes into rows and returns the map.
// `isolated_weights` lists (layer, weight_index) pairs that get private rows
// under IsolateSecured. Throws ConfigError when capacity is exceeded.
AddressMap build_layout(const DramGeometry& geometry, const QuantizedModel& model,
                        const LayoutOptions& options,
                        const std::vector<std::pair<uint32_t, uint32_t>>& isolated_weights = {});

// Writes the model's codes into DRAM through write_row, starting at `time`.
// Returns the time after the last write.
Ns install_model(DramSim& sim, const QuantizedModel& model, const AddressMap& map, Ns time);

// Reads codes back out of DRAM (content inspection, no activations) into a
// copy of `reference` whose shapes/scales describe the checkpoint.
QuantizedModel extract_model(const DramSim& sim, const AddressMap& map,
                             const QuantizedModel& reference);

}  // namespace rhsim
