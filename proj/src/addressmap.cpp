#include "rhsim/addressmap.hpp"

#include <algorithm>

#include "rhsim/errors.hpp"

namespace rhsim {

void AddressMap::place_weight(uint32_t layer, uint32_t weight_index,
                              const WeightPlacement& p) {
    if (forward_.size() <= layer) forward_.resize(layer + 1);
    if (forward_[layer].size() <= weight_index)
        forward_[layer].resize(weight_index + 1, WeightPlacement{{0, 0, 0}, UINT32_MAX});
    for (const WeightRef& ref : by_row_[p.row])
        if (ref.byte_offset == p.byte_offset)
            throw ConfigError("two weights mapped to the same row/byte");
    forward_[layer][weight_index] = p;
    by_row_[p.row].push_back({layer, weight_index, p.byte_offset});
}

WeightPlacement AddressMap::weight_placement(uint32_t layer, uint32_t weight_index) const {
    if (layer >= forward_.size() || weight_index >= forward_[layer].size() ||
        forward_[layer][weight_index].byte_offset == UINT32_MAX)
        throw AddressError("weight has no placement");
    return forward_[layer][weight_index];
}

BitPlacement AddressMap::bit_placement(const BitLocation& loc) const {
    WeightPlacement wp = weight_placement(loc.layer, loc.weight_index);
    return {wp.row, wp.byte_offset * 8 + loc.bit};
}

std::optional<BitLocation> AddressMap::bit_at(const RowAddress& row, uint32_t column) const {
    auto it = by_row_.find(row);
    if (it == by_row_.end()) return std::nullopt;
    const uint32_t byte = column / 8;
    for (const WeightRef& ref : it->second)
        if (ref.byte_offset == byte)
            return BitLocation{ref.layer, ref.weight_index, uint8_t(column % 8)};
    return std::nullopt;
}

bool AddressMap::row_holds_weights(const RowAddress& row) const {
    auto it = by_row_.find(row);
    return it != by_row_.end() && !it->second.empty();
}

std::vector<RowAddress> AddressMap::weight_rows() const {
    std::vector<RowAddress> rows;
    for (const auto& [row, refs] : by_row_)
        if (!refs.empty()) rows.push_back(row);
    std::sort(rows.begin(), rows.end());
    return rows;
}

void AddressMap::exchange(Ns time, const RowAddress& a, const RowAddress& b) {
    auto ita = by_row_.find(a);
    auto itb = by_row_.find(b);
    std::vector<WeightRef> refs_a = ita == by_row_.end() ? std::vector<WeightRef>{}
                                                         : std::move(ita->second);
    std::vector<WeightRef> refs_b = itb == by_row_.end() ? std::vector<WeightRef>{}
                                                         : std::move(itb->second);
    for (WeightRef& ref : refs_a) forward_[ref.layer][ref.weight_index].row = b;
    for (WeightRef& ref : refs_b) forward_[ref.layer][ref.weight_index].row = a;
    by_row_[a] = std::move(refs_b);
    by_row_[b] = std::move(refs_a);
    revisions_.push_back({time, a, b});
}

namespace {

struct RowCursor {
    const DramGeometry* geo;
    uint32_t first_row;
    uint64_t next = 0;  // flat index over usable rows, striped or packed

    RowAddress advance(LayoutMode mode) {
        const uint32_t usable = geo->rows_per_subarray - first_row;
        const uint64_t total_subarrays = uint64_t(geo->banks) * geo->subarrays_per_bank;
        if (next >= uint64_t(usable) * total_subarrays)
            throw ConfigError("model does not fit in the DRAM geometry");
        uint64_t subarray_flat, row_off;
        if (mode == LayoutMode::Striped) {
            subarray_flat = next % total_subarrays;
            row_off = next / total_subarrays;
        } else {
            subarray_flat = next / usable;
            row_off = next % usable;
        }
        ++next;
        return {uint32_t(subarray_flat / geo->subarrays_per_bank),
                uint32_t(subarray_flat % geo->subarrays_per_bank),
                first_row + uint32_t(row_off)};
    }
};

}  // namespace

AddressMap build_layout(const DramGeometry& geometry, const QuantizedModel& model,
                        const LayoutOptions& options,
                        const std::vector<std::pair<uint32_t, uint32_t>>& isolated_weights) {
    if (options.first_weight_row >= geometry.rows_per_subarray)
        throw ConfigError("first_weight_row leaves no usable rows");
    AddressMap map;
    RowCursor cursor{&geometry, options.first_weight_row};
    const uint32_t bytes_per_row = geometry.row_bytes();
    const LayoutMode mode =
        options.mode == LayoutMode::IsolateSecured ? LayoutMode::Packed : options.mode;

    std::vector<std::vector<bool>> isolated(model.layers().size());
    for (uint32_t li = 0; li < model.layers().size(); ++li)
        isolated[li].assign(model.layers()[li].weight_count(), false);
    if (options.mode == LayoutMode::IsolateSecured) {
        for (auto [layer, wi] : isolated_weights) {
            if (layer >= isolated.size() || wi >= isolated[layer].size())
                throw ConfigError("isolated weight index out of range");
            if (isolated[layer][wi]) continue;
            isolated[layer][wi] = true;
            map.place_weight(layer, wi, {cursor.advance(mode), 0});
        }
    }

    RowAddress current{};
    uint32_t used_bytes = bytes_per_row;  // force a fresh row for the first weight
    for (uint32_t li = 0; li < model.layers().size(); ++li) {
        for (uint32_t wi = 0; wi < model.layers()[li].weight_count(); ++wi) {
            if (isolated[li][wi]) continue;
            if (used_bytes == bytes_per_row) {
                current = cursor.advance(mode);
                used_bytes = 0;
            }
            map.place_weight(li, wi, {current, used_bytes++});
        }
    }
    return map;
}

Ns install_model(DramSim& sim, const QuantizedModel& model, const AddressMap& map, Ns time) {
    std::unordered_map<RowAddress, std::vector<uint8_t>, RowAddressHash> images;
    for (uint32_t li = 0; li < model.layers().size(); ++li) {
        const Layer& l = model.layers()[li];
        for (uint32_t wi = 0; wi < l.weight_count(); ++wi) {
            WeightPlacement p = map.weight_placement(li, wi);
            auto [it, fresh] = images.try_emplace(p.row);
            if (fresh) it->second = sim.row_bytes(p.row);
            it->second[p.byte_offset] = uint8_t(l.codes[wi]);
        }
    }
    std::vector<RowAddress> rows;
    rows.reserve(images.size());
    for (const auto& [row, bytes] : images) rows.push_back(row);
    std::sort(rows.begin(), rows.end());
    for (const RowAddress& row : rows) {
        time = std::max(time, sim.next_free(row.bank));
        sim.write_row(row, images[row], time);
        time += sim.timing().t_act;
    }
    return time;
}

QuantizedModel extract_model(const DramSim& sim, const AddressMap& map,
                             const QuantizedModel& reference) {
    QuantizedModel out = reference;
    std::vector<int8_t> codes = out.codes_snapshot();
    std::size_t pos = 0;
    for (uint32_t li = 0; li < reference.layers().size(); ++li) {
        for (uint32_t wi = 0; wi < reference.layers()[li].weight_count(); ++wi) {
            WeightPlacement p = map.weight_placement(li, wi);
            codes[pos++] = int8_t(sim.row_bytes(p.row)[p.byte_offset]);
        }
    }
    out.restore_codes(codes);
    return out;
}

}  // namespace rhsim
