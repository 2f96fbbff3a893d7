#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "rhsim/qnn.hpp"

namespace rhsim {

struct PlannedFlip {
    BitLocation location;
    FlipDirection direction = FlipDirection::ZeroToOne;
    uint32_t round = 0;  // profiling round (0 for plain plans)
    uint32_t rank = 0;   // order within the round
};

struct StopCriterion {
    // Stop once attack-batch accuracy drops to this level (random-guess
    // level for a balanced task is 1/num_classes).
    double accuracy_threshold = 0.10;
    std::size_t max_flips = 50;
};

struct AttackPlan {
    std::vector<PlannedFlip> flips;
};

using SkipSet = std::unordered_set<BitLocation, BitLocationHash>;

// Progressive bit search: each iteration takes the top-ranked eligible bit
// per layer (intra-layer), evaluates the loss after actually flipping each
// candidate (flip/revert), and commits the layer whose candidate yields the
// highest post-flip loss (inter-layer, ties to the lowest layer index).
// The scratch model is mutated freely; the committed flips remain applied.
// Throws ExhaustedError when no eligible bit outside `skip` remains.
AttackPlan bfa_search(QuantizedModel& scratch, const Batch& batch, const SkipSet& skip,
                      const StopCriterion& stop);

struct ProfilingResult {
    std::vector<std::vector<PlannedFlip>> rounds;
    // Flattened union, priority-ordered by round then rank. Rounds are
    // disjoint by construction.
    std::vector<PlannedFlip> secured_bits() const;
};

// Runs bfa_search for `rounds` rounds; round c skips every bit found in
// rounds 1..c-1 and all flips are reverted between rounds.
ProfilingResult profile_vulnerable_bits(const QuantizedModel& model, const Batch& batch,
                                        uint32_t rounds, const StopCriterion& stop);

// `budget` uniformly sampled distinct bit locations with random directions.
AttackPlan random_attack_plan(const QuantizedModel& shape, std::size_t budget, uint64_t seed);

// Applies every planned flip to the model (inversion; direction is metadata).
void apply_plan(QuantizedModel& model, const AttackPlan& plan);

SkipSet skip_set_from(const std::vector<PlannedFlip>& flips);

// Line-oriented plan format: a version line, then one tab-separated record
// per flip (round, rank, layer, weight_index, bit, direction).
void save_flips(const std::string& path, const std::vector<PlannedFlip>& flips);
std::vector<PlannedFlip> load_flips(const std::string& path);
ProfilingResult profiling_from_flips(const std::vector<PlannedFlip>& flips);

}  // namespace rhsim
