#include "rhsim/bfa.hpp"

#include <fstream>
#include <optional>
#include <sstream>

#include "rhsim/errors.hpp"
#include "rhsim/rng.hpp"

namespace rhsim {

namespace {

struct Candidate {
    BitLocation location;
    FlipDirection direction;
    double magnitude;
};

// Top-ranked eligible bit of one layer, honoring the skip set.
std::optional<Candidate> layer_candidate(const QuantizedModel& model,
                                         const std::vector<double>& grads, uint32_t layer,
                                         const SkipSet& skip) {
    const Layer& l = model.layers()[layer];
    std::optional<Candidate> best;
    for (uint32_t wi = 0; wi < l.weight_count(); ++wi) {
        const double g = grads[wi];
        if (g == 0.0) continue;
        for (uint8_t b = 0; b < 8; ++b) {
            auto info = ascent_flip(l.codes[wi], b, g, l.scale);
            if (!info) continue;
            BitLocation loc{layer, wi, b};
            if (skip.contains(loc)) continue;
            if (!best || info->magnitude > best->magnitude ||
                (info->magnitude == best->magnitude && loc < best->location))
                best = Candidate{loc, info->direction, info->magnitude};
        }
    }
    return best;
}

}  // namespace

AttackPlan bfa_search(QuantizedModel& scratch, const Batch& batch, const SkipSet& skip,
                      const StopCriterion& stop) {
    AttackPlan plan;
    SkipSet effective = skip;
    while (plan.flips.size() < stop.max_flips) {
        if (scratch.accuracy(batch) <= stop.accuracy_threshold) break;

        LossAndGrad lg = scratch.loss_and_weight_grad(batch);
        double best_loss = 0.0;
        std::optional<Candidate> winner;
        for (uint32_t li = 0; li < scratch.layers().size(); ++li) {
            auto cand = layer_candidate(scratch, lg.grads[li], li, effective);
            if (!cand) continue;
            scratch.flip_bit(cand->location);
            const double post_loss = scratch.loss(batch);
            scratch.flip_bit(cand->location);
            // ties go to the lowest layer index: strict > keeps the earlier layer
            if (!winner || post_loss > best_loss) {
                winner = cand;
                best_loss = post_loss;
            }
        }
        if (!winner) throw ExhaustedError("no eligible bits remain outside the skip set");

        scratch.flip_bit(winner->location);
        effective.insert(winner->location);
        plan.flips.push_back({winner->location, winner->direction, 0,
                              uint32_t(plan.flips.size())});
    }
    return plan;
}

std::vector<PlannedFlip> ProfilingResult::secured_bits() const {
    std::vector<PlannedFlip> out;
    for (const auto& round : rounds) out.insert(out.end(), round.begin(), round.end());
    return out;
}

ProfilingResult profile_vulnerable_bits(const QuantizedModel& model, const Batch& batch,
                                        uint32_t rounds, const StopCriterion& stop) {
    if (rounds < 1) throw ConfigError("profiling requires at least one round");
    QuantizedModel scratch = model;
    const std::vector<int8_t> snapshot = scratch.codes_snapshot();
    ProfilingResult result;
    SkipSet skip;
    for (uint32_t c = 0; c < rounds; ++c) {
        AttackPlan plan = bfa_search(scratch, batch, skip, stop);
        scratch.restore_codes(snapshot);
        for (auto& f : plan.flips) {
            f.round = c;
            skip.insert(f.location);
        }
        result.rounds.push_back(std::move(plan.flips));
    }
    return result;
}

AttackPlan random_attack_plan(const QuantizedModel& shape, std::size_t budget, uint64_t seed) {
    const std::size_t total = shape.total_bits();
    if (budget > total)
        throw BudgetError("budget " + std::to_string(budget) + " exceeds " +
                          std::to_string(total) + " total bits");
    std::vector<uint32_t> flat(total);
    for (std::size_t i = 0; i < total; ++i) flat[i] = uint32_t(i);
    Rng rng = Rng::substream(seed, /*tag=*/0x7a9d);
    AttackPlan plan;
    for (std::size_t i = 0; i < budget; ++i) {
        std::size_t j = i + rng.below(total - i);
        std::swap(flat[i], flat[j]);
        FlipDirection dir = rng.next() & 1 ? FlipDirection::OneToZero
                                           : FlipDirection::ZeroToOne;
        plan.flips.push_back({shape.bit_from_flat(flat[i]), dir, 0, uint32_t(i)});
    }
    return plan;
}

void apply_plan(QuantizedModel& model, const AttackPlan& plan) {
    for (const PlannedFlip& f : plan.flips) model.flip_bit(f.location);
}

SkipSet skip_set_from(const std::vector<PlannedFlip>& flips) {
    SkipSet skip;
    for (const PlannedFlip& f : flips) skip.insert(f.location);
    return skip;
}

void save_flips(const std::string& path, const std::vector<PlannedFlip>& flips) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw FileFormatError("cannot write plan file: " + path);
    f << "# rhsim-plan v1\n";
    f << "# round\trank\tlayer\tweight_index\tbit\tdirection\n";
    for (const PlannedFlip& pf : flips) {
        f << pf.round << '\t' << pf.rank << '\t' << pf.location.layer << '\t'
          << pf.location.weight_index << '\t' << unsigned(pf.location.bit) << '\t'
          << (pf.direction == FlipDirection::ZeroToOne ? "0to1" : "1to0") << '\n';
    }
    if (!f) throw FileFormatError("write failed: " + path);
}

std::vector<PlannedFlip> load_flips(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FileFormatError("cannot open plan file: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "# rhsim-plan v1")
        throw FileFormatError("bad plan header in " + path);
    std::vector<PlannedFlip> flips;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        PlannedFlip pf;
        unsigned bit;
        std::string dir;
        if (!(is >> pf.round >> pf.rank >> pf.location.layer >> pf.location.weight_index >>
              bit >> dir) ||
            bit > 7 || (dir != "0to1" && dir != "1to0"))
            throw FileFormatError("bad plan record in " + path + ": " + line);
        pf.location.bit = uint8_t(bit);
        pf.direction = dir == "0to1" ? FlipDirection::ZeroToOne : FlipDirection::OneToZero;
        flips.push_back(pf);
    }
    return flips;
}

ProfilingResult profiling_from_flips(const std::vector<PlannedFlip>& flips) {
    ProfilingResult result;
    for (const PlannedFlip& f : flips) {
        if (f.round >= result.rounds.size()) result.rounds.resize(f.round + 1);
        result.rounds[f.round].push_back(f);
    }
    return result;
}

}  // namespace rhsim
