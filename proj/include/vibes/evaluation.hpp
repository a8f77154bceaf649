#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "vibes/psychophysics.hpp"
#include "vibes/texture.hpp"

namespace vibes {

/// K×K counts, rows = presented (true) class, columns = chosen class. Labels follow the ladder
/// order, i.e. descending roughness (1 = P60 ... 5 = P1000).
struct ConfusionMatrix {
    std::vector<SandpaperSpec> labels;
    std::vector<std::vector<long>> counts;

    std::size_t size() const noexcept { return labels.size(); }
    long total() const;
    long trace() const;
};

ConfusionMatrix confusion_from_trials(std::span<const IdentificationTrial> trials,
                                      const std::vector<SandpaperSpec>& labels = default_ladder());

struct AccuracyReport {
    double overall = 0.0;
    std::vector<double> per_true_class;    // recall; NaN for classes never presented
    std::vector<double> per_chosen_class;  // precision; NaN for classes never chosen
};

AccuracyReport accuracy(const ConfusionMatrix& cm);

/// Relabels rows and columns: new index i holds old index perm[i].
ConfusionMatrix permute(const ConfusionMatrix& cm, std::span<const std::size_t> perm);

std::string confusion_to_csv(const ConfusionMatrix& cm);

struct PairwiseRow {
    std::string comparison;  // e.g. "1-3": ladder position of comparison vs reference
    SandpaperSpec level;
    int n_trials = 0;
    int count_cmp_rougher = 0;
    double pct_success = 0.0;  // fraction in [0, 1]
};

struct PairwiseTable {
    std::vector<PairwiseRow> rows;
    std::vector<std::string> warnings;
    /// Correct response for the equal pair.
    std::string equal_pair_convention = "reference-rougher (y=0) counts as success";
};

/// Per comparison level: correct means y = 1 when the comparison is rougher (larger grit) than the
/// reference, y = 0 when smoother, and y = 0 for the equal pair. Levels without trials are omitted
/// with a warning.
PairwiseTable pairwise_success_table(std::span<const TrialRecord> records,
                                     const std::vector<SandpaperSpec>& ladder = default_ladder());

struct SusResponse {
    std::array<int, 10> items{};
};

/// Parses "5,2,4,..." into a validated response.
SusResponse parse_sus(const std::string& csv);

/// Standard System Usability Scale score in [0, 100].
double sus_score(const SusResponse& resp);

}  // namespace vibes
