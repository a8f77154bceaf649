#include "vibes/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "text.hpp"
#include "vibes/errors.hpp"

namespace vibes {

long ConfusionMatrix::total() const {
    long t = 0;
    for (const auto& row : counts)
        for (long c : row) t += c;
    return t;
}

long ConfusionMatrix::trace() const {
    long t = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
    return t;
}

namespace {

std::size_t label_index(const std::vector<SandpaperSpec>& labels, const SandpaperSpec& s) {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i].fepa_grade == s.fepa_grade) return i;
    throw ValidationError("stimulus " + s.fepa_grade + " is not among the labels");
}

}  // namespace

ConfusionMatrix confusion_from_trials(std::span<const IdentificationTrial> trials, const std::vector<SandpaperSpec>& labels) {
    if (trials.empty()) throw ValidationError("no identification trials");
    ConfusionMatrix cm;
    cm.labels = labels;
    cm.counts.assign(labels.size(), std::vector<long>(labels.size(), 0));
    for (const auto& t : trials) ++cm.counts[label_index(labels, t.presented)][label_index(labels, t.chosen)];
    return cm;
}

AccuracyReport accuracy(const ConfusionMatrix& cm) {
    const long total = cm.total();
    if (total <= 0) throw ValidationError("confusion matrix is empty");
    AccuracyReport r;
    r.overall = static_cast<double>(cm.trace()) / static_cast<double>(total);
    const std::size_t k = cm.size();
    for (std::size_t i = 0; i < k; ++i) {
        long row = 0, col = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row += cm.counts[i][j];
            col += cm.counts[j][i];
        }
        const double diag = static_cast<double>(cm.counts[i][i]);
        r.per_true_class.push_back(row > 0 ? diag / static_cast<double>(row) : std::numeric_limits<double>::quiet_NaN());
        r.per_chosen_class.push_back(col > 0 ? diag / static_cast<double>(col) : std::numeric_limits<double>::quiet_NaN());
    }
    return r;
}

ConfusionMatrix permute(const ConfusionMatrix& cm, std::span<const std::size_t> perm) {
    if (perm.size() != cm.size()) throw ParameterError("permutation size mismatch");
    ConfusionMatrix out;
    out.counts.assign(cm.size(), std::vector<long>(cm.size(), 0));
    for (std::size_t i = 0; i < cm.size(); ++i) {
        out.labels.push_back(cm.labels[perm[i]]);
        for (std::size_t j = 0; j < cm.size(); ++j) out.counts[i][j] = cm.counts[perm[i]][perm[j]];
    }
    return out;
}

std::string confusion_to_csv(const ConfusionMatrix& cm) {
    std::ostringstream os;
    os << "true\\chosen";
    for (const auto& l : cm.labels) os << ',' << l.fepa_grade;
    os << '\n';
    for (std::size_t i = 0; i < cm.size(); ++i) {
        os << cm.labels[i].fepa_grade;
        for (long c : cm.counts[i]) os << ',' << c;
        os << '\n';
    }
    return os.str();
}

PairwiseTable pairwise_success_table(std::span<const TrialRecord> records, const std::vector<SandpaperSpec>& ladder) {
    const auto& ref = reference_sandpaper();
    const std::size_t ref_pos = label_index(ladder, ref) + 1;
    PairwiseTable table;
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        const auto& level = ladder[i];
        PairwiseRow row;
        row.level = level;
        row.comparison = std::to_string(i + 1) + "-" + std::to_string(ref_pos);
        int success = 0;
        for (const auto& r : records) {
            if (r.comparison.fepa_grade != level.fepa_grade) continue;
            ++row.n_trials;
            if (r.response_cmp_rougher) ++row.count_cmp_rougher;
            const bool rougher = level.grit_um > ref.grit_um;
            const bool correct = rougher ? r.response_cmp_rougher : !r.response_cmp_rougher;
            if (correct) ++success;
        }
        if (row.n_trials == 0) {
            table.warnings.push_back("no trials for comparison " + row.comparison + " (" + level.fepa_grade + "); omitted");
            continue;
        }
        row.pct_success = static_cast<double>(success) / static_cast<double>(row.n_trials);
        table.rows.push_back(row);
    }
    return table;
}

SusResponse parse_sus(const std::string& csv) {
    const auto fields = text::split(csv, ',');
    if (fields.size() != 10) throw ValidationError("SUS needs exactly 10 items, got " + std::to_string(fields.size()));
    SusResponse r;
    for (std::size_t i = 0; i < 10; ++i) {
        const double v = text::parse_double(fields[i], 0);
        if (v != std::floor(v) || v < 1 || v > 5) throw ValidationError("SUS item " + std::to_string(i + 1) + " must be an integer in [1,5]");
        r.items[i] = static_cast<int>(v);
    }
    return r;
}

double sus_score(const SusResponse& resp) {
    int sum = 0;
    for (std::size_t i = 0; i < 10; ++i) {
        const int x = resp.items[i];
        if (x < 1 || x > 5) throw ValidationError("SUS item " + std::to_string(i + 1) + " out of range [1,5]");
        // Items 1,3,5,7,9 are positively worded; 2,4,6,8,10 negatively.
        sum += i % 2 == 0 ? x - 1 : 5 - x;
    }
    return 2.5 * sum;
}

}  // namespace vibes
